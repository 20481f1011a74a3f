"""
advkern Exception Classes.

This module defines the exception hierarchy used throughout advkern, providing
structured error handling for configuration, kernel evaluation, numerical
solves and data ingestion. The command-line harness maps these classes to
exit codes.
"""

from __future__ import annotations

from typing import Any, Dict, Optional


class AdvKernError(Exception):
    """
    Base exception class for all advkern errors.

    Attributes:
        message (str): Human-readable error message
        details (Dict[str, Any]): Additional error details
    """

    def __init__(self, message: str, details: Optional[Dict[str, Any]] = None) -> None:
        super().__init__(message)
        self.message = message
        self.details = details or {}

    def __str__(self) -> str:
        """Return a string representation of the error."""
        if self.details:
            return f"{self.message} (details: {self.details})"
        return self.message


class ConfigurationError(AdvKernError):
    """
    Raised for invalid parameters, settings or experiment configurations.
    """
    pass


class KernelError(AdvKernError):
    """
    Raised when a kernel cannot be evaluated on the given inputs.
    """
    pass


class DimensionMismatchError(KernelError):
    """
    Raised when point sets or vectors disagree in feature dimension.
    """
    pass


class NonFiniteInputError(KernelError):
    """
    Raised when inputs contain NaN or infinite entries.
    """
    pass


class RadiusError(AdvKernError):
    """
    Raised for invalid feature-space or input-space radius requests.
    """
    pass


class SolverError(AdvKernError):
    """
    Base class for numerical failures while fitting a model.
    """
    pass


class SingularSystemError(SolverError):
    """
    Raised when a linear system cannot be solved to tolerance.

    Additional Attributes:
        condition_number (Optional[float]): Estimated 2-norm condition number
        n (Optional[int]): Size of the system
    """

    def __init__(
        self,
        message: str,
        details: Optional[Dict[str, Any]] = None,
        condition_number: Optional[float] = None,
        n: Optional[int] = None,
    ) -> None:
        super().__init__(message, details)
        self.condition_number = condition_number
        self.n = n

    def __str__(self) -> str:
        """Return a string representation including conditioning diagnostics."""
        parts = [self.message]
        if self.n is not None:
            parts.append(f"n={self.n}")
        if self.condition_number is not None:
            parts.append(f"condition_number={self.condition_number:.3e}")
        if self.details:
            parts.append(f"details={self.details}")
        if len(parts) > 1:
            return f"{parts[0]} ({', '.join(parts[1:])})"
        return parts[0]


class NonFiniteObjectiveError(SolverError):
    """
    Raised when the training objective becomes NaN or infinite.
    """
    pass


class DivergenceError(SolverError):
    """
    Raised when a gradient-based fit blows up relative to its starting loss.
    """
    pass


class DataError(AdvKernError):
    """
    Raised for unusable data: empty after cleaning, degenerate targets, bad splits.
    """
    pass


class DataIOError(AdvKernError):
    """
    Raised when a data or model file cannot be read or written.
    """
    pass
