"""
advkern Configuration Management Module.

This module provides the environment-driven defaults for the numerical
knobs of advkern, reading configuration from environment variables with
validation and default values.
"""

from __future__ import annotations

import math
import os
from typing import Optional

from advkern.exceptions import ConfigurationError
from advkern.utils.logging import get_advkern_logger

logger = get_advkern_logger(__name__)


class Settings:
    """
    Default numerical settings read from the environment.

    Environment Variables:
        ADVKERN_EPSILON (optional): eta-trick smoothing added under the square roots
        ADVKERN_MAX_ITER (optional): Maximum outer iterations of the reweighted solver
        ADVKERN_TOL (optional): Relative objective change that stops the solver
        ADVKERN_DENSE_THRESHOLD (optional): Largest n solved by dense Cholesky
        ADVKERN_CG_TOL (optional): Relative residual tolerance of conjugate gradients
        ADVKERN_MC_SAMPLES (optional): Monte Carlo draws for the Gaussian complexity
        ADVKERN_CV_FOLDS (optional): Default number of cross-validation folds
        ADVKERN_THREADS (optional): Worker threads for replicates and attacks
    """

    def __init__(self) -> None:
        """
        Load settings from environment variables.

        Raises:
            ConfigurationError: If a variable is malformed or out of range
        """
        self.epsilon = self._get_float_env("ADVKERN_EPSILON", 1e-8, min_val=0.0, strict=True)
        self.max_iter = self._get_int_env("ADVKERN_MAX_ITER", 100, min_val=1)
        self.tol = self._get_float_env("ADVKERN_TOL", 1e-8, min_val=0.0, strict=True)
        self.dense_threshold = self._get_int_env("ADVKERN_DENSE_THRESHOLD", 3000, min_val=1)
        self.cg_tol = self._get_float_env("ADVKERN_CG_TOL", 1e-12, min_val=0.0, strict=True)
        self.mc_samples = self._get_int_env("ADVKERN_MC_SAMPLES", 2000, min_val=2)
        self.cv_folds = self._get_int_env("ADVKERN_CV_FOLDS", 5, min_val=2)
        self.threads = self._get_int_env("ADVKERN_THREADS", 1, min_val=1)

        logger.debug(f"Settings loaded: {self}")

    def _get_int_env(self, var_name: str, default: int, min_val: Optional[int] = None) -> int:
        """
        Get an integer environment variable with validation.

        Args:
            var_name (str): Name of the environment variable
            default (int): Default value if environment variable is not set
            min_val (Optional[int]): Minimum allowed value

        Returns:
            int: Parsed integer value

        Raises:
            ConfigurationError: If the value cannot be parsed or is out of range
        """
        value = os.getenv(var_name)
        if not value:
            return default

        try:
            int_value = int(value.strip())
        except ValueError:
            raise ConfigurationError(f"Environment variable '{var_name}' must be an integer, got '{value}'")

        if min_val is not None and int_value < min_val:
            raise ConfigurationError(f"Environment variable '{var_name}' must be >= {min_val}, got {int_value}")

        return int_value

    def _get_float_env(
        self,
        var_name: str,
        default: float,
        min_val: Optional[float] = None,
        max_val: Optional[float] = None,
        strict: bool = False,
    ) -> float:
        """
        Get a float environment variable with validation.

        Args:
            var_name (str): Name of the environment variable
            default (float): Default value if environment variable is not set
            min_val (Optional[float]): Minimum allowed value
            max_val (Optional[float]): Maximum allowed value
            strict (bool): Whether min_val itself is excluded

        Returns:
            float: Parsed float value

        Raises:
            ConfigurationError: If the value cannot be parsed or is out of range
        """
        value = os.getenv(var_name)
        if not value:
            return default

        try:
            float_value = float(value.strip())
        except ValueError:
            raise ConfigurationError(f"Environment variable '{var_name}' must be a number, got '{value}'")

        if not math.isfinite(float_value):
            raise ConfigurationError(f"Environment variable '{var_name}' must be finite, got '{value}'")

        if min_val is not None:
            if float_value < min_val or (strict and float_value == min_val):
                op = ">" if strict else ">="
                raise ConfigurationError(f"Environment variable '{var_name}' must be {op} {min_val}, got {float_value}")

        if max_val is not None and float_value > max_val:
            raise ConfigurationError(f"Environment variable '{var_name}' must be <= {max_val}, got {float_value}")

        return float_value

    def __str__(self) -> str:
        return (
            f"Settings(epsilon={self.epsilon}, max_iter={self.max_iter}, tol={self.tol}, "
            f"dense_threshold={self.dense_threshold}, cg_tol={self.cg_tol}, "
            f"mc_samples={self.mc_samples}, cv_folds={self.cv_folds}, threads={self.threads})"
        )
