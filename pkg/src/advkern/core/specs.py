"""
Specification models for advkern.

This module defines the immutable parameter bundles passed between the
kernels, solver, attack and bounds modules: kernel specifications, solver
controls, attack specifications, synthetic-data specifications and the
JSON-facing reports. They are pydantic models so that every bundle is
validated on construction and serializes to the documented JSON shapes.
"""

from __future__ import annotations

from enum import Enum
from typing import List, Optional

from pydantic import BaseModel, ConfigDict, Field, field_validator

from advkern.config import Settings

MATERN_NUS = (0.5, 1.5, 2.5)


class KernelFamily(str, Enum):
    """Supported kernel families."""
    LINEAR = "linear"
    POLYNOMIAL = "polynomial"
    EXPONENTIAL = "exponential"
    GAUSSIAN = "gaussian"
    LAPLACIAN = "laplacian"
    MATERN = "matern"


NORMALIZED_FAMILIES = frozenset({
    KernelFamily.EXPONENTIAL,
    KernelFamily.GAUSSIAN,
    KernelFamily.LAPLACIAN,
    KernelFamily.MATERN,
})


class Norm(str, Enum):
    """Vector norms used for input-space balls."""
    L1 = "l1"
    L2 = "l2"
    LINF = "linf"


class KernelSpec(BaseModel):
    """
    A kernel family together with its hyperparameters.

    Attributes:
        family: Kernel family
        gamma: Inverse length-scale (ignored by linear and polynomial kernels)
        degree: Polynomial degree (polynomial only)
        nu: Matérn smoothness, one of 1/2, 3/2, 5/2 (Matérn only)
    """
    model_config = ConfigDict(frozen=True, extra="forbid")

    family: KernelFamily
    gamma: float = Field(default=1.0, gt=0)
    degree: int = Field(default=2, ge=1)
    nu: float = 2.5

    @field_validator("nu")
    @classmethod
    def _check_nu(cls, value: float) -> float:
        if value not in MATERN_NUS:
            raise ValueError(f"nu must be one of {MATERN_NUS}, got {value}")
        return value

    @property
    def normalized(self) -> bool:
        """Whether k(x, x) = 1 for every x."""
        return self.family in NORMALIZED_FAMILIES

    @property
    def translation_invariant(self) -> bool:
        return self.family in NORMALIZED_FAMILIES

    def with_gamma(self, gamma: float) -> "KernelSpec":
        return self.model_copy(update={"gamma": float(gamma)})

    def label(self) -> str:
        """Short human-readable name, e.g. ``matern-2.5(gamma=1)``."""
        if self.family == KernelFamily.LINEAR:
            return "linear"
        if self.family == KernelFamily.POLYNOMIAL:
            return f"polynomial(d={self.degree})"
        if self.family == KernelFamily.MATERN:
            return f"matern-{self.nu}(gamma={self.gamma:g})"
        return f"{self.family.value}(gamma={self.gamma:g})"


class SolverConfig(BaseModel):
    """
    Controls of the reweighted kernel ridge solver.

    Attributes:
        delta: Adversarial radius in feature-space units
        epsilon: eta-trick smoothing
        max_iter: Maximum number of outer iterations
        tol: Relative change of the exact objective that stops the iterations
        dense_threshold: Largest n solved by dense Cholesky; larger systems use CG
        cg_tol: Relative residual tolerance of the conjugate-gradient fallback
    """
    model_config = ConfigDict(frozen=True, extra="forbid")

    delta: float = Field(ge=0)
    epsilon: float = Field(default=1e-8, gt=0)
    max_iter: int = Field(default=100, ge=1)
    tol: float = Field(default=1e-8, gt=0)
    dense_threshold: int = Field(default=3000, ge=1)
    cg_tol: float = Field(default=1e-12, gt=0)

    @classmethod
    def from_settings(cls, delta: float, settings: Optional[Settings] = None, **overrides) -> "SolverConfig":
        """Build a config whose numerical controls come from the environment."""
        settings = settings or Settings()
        values = {
            "delta": delta,
            "epsilon": settings.epsilon,
            "max_iter": settings.max_iter,
            "tol": settings.tol,
            "dense_threshold": settings.dense_threshold,
            "cg_tol": settings.cg_tol,
        }
        values.update(overrides)
        return cls(**values)


class AttackSpec(BaseModel):
    """
    Projected gradient attack inside an input-space ball.

    Attributes:
        norm: Ball norm, l2 or linf
        radius: Ball radius in standardized input units
        steps: Number of ascent steps per restart
        step_size: Step length; defaults to 2.5 * radius / steps
        restarts: Number of restarts, the first one starting at the clean point
    """
    model_config = ConfigDict(frozen=True, extra="forbid")

    norm: Norm = Norm.L2
    radius: float = Field(ge=0)
    steps: int = Field(default=40, ge=1)
    step_size: Optional[float] = Field(default=None, gt=0)
    restarts: int = Field(default=1, ge=1)

    @field_validator("norm")
    @classmethod
    def _check_norm(cls, value: Norm) -> Norm:
        if value == Norm.L1:
            raise ValueError("attacks support the l2 and linf norms only")
        return value

    @property
    def effective_step_size(self) -> float:
        if self.step_size is not None:
            return self.step_size
        return 2.5 * self.radius / self.steps

    def label(self) -> str:
        return f"{self.norm.value}<={self.radius:g}"


class SyntheticTarget(str, Enum):
    """One-dimensional regression targets on [0, 1]."""
    SINE = "sine"
    SQUARE = "square"
    LINEAR = "linear"


class SyntheticSpec(BaseModel):
    """
    Synthetic one-dimensional dataset.

    Attributes:
        target: Target function
        n: Number of samples
        noise_sigma: Standard deviation of the additive Gaussian noise
        seed: Seed of the generator
    """
    model_config = ConfigDict(frozen=True, extra="forbid")

    target: SyntheticTarget = SyntheticTarget.SINE
    n: int = Field(default=100, ge=2)
    noise_sigma: float = Field(default=0.1, ge=0)
    seed: int = 0


class Estimator(str, Enum):
    """Estimators covered by the excess-risk theorems."""
    ADVERSARIAL = "adversarial"
    RIDGE = "ridge"


class BoundInputs(BaseModel):
    """
    Quantities entering the excess-risk bounds.

    Attributes:
        sigma: Noise magnitude
        R: RKHS norm of the target function
        delta_or_lambda: Adversarial radius or ridge weight
        gamma: Gaussian complexity (or its realized value)
        beta: Local Gaussian complexity (or its realized value)
    """
    model_config = ConfigDict(frozen=True, extra="forbid")

    sigma: float = Field(ge=0)
    R: float = Field(ge=0)
    delta_or_lambda: float = Field(ge=0)
    gamma: float = Field(ge=0)
    beta: float = Field(ge=0)


class BoundValues(BaseModel):
    """Both branches of an excess-risk bound and their minimum."""
    model_config = ConfigDict(frozen=True)

    estimator: Estimator
    b_gamma: float
    b_beta: float
    minimum: float


class FitSummary(BaseModel):
    """
    Outcome of a fit.

    Attributes:
        method: Training method name
        iterations: Number of outer iterations (or epochs)
        objective: Final exact objective value
        converged: Whether the stop criterion was met before max_iter
        wall_time: Elapsed seconds
        objective_history: Exact objective after every outer iteration
    """
    model_config = ConfigDict(frozen=True)

    method: str
    iterations: int
    objective: float
    converged: bool
    wall_time: float = 0.0
    objective_history: List[float] = Field(default_factory=list)


class ComplexityReport(BaseModel):
    """
    Gaussian complexity and critical radius of a kernel matrix.

    Attributes:
        n: Number of design points
        gamma_bar_mc: Monte Carlo estimate of E (1/n) sqrt(w^T K w)
        gamma_bar_analytic: sqrt(tr K) / n
        beta_bar: Critical radius of the local complexity
        spectrum: Eigenvalues of K / n, nonincreasing
        mc_samples: Number of Monte Carlo draws
        mc_stderr: Standard error of gamma_bar_mc
        note: How beta is evaluated
    """
    model_config = ConfigDict(frozen=True)

    n: int
    gamma_bar_mc: float
    gamma_bar_analytic: float
    beta_bar: float
    spectrum: List[float]
    mc_samples: int
    mc_stderr: float
    note: str = (
        "beta_bar is the eigenvalue fixed point; realized beta_w is evaluated on the "
        "fitted direction f_hat - f_star only"
    )
