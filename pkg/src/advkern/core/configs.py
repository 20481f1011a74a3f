"""
Experiment configuration models.

Each command of the harness is driven by one of these pydantic models. They
are validated before any computation starts and reject unknown keys, so a
typo in a JSON configuration file fails fast with a configuration error.
"""

from __future__ import annotations

import math
from enum import Enum
from pathlib import Path
from typing import Any, Dict, List, Literal, Optional, Union

from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

from advkern.core.data import Dataset, load_csv, synthesize
from advkern.core.solver import DEFAULT_GAMMA_GRID, DEFAULT_LAMBDA_GRID
from advkern.core.specs import AttackSpec, KernelFamily, KernelSpec, Norm, SyntheticSpec, SyntheticTarget

DeltaPolicy = Union[Literal["auto"], float]


def parse_kernel(value: Any) -> Any:
    """
    Parse the compact kernel notation ``family[:key=value,...]``.

    ``"matern:nu=1.5,gamma=0.1"`` becomes a KernelSpec; dicts and specs pass through.
    """
    if not isinstance(value, str):
        return value
    family, _, params = value.strip().partition(":")
    data: Dict[str, Any] = {"family": family.strip().lower()}
    for item in filter(None, (p.strip() for p in params.split(","))):
        key, sep, raw = item.partition("=")
        if not sep:
            raise ValueError(f"kernel parameter '{item}' must look like key=value")
        key = key.strip()
        data[key] = int(raw) if key == "degree" else float(raw)
    return data


def parse_attack(value: Any) -> Any:
    """Parse ``norm:radius`` (e.g. ``linf:0.1``) into attack fields."""
    if not isinstance(value, str):
        return value
    norm, sep, radius = value.strip().partition(":")
    if not sep:
        raise ValueError(f"attack '{value}' must look like norm:radius")
    return {"norm": norm.strip().lower(), "radius": float(radius)}


def resolve_delta(policy: DeltaPolicy, n: int) -> float:
    """Resolve the radius policy; 'auto' means 1 / sqrt(n)."""
    return 1.0 / math.sqrt(n) if policy == "auto" else float(policy)


class _Config(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)


class DataSource(_Config):
    """
    Where a command gets its data: a CSV file or a synthetic target.

    Attributes:
        data: CSV path
        target_column: Target name, or position for headerless files
        has_header: Whether the CSV has a header row
        synthetic: Synthetic target, used when no CSV is given
        n: Synthetic sample size
        noise_sigma: Synthetic noise level
    """
    data: Optional[Path] = None
    target_column: Union[int, str] = -1
    has_header: bool = True
    synthetic: Optional[SyntheticTarget] = None
    n: int = Field(default=100, ge=2)
    noise_sigma: float = Field(default=0.1, ge=0)

    @model_validator(mode="after")
    def _one_source(self) -> "DataSource":
        if (self.data is None) == (self.synthetic is None):
            raise ValueError("exactly one of 'data' or 'synthetic' must be given")
        return self

    def load(self, seed: int) -> Dataset:
        if self.data is not None:
            return load_csv(self.data, self.target_column, self.has_header)
        return synthesize(SyntheticSpec(target=self.synthetic, n=self.n, noise_sigma=self.noise_sigma, seed=seed))


class FitMethod(str, Enum):
    ADVERSARIAL = "adversarial"
    KRR = "krr"
    KRR_CV = "krr-cv"
    MKL = "mkl"
    INPUT = "input"


class FitConfig(DataSource):
    """
    Configuration of the ``fit`` command.

    Attributes:
        method: Training method
        kernels: Kernel list; more than one only for MKL
        select_gamma: Choose gamma by cross-validation (adversarial and input methods)
        delta: Feature radius, a number or 'auto' for 1/sqrt(n_train)
        lam: Ridge weight for 'krr'
        test_fraction: Held-out share; 0 trains on everything
        folds: Cross-validation folds
        train_radius: Training ball radius of the input-space method
        norm: Training ball norm of the input-space method
        epochs: Epochs of the input-space method
        lr: Adam learning rate of the input-space method
    """
    method: FitMethod = FitMethod.ADVERSARIAL
    kernels: List[KernelSpec] = Field(default_factory=lambda: [KernelSpec(family=KernelFamily.GAUSSIAN)], min_length=1)
    select_gamma: bool = False
    gamma_grid: List[float] = Field(default_factory=lambda: list(DEFAULT_GAMMA_GRID), min_length=1)
    lambda_grid: List[float] = Field(default_factory=lambda: list(DEFAULT_LAMBDA_GRID), min_length=1)
    delta: DeltaPolicy = "auto"
    lam: float = Field(default=1e-3, gt=0)
    test_fraction: float = Field(default=0.2, ge=0, lt=1)
    folds: int = Field(default=5, ge=2)
    train_radius: float = Field(default=0.1, ge=0)
    norm: Norm = Norm.L2
    epochs: int = Field(default=300, ge=1)
    lr: float = Field(default=1e-2, gt=0)

    @field_validator("kernels", mode="before")
    @classmethod
    def _parse_kernels(cls, value: Any) -> Any:
        return [parse_kernel(k) for k in value] if isinstance(value, list) else [parse_kernel(value)]

    @field_validator("delta")
    @classmethod
    def _check_delta(cls, value: DeltaPolicy) -> DeltaPolicy:
        if value != "auto" and value < 0:
            raise ValueError("delta must be nonnegative or 'auto'")
        return value

    @model_validator(mode="after")
    def _check_kernels(self) -> "FitConfig":
        if self.method != FitMethod.MKL and len(self.kernels) != 1:
            raise ValueError(f"method '{self.method.value}' takes exactly one kernel")
        if self.norm == Norm.L1:
            raise ValueError("input-space training supports the l2 and linf norms only")
        return self


class PredictConfig(_Config):
    """Configuration of the ``predict`` command."""
    model: Path
    data: Path
    has_header: bool = True
    drop_column: Optional[Union[int, str]] = None
    standardization: Optional[Path] = None


class AttackConfig(_Config):
    """Configuration of the ``attack`` command."""
    model: Path
    data: Path
    target_column: Union[int, str] = -1
    has_header: bool = True
    standardization: Optional[Path] = None
    attack: AttackSpec

    @field_validator("attack", mode="before")
    @classmethod
    def _parse_attack(cls, value: Any) -> Any:
        return parse_attack(value)


class RateMethod(str, Enum):
    ADV_KERN = "adv_kern"
    RIDGE_CV = "ridge_cv"


class RateSweepConfig(_Config):
    """
    Configuration of the ``rate-sweep`` command.

    Attributes:
        target: Synthetic target
        kernel: Kernel
        n_grid: Ascending training sizes
        reps: Replicates per size
        noise_sigma: Noise level
        delta: Feature radius policy
        methods: Estimators swept; each gets its own slope
        folds: Cross-validation folds of ridge_cv
        test_size: Fresh points on which the noise-free MSE is measured
        degenerate_mse: Median MSE below which the slope is flagged degenerate
    """
    target: SyntheticTarget = SyntheticTarget.SINE
    kernel: KernelSpec = KernelSpec(family=KernelFamily.MATERN, nu=2.5)
    n_grid: List[int] = Field(default_factory=lambda: [32, 64, 128, 256, 512, 1024], min_length=2)
    reps: int = Field(default=10, ge=1)
    noise_sigma: float = Field(default=0.1, ge=0)
    delta: DeltaPolicy = "auto"
    methods: List[RateMethod] = Field(default_factory=lambda: [RateMethod.ADV_KERN, RateMethod.RIDGE_CV], min_length=1)
    folds: int = Field(default=5, ge=2)
    test_size: int = Field(default=1000, ge=1)
    degenerate_mse: float = Field(default=1e-12, ge=0)

    @field_validator("kernel", mode="before")
    @classmethod
    def _parse_kernel(cls, value: Any) -> Any:
        return parse_kernel(value)

    @field_validator("n_grid")
    @classmethod
    def _ascending(cls, value: List[int]) -> List[int]:
        if any(b <= a for a, b in zip(value, value[1:])) or value[0] < 2:
            raise ValueError("n_grid must be strictly ascending with every n >= 2")
        return value

    @model_validator(mode="after")
    def _enough_for_folds(self) -> "RateSweepConfig":
        if RateMethod.RIDGE_CV in self.methods and self.n_grid[0] < self.folds:
            raise ValueError(f"ridge_cv needs every n >= folds={self.folds}")
        return self


class NoiseSweepConfig(_Config):
    """
    Configuration of the ``noise-sweep`` command.

    Attributes:
        targets: Synthetic targets; sine and square use the smooth kernel, linear the linear kernel
        sigma_grid: Noise levels
        n: Training size
        reps: Replicates per noise level
        kernel: Kernel for the nonlinear targets
        ridge_lambda: Ridge weight of the fixed-lambda baseline
        test_size: Fresh points on which the noise-free MSE is measured
    """
    targets: List[SyntheticTarget] = Field(
        default_factory=lambda: [SyntheticTarget.SINE, SyntheticTarget.SQUARE, SyntheticTarget.LINEAR], min_length=1
    )
    sigma_grid: List[float] = Field(default_factory=lambda: [10.0 ** k for k in range(-7, 1)], min_length=1)
    n: int = Field(default=200, ge=10)
    reps: int = Field(default=5, ge=1)
    kernel: KernelSpec = KernelSpec(family=KernelFamily.GAUSSIAN, gamma=10.0)
    ridge_lambda: float = Field(default=1e-3, gt=0)
    folds: int = Field(default=5, ge=2)
    test_size: int = Field(default=1000, ge=1)

    @field_validator("kernel", mode="before")
    @classmethod
    def _parse_kernel(cls, value: Any) -> Any:
        return parse_kernel(value)

    @field_validator("sigma_grid")
    @classmethod
    def _nonnegative(cls, value: List[float]) -> List[float]:
        if any(s < 0 for s in value):
            raise ValueError("noise levels must be nonnegative")
        return value


class SensitivityConfig(_Config):
    """
    Configuration of the ``sensitivity`` command.

    Attributes:
        target: Synthetic target
        kernel: Kernel shared by every method
        n: Training size
        reps: Replicates; each draws one dataset shared by all methods
        noise_sigma: Noise level
        delta_grid: Radii of the adversarial rows
        lambda_grid: Weights of the fixed ridge rows
        folds: Cross-validation folds of the ridge_cv reference
        test_size: Fresh points on which the noise-free MSE is measured
    """
    target: SyntheticTarget = SyntheticTarget.SINE
    kernel: KernelSpec = KernelSpec(family=KernelFamily.GAUSSIAN, gamma=10.0)
    n: int = Field(default=200, ge=2)
    reps: int = Field(default=5, ge=1)
    noise_sigma: float = Field(default=0.1, ge=0)
    delta_grid: List[float] = Field(default_factory=lambda: [10.0 ** (k / 2) for k in range(-8, 1)], min_length=1)
    lambda_grid: List[float] = Field(default_factory=lambda: [10.0 ** k for k in range(-8, 1)], min_length=1)
    folds: int = Field(default=5, ge=2)
    test_size: int = Field(default=1000, ge=1)

    @field_validator("kernel", mode="before")
    @classmethod
    def _parse_kernel(cls, value: Any) -> Any:
        return parse_kernel(value)

    @field_validator("delta_grid", "lambda_grid")
    @classmethod
    def _positive(cls, value: List[float]) -> List[float]:
        if any(v <= 0 for v in value):
            raise ValueError("radii and ridge weights must be positive")
        return value

    @model_validator(mode="after")
    def _enough_for_folds(self) -> "SensitivityConfig":
        if self.n < self.folds:
            raise ValueError(f"n={self.n} is smaller than folds={self.folds}")
        return self


class BenchmarkMethod(str, Enum):
    ADV_AUTO = "adv_auto"
    RIDGE_CV = "ridge_cv"
    ADV_FIXED = "adv_fixed"
    ADV_INPUT = "adv_input"


class BenchmarkConfig(_Config):
    """
    Configuration of the ``benchmark`` command.

    Attributes:
        data: CSV path
        target_column: Target name or position
        has_header: Whether the CSV has a header row
        test_fraction: Held-out share
        family: Kernel family searched by cross-validation
        methods: Method roster
        fixed_deltas: Radii of the fixed-radius adversarial rows
        input_radius: Training radius of the input-space rows (one row per attack norm)
        input_epochs: Epochs of the input-space rows
        attacks: Test-time attacks, evaluated next to the clean score
        bootstrap_reps: Bootstrap replicates of the test set
        folds: Cross-validation folds
    """
    data: Path
    target_column: Union[int, str] = -1
    has_header: bool = True
    test_fraction: float = Field(default=0.2, gt=0, lt=1)
    family: KernelFamily = KernelFamily.GAUSSIAN
    methods: List[BenchmarkMethod] = Field(default_factory=lambda: list(BenchmarkMethod), min_length=1)
    fixed_deltas: List[float] = Field(default_factory=lambda: [0.01, 0.1])
    input_radius: float = Field(default=0.1, ge=0)
    input_epochs: int = Field(default=300, ge=1)
    attacks: List[AttackSpec] = Field(
        default_factory=lambda: [
            AttackSpec(norm=Norm.L2, radius=0.01),
            AttackSpec(norm=Norm.L2, radius=0.1),
            AttackSpec(norm=Norm.LINF, radius=0.01),
            AttackSpec(norm=Norm.LINF, radius=0.1),
        ]
    )
    bootstrap_reps: int = Field(default=200, ge=1)
    folds: int = Field(default=5, ge=2)

    @field_validator("attacks", mode="before")
    @classmethod
    def _parse_attacks(cls, value: Any) -> Any:
        return [parse_attack(a) for a in value] if isinstance(value, list) else [parse_attack(value)]

    @field_validator("fixed_deltas")
    @classmethod
    def _positive(cls, value: List[float]) -> List[float]:
        if any(d <= 0 for d in value):
            raise ValueError("fixed deltas must be positive")
        return value


class BoundsConfig(DataSource):
    """
    Configuration of the ``bounds`` command.

    Attributes:
        kernel: Kernel of the Gram matrix
        mc_samples: Monte Carlo draws
        sigma_grid: Noise magnitudes
        R_grid: Target RKHS norms
        delta_grid: Radii (adversarial) and ridge weights (ridge)
    """
    kernel: KernelSpec = KernelSpec(family=KernelFamily.GAUSSIAN)
    mc_samples: int = Field(default=2000, ge=2)
    sigma_grid: List[float] = Field(default_factory=lambda: [0.1, 1.0], min_length=1)
    R_grid: List[float] = Field(default_factory=lambda: [1.0], min_length=1)
    delta_grid: List[float] = Field(default_factory=lambda: [0.01, 0.1, 1.0], min_length=1)

    @field_validator("kernel", mode="before")
    @classmethod
    def _parse_kernel(cls, value: Any) -> Any:
        return parse_kernel(value)

    @field_validator("sigma_grid", "R_grid")
    @classmethod
    def _nonnegative(cls, value: List[float]) -> List[float]:
        if any(v < 0 for v in value):
            raise ValueError("grid values must be nonnegative")
        return value

    @field_validator("delta_grid")
    @classmethod
    def _positive(cls, value: List[float]) -> List[float]:
        if any(v <= 0 for v in value):
            raise ValueError("delta values must be positive")
        return value
