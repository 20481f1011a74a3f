"""
Kernel evaluation module.

This module evaluates the supported kernel families on points and point
sets, builds Gram matrices, differentiates kernels with respect to their
second argument, measures RKHS distances between feature maps and converts
feature-space radii into the input-space balls they cover (and back).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum
from typing import Optional

import numpy as np
from scipy.optimize import brentq
from scipy.spatial.distance import cdist

from advkern.core.specs import KernelFamily, KernelSpec, Norm
from advkern.exceptions import (
    DimensionMismatchError,
    KernelError,
    NonFiniteInputError,
    RadiusError,
)
from advkern.utils.logging import get_advkern_logger

logger = get_advkern_logger(__name__)

SQRT3 = math.sqrt(3.0)
SQRT5 = math.sqrt(5.0)

# Entries of a (chunk, n, p) difference tensor built at once by the Laplacian gradient.
_LAPLACIAN_CHUNK_ENTRIES = 4_000_000


class RadiusConvention(str, Enum):
    """
    How a feature radius maps to a translation-invariant input ball.

    DISTANCE uses D_H(x, x') <= delta, i.e. 2 - 2 k <= delta**2.
    TABLE reproduces the published closed forms, i.e. 2 - 2 k <= delta.
    """
    DISTANCE = "distance"
    TABLE = "table"


@dataclass(frozen=True)
class GramMatrix:
    """
    Kernel matrix between two point sets.

    Attributes:
        entries (np.ndarray): n x m matrix with K_ij = k(x_i, x'_j), read-only
        symmetric (bool): Whether both point sets are the same
    """
    entries: np.ndarray
    symmetric: bool

    @property
    def shape(self) -> tuple:
        return self.entries.shape

    @property
    def n(self) -> int:
        return self.entries.shape[0]

    def min_eigenvalue(self) -> float:
        """Smallest eigenvalue of a symmetric Gram matrix."""
        if not self.symmetric:
            raise KernelError("Eigenvalues are only defined for symmetric Gram matrices")
        return float(np.linalg.eigvalsh(self.entries)[0])

    def is_psd(self, rtol: float = 1e-8) -> bool:
        """Check positive semidefiniteness up to a tolerance relative to the spectral norm."""
        eigvals = np.linalg.eigvalsh(self.entries)
        scale = max(abs(eigvals[-1]), abs(eigvals[0]), 1.0)
        return bool(eigvals[0] >= -rtol * scale)


@dataclass(frozen=True)
class InputBall:
    """
    An input-space ball {dx : ||dx||_norm <= radius}.

    An infinite radius signals that the feature ball covers every perturbation.
    """
    norm: Norm
    radius: float

    @property
    def bounded(self) -> bool:
        return math.isfinite(self.radius)


def as_vector(x, name: str = "x") -> np.ndarray:
    """Validate and convert a point to a finite 1-D float array."""
    arr = np.asarray(x, dtype=float)
    if arr.ndim == 0:
        arr = arr.reshape(1)
    if arr.ndim != 1:
        raise DimensionMismatchError(f"'{name}' must be a vector, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise NonFiniteInputError(f"'{name}' contains non-finite entries")
    return arr


def as_matrix(X, name: str = "X") -> np.ndarray:
    """Validate and convert a point set to a finite 2-D float array."""
    arr = np.asarray(X, dtype=float)
    if arr.ndim != 2:
        raise DimensionMismatchError(f"'{name}' must be a 2-D array (n_samples, n_features), got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise NonFiniteInputError(f"'{name}' contains non-finite entries")
    return arr


def _check_columns(X: np.ndarray, X_prime: np.ndarray) -> None:
    if X.shape[1] != X_prime.shape[1]:
        raise DimensionMismatchError(
            "Feature dimensions do not match",
            details={"left": X.shape[1], "right": X_prime.shape[1]},
        )


def _matern_profile(r: np.ndarray, gamma: float, nu: float) -> np.ndarray:
    if nu == 0.5:
        return np.exp(-gamma * r)
    if nu == 1.5:
        t = SQRT3 * gamma * r
        return (1.0 + t) * np.exp(-t)
    t = SQRT5 * gamma * r
    return (1.0 + t + t * t / 3.0) * np.exp(-t)


def kernel_block(spec: KernelSpec, X: np.ndarray, X_prime: np.ndarray) -> np.ndarray:
    """
    Evaluate the kernel on all pairs of rows of two validated point sets.

    Args:
        spec (KernelSpec): Kernel to evaluate
        X (np.ndarray): n x p point set
        X_prime (np.ndarray): m x p point set

    Returns:
        np.ndarray: n x m matrix of kernel values
    """
    family = spec.family
    if family == KernelFamily.LINEAR:
        return X @ X_prime.T
    if family == KernelFamily.POLYNOMIAL:
        K = (1.0 + X @ X_prime.T) ** spec.degree
        if not np.all(np.isfinite(K)):
            raise KernelError("Polynomial kernel overflowed", details={"degree": spec.degree})
        return K
    if family == KernelFamily.GAUSSIAN:
        return np.exp(-spec.gamma * cdist(X, X_prime, "sqeuclidean"))
    if family == KernelFamily.LAPLACIAN:
        return np.exp(-spec.gamma * cdist(X, X_prime, "cityblock"))

    r = cdist(X, X_prime, "euclidean")
    if family == KernelFamily.EXPONENTIAL:
        return np.exp(-spec.gamma * r)
    return _matern_profile(r, spec.gamma, spec.nu)


def kernel_eval(spec: KernelSpec, x, x_prime) -> float:
    """
    Evaluate k(x, x').

    Raises:
        DimensionMismatchError: If x and x' differ in dimension
        NonFiniteInputError: If either point has non-finite entries
    """
    x = as_vector(x, "x")
    x_prime = as_vector(x_prime, "x_prime")
    if x.shape != x_prime.shape:
        raise DimensionMismatchError(
            "Points must have the same dimension",
            details={"x": x.shape[0], "x_prime": x_prime.shape[0]},
        )
    return float(kernel_block(spec, x[None, :], x_prime[None, :])[0, 0])


def gram_matrix(spec: KernelSpec, X, X_prime=None) -> GramMatrix:
    """
    Build the Gram matrix K_ij = k(x_i, x'_j).

    When X_prime is omitted (or holds the same points as X) the result is flagged
    symmetric and symmetrized exactly to remove round-off asymmetry.

    Args:
        spec (KernelSpec): Kernel to evaluate
        X: n x p point set
        X_prime: Optional m x p point set

    Returns:
        GramMatrix: The kernel matrix
    """
    X = as_matrix(X, "X")
    if X_prime is None:
        X_prime_arr = X
        symmetric = True
    else:
        X_prime_arr = as_matrix(X_prime, "X_prime")
        _check_columns(X, X_prime_arr)
        symmetric = X_prime is X or (X.shape == X_prime_arr.shape and np.array_equal(X, X_prime_arr))

    K = kernel_block(spec, X, X_prime_arr)
    if symmetric:
        K = 0.5 * (K + K.T)
    K.setflags(write=False)
    return GramMatrix(entries=K, symmetric=symmetric)


def _gradient_coefficients(spec: KernelSpec, X: np.ndarray, X_train: np.ndarray) -> np.ndarray:
    """
    Scalar coefficients c_mi of the kernel gradients.

    For radial families grad_x k(x_i, x_m) = c_mi * (x_m - x_i); for the
    polynomial kernel grad_x k(x_i, x_m) = c_mi * x_i.
    """
    family = spec.family
    if family == KernelFamily.POLYNOMIAL:
        C = spec.degree * (1.0 + X @ X_train.T) ** (spec.degree - 1)
    elif family == KernelFamily.GAUSSIAN:
        C = -2.0 * spec.gamma * np.exp(-spec.gamma * cdist(X, X_train, "sqeuclidean"))
    else:
        r = cdist(X, X_train, "euclidean")
        if family == KernelFamily.EXPONENTIAL or spec.nu == 0.5:
            k = np.exp(-spec.gamma * r)
            # subgradient 0 at r = 0
            C = np.divide(-spec.gamma * k, r, out=np.zeros_like(r), where=r > 0)
        elif spec.nu == 1.5:
            a = SQRT3 * spec.gamma
            C = -a * a * np.exp(-a * r)
        else:
            b = SQRT5 * spec.gamma
            C = -(b * b / 3.0) * (1.0 + b * r) * np.exp(-b * r)
    if not np.all(np.isfinite(C)):
        raise KernelError("Kernel gradient has non-finite intermediate values", details={"family": family.value})
    return C


def kernel_gradients(spec: KernelSpec, X_train, x) -> np.ndarray:
    """
    Gradients of k(x_i, .) at x for every training point x_i.

    Returns:
        np.ndarray: n x p matrix whose i-th row is grad_x k(x_i, x)
    """
    X_train = as_matrix(X_train, "X_train")
    x = as_vector(x, "x")
    _check_columns(X_train, x[None, :])

    family = spec.family
    if family == KernelFamily.LINEAR:
        return X_train.copy()
    if family == KernelFamily.LAPLACIAN:
        diff = x - X_train
        k = np.exp(-spec.gamma * np.abs(diff).sum(axis=1))
        return -spec.gamma * k[:, None] * np.sign(diff)

    c = _gradient_coefficients(spec, x[None, :], X_train)[0]
    if family == KernelFamily.POLYNOMIAL:
        return c[:, None] * X_train
    return c[:, None] * (x - X_train)


def kernel_gradient(spec: KernelSpec, x_train, x) -> np.ndarray:
    """
    Gradient of k(x_train, x) with respect to x.

    At the kinks of the Laplacian and Matérn-1/2 kernels the zero subgradient is returned.

    Raises:
        DimensionMismatchError: If the points differ in dimension
        KernelError: If the polynomial kernel produces non-finite intermediates
    """
    x_train = as_vector(x_train, "x_train")
    return kernel_gradients(spec, x_train[None, :], x)[0]


def batch_input_gradient(spec: KernelSpec, X_train: np.ndarray, alpha: np.ndarray, X: np.ndarray) -> np.ndarray:
    """
    Input gradients of f = sum_i alpha_i k(x_i, .) at every row of X.

    Args:
        spec (KernelSpec): Kernel of the model
        X_train (np.ndarray): n x p training points
        alpha (np.ndarray): n dual coefficients
        X (np.ndarray): m x p evaluation points

    Returns:
        np.ndarray: m x p matrix of gradients
    """
    family = spec.family
    if family == KernelFamily.LINEAR:
        return np.broadcast_to(alpha @ X_train, X.shape).copy()

    if family == KernelFamily.LAPLACIAN:
        m, p = X.shape
        n = X_train.shape[0]
        chunk = max(1, _LAPLACIAN_CHUNK_ENTRIES // max(1, n * p))
        G = np.empty_like(X)
        for start in range(0, m, chunk):
            Xc = X[start:start + chunk]
            diff = Xc[:, None, :] - X_train[None, :, :]
            Kc = np.exp(-spec.gamma * np.abs(diff).sum(axis=2))
            G[start:start + chunk] = -spec.gamma * np.einsum("cn,cnp->cp", Kc * alpha, np.sign(diff))
        return G

    C = _gradient_coefficients(spec, X, X_train)
    weighted_train = alpha[:, None] * X_train
    if family == KernelFamily.POLYNOMIAL:
        return C @ weighted_train
    return X * (C @ alpha)[:, None] - C @ weighted_train


def _deficit(spec: KernelSpec, r: float) -> float:
    """1 - k(x, x + dx) for a translation-invariant kernel at native distance r, computed without cancellation."""
    family = spec.family
    if family == KernelFamily.GAUSSIAN:
        return -math.expm1(-spec.gamma * r * r)
    if family in (KernelFamily.LAPLACIAN, KernelFamily.EXPONENTIAL) or spec.nu == 0.5:
        return -math.expm1(-spec.gamma * r)
    if spec.nu == 1.5:
        t = SQRT3 * spec.gamma * r
        return -math.expm1(-t) - t * math.exp(-t)
    t = SQRT5 * spec.gamma * r
    return -math.expm1(-t) - (t + t * t / 3.0) * math.exp(-t)


def _native_distance(spec: KernelSpec, diff: np.ndarray) -> float:
    if spec.family == KernelFamily.LAPLACIAN:
        return float(np.abs(diff).sum())
    return float(np.linalg.norm(diff))


def _native_norm(spec: KernelSpec) -> Norm:
    return Norm.L1 if spec.family == KernelFamily.LAPLACIAN else Norm.L2


def kernel_distance(spec: KernelSpec, x, x_prime) -> float:
    """
    RKHS distance ||phi(x) - phi(x')||_H = sqrt(k(x,x) - 2k(x,x') + k(x',x')).

    Translation-invariant kernels use the equivalent sqrt(2 - 2k) computed from
    the kernel deficit to keep precision for nearby points. Negative round-off
    is clamped to zero.
    """
    x = as_vector(x, "x")
    x_prime = as_vector(x_prime, "x_prime")
    if x.shape != x_prime.shape:
        raise DimensionMismatchError(
            "Points must have the same dimension",
            details={"x": x.shape[0], "x_prime": x_prime.shape[0]},
        )

    if spec.family == KernelFamily.LINEAR:
        return float(np.linalg.norm(x - x_prime))
    if spec.translation_invariant:
        return math.sqrt(2.0 * _deficit(spec, _native_distance(spec, x - x_prime)))

    squared = kernel_eval(spec, x, x) - 2.0 * kernel_eval(spec, x, x_prime) + kernel_eval(spec, x_prime, x_prime)
    if squared < 0.0:
        if squared < -1e-12:
            logger.warning(f"Kernel distance squared is negative beyond round-off: {squared:.3e}")
        squared = 0.0
    return math.sqrt(squared)


def _invert_deficit(spec: KernelSpec, level: float) -> float:
    """Native distance r with 1 - k = level, for 0 < level < 1."""
    family = spec.family
    if family == KernelFamily.GAUSSIAN:
        return math.sqrt(-math.log1p(-level) / spec.gamma)
    if family in (KernelFamily.LAPLACIAN, KernelFamily.EXPONENTIAL) or spec.nu == 0.5:
        return -math.log1p(-level) / spec.gamma

    hi = 1.0
    while _deficit(spec, hi) < level:
        hi *= 2.0
    return brentq(lambda r: _deficit(spec, r) - level, 0.0, hi, xtol=1e-300, rtol=1e-15, maxiter=1000)


def input_radius_for_feature_radius(
    spec: KernelSpec,
    delta: float,
    convention: RadiusConvention = RadiusConvention.DISTANCE,
) -> InputBall:
    """
    Input-space ball covered by the feature-space ball of radius delta.

    Every perturbation inside the returned ball satisfies
    D_H(x, x + dx) <= delta (DISTANCE convention) so the feature-space
    adversarial loss upper-bounds the input-space one over that ball.

    Args:
        spec (KernelSpec): Kernel
        delta (float): Feature-space radius, > 0
        convention (RadiusConvention): DISTANCE (default) or the published TABLE forms

    Returns:
        InputBall: Norm and radius; an infinite radius means every perturbation is covered

    Raises:
        RadiusError: If delta <= 0, or the kernel is polynomial (input-dependent ball)
    """
    if not math.isfinite(delta) or delta <= 0:
        raise RadiusError(f"Feature radius must be positive and finite, got {delta}")

    if spec.family == KernelFamily.LINEAR:
        return InputBall(Norm.L2, float(delta))
    if spec.family == KernelFamily.POLYNOMIAL:
        raise RadiusError(
            "The polynomial kernel ball depends on the input norms; use polynomial_input_radius",
            details={"degree": spec.degree},
        )

    level = delta * delta / 2.0 if convention == RadiusConvention.DISTANCE else delta / 2.0
    norm = _native_norm(spec)
    if level >= 1.0:
        logger.info(f"Feature radius {delta} covers the whole input space for {spec.label()}")
        return InputBall(norm, math.inf)
    return InputBall(norm, _invert_deficit(spec, level))


def polynomial_input_radius(spec: KernelSpec, delta: float, x_norm: float, x_prime_norm: float) -> InputBall:
    """
    Input ball C * delta**(1/d) for the polynomial kernel.

    C = 2**(-1/(2d)) * sqrt(2 + ||x||^2 + ||x'||^2) depends on the norms of the
    clean and perturbed points.
    """
    if spec.family != KernelFamily.POLYNOMIAL:
        raise RadiusError(f"polynomial_input_radius needs a polynomial kernel, got {spec.family.value}")
    if not math.isfinite(delta) or delta <= 0:
        raise RadiusError(f"Feature radius must be positive and finite, got {delta}")
    d = spec.degree
    C = 2.0 ** (-1.0 / (2 * d)) * math.sqrt(2.0 + x_norm ** 2 + x_prime_norm ** 2)
    return InputBall(Norm.L2, C * delta ** (1.0 / d))


def _max_native_distance(spec: KernelSpec, norm: Norm, radius: float, dim: Optional[int]) -> float:
    native = _native_norm(spec)
    if norm == native:
        return radius
    if dim is None:
        raise RadiusError(
            "The input dimension is needed to compare balls in different norms",
            details={"ball": norm.value, "kernel": native.value},
        )
    if native == Norm.L2:
        # an l1 ball sits inside the l2 ball of the same radius
        return radius if norm == Norm.L1 else radius * math.sqrt(dim)
    return radius * math.sqrt(dim) if norm == Norm.L2 else radius * dim


def feature_radius_for_input_radius(spec: KernelSpec, norm: Norm, radius: float, dim: Optional[int] = None) -> float:
    """
    Smallest feature radius whose RKHS ball contains phi(x + dx) - phi(x) for every dx in the input ball.

    Args:
        spec (KernelSpec): Linear or translation-invariant kernel
        norm (Norm): Norm of the input ball
        radius (float): Radius of the input ball, >= 0
        dim (Optional[int]): Input dimension, needed when the ball norm differs from the kernel's

    Returns:
        float: The certified feature radius

    Raises:
        RadiusError: For polynomial kernels or a negative radius
    """
    if not math.isfinite(radius) or radius < 0:
        raise RadiusError(f"Input radius must be nonnegative and finite, got {radius}")
    if spec.family == KernelFamily.POLYNOMIAL:
        raise RadiusError("Feature radius of the polynomial kernel depends on the input point")

    r = _max_native_distance(spec, norm, radius, dim)
    if spec.family == KernelFamily.LINEAR:
        return r
    return math.sqrt(2.0 * _deficit(spec, r))
