"""
Generalization-bound quantities.

This module computes the Gaussian complexity of a kernel matrix (Monte Carlo
and trace forms), the eigenvalue critical radius of the local complexity,
their realized values for one noise draw, the in-sample excess risk and the
excess-risk bounds of the adversarial and ridge estimators.
"""

from __future__ import annotations

import math
from typing import Tuple

import numpy as np
from scipy.optimize import brentq

from advkern.core.kernels import GramMatrix, as_matrix, as_vector
from advkern.core.solver import FittedModel
from advkern.core.specs import BoundInputs, BoundValues, ComplexityReport, Estimator
from advkern.exceptions import ConfigurationError, DimensionMismatchError, SolverError
from advkern.utils.logging import get_advkern_logger

logger = get_advkern_logger(__name__)

SPECTRUM_CLAMP = 1e-10
_MC_CHUNK = 256


def kernel_spectrum(K: GramMatrix) -> np.ndarray:
    """
    Eigenvalues of K / n, nonincreasing, with values below 1e-10 * mu_1 set to zero.

    Raises:
        SolverError: If the eigendecomposition fails
    """
    if not K.symmetric:
        raise ConfigurationError("The spectrum needs a symmetric Gram matrix")
    try:
        eigvals = np.linalg.eigvalsh(K.entries / K.n)
    except np.linalg.LinAlgError as e:
        raise SolverError(f"Eigendecomposition of the kernel matrix failed: {e}", details={"n": K.n})
    spectrum = eigvals[::-1].copy()
    top = max(spectrum[0], 0.0)
    spectrum[spectrum < SPECTRUM_CLAMP * top] = 0.0
    return spectrum


def critical_radius(spectrum, n: int) -> float:
    """
    Smallest b > 0 with b^2 >= sqrt(2/n) * sqrt(sum_i min(b^2, mu_i)).

    b - sqrt(2/n) * sqrt(sum_i min(b^2, mu_i)) / b is increasing, so the root is
    unique. When it lies beyond sqrt(mu_1) every min is mu_i and the root is
    (2 * sum(mu) / n)^(1/4).

    Args:
        spectrum: Eigenvalues of K / n
        n (int): Number of design points

    Returns:
        float: The critical radius, 0 for an all-zero spectrum
    """
    mu = np.asarray(spectrum, dtype=float)
    if np.any(mu < 0):
        mu = np.clip(mu, 0.0, None)
    top = float(mu.max()) if mu.size else 0.0
    if top == 0.0:
        return 0.0
    mu = np.where(mu < SPECTRUM_CLAMP * top, 0.0, mu)
    scale = math.sqrt(2.0 / n)

    def gap(b: float) -> float:
        return b - scale * math.sqrt(float(np.minimum(b * b, mu).sum())) / b

    hi = math.sqrt(top)
    if gap(hi) < 0:
        return (2.0 * float(mu.sum()) / n) ** 0.25
    lo = 1e-12 * hi
    if gap(lo) >= 0:
        return lo
    return brentq(gap, lo, hi, xtol=1e-15 * hi, rtol=1e-12, maxiter=500)


def gaussian_complexity(K: GramMatrix, mc_samples: int = 2000, seed: int = 0) -> ComplexityReport:
    """
    Gaussian complexity (1/n) E sqrt(w^T K w) of a kernel matrix.

    The Monte Carlo estimate uses w^T K w = sum_k lambda_k z_k^2 in the
    eigenbasis of K. The analytic value sqrt(tr K) / n upper-bounds it by Jensen.

    Args:
        K (GramMatrix): Symmetric PSD Gram matrix
        mc_samples (int): Monte Carlo draws, >= 2
        seed (int): Seed of the draws

    Returns:
        ComplexityReport: Complexity, critical radius and spectrum
    """
    if mc_samples < 2:
        raise ConfigurationError(f"mc_samples must be >= 2, got {mc_samples}")
    n = K.n
    spectrum = kernel_spectrum(K)
    eigvals_K = spectrum * n

    rng = np.random.default_rng(seed)
    samples = np.empty(mc_samples)
    for start in range(0, mc_samples, _MC_CHUNK):
        stop = min(start + _MC_CHUNK, mc_samples)
        z = rng.standard_normal((stop - start, n))
        samples[start:stop] = np.sqrt((z * z) @ eigvals_K) / n

    report = ComplexityReport(
        n=n,
        gamma_bar_mc=float(samples.mean()),
        gamma_bar_analytic=math.sqrt(float(np.trace(K.entries))) / n,
        beta_bar=critical_radius(spectrum, n),
        spectrum=spectrum.tolist(),
        mc_samples=mc_samples,
        mc_stderr=float(samples.std(ddof=1) / math.sqrt(mc_samples)),
    )
    logger.debug(
        f"Gaussian complexity n={n}: mc={report.gamma_bar_mc:.6e} +- {report.mc_stderr:.1e}, "
        f"analytic={report.gamma_bar_analytic:.6e}, beta_bar={report.beta_bar:.6e}"
    )
    return report


def empirical_gamma_beta(K: GramMatrix, h, w) -> Tuple[float, float]:
    """
    Realized complexities for one noise draw.

    gamma_w = sqrt(w^T K w) / n is the exact supremum over the unit RKHS ball.
    beta_w is evaluated on the fitted direction h = f_hat - f_star only:
    |mean(w * h)| / sqrt(mean(h^2)), and 0 when h vanishes.

    Args:
        K (GramMatrix): Training Gram matrix
        h: Values of f_hat - f_star on the design
        w: Noise draw

    Returns:
        Tuple[float, float]: (gamma_w, beta_w)
    """
    h = as_vector(h, "h")
    w = as_vector(w, "w")
    if h.shape[0] != K.n or w.shape[0] != K.n:
        raise DimensionMismatchError(
            "K, h and w disagree in size", details={"K": K.n, "h": h.shape[0], "w": w.shape[0]}
        )
    n = K.n
    gamma_w = math.sqrt(max(float(w @ K.entries @ w), 0.0)) / n
    risk = float(np.mean(h * h))
    beta_w = abs(float(np.mean(w * h))) / math.sqrt(risk) if risk > 0 else 0.0
    return gamma_w, beta_w


def excess_risk(f_hat: FittedModel, f_star_values, X) -> float:
    """In-sample excess risk (1/n) sum_i (f_hat(x_i) - f_star(x_i))^2."""
    X = as_matrix(X, "X")
    f_star_values = as_vector(f_star_values, "f_star_values")
    if f_star_values.shape[0] != X.shape[0]:
        raise DimensionMismatchError("X and f_star_values disagree in length")
    return float(np.mean((f_hat.predict(X) - f_star_values) ** 2))


def theorem_bounds(inputs: BoundInputs, estimator: Estimator) -> BoundValues:
    """
    Evaluate both branches of the excess-risk bound.

    Adversarial: B_gamma = 4 (2 sigma R / delta + R^2)(delta + gamma)^2 and
    B_beta = 4 sigma delta R + 10 delta^2 R^2 + 16 sigma^2 beta^2.
    Ridge: B_gamma = 2 (R lambda + sigma gamma)^2 / lambda and
    B_beta = 2 (R^2 lambda + sigma^2 beta^2).
    A zero radius or ridge weight makes the gamma branch infinite.
    """
    sigma, R, t = inputs.sigma, inputs.R, inputs.delta_or_lambda
    gamma, beta = inputs.gamma, inputs.beta

    if estimator == Estimator.ADVERSARIAL:
        b_gamma = math.inf if t == 0 else 4.0 * (2.0 * sigma * R / t + R * R) * (t + gamma) ** 2
        b_beta = 4.0 * sigma * t * R + 10.0 * t * t * R * R + 16.0 * sigma * sigma * beta * beta
    else:
        b_gamma = math.inf if t == 0 else 2.0 * (R * t + sigma * gamma) ** 2 / t
        b_beta = 2.0 * (R * R * t + sigma * sigma * beta * beta)

    return BoundValues(estimator=estimator, b_gamma=b_gamma, b_beta=b_beta, minimum=min(b_gamma, b_beta))


def gamma_tail_probability(eps: float, n: int, top_eigenvalue: float, printed_exponent: bool = False) -> float:
    """
    Probability bound for gamma_w > gamma_bar + eps.

    gamma_w is Lipschitz in w with constant sqrt(lambda_1) / n, lambda_1 the
    largest eigenvalue of K, giving exp(-n^2 eps^2 / (2 lambda_1)). With
    printed_exponent the exponent is linear in eps instead; for eps < 1 that
    value is smaller than the Lipschitz bound and is not guaranteed to hold.
    """
    if eps <= 0:
        raise ConfigurationError(f"eps must be positive, got {eps}")
    if top_eigenvalue <= 0:
        return 0.0
    power = eps if printed_exponent else eps * eps
    return math.exp(-n * n * power / (2.0 * top_eigenvalue))


def beta_tail_probability(beta_bar: float, eps: float, n: int) -> float:
    """Probability bound exp(-n (beta_bar + eps) / 2) for beta_w > beta_bar + eps."""
    if eps <= 0:
        raise ConfigurationError(f"eps must be positive, got {eps}")
    return math.exp(-n * (beta_bar + eps) / 2.0)


def matern_critical_rate(n: int, p: int, nu: float) -> float:
    """Order n^(-2 / (2 + p / nu)) of the squared critical radius of a Matérn kernel."""
    return float(n) ** (-2.0 / (2.0 + p / nu))
