"""
Adversarial multiple kernel learning.

The model is an additive expansion f = sum_j f_j with f_j in the RKHS of the
j-th kernel. Perturbing every feature map inside its own ball of radius delta
gives the closed-form loss (|y - f(x)| + delta sum_j ||f_j||)^2, minimized by
the same eta-trick alternation as the single-kernel solver with one share per
kernel and a coupled weighted ridge solve.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional, Sequence

import numpy as np
from scipy.linalg import LinAlgError, cho_factor, cho_solve

from advkern.core.kernels import GramMatrix, as_matrix, as_vector, batch_input_gradient, gram_matrix, kernel_block
from advkern.core.solver import adversarial_objective, as_targets, objective_settled, rkhs_norm
from advkern.core.specs import FitSummary, KernelSpec, SolverConfig
from advkern.exceptions import (
    ConfigurationError,
    DataError,
    DimensionMismatchError,
    NonFiniteObjectiveError,
    SingularSystemError,
)
from advkern.utils.logging import get_advkern_logger

logger = get_advkern_logger(__name__)


@dataclass(frozen=True, eq=False)
class MklModel:
    """
    Additive kernel model sum_j K_j(., X_train) alpha_j.

    Attributes:
        kernels (List[KernelSpec]): Kernels in canonical order
        alphas (List[np.ndarray]): Dual coefficients, one vector per kernel
        X_train (np.ndarray): Training inputs
        per_kernel_norms (List[float]): ||f_j|| in the j-th RKHS
        K_trains (List[GramMatrix]): Training Gram matrices
        summary (Optional[FitSummary]): How the model was fitted
    """
    kernels: List[KernelSpec]
    alphas: List[np.ndarray]
    X_train: np.ndarray
    per_kernel_norms: List[float]
    K_trains: List[GramMatrix]
    summary: Optional[FitSummary] = field(default=None)

    @classmethod
    def from_coefficients(
        cls,
        alphas: Sequence[np.ndarray],
        X_train: np.ndarray,
        kernels: Sequence[KernelSpec],
        K_trains: Optional[Sequence[GramMatrix]] = None,
        summary: Optional[FitSummary] = None,
    ) -> "MklModel":
        if len(alphas) != len(kernels):
            raise DimensionMismatchError(
                "One coefficient vector is needed per kernel",
                details={"kernels": len(kernels), "alphas": len(alphas)},
            )
        K_trains = list(K_trains) if K_trains is not None else [gram_matrix(spec, X_train) for spec in kernels]
        alphas = [np.array(a, dtype=float) for a in alphas]
        for a in alphas:
            a.setflags(write=False)
        return cls(
            kernels=list(kernels),
            alphas=alphas,
            X_train=X_train,
            per_kernel_norms=[rkhs_norm(K, a) for K, a in zip(K_trains, alphas)],
            K_trains=K_trains,
            summary=summary,
        )

    @property
    def rkhs_norm(self) -> float:
        """Group norm sum_j ||f_j||."""
        return float(sum(self.per_kernel_norms))

    @property
    def n_features(self) -> int:
        return self.X_train.shape[1]

    def _check(self, X) -> np.ndarray:
        X = as_matrix(X, "X")
        if X.shape[1] != self.n_features:
            raise DimensionMismatchError(
                "Feature dimension does not match the training data",
                details={"expected": self.n_features, "got": X.shape[1]},
            )
        return X

    def predict(self, X_new) -> np.ndarray:
        X_new = self._check(X_new)
        return sum(kernel_block(spec, X_new, self.X_train) @ a for spec, a in zip(self.kernels, self.alphas))

    def component_predictions(self, X_new) -> np.ndarray:
        """D x m matrix of f_j(X_new)."""
        X_new = self._check(X_new)
        return np.stack([kernel_block(spec, X_new, self.X_train) @ a for spec, a in zip(self.kernels, self.alphas)])

    def input_gradient(self, X) -> np.ndarray:
        X = self._check(X)
        return sum(batch_input_gradient(spec, self.X_train, a, X) for spec, a in zip(self.kernels, self.alphas))

    def to_dict(self) -> Dict[str, Any]:
        data: Dict[str, Any] = {
            "kernels": [spec.model_dump(mode="json") for spec in self.kernels],
            "alphas": [a.tolist() for a in self.alphas],
            "norms": list(self.per_kernel_norms),
            "x_train": self.X_train.tolist(),
        }
        if self.summary is not None:
            data["summary"] = self.summary.model_dump(exclude={"wall_time"})
        return data

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "MklModel":
        missing = [key for key in ("kernels", "alphas", "x_train") if key not in data]
        if missing:
            raise DataError("MKL model data is missing required keys", details={"missing": missing})
        kernels = [KernelSpec.model_validate(k) for k in data["kernels"]]
        X_train = as_matrix(data["x_train"], "x_train")
        alphas = [as_vector(a, "alpha") for a in data["alphas"]]
        if any(a.shape[0] != X_train.shape[0] for a in alphas):
            raise DataError("alphas and x_train lengths differ")
        summary = FitSummary.model_validate(data["summary"]) if "summary" in data else None
        return cls.from_coefficients(alphas, X_train, kernels, summary=summary)


def mkl_adversarial_loss(model: MklModel, x, y: float, delta: float) -> float:
    """Closed form (|y - sum_j f_j(x)| + delta sum_j ||f_j||)^2."""
    if delta < 0:
        raise ConfigurationError(f"delta must be nonnegative, got {delta}")
    x = as_vector(x, "x")
    prediction = float(model.predict(x[None, :])[0])
    return (abs(y - prediction) + delta * model.rkhs_norm) ** 2


def mkl_weighted_solve(
    Ks: Sequence[GramMatrix],
    y: np.ndarray,
    w: np.ndarray,
    lambdas: Sequence[float],
) -> List[np.ndarray]:
    """
    Minimize (1/n) sum_i w_i (y_i - sum_j (K_j alpha_j)_i)^2 + sum_j lambda_j alpha_j^T K_j alpha_j.

    At the optimum every alpha_j equals W r / (n lambda_j) for the shared
    residual r, which solves (K_tilde W + I) r = y with
    K_tilde = sum_j K_j / (n lambda_j). The solve runs on the symmetric form
    (S K_tilde S + I) v = S y, v = S r.

    Args:
        Ks (Sequence[GramMatrix]): Symmetric n x n Gram matrices
        y (np.ndarray): Targets
        w (np.ndarray): Positive sample weights
        lambdas (Sequence[float]): Positive per-kernel ridge weights

    Returns:
        List[np.ndarray]: One coefficient vector per kernel

    Raises:
        SingularSystemError: If the reduced system cannot be factorized
    """
    if len(Ks) == 0 or len(Ks) != len(lambdas):
        raise ConfigurationError(
            "Need one positive lambda per Gram matrix",
            details={"kernels": len(Ks), "lambdas": len(lambdas)},
        )
    n = Ks[0].n
    if any(not K.symmetric or K.n != n for K in Ks):
        raise DimensionMismatchError("All Gram matrices must be symmetric and of the same size")
    if any(not lam > 0 for lam in lambdas):
        raise ConfigurationError("Per-kernel lambdas must be positive", details={"lambdas": list(lambdas)})
    w = np.asarray(w, dtype=float)
    if np.any(w <= 0):
        raise ConfigurationError("Sample weights must be positive")

    scales = [1.0 / (n * lam) for lam in lambdas]
    K_tilde = sum(scale * K.entries for scale, K in zip(scales, Ks))
    s = np.sqrt(w)
    A = s[:, None] * K_tilde * s[None, :]
    A[np.diag_indices_from(A)] += 1.0

    try:
        v = cho_solve(cho_factor(A, lower=True, check_finite=False), s * y, check_finite=False)
    except LinAlgError as e:
        raise SingularSystemError(
            f"Reduced MKL system is not positive definite: {e}",
            condition_number=float(np.linalg.cond(A)),
            n=n,
        )
    shared = s * v
    return [scale * shared for scale in scales]


def fit_adversarial_mkl(
    X,
    y,
    kernels: Sequence[KernelSpec],
    config: SolverConfig,
    grams: Optional[Sequence[GramMatrix]] = None,
) -> MklModel:
    """
    Fit the adversarial multiple kernel estimator.

    Each outer iteration solves the coupled ridge problem and updates the
    per-sample weights w_i = (rho_i + S) / rho_i and the per-kernel ridge weights
    lambda_j = mean(delta^2 (rho_i + S) / s_j), where rho_i = sqrt(r_i^2 + eps),
    s_j = sqrt(delta^2 ||f_j||^2 + eps) and S = sum_j s_j.

    Args:
        X: n x p training inputs
        y: n targets
        kernels (Sequence[KernelSpec]): At least one kernel; order is kept
        config (SolverConfig): Radius (> 0) and iteration controls
        grams (Optional[Sequence[GramMatrix]]): Precomputed training Gram matrices

    Returns:
        MklModel: The fitted model

    Raises:
        ConfigurationError: If no kernel is given or delta is zero
        NonFiniteObjectiveError: If the objective becomes NaN or infinite
    """
    start = time.perf_counter()
    X = as_matrix(X, "X")
    n = X.shape[0]
    y = as_targets(y, n)
    if not kernels:
        raise ConfigurationError("At least one kernel is required")
    if n < 2:
        raise DataError(f"Adversarial training needs at least 2 samples, got {n}")
    delta = config.delta
    if delta == 0:
        raise ConfigurationError("Adversarial MKL needs delta > 0")

    Ks = list(grams) if grams is not None else [gram_matrix(spec, X) for spec in kernels]
    D = len(Ks)
    w = np.ones(n)
    lambdas = [delta] * D
    history: List[float] = []
    converged = False
    alphas: List[np.ndarray] = [np.zeros(n)] * D
    iteration = 0

    for iteration in range(1, config.max_iter + 1):
        alphas = mkl_weighted_solve(Ks, y, w, lambdas)
        norms = [rkhs_norm(K, a) for K, a in zip(Ks, alphas)]
        residuals = y - sum(K.entries @ a for K, a in zip(Ks, alphas))
        objective = adversarial_objective(residuals, sum(norms), delta)
        if not math.isfinite(objective):
            raise NonFiniteObjectiveError("MKL objective is not finite", details={"iteration": iteration})
        logger.debug(f"iteration {iteration}: objective={objective:.10e} norms={norms}")

        previous = history[-1] if history else None
        history.append(objective)
        if previous is not None and objective_settled(previous, objective, config.tol):
            converged = True
            break

        rho = np.sqrt(residuals ** 2 + config.epsilon)
        shares = [math.sqrt(delta * delta * norm * norm + config.epsilon) for norm in norms]
        total = rho + sum(shares)
        w = total / rho
        lambdas = [float(np.mean(delta * delta * total / share)) for share in shares]

    if not converged:
        logger.warning(f"MKL fit stopped at max_iter={config.max_iter} without meeting tol={config.tol:g}")

    summary = FitSummary(
        method="adversarial_mkl",
        iterations=iteration,
        objective=history[-1],
        converged=converged,
        wall_time=time.perf_counter() - start,
        objective_history=history,
    )
    model = MklModel.from_coefficients(alphas, X, kernels, K_trains=Ks, summary=summary)
    logger.info(
        f"Adversarial MKL fit ({', '.join(spec.label() for spec in kernels)}, delta={delta:g}): "
        f"objective={summary.objective:.6e}, norms={[round(v, 6) for v in model.per_kernel_norms]}"
    )
    return model
