"""
Adversarial kernel training solver.

This module fits kernel ridge regression and its feature-perturbed
adversarial counterpart. The adversarial objective
(1/n) sum_i (|y_i - f(x_i)| + delta ||f||_H)^2 is minimized by alternating a
reweighted kernel ridge solve with the closed-form eta-trick weight update.
It also provides cross-validation over the kernel and ridge grids,
prediction and the closed-form adversarial loss.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
from scipy.linalg import LinAlgError, cho_factor, cho_solve
from scipy.sparse.linalg import cg
from sklearn.model_selection import KFold

from advkern.core.kernels import (
    GramMatrix,
    as_matrix,
    as_vector,
    batch_input_gradient,
    gram_matrix,
    kernel_block,
)
from advkern.core.specs import FitSummary, KernelFamily, KernelSpec, SolverConfig
from advkern.exceptions import (
    ConfigurationError,
    DataError,
    DimensionMismatchError,
    NonFiniteObjectiveError,
    SingularSystemError,
)
from advkern.utils.logging import get_advkern_logger, log_json

logger = get_advkern_logger(__name__)

DEFAULT_GAMMA_GRID: Tuple[float, ...] = (10.0, 1.0, 0.1, 1e-2, 1e-3)
DEFAULT_LAMBDA_GRID: Tuple[float, ...] = (1.0, 0.1, 1e-2, 1e-3)


@dataclass(frozen=True)
class WeightState:
    """
    Output of one eta-trick update.

    Attributes:
        w (np.ndarray): Sample weights 1 / eta0, all >= 1
        lam (float): Effective ridge weight mean(delta^2 / eta1)
        eta0 (np.ndarray): Share of the residual block per sample
        eta1 (np.ndarray): Share of the norm block per sample
    """
    w: np.ndarray
    lam: float
    eta0: np.ndarray
    eta1: np.ndarray


@dataclass(frozen=True, eq=False)
class FittedModel:
    """
    A kernel expansion f = sum_i alpha_i k(x_i, .).

    Attributes:
        alpha (np.ndarray): Dual coefficients
        X_train (np.ndarray): Training inputs
        kernel (KernelSpec): Kernel of the expansion
        rkhs_norm (float): Cached sqrt(alpha^T K alpha)
        K_train (GramMatrix): Cached training Gram matrix
        summary (Optional[FitSummary]): How the model was fitted
    """
    alpha: np.ndarray
    X_train: np.ndarray
    kernel: KernelSpec
    rkhs_norm: float
    K_train: GramMatrix
    summary: Optional[FitSummary] = field(default=None)

    @classmethod
    def from_coefficients(
        cls,
        alpha: np.ndarray,
        X_train: np.ndarray,
        kernel: KernelSpec,
        K_train: Optional[GramMatrix] = None,
        summary: Optional[FitSummary] = None,
    ) -> "FittedModel":
        """Build a model and cache its Gram matrix and RKHS norm."""
        K_train = K_train if K_train is not None else gram_matrix(kernel, X_train)
        alpha = np.array(alpha, dtype=float)
        alpha.setflags(write=False)
        return cls(
            alpha=alpha,
            X_train=X_train,
            kernel=kernel,
            rkhs_norm=rkhs_norm(K_train, alpha),
            K_train=K_train,
            summary=summary,
        )

    @property
    def n_features(self) -> int:
        return self.X_train.shape[1]

    def predict(self, X_new) -> np.ndarray:
        """Evaluate K(X_new, X_train) alpha."""
        X_new = as_matrix(X_new, "X_new")
        if X_new.shape[1] != self.n_features:
            raise DimensionMismatchError(
                "Feature dimension does not match the training data",
                details={"expected": self.n_features, "got": X_new.shape[1]},
            )
        return kernel_block(self.kernel, X_new, self.X_train) @ self.alpha

    def input_gradient(self, X) -> np.ndarray:
        """Gradients of f with respect to the input at every row of X."""
        X = as_matrix(X, "X")
        if X.shape[1] != self.n_features:
            raise DimensionMismatchError(
                "Feature dimension does not match the training data",
                details={"expected": self.n_features, "got": X.shape[1]},
            )
        return batch_input_gradient(self.kernel, self.X_train, self.alpha, X)

    def function_norm(self) -> float:
        return self.rkhs_norm

    def to_dict(self) -> Dict[str, Any]:
        """Serialize to the model JSON layout; wall time is left out so files are reproducible."""
        data: Dict[str, Any] = {
            "kernel": self.kernel.model_dump(mode="json"),
            "alpha": self.alpha.tolist(),
            "x_train": self.X_train.tolist(),
            "rkhs_norm": self.rkhs_norm,
        }
        if self.summary is not None:
            data["summary"] = self.summary.model_dump(exclude={"wall_time"})
        return data

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "FittedModel":
        """
        Rebuild a model from its JSON layout.

        Raises:
            DataError: If required keys are missing or shapes disagree
        """
        missing = [key for key in ("kernel", "alpha", "x_train") if key not in data]
        if missing:
            raise DataError("Model data is missing required keys", details={"missing": missing})

        kernel = KernelSpec.model_validate(data["kernel"])
        X_train = as_matrix(data["x_train"], "x_train")
        alpha = as_vector(data["alpha"], "alpha")
        if alpha.shape[0] != X_train.shape[0]:
            raise DataError(
                "alpha and x_train lengths differ",
                details={"alpha": alpha.shape[0], "x_train": X_train.shape[0]},
            )
        summary = FitSummary.model_validate(data["summary"]) if "summary" in data else None
        model = cls.from_coefficients(alpha, X_train, kernel, summary=summary)

        stored = data.get("rkhs_norm")
        if stored is not None and not math.isclose(stored, model.rkhs_norm, rel_tol=1e-8, abs_tol=1e-12):
            logger.warning(f"Stored RKHS norm {stored} differs from the recomputed {model.rkhs_norm}")
        return model


def rkhs_norm(K: GramMatrix, alpha: np.ndarray) -> float:
    """sqrt(alpha^T K alpha), clamped at zero."""
    return math.sqrt(max(float(alpha @ K.entries @ alpha), 0.0))


def as_targets(y, n: int) -> np.ndarray:
    """Validate a target vector against the number of samples."""
    y = as_vector(y, "y")
    if y.shape[0] != n:
        raise DimensionMismatchError("X and y disagree in length", details={"X": n, "y": y.shape[0]})
    return y


def adversarial_objective(residuals: np.ndarray, norm: float, delta: float) -> float:
    """Exact objective (1/n) sum_i (|r_i| + delta ||f||_H)^2."""
    return float(np.mean((np.abs(residuals) + delta * norm) ** 2))


def objective_settled(previous: float, current: float, tol: float) -> bool:
    """True when the objective moved by at most tol relative, in either direction."""
    return abs(previous - current) <= tol * abs(previous)


def adversarial_loss(model: FittedModel, x, y: float, delta: float) -> float:
    """
    Worst-case squared loss over the feature-space ball of radius delta.

    The inner maximization has the closed form (|y - f(x)| + delta ||f||_H)^2.

    Args:
        model (FittedModel): Fitted model
        x: Input point
        y (float): Target value
        delta (float): Feature-space radius, >= 0

    Returns:
        float: The adversarial loss
    """
    if delta < 0:
        raise ConfigurationError(f"delta must be nonnegative, got {delta}")
    x = as_vector(x, "x")
    prediction = float(model.predict(x[None, :])[0])
    return (abs(y - prediction) + delta * model.rkhs_norm) ** 2


def predict(model: FittedModel, X_new) -> np.ndarray:
    """Predictions K(X_new, X_train) alpha."""
    return model.predict(X_new)


def weighted_krr_solve(
    K: GramMatrix,
    y: np.ndarray,
    w: np.ndarray,
    lam: float,
    dense_threshold: int = 3000,
    cg_tol: float = 1e-12,
) -> np.ndarray:
    """
    Solve the reweighted kernel ridge problem.

    The minimizer of (1/n) sum_i w_i (y_i - f(x_i))^2 + lam ||f||_H^2 satisfies
    (W K + n lam I) alpha = W y. The solve uses the symmetric positive definite
    form (S K S + n lam I) u = S y with S = W^(1/2) and alpha = S u.

    Args:
        K (GramMatrix): Symmetric n x n Gram matrix
        y (np.ndarray): Targets
        w (np.ndarray): Positive sample weights
        lam (float): Ridge weight, > 0
        dense_threshold (int): Largest n solved by Cholesky; larger systems use conjugate gradients
        cg_tol (float): Relative residual tolerance of conjugate gradients

    Returns:
        np.ndarray: Dual coefficients alpha

    Raises:
        ConfigurationError: If weights or lam are not positive
        SingularSystemError: If the system cannot be solved to tolerance
    """
    if not K.symmetric:
        raise ConfigurationError("weighted_krr_solve needs a symmetric Gram matrix")
    n = K.n
    y = np.asarray(y, dtype=float)
    w = np.asarray(w, dtype=float)
    if y.shape != (n,) or w.shape != (n,):
        raise DimensionMismatchError(
            "Gram matrix, targets and weights disagree in size",
            details={"K": n, "y": y.shape, "w": w.shape},
        )
    if not lam > 0:
        raise ConfigurationError(f"lambda must be positive, got {lam}")
    if np.any(w <= 0):
        raise ConfigurationError("Sample weights must be positive")

    s = np.sqrt(w)
    A = s[:, None] * K.entries * s[None, :]
    A[np.diag_indices_from(A)] += n * lam
    b = s * y

    if n <= dense_threshold:
        try:
            factor = cho_factor(A, lower=True, check_finite=False)
            u = cho_solve(factor, b, check_finite=False)
        except LinAlgError as e:
            raise SingularSystemError(
                f"Cholesky factorization failed: {e}",
                condition_number=float(np.linalg.cond(A)),
                n=n,
            )
    else:
        logger.debug(f"Solving n={n} system with conjugate gradients")
        u, info = cg(A, b, rtol=cg_tol, atol=0.0, maxiter=10 * n)
        if info != 0:
            raise SingularSystemError(
                "Conjugate gradients did not reach tolerance",
                details={"info": int(info), "cg_tol": cg_tol},
                condition_number=float(np.linalg.cond(A)),
                n=n,
            )

    if not np.all(np.isfinite(u)):
        raise SingularSystemError("Solution has non-finite entries", n=n)
    return s * u


def update_weights(residuals: np.ndarray, rkhs_norm: float, delta: float, epsilon: float) -> WeightState:
    """
    Closed-form eta-trick update.

    With rho_i = sqrt(r_i^2 + eps) and s = sqrt(delta^2 ||f||^2 + eps) the simplex
    minimizer is eta0_i = rho_i / (rho_i + s), eta1_i = s / (rho_i + s). The next
    solve uses w_i = 1 / eta0_i and lam = mean(delta^2 / eta1_i).

    Args:
        residuals (np.ndarray): y - f(X)
        rkhs_norm (float): Current ||f||_H
        delta (float): Adversarial radius, > 0
        epsilon (float): Smoothing, > 0

    Returns:
        WeightState: Weights, ridge weight and the eta shares
    """
    if not delta > 0:
        raise ConfigurationError(f"delta must be positive for the weight update, got {delta}")
    if not epsilon > 0:
        raise ConfigurationError(f"epsilon must be positive, got {epsilon}")

    rho = np.sqrt(np.asarray(residuals, dtype=float) ** 2 + epsilon)
    s = math.sqrt(delta * delta * rkhs_norm * rkhs_norm + epsilon)
    total = rho + s
    eta0 = rho / total
    eta1 = s / total
    return WeightState(
        w=total / rho,
        lam=float(np.mean(delta * delta * total / s)),
        eta0=eta0,
        eta1=eta1,
    )


def _default_config(delta: float, config: Optional[SolverConfig]) -> SolverConfig:
    return config if config is not None else SolverConfig.from_settings(delta)


def fit_krr(
    X,
    y,
    kernel: KernelSpec,
    lam: float,
    config: Optional[SolverConfig] = None,
    gram: Optional[GramMatrix] = None,
) -> FittedModel:
    """
    Fit kernel ridge regression, min (1/n) sum_i (y_i - f(x_i))^2 + lam ||f||_H^2.

    Args:
        X: n x p training inputs
        y: n targets
        kernel (KernelSpec): Kernel
        lam (float): Ridge weight, > 0
        config (Optional[SolverConfig]): Linear-algebra controls; delta is ignored
        gram (Optional[GramMatrix]): Precomputed training Gram matrix

    Returns:
        FittedModel: The fitted model
    """
    start = time.perf_counter()
    X = as_matrix(X, "X")
    y = as_targets(y, X.shape[0])
    config = _default_config(0.0, config)
    K = gram if gram is not None else gram_matrix(kernel, X)

    alpha = weighted_krr_solve(K, y, np.ones_like(y), lam, config.dense_threshold, config.cg_tol)
    norm = rkhs_norm(K, alpha)
    objective = float(np.mean((y - K.entries @ alpha) ** 2) + lam * norm * norm)
    summary = FitSummary(
        method="krr",
        iterations=1,
        objective=objective,
        converged=True,
        wall_time=time.perf_counter() - start,
        objective_history=[objective],
    )
    logger.debug(f"KRR fit with {kernel.label()}, lambda={lam:g}: objective={objective:.6e}")
    return FittedModel.from_coefficients(alpha, X, kernel, K_train=K, summary=summary)


def fit_adversarial(
    X,
    y,
    kernel: KernelSpec,
    config: SolverConfig,
    gram: Optional[GramMatrix] = None,
) -> FittedModel:
    """
    Fit the feature-perturbed adversarial kernel estimator.

    Alternates weighted_krr_solve and update_weights starting from w = 1 and
    lambda = delta. Stops when the exact objective changes by less than
    tol relative, or after max_iter solves. A zero radius falls back to
    fit_krr with lambda = epsilon.

    Args:
        X: n x p training inputs, n >= 2
        y: n targets
        kernel (KernelSpec): Kernel
        config (SolverConfig): Radius and iteration controls
        gram (Optional[GramMatrix]): Precomputed training Gram matrix

    Returns:
        FittedModel: Fitted model whose summary carries the exact objective history

    Raises:
        DataError: If fewer than two samples are given
        NonFiniteObjectiveError: If the objective becomes NaN or infinite
        SingularSystemError: If an inner solve fails
    """
    start = time.perf_counter()
    X = as_matrix(X, "X")
    n = X.shape[0]
    y = as_targets(y, n)
    if n < 2:
        raise DataError(f"Adversarial training needs at least 2 samples, got {n}")

    delta = config.delta
    if delta == 0:
        logger.info(f"delta=0: fitting kernel ridge regression with lambda=epsilon={config.epsilon:g}")
        return fit_krr(X, y, kernel, config.epsilon, config=config, gram=gram)

    K = gram if gram is not None else gram_matrix(kernel, X)
    w = np.ones(n)
    lam = delta
    history: List[float] = []
    converged = False
    alpha = np.zeros(n)
    iteration = 0

    for iteration in range(1, config.max_iter + 1):
        alpha = weighted_krr_solve(K, y, w, lam, config.dense_threshold, config.cg_tol)
        norm = rkhs_norm(K, alpha)
        residuals = y - K.entries @ alpha
        objective = adversarial_objective(residuals, norm, delta)
        if not math.isfinite(objective):
            raise NonFiniteObjectiveError(
                "Adversarial objective is not finite",
                details={"iteration": iteration, "lambda": lam},
            )
        logger.debug(f"iteration {iteration}: objective={objective:.10e} norm={norm:.6e} lambda={lam:.6e}")

        previous = history[-1] if history else None
        history.append(objective)
        if previous is not None and objective_settled(previous, objective, config.tol):
            converged = True
            break

        state = update_weights(residuals, norm, delta, config.epsilon)
        w, lam = state.w, state.lam

    if not converged:
        logger.warning(f"Adversarial fit stopped at max_iter={config.max_iter} without meeting tol={config.tol:g}")

    summary = FitSummary(
        method="adversarial",
        iterations=iteration,
        objective=history[-1],
        converged=converged,
        wall_time=time.perf_counter() - start,
        objective_history=history,
    )
    logger.info(
        f"Adversarial fit ({kernel.label()}, delta={delta:g}, n={n}): "
        f"objective={summary.objective:.6e} after {iteration} iterations"
    )
    return FittedModel.from_coefficients(alpha, X, kernel, K_train=K, summary=summary)


def _kernel_candidates(kernel: Union[KernelSpec, KernelFamily], gamma_grid: Sequence[float]) -> List[KernelSpec]:
    base = kernel if isinstance(kernel, KernelSpec) else KernelSpec(family=kernel)
    if not gamma_grid:
        raise ConfigurationError("gamma_grid must not be empty")
    # linear and polynomial kernels have no length-scale to search
    if base.family in (KernelFamily.LINEAR, KernelFamily.POLYNOMIAL):
        return [base]
    return [base.with_gamma(g) for g in gamma_grid]


def _folds(n: int, folds: int, seed: int) -> List[Tuple[np.ndarray, np.ndarray]]:
    if folds < 2:
        raise ConfigurationError(f"folds must be >= 2, got {folds}")
    if n < folds:
        raise DataError(f"Cannot split {n} samples into {folds} folds")
    return list(KFold(n_splits=folds, shuffle=True, random_state=seed).split(np.arange(n)))


def cross_validate_krr(
    X,
    y,
    kernel: Union[KernelSpec, KernelFamily],
    gamma_grid: Sequence[float] = DEFAULT_GAMMA_GRID,
    lambda_grid: Sequence[float] = DEFAULT_LAMBDA_GRID,
    folds: int = 5,
    seed: int = 0,
) -> Tuple[KernelSpec, float]:
    """
    Select (gamma, lambda) for kernel ridge regression by k-fold cross-validation.

    Each fold's Gram matrix is eigendecomposed once so the whole lambda path costs
    one matrix-vector product per value. Ties prefer the larger lambda, then the
    larger gamma.

    Args:
        X: n x p inputs
        y: n targets
        kernel (Union[KernelSpec, KernelFamily]): Family (with degree/nu) to search over
        gamma_grid (Sequence[float]): Candidate inverse length-scales
        lambda_grid (Sequence[float]): Candidate ridge weights
        folds (int): Number of folds, >= 2
        seed (int): Shuffle seed

    Returns:
        Tuple[KernelSpec, float]: Selected kernel and ridge weight

    Raises:
        ConfigurationError: For empty grids or folds < 2
        DataError: If a fold would be empty
    """
    X = as_matrix(X, "X")
    y = as_targets(y, X.shape[0])
    if not lambda_grid:
        raise ConfigurationError("lambda_grid must not be empty")
    if any(lam <= 0 for lam in lambda_grid):
        raise ConfigurationError("lambda_grid values must be positive")
    candidates = _kernel_candidates(kernel, gamma_grid)
    splits = _folds(X.shape[0], folds, seed)

    scores: List[Tuple[float, float, KernelSpec]] = []
    for spec in candidates:
        K = gram_matrix(spec, X).entries
        errors = np.zeros(len(lambda_grid))
        for train_idx, val_idx in splits:
            eigvals, eigvecs = np.linalg.eigh(K[np.ix_(train_idx, train_idx)])
            eigvals = np.clip(eigvals, 0.0, None)
            projected = eigvecs.T @ y[train_idx]
            K_val = K[np.ix_(val_idx, train_idx)]
            m = train_idx.shape[0]
            for j, lam in enumerate(lambda_grid):
                alpha = eigvecs @ (projected / (eigvals + m * lam))
                errors[j] += np.mean((y[val_idx] - K_val @ alpha) ** 2)
        errors /= len(splits)
        scores.extend((float(err), float(lam), spec) for err, lam in zip(errors, lambda_grid))

    best_mse, best_lambda, best_spec = min(scores, key=lambda s: (s[0], -s[1], -s[2].gamma))
    log_json(
        logger,
        [{"kernel": spec.label(), "lambda": lam, "mse": mse} for mse, lam, spec in scores],
        title="KRR cross-validation scores",
    )
    logger.info(f"KRR cross-validation selected {best_spec.label()}, lambda={best_lambda:g} (mse={best_mse:.6e})")
    return best_spec, best_lambda


def cross_validate_adversarial(
    X,
    y,
    kernel: Union[KernelSpec, KernelFamily],
    gamma_grid: Sequence[float] = DEFAULT_GAMMA_GRID,
    folds: int = 5,
    seed: int = 0,
    config: Optional[SolverConfig] = None,
) -> KernelSpec:
    """
    Select gamma for the adversarial estimator by k-fold cross-validation.

    The radius is fixed at the default 1/sqrt(n_fold_train) in every fold; only
    gamma is searched. Ties prefer the larger gamma.

    Args:
        X: n x p inputs
        y: n targets
        kernel (Union[KernelSpec, KernelFamily]): Family (with degree/nu) to search over
        gamma_grid (Sequence[float]): Candidate inverse length-scales
        folds (int): Number of folds, >= 2
        seed (int): Shuffle seed
        config (Optional[SolverConfig]): Iteration controls; its delta is replaced per fold

    Returns:
        KernelSpec: Selected kernel
    """
    X = as_matrix(X, "X")
    y = as_targets(y, X.shape[0])
    candidates = _kernel_candidates(kernel, gamma_grid)
    splits = _folds(X.shape[0], folds, seed)
    base_config = _default_config(0.0, config)

    scores: List[Tuple[float, KernelSpec]] = []
    for spec in candidates:
        K = gram_matrix(spec, X).entries
        total = 0.0
        for train_idx, val_idx in splits:
            fold_config = base_config.model_copy(update={"delta": 1.0 / math.sqrt(train_idx.shape[0])})
            K_train = K[np.ix_(train_idx, train_idx)].copy()
            K_train.setflags(write=False)
            model = fit_adversarial(
                X[train_idx], y[train_idx], spec, fold_config, gram=GramMatrix(K_train, symmetric=True)
            )
            total += float(np.mean((y[val_idx] - K[np.ix_(val_idx, train_idx)] @ model.alpha) ** 2))
        scores.append((total / len(splits), spec))

    best_mse, best_spec = min(scores, key=lambda s: (s[0], -s[1].gamma))
    log_json(
        logger,
        [{"kernel": spec.label(), "mse": mse} for mse, spec in scores],
        title="Adversarial cross-validation scores",
    )
    logger.info(f"Adversarial cross-validation selected {best_spec.label()} (mse={best_mse:.6e})")
    return best_spec
