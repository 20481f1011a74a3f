"""
Input-space adversarial evaluation.

This module attacks fitted kernel models with projected gradient ascent
inside l2 or linf balls, scores them under attack, bounds any such attack
by the feature-space certificate, and trains the input-space adversarial
baseline that alternates attacks with Adam steps on the dual coefficients.
"""

from __future__ import annotations

import math
import time
from concurrent.futures import ThreadPoolExecutor
from typing import List, Optional, Union

import numpy as np
from sklearn.metrics import r2_score

from advkern.core.kernels import as_matrix, as_vector, feature_radius_for_input_radius, gram_matrix, kernel_block
from advkern.core.mkl import MklModel
from advkern.core.solver import FittedModel, as_targets
from advkern.core.specs import AttackSpec, FitSummary, KernelSpec, Norm
from advkern.exceptions import ConfigurationError, DataError, DivergenceError
from advkern.utils.logging import get_advkern_logger

logger = get_advkern_logger(__name__)

KernelModel = Union[FittedModel, MklModel]

ADAM_BETA1 = 0.9
ADAM_BETA2 = 0.999
ADAM_EPS = 1e-8
DIVERGENCE_FACTOR = 1e6


def _project(delta: np.ndarray, spec: AttackSpec) -> np.ndarray:
    """Exact projection of each row onto the attack ball."""
    if spec.norm == Norm.LINF:
        return np.clip(delta, -spec.radius, spec.radius)
    norms = np.linalg.norm(delta, axis=1)
    scale = np.ones_like(norms)
    outside = norms > spec.radius
    scale[outside] = spec.radius / norms[outside]
    return delta * scale[:, None]


def _random_starts(rng: np.random.Generator, spec: AttackSpec, m: int, p: int) -> np.ndarray:
    """Uniform draws inside the ball for every restart after the first."""
    shape = (spec.restarts - 1, m, p)
    if spec.norm == Norm.LINF:
        return rng.uniform(-spec.radius, spec.radius, size=shape)
    directions = rng.standard_normal(shape)
    directions /= np.maximum(np.linalg.norm(directions, axis=2, keepdims=True), 1e-300)
    radii = spec.radius * rng.uniform(size=shape[:2]) ** (1.0 / p)
    return directions * radii[..., None]


def _ascent_direction(grad: np.ndarray, norm: Norm) -> np.ndarray:
    if norm == Norm.LINF:
        return np.sign(grad)
    lengths = np.linalg.norm(grad, axis=1, keepdims=True)
    return np.divide(grad, lengths, out=np.zeros_like(grad), where=lengths > 0)


def _attack_rows(model: KernelModel, X: np.ndarray, y: np.ndarray, spec: AttackSpec, starts: np.ndarray) -> np.ndarray:
    best_X = X.copy()
    best_loss = (y - model.predict(X)) ** 2
    step = spec.effective_step_size

    for restart in range(spec.restarts):
        delta = np.zeros_like(X) if restart == 0 else starts[restart - 1]
        active = np.ones(X.shape[0], dtype=bool)
        for i in range(spec.steps + 1):
            X_cur = X + delta
            residual = y - model.predict(X_cur)
            loss = residual ** 2
            better = active & np.isfinite(loss) & (loss > best_loss)
            best_X[better] = X_cur[better]
            best_loss[better] = loss[better]
            if i == spec.steps:
                break

            # zero residual: both directions raise the loss equally, take +grad f
            grad = np.where(residual > 0, -1.0, 1.0)[:, None] * model.input_gradient(X_cur)
            finite = np.all(np.isfinite(grad), axis=1)
            if not np.all(finite[active]):
                dropped = int(np.sum(active & ~finite))
                logger.debug(f"Aborting restart {restart} for {dropped} rows with non-finite gradients")
            active &= finite
            if not active.any():
                break
            moved = _project(delta + step * _ascent_direction(np.where(active[:, None], grad, 0.0), spec.norm), spec)
            delta = np.where(active[:, None], moved, delta)
    return best_X


def attack_dataset(
    model: KernelModel,
    X,
    y,
    spec: AttackSpec,
    seed: int = 0,
    threads: int = 1,
) -> np.ndarray:
    """
    Attack every row of X independently with projected gradient ascent.

    The first restart starts at the clean point and later restarts at uniform
    draws inside the ball. Each row keeps the iterate with the largest squared
    error, the clean point included. Results do not depend on the thread count.

    Args:
        model (KernelModel): Fitted single- or multiple-kernel model
        X: m x p clean inputs
        y: m targets
        spec (AttackSpec): Ball and step controls
        seed (int): Seed of the random restarts
        threads (int): Worker threads over row chunks

    Returns:
        np.ndarray: m x p attacked inputs
    """
    X = as_matrix(X, "X")
    y = as_targets(y, X.shape[0])
    if spec.radius == 0 or X.shape[0] == 0:
        return X.copy()

    m, p = X.shape
    starts = _random_starts(np.random.default_rng(seed), spec, m, p)
    if threads <= 1 or m < 2 * threads:
        return _attack_rows(model, X, y, spec, starts)

    chunks = np.array_split(np.arange(m), threads)
    with ThreadPoolExecutor(max_workers=threads) as pool:
        parts = pool.map(lambda idx: _attack_rows(model, X[idx], y[idx], spec, starts[:, idx]), chunks)
        return np.vstack(list(parts))


def pgd_attack(model: KernelModel, x, y: float, spec: AttackSpec, seed: int = 0) -> np.ndarray:
    """
    Projected gradient attack on a single point.

    Returns x + dx with ||dx|| <= radius maximizing (y - f(x + dx))^2 among the
    visited iterates; the clean point is always a candidate.
    """
    x = as_vector(x, "x")
    return attack_dataset(model, x[None, :], np.array([y], dtype=float), spec, seed=seed)[0]


def r2(y: np.ndarray, predictions: np.ndarray) -> float:
    """
    Coefficient of determination against the mean of y.

    Raises:
        DataError: If y has zero variance
    """
    y = np.asarray(y, dtype=float)
    if y.shape[0] == 0:
        raise DataError("Cannot score an empty test set")
    if np.var(y) == 0:
        raise DataError("R^2 is undefined for constant targets")
    return float(r2_score(y, predictions))


def robust_score(
    model: KernelModel,
    X_test,
    y_test,
    spec: AttackSpec,
    seed: int = 0,
    threads: int = 1,
) -> float:
    """
    Test R^2 after attacking every test point independently.

    Args:
        model (KernelModel): Fitted model
        X_test: m x p test inputs, m >= 1
        y_test: m test targets with nonzero variance
        spec (AttackSpec): Attack ball
        seed (int): Seed of the random restarts
        threads (int): Worker threads

    Returns:
        float: R^2 under attack

    Raises:
        DataError: If y_test is empty or constant
    """
    X_test = as_matrix(X_test, "X_test")
    y_test = as_targets(y_test, X_test.shape[0])
    X_adv = attack_dataset(model, X_test, y_test, spec, seed=seed, threads=threads)
    return r2(y_test, model.predict(X_adv))


def certified_radius(model: KernelModel, spec: AttackSpec) -> float:
    """Feature radius whose ball contains every perturbation of the attack ball."""
    kernels: List[KernelSpec] = model.kernels if isinstance(model, MklModel) else [model.kernel]
    return max(feature_radius_for_input_radius(k, spec.norm, spec.radius, dim=model.n_features) for k in kernels)


def certified_loss(model: KernelModel, x, y: float, spec: AttackSpec) -> float:
    """
    Upper bound (|y - f(x)| + delta_cert ||f||)^2 on any attack inside the ball.

    Raises:
        RadiusError: For polynomial kernels
    """
    x = as_vector(x, "x")
    prediction = float(model.predict(x[None, :])[0])
    return (abs(y - prediction) + certified_radius(model, spec) * model.rkhs_norm) ** 2


def fit_adversarial_input(
    X,
    y,
    kernel: KernelSpec,
    train_radius: float = 0.1,
    norm: Norm = Norm.L2,
    epochs: int = 300,
    lr: float = 1e-2,
    attack_steps: int = 10,
    seed: int = 0,
    threads: int = 1,
) -> FittedModel:
    """
    Input-space adversarial training of the dual coefficients.

    Every epoch attacks all training points against the current model, then
    takes one Adam step on mean((y - K(X_adv, X) alpha)^2) with respect to alpha.

    Args:
        X: n x p training inputs
        y: n targets
        kernel (KernelSpec): Kernel
        train_radius (float): Radius of the training attack ball
        norm (Norm): l2 or linf
        epochs (int): Number of epochs, >= 1
        lr (float): Adam learning rate
        attack_steps (int): PGD steps per epoch
        seed (int): Seed of the attacks
        threads (int): Worker threads for the attacks

    Returns:
        FittedModel: Final model

    Raises:
        ConfigurationError: If epochs < 1 or lr <= 0
        DivergenceError: If the loss exceeds 1e6 times its initial value
    """
    start = time.perf_counter()
    if epochs < 1:
        raise ConfigurationError(f"epochs must be >= 1, got {epochs}")
    if not lr > 0:
        raise ConfigurationError(f"lr must be positive, got {lr}")
    X = as_matrix(X, "X")
    n = X.shape[0]
    y = as_targets(y, n)
    attack = AttackSpec(norm=norm, radius=train_radius, steps=attack_steps)

    K = gram_matrix(kernel, X)
    alpha = np.zeros(n)
    moment1 = np.zeros(n)
    moment2 = np.zeros(n)
    initial: Optional[float] = None
    history: List[float] = []

    for epoch in range(1, epochs + 1):
        if train_radius > 0:
            model = FittedModel.from_coefficients(alpha, X, kernel, K_train=K)
            X_adv = attack_dataset(model, X, y, attack, seed=seed, threads=threads)
            K_adv = kernel_block(kernel, X_adv, X)
        else:
            K_adv = K.entries

        residual = y - K_adv @ alpha
        loss = float(np.mean(residual ** 2))
        if initial is None:
            initial = max(loss, np.finfo(float).tiny)
        if not math.isfinite(loss) or loss > DIVERGENCE_FACTOR * initial:
            raise DivergenceError(
                "Input-space adversarial training diverged",
                details={"epoch": epoch, "loss": loss, "initial": initial},
            )
        history.append(loss)

        grad = -(2.0 / n) * (K_adv.T @ residual)
        moment1 = ADAM_BETA1 * moment1 + (1 - ADAM_BETA1) * grad
        moment2 = ADAM_BETA2 * moment2 + (1 - ADAM_BETA2) * grad ** 2
        m_hat = moment1 / (1 - ADAM_BETA1 ** epoch)
        v_hat = moment2 / (1 - ADAM_BETA2 ** epoch)
        alpha = alpha - lr * m_hat / (np.sqrt(v_hat) + ADAM_EPS)

        if epoch % 50 == 0:
            logger.debug(f"epoch {epoch}: attacked training MSE={loss:.6e}")

    summary = FitSummary(
        method=f"adversarial_input({attack.label()})",
        iterations=epochs,
        objective=history[-1],
        converged=True,
        wall_time=time.perf_counter() - start,
        objective_history=history,
    )
    logger.info(f"Input-space adversarial fit ({kernel.label()}, {attack.label()}): final loss={summary.objective:.6e}")
    return FittedModel.from_coefficients(alpha, X, kernel, K_train=K, summary=summary)
