"""
Experiment runners behind the command-line harness.

Each runner takes a validated configuration, a run seed and a thread count,
does the computation and returns plain rows and records. Writing files is
left to the caller; runners that produce long tables hand rows to a callback
as soon as a block is complete.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable, Dict, List, Optional, Sequence, Tuple, Union

import numpy as np

from advkern.config import Settings
from advkern.core.attacks import KernelModel, attack_dataset, certified_radius, fit_adversarial_input, r2
from advkern.core.bounds import gaussian_complexity, theorem_bounds
from advkern.core.configs import (
    AttackConfig,
    BenchmarkConfig,
    BenchmarkMethod,
    BoundsConfig,
    FitConfig,
    FitMethod,
    NoiseSweepConfig,
    PredictConfig,
    RateMethod,
    RateSweepConfig,
    SensitivityConfig,
    resolve_delta,
)
from advkern.core.data import (
    Dataset,
    StandardizationStats,
    align_columns,
    bootstrap_indices,
    bootstrap_quartiles,
    load_csv,
    load_feature_matrix,
    split_indices,
    standardize,
    synthesize,
    target_function,
)
from advkern.core.kernels import gram_matrix
from advkern.core.mkl import MklModel, fit_adversarial_mkl
from advkern.core.solver import (
    FittedModel,
    cross_validate_adversarial,
    cross_validate_krr,
    fit_adversarial,
    fit_krr,
)
from advkern.core.specs import (
    AttackSpec,
    BoundInputs,
    Estimator,
    KernelFamily,
    KernelSpec,
    Norm,
    SolverConfig,
    SyntheticSpec,
    SyntheticTarget,
)
from advkern.exceptions import RadiusError
from advkern.utils.io import read_json
from advkern.utils.logging import get_advkern_logger, log_json
from advkern.utils.parallel import ordered_map, spawn_seeds

logger = get_advkern_logger(__name__)

RowSink = Callable[[List[Dict[str, Any]]], None]


def _discard(rows: List[Dict[str, Any]]) -> None:
    pass


def _mse(a: np.ndarray, b: np.ndarray) -> float:
    return float(np.mean((a - b) ** 2))


def _r2_or_none(y: np.ndarray, predictions: np.ndarray) -> Optional[float]:
    return r2(y, predictions) if y.shape[0] > 1 and np.var(y) > 0 else None


def _noise_free_mse(model: KernelModel, target: SyntheticTarget, size: int, seed: int) -> float:
    """MSE against the noise-free target on fresh uniform inputs."""
    x = np.random.default_rng([seed, 1]).uniform(0.0, 1.0, size=size)
    return _mse(model.predict(x[:, None]), target_function(target, x))


@dataclass
class FitOutcome:
    """Everything the fit command writes."""
    model: KernelModel
    summary: Dict[str, Any]
    train_rows: List[Dict[str, Any]]
    stats: Optional[StandardizationStats] = None
    split: Optional[Dict[str, Any]] = None


def run_fit(config: FitConfig, seed: int, threads: int = 1, settings: Optional[Settings] = None) -> FitOutcome:
    """
    Fit one model as configured and evaluate it on the train and test splits.

    CSV data is standardized with training statistics; synthetic data is used as drawn.
    """
    settings = settings or Settings()
    dataset = config.load(seed)
    split_record = None
    if config.test_fraction > 0:
        train_idx, test_idx = split_indices(dataset.n, config.test_fraction, seed)
        split_record = {"seed": seed, "test_fraction": config.test_fraction,
                        "train": train_idx.tolist(), "test": test_idx.tolist()}
        train, test = dataset.subset(train_idx), dataset.subset(test_idx)
    else:
        train, test = dataset, None

    stats = None
    if config.data is not None:
        train, others = standardize(train, [test] if test is not None else [])
        test = others[0] if others else None
        stats = train.stats

    n = train.n
    kernel = config.kernels[0]
    delta = None
    lam = None
    if config.method == FitMethod.ADVERSARIAL:
        delta = resolve_delta(config.delta, n)
        if config.select_gamma:
            kernel = cross_validate_adversarial(train.X, train.y, kernel, config.gamma_grid, config.folds, seed,
                                                SolverConfig.from_settings(0.0, settings))
        model = fit_adversarial(train.X, train.y, kernel, SolverConfig.from_settings(delta, settings))
    elif config.method == FitMethod.KRR:
        lam = config.lam
        model = fit_krr(train.X, train.y, kernel, lam, SolverConfig.from_settings(0.0, settings))
    elif config.method == FitMethod.KRR_CV:
        kernel, lam = cross_validate_krr(train.X, train.y, kernel, config.gamma_grid, config.lambda_grid,
                                         config.folds, seed)
        model = fit_krr(train.X, train.y, kernel, lam, SolverConfig.from_settings(0.0, settings))
    elif config.method == FitMethod.MKL:
        delta = resolve_delta(config.delta, n)
        model = fit_adversarial_mkl(train.X, train.y, config.kernels, SolverConfig.from_settings(delta, settings))
    else:
        if config.select_gamma:
            kernel, _ = cross_validate_krr(train.X, train.y, kernel, config.gamma_grid, config.lambda_grid,
                                           config.folds, seed)
        model = fit_adversarial_input(train.X, train.y, kernel, config.train_radius, config.norm,
                                      config.epochs, config.lr, seed=seed, threads=threads)

    train_pred = model.predict(train.X)
    summary: Dict[str, Any] = {
        "method": config.method.value,
        "kernels": [k.model_dump(mode="json") for k in getattr(model, "kernels", [kernel])],
        "delta": delta,
        "lambda": lam,
        "objective": model.summary.objective,
        "iterations": model.summary.iterations,
        "converged": model.summary.converged,
        "rkhs_norm": model.rkhs_norm,
        "n_train": n,
        "train_mse": _mse(train.y, train_pred),
        "train_r2": _r2_or_none(train.y, train_pred),
        "n_test": 0 if test is None else test.n,
        "test_mse": None,
        "test_r2": None,
    }
    if test is not None:
        test_pred = model.predict(test.X)
        summary["test_mse"] = _mse(test.y, test_pred)
        summary["test_r2"] = _r2_or_none(test.y, test_pred)

    log_json(logger, summary, title="Fit summary", level="info")
    logger.info(f"Fit wall time: {model.summary.wall_time:.3f}s")
    train_rows = [{"index": i, "y": float(t), "prediction": float(p)}
                  for i, (t, p) in enumerate(zip(train.y, train_pred))]
    return FitOutcome(model=model, summary=summary, train_rows=train_rows, stats=stats, split=split_record)


def load_model(path: Union[str, Path]) -> KernelModel:
    """Load a model JSON written by the fit command, single- or multiple-kernel."""
    data = read_json(path)
    return MklModel.from_dict(data) if "kernels" in data else FittedModel.from_dict(data)


def _prepare_inputs(X: np.ndarray, names: Sequence[str], standardization: Optional[Path]) -> np.ndarray:
    if standardization is None:
        return X
    stats = StandardizationStats.from_dict(read_json(standardization))
    return stats.apply(align_columns(X, names, stats.feature_names))


def run_predict(config: PredictConfig) -> List[Dict[str, Any]]:
    """Predictions of a stored model, one row per input row."""
    model = load_model(config.model)
    X, names = load_feature_matrix(config.data, config.has_header, config.drop_column)
    predictions = model.predict(_prepare_inputs(X, names, config.standardization))
    return [{"index": i, "prediction": float(p)} for i, p in enumerate(predictions)]


def run_attack(config: AttackConfig, seed: int, threads: int = 1) -> Tuple[List[Dict[str, Any]], Dict[str, Any]]:
    """
    Attack a stored model on a labelled dataset.

    Returns per-point rows and a summary with the clean and attacked R^2 and
    the mean certified loss. Kernels without a certificate (polynomial) leave
    the certified fields empty.
    """
    model = load_model(config.model)
    dataset = load_csv(config.data, config.target_column, config.has_header)
    X = _prepare_inputs(dataset.X, dataset.feature_names, config.standardization)
    y = dataset.y
    spec = config.attack

    X_adv = attack_dataset(model, X, y, spec, seed=seed, threads=threads)
    clean = model.predict(X)
    attacked = model.predict(X_adv)
    perturbation = np.linalg.norm(X_adv - X, ord=np.inf if spec.norm == Norm.LINF else 2, axis=1)

    summary: Dict[str, Any] = {
        "attack": attack_label(spec),
        "n": int(y.shape[0]),
        "clean_mse": _mse(y, clean),
        "attacked_mse": _mse(y, attacked),
        "clean_r2": _r2_or_none(y, clean),
        "robust_r2": _r2_or_none(y, attacked),
        "certified_radius": None,
        "certified_loss": None,
    }
    try:
        radius = certified_radius(model, spec)
    except RadiusError as e:
        logger.warning(f"No certificate for this model: {e.message}")
        radius = None
    if radius is not None:
        summary["certified_radius"] = radius
        summary["certified_loss"] = float(np.mean((np.abs(y - clean) + radius * model.rkhs_norm) ** 2))

    rows = [
        {"index": i, "y": float(t), "clean_prediction": float(c), "attacked_prediction": float(a),
         "perturbation_norm": float(d)}
        for i, (t, c, a, d) in enumerate(zip(y, clean, attacked, perturbation))
    ]
    log_json(logger, summary, title="Attack summary", level="info")
    return rows, summary


@dataclass(frozen=True)
class RateFit:
    """Least-squares line through (log n, log median MSE)."""
    slope: float
    intercept: float
    degenerate: bool


def fit_rate(ns: Sequence[int], mses: Sequence[float], degenerate_mse: float = 1e-12) -> RateFit:
    """
    Fit log(mse) = intercept + slope * log(n).

    The fit is flagged degenerate when any MSE is at or below degenerate_mse,
    where round-off rather than the estimator sets the error.
    """
    mses = np.asarray(mses, dtype=float)
    degenerate = bool(np.any(mses <= degenerate_mse) or not np.all(np.isfinite(mses)))
    log_mse = np.log(np.maximum(mses, np.finfo(float).tiny))
    slope, intercept = np.polyfit(np.log(np.asarray(ns, dtype=float)), log_mse, 1)
    return RateFit(slope=float(slope), intercept=float(intercept), degenerate=degenerate)


@dataclass
class RateSweepResult:
    summary_rows: List[Dict[str, Any]]
    rates: Dict[str, RateFit]


def run_rate_sweep(
    config: RateSweepConfig,
    seed: int,
    threads: int = 1,
    settings: Optional[Settings] = None,
    on_rows: RowSink = _discard,
) -> RateSweepResult:
    """
    Test MSE of each configured estimator as the training size grows.

    Every (n, rep) cell draws one dataset with a spawned seed and fits every
    method on it, so the methods are compared on the same draws. The param
    column holds the radius of adv_kern and the selected weight of ridge_cv.
    Rows of an n are handed to on_rows as soon as all its replicates are done.
    """
    settings = settings or Settings()
    seeds = spawn_seeds(seed, len(config.n_grid) * config.reps)
    ridge_config = SolverConfig.from_settings(0.0, settings)
    summary_rows = []

    for i, n in enumerate(config.n_grid):
        delta = resolve_delta(config.delta, n)
        solver_config = SolverConfig.from_settings(delta, settings)
        cell_seeds = seeds[i * config.reps:(i + 1) * config.reps]

        def run_cell(cell_seed: int) -> List[Tuple[RateMethod, float, float]]:
            ds = synthesize(SyntheticSpec(target=config.target, n=n, noise_sigma=config.noise_sigma, seed=cell_seed))
            K = gram_matrix(config.kernel, ds.X)
            results = []
            for method in config.methods:
                if method == RateMethod.ADV_KERN:
                    model, param = fit_adversarial(ds.X, ds.y, config.kernel, solver_config, gram=K), delta
                else:
                    _, param = cross_validate_krr(ds.X, ds.y, config.kernel, [config.kernel.gamma],
                                                  folds=config.folds, seed=cell_seed)
                    model = fit_krr(ds.X, ds.y, config.kernel, param, ridge_config, gram=K)
                results.append((method, param, _noise_free_mse(model, config.target, config.test_size, cell_seed)))
            return results

        cells = ordered_map(run_cell, cell_seeds, threads)
        on_rows([
            {"n": n, "method": method.value, "rep": rep, "param": param, "mse": mse}
            for rep, results in enumerate(cells)
            for method, param, mse in results
        ])
        for j, method in enumerate(config.methods):
            median, q1, q3 = bootstrap_quartiles([results[j][2] for results in cells])
            summary_rows.append({"n": n, "method": method.value, "median_mse": median, "q1": q1, "q3": q3})
            logger.info(f"n={n} {method.value}: median test MSE={median:.4e}")

    rates = {}
    for method in config.methods:
        rows = [r for r in summary_rows if r["method"] == method.value]
        rate = fit_rate([r["n"] for r in rows], [r["median_mse"] for r in rows], config.degenerate_mse)
        logger.info(f"Observed rate of {method.value}: {rate.slope:.3f}{' (degenerate)' if rate.degenerate else ''}")
        rates[method.value] = rate
    return RateSweepResult(summary_rows=summary_rows, rates=rates)


def run_noise_sweep(
    config: NoiseSweepConfig,
    seed: int,
    threads: int = 1,
    settings: Optional[Settings] = None,
    on_rows: RowSink = _discard,
) -> List[Dict[str, Any]]:
    """
    Test MSE of adversarial training, cross-validated ridge and fixed ridge across noise levels.

    The linear target uses the affine kernel (polynomial of degree 1), the
    other targets the configured kernel. Adversarial training uses delta = 1/sqrt(n).
    """
    settings = settings or Settings()
    adv_config = SolverConfig.from_settings(1.0 / math.sqrt(config.n), settings)
    ridge_config = SolverConfig.from_settings(0.0, settings)
    cells = [(t, s, r) for t in config.targets for s in config.sigma_grid for r in range(config.reps)]
    seeds = spawn_seeds(seed, len(cells))
    all_rows: List[Dict[str, Any]] = []

    def run_cell(task: Tuple[Tuple[SyntheticTarget, float, int], int]) -> List[Dict[str, Any]]:
        (target, sigma, rep), cell_seed = task
        kernel = (KernelSpec(family=KernelFamily.POLYNOMIAL, degree=1)
                  if target == SyntheticTarget.LINEAR else config.kernel)
        ds = synthesize(SyntheticSpec(target=target, n=config.n, noise_sigma=sigma, seed=cell_seed))
        K = gram_matrix(kernel, ds.X)
        _, lam = cross_validate_krr(ds.X, ds.y, kernel, [kernel.gamma], folds=config.folds, seed=cell_seed)
        models = {
            "adv_kern": fit_adversarial(ds.X, ds.y, kernel, adv_config, gram=K),
            "ridge_cv": fit_krr(ds.X, ds.y, kernel, lam, ridge_config, gram=K),
            "ridge": fit_krr(ds.X, ds.y, kernel, config.ridge_lambda, ridge_config, gram=K),
        }
        return [
            {"target": target.value, "sigma": sigma, "method": name, "rep": rep,
             "mse": _noise_free_mse(model, target, config.test_size, cell_seed)}
            for name, model in models.items()
        ]

    block = len(config.sigma_grid) * config.reps
    tasks = list(zip(cells, seeds))
    for start in range(0, len(tasks), block):
        rows = [row for cell_rows in ordered_map(run_cell, tasks[start:start + block], threads) for row in cell_rows]
        on_rows(rows)
        all_rows.extend(rows)
    return all_rows


def run_sensitivity(
    config: SensitivityConfig,
    seed: int,
    threads: int = 1,
    settings: Optional[Settings] = None,
    on_rows: RowSink = _discard,
) -> List[Dict[str, Any]]:
    """
    Test MSE of adversarial training across radii and of ridge regression across weights.

    Each replicate draws one dataset and fits adv_kern for every delta, ridge
    for every lambda and one cross-validated ridge_cv reference, whose param
    is the selected weight. Rows of a replicate go to on_rows once it is done.
    """
    settings = settings or Settings()
    ridge_config = SolverConfig.from_settings(0.0, settings)
    all_rows: List[Dict[str, Any]] = []

    def run_rep(task: Tuple[int, int]) -> List[Dict[str, Any]]:
        rep, rep_seed = task
        ds = synthesize(SyntheticSpec(target=config.target, n=config.n, noise_sigma=config.noise_sigma, seed=rep_seed))
        K = gram_matrix(config.kernel, ds.X)
        fits: List[Tuple[str, float, KernelModel]] = []
        for delta in config.delta_grid:
            model = fit_adversarial(ds.X, ds.y, config.kernel, SolverConfig.from_settings(delta, settings), gram=K)
            fits.append(("adv_kern", delta, model))
        fits += [
            ("ridge", lam, fit_krr(ds.X, ds.y, config.kernel, lam, ridge_config, gram=K))
            for lam in config.lambda_grid
        ]
        _, lam = cross_validate_krr(ds.X, ds.y, config.kernel, [config.kernel.gamma], config.lambda_grid,
                                    folds=config.folds, seed=rep_seed)
        fits.append(("ridge_cv", lam, fit_krr(ds.X, ds.y, config.kernel, lam, ridge_config, gram=K)))
        return [
            {"target": config.target.value, "method": method, "param": param, "rep": rep,
             "mse": _noise_free_mse(model, config.target, config.test_size, rep_seed)}
            for method, param, model in fits
        ]

    tasks = list(enumerate(spawn_seeds(seed, config.reps)))
    for rows in ordered_map(run_rep, tasks, threads):
        on_rows(rows)
        all_rows.extend(rows)
    best = min((r for r in all_rows if r["method"] == "adv_kern"), key=lambda r: r["mse"])
    logger.info(
        f"Sensitivity sweep: {len(all_rows)} rows, lowest adv_kern MSE {best['mse']:.4e} at delta={best['param']:g}"
    )
    return all_rows


def attack_label(spec: Optional[AttackSpec]) -> str:
    return "clean" if spec is None else f"{spec.norm.value}:{spec.radius:g}"


@dataclass
class BenchmarkResult:
    rows: List[Dict[str, Any]]
    selections: Dict[str, Any] = field(default_factory=dict)


def run_benchmark(
    config: BenchmarkConfig,
    seed: int,
    threads: int = 1,
    settings: Optional[Settings] = None,
) -> BenchmarkResult:
    """
    Clean and attacked test R^2 of the method roster with bootstrap quartiles.

    The adversarial rows use the gamma selected for the auto-radius fit; the
    input-space rows reuse the gamma selected for cross-validated ridge.
    """
    settings = settings or Settings()
    dataset = load_csv(config.data, config.target_column, config.has_header)
    train_idx, test_idx = split_indices(dataset.n, config.test_fraction, seed)
    train, (test,) = standardize(dataset.subset(train_idx), [dataset.subset(test_idx)])
    n = train.n
    base = KernelSpec(family=config.family)
    models: List[Tuple[str, KernelModel]] = []
    selections: Dict[str, Any] = {"n_train": n, "n_test": test.n, "p": train.p}

    needs_adv = any(m in config.methods for m in (BenchmarkMethod.ADV_AUTO, BenchmarkMethod.ADV_FIXED))
    needs_ridge = any(m in config.methods for m in (BenchmarkMethod.RIDGE_CV, BenchmarkMethod.ADV_INPUT))
    adv_kernel = ridge_kernel = base
    if needs_adv:
        adv_kernel = cross_validate_adversarial(train.X, train.y, base, folds=config.folds, seed=seed,
                                                config=SolverConfig.from_settings(0.0, settings))
        selections["adv_kernel"] = adv_kernel.label()
    if needs_ridge:
        ridge_kernel, lam = cross_validate_krr(train.X, train.y, base, folds=config.folds, seed=seed)
        selections["ridge_kernel"] = ridge_kernel.label()
        selections["ridge_lambda"] = lam

    if BenchmarkMethod.ADV_AUTO in config.methods:
        delta = 1.0 / math.sqrt(n)
        selections["auto_delta"] = delta
        models.append(("adv_kern_auto", fit_adversarial(train.X, train.y, adv_kernel,
                                                        SolverConfig.from_settings(delta, settings))))
    if BenchmarkMethod.RIDGE_CV in config.methods:
        models.append(("ridge_cv", fit_krr(train.X, train.y, ridge_kernel, lam,
                                           SolverConfig.from_settings(0.0, settings))))
    if BenchmarkMethod.ADV_FIXED in config.methods:
        for delta in config.fixed_deltas:
            models.append((f"adv_kern_delta={delta:g}",
                           fit_adversarial(train.X, train.y, adv_kernel, SolverConfig.from_settings(delta, settings))))
    if BenchmarkMethod.ADV_INPUT in config.methods:
        for norm in (Norm.L2, Norm.LINF):
            models.append((f"adv_input_{norm.value}={config.input_radius:g}",
                           fit_adversarial_input(train.X, train.y, ridge_kernel, config.input_radius, norm,
                                                 config.input_epochs, seed=seed, threads=threads)))

    boots = bootstrap_indices(test.n, config.bootstrap_reps, seed)
    attacks: List[Optional[AttackSpec]] = [None, *config.attacks]
    cells = [(name, model, attack) for name, model in models for attack in attacks]

    def score_cell(cell: Tuple[str, KernelModel, Optional[AttackSpec]]) -> Dict[str, Any]:
        name, model, attack = cell
        X_eval = test.X if attack is None else attack_dataset(model, test.X, test.y, attack, seed=seed)
        predictions = model.predict(X_eval)
        scores = [r2(test.y[idx], predictions[idx]) for idx in boots]
        median, q1, q3 = bootstrap_quartiles(scores)
        return {"method": name, "attack": attack_label(attack), "r2": r2(test.y, predictions),
                "median": median, "q1": q1, "q3": q3}

    rows = ordered_map(score_cell, cells, threads)
    log_json(logger, selections, title="Benchmark selections", level="info")
    return BenchmarkResult(rows=rows, selections=selections)


def run_bounds(config: BoundsConfig, seed: int) -> Dict[str, Any]:
    """
    Complexity report of the design's kernel matrix and the bound values over the grids.

    The bounds are evaluated with the analytic Gaussian complexity and the critical radius.
    """
    dataset: Dataset = config.load(seed)
    if config.data is not None:
        dataset, _ = standardize(dataset)
    K = gram_matrix(config.kernel, dataset.X)
    report = gaussian_complexity(K, config.mc_samples, seed)

    bounds = []
    for sigma in config.sigma_grid:
        for R in config.R_grid:
            for t in config.delta_grid:
                inputs = BoundInputs(sigma=sigma, R=R, delta_or_lambda=t,
                                     gamma=report.gamma_bar_analytic, beta=report.beta_bar)
                for estimator in Estimator:
                    values = theorem_bounds(inputs, estimator)
                    bounds.append({"sigma": sigma, "R": R, "delta_or_lambda": t, **values.model_dump(mode="json")})

    return {
        "dataset": dataset.name,
        "kernel": config.kernel.model_dump(mode="json"),
        "complexity": report.model_dump(mode="json"),
        "top_eigenvalue": report.spectrum[0] * report.n if report.spectrum else 0.0,
        "bounds": bounds,
    }
