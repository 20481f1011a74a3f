"""
Sweep Command Modules

``rate-sweep`` and ``noise-sweep`` compare adversarial training with
cross-validated ridge as the training size or the noise level changes.
``sensitivity`` holds the data fixed and moves the radius or ridge weight
instead. Per-replicate rows are written incrementally.
"""

from typing import List, Optional

import typer

from advkern.cli.commands import execute, provenance
from advkern.core.configs import NoiseSweepConfig, RateMethod, RateSweepConfig, SensitivityConfig
from advkern.core.context import RunContext
from advkern.core.experiments import run_noise_sweep, run_rate_sweep, run_sensitivity
from advkern.core.specs import SyntheticTarget
from advkern.utils.io import ProvenanceCsv, write_csv, write_json

rate_app = typer.Typer(
    name="rate-sweep",
    help="Test error against training size",
    add_completion=False,
    invoke_without_command=True,
)

noise_app = typer.Typer(
    name="noise-sweep",
    help="Test error against noise level",
    add_completion=False,
    invoke_without_command=True,
)

sensitivity_app = typer.Typer(
    name="sensitivity",
    help="Test error against the radius and the ridge weight",
    add_completion=False,
    invoke_without_command=True,
)


@rate_app.callback(invoke_without_command=True)
def rate_sweep(
    ctx: typer.Context,
    target: Optional[SyntheticTarget] = typer.Option(None, "--target", help="Synthetic target"),
    kernel: Optional[str] = typer.Option(None, "--kernel", "-k", help="Kernel as family[:key=value,...]"),
    n_grid: Optional[List[int]] = typer.Option(None, "--n", help="Training size, repeatable, ascending"),
    reps: Optional[int] = typer.Option(None, "--reps", help="Replicates per size"),
    noise_sigma: Optional[float] = typer.Option(None, "--noise-sigma", help="Noise level"),
    delta: Optional[str] = typer.Option(None, "--delta", help="Feature radius or 'auto' for 1/sqrt(n)"),
    methods: Optional[List[RateMethod]] = typer.Option(None, "--method", help="Estimator, repeatable"),
    test_size: Optional[int] = typer.Option(None, "--test-size", help="Fresh points for the noise-free MSE"),
):
    """
    Write rate_sweep.csv, rate_summary.csv and rate_fit.json.

    Example:
        advkern --threads 4 rate-sweep --target sine -k matern:nu=1.5 --reps 10
    """
    def action(run_ctx: RunContext) -> None:
        options = run_ctx.merge("rate-sweep", {
            "target": target, "kernel": kernel, "n_grid": n_grid, "reps": reps,
            "noise_sigma": noise_sigma, "delta": delta, "methods": methods, "test_size": test_size,
        })
        options.setdefault("folds", run_ctx.settings.cv_folds)
        config = RateSweepConfig.model_validate(options)
        record = provenance(run_ctx, "rate-sweep", config)
        digest = record["config_sha256"]
        columns = ["n", "method", "rep", "param", "mse"]
        with ProvenanceCsv(run_ctx.output("rate_sweep.csv"), columns, digest, run_ctx.seed) as table:
            result = run_rate_sweep(config, run_ctx.seed, run_ctx.threads, run_ctx.settings, on_rows=table.append)
        write_csv(run_ctx.output("rate_summary.csv"), result.summary_rows,
                  ["n", "method", "median_mse", "q1", "q3"], digest, run_ctx.seed)
        write_json(run_ctx.output("rate_fit.json"), {
            **record,
            "rates": {
                name: {"slope": rate.slope, "intercept": rate.intercept, "degenerate": rate.degenerate}
                for name, rate in result.rates.items()
            },
        })
        for name, rate in result.rates.items():
            flag = " (degenerate)" if rate.degenerate else ""
            typer.echo(f"Observed rate of {name}: {rate.slope:.3f}{flag}")

    execute(ctx, "rate-sweep", action)


@noise_app.callback(invoke_without_command=True)
def noise_sweep(
    ctx: typer.Context,
    targets: Optional[List[SyntheticTarget]] = typer.Option(None, "--target", help="Synthetic target, repeatable"),
    sigma_grid: Optional[List[float]] = typer.Option(None, "--sigma", help="Noise level, repeatable"),
    n: Optional[int] = typer.Option(None, "--n", help="Training size"),
    reps: Optional[int] = typer.Option(None, "--reps", help="Replicates per noise level"),
    kernel: Optional[str] = typer.Option(None, "--kernel", "-k", help="Kernel of the nonlinear targets"),
    ridge_lambda: Optional[float] = typer.Option(None, "--ridge-lambda", help="Weight of the fixed ridge baseline"),
    test_size: Optional[int] = typer.Option(None, "--test-size", help="Fresh points for the noise-free MSE"),
):
    """
    Write noise_sweep.csv.

    Example:
        advkern noise-sweep --target sine --sigma 0.01 --sigma 0.1 --reps 3
    """
    def action(run_ctx: RunContext) -> None:
        options = run_ctx.merge("noise-sweep", {
            "targets": targets, "sigma_grid": sigma_grid, "n": n, "reps": reps,
            "kernel": kernel, "ridge_lambda": ridge_lambda, "test_size": test_size,
        })
        options.setdefault("folds", run_ctx.settings.cv_folds)
        config = NoiseSweepConfig.model_validate(options)
        record = provenance(run_ctx, "noise-sweep", config)
        columns = ["target", "sigma", "method", "rep", "mse"]
        with ProvenanceCsv(run_ctx.output("noise_sweep.csv"), columns, record["config_sha256"], run_ctx.seed) as table:
            rows = run_noise_sweep(config, run_ctx.seed, run_ctx.threads, run_ctx.settings, on_rows=table.append)
        typer.echo(f"{len(rows)} rows written to {run_ctx.output('noise_sweep.csv')}")

    execute(ctx, "noise-sweep", action)


@sensitivity_app.callback(invoke_without_command=True)
def sensitivity(
    ctx: typer.Context,
    target: Optional[SyntheticTarget] = typer.Option(None, "--target", help="Synthetic target"),
    kernel: Optional[str] = typer.Option(None, "--kernel", "-k", help="Kernel as family[:key=value,...]"),
    n: Optional[int] = typer.Option(None, "--n", help="Training size"),
    reps: Optional[int] = typer.Option(None, "--reps", help="Replicates"),
    noise_sigma: Optional[float] = typer.Option(None, "--noise-sigma", help="Noise level"),
    delta_grid: Optional[List[float]] = typer.Option(None, "--delta", help="Adversarial radius, repeatable"),
    lambda_grid: Optional[List[float]] = typer.Option(None, "--lambda", help="Ridge weight, repeatable"),
    test_size: Optional[int] = typer.Option(None, "--test-size", help="Fresh points for the noise-free MSE"),
):
    """
    Write sensitivity.csv.

    Example:
        advkern sensitivity --target sine --delta 0.01 --delta 0.1 --lambda 1e-4 --lambda 1e-2
    """
    def action(run_ctx: RunContext) -> None:
        options = run_ctx.merge("sensitivity", {
            "target": target, "kernel": kernel, "n": n, "reps": reps, "noise_sigma": noise_sigma,
            "delta_grid": delta_grid, "lambda_grid": lambda_grid, "test_size": test_size,
        })
        options.setdefault("folds", run_ctx.settings.cv_folds)
        config = SensitivityConfig.model_validate(options)
        record = provenance(run_ctx, "sensitivity", config)
        columns = ["target", "method", "param", "rep", "mse"]
        with ProvenanceCsv(run_ctx.output("sensitivity.csv"), columns, record["config_sha256"], run_ctx.seed) as table:
            rows = run_sensitivity(config, run_ctx.seed, run_ctx.threads, run_ctx.settings, on_rows=table.append)
        typer.echo(f"{len(rows)} rows written to {run_ctx.output('sensitivity.csv')}")

    execute(ctx, "sensitivity", action)
