"""
Fit Command Module

Trains one model (adversarial, ridge, cross-validated ridge, multiple-kernel
or input-space adversarial) and writes the model, its summary and the data
split to the output directory.
"""

from pathlib import Path
from typing import List, Optional

import typer

from advkern.cli.commands import column, execute, provenance
from advkern.core.configs import FitConfig, FitMethod
from advkern.core.context import RunContext
from advkern.core.experiments import run_fit
from advkern.core.specs import Norm, SyntheticTarget
from advkern.utils.io import write_csv, write_json

fit_app = typer.Typer(
    name="fit",
    help="Fit a kernel regression model",
    add_completion=False,
    invoke_without_command=True,
)


@fit_app.callback(invoke_without_command=True)
def fit(
    ctx: typer.Context,
    data: Optional[Path] = typer.Option(None, "--data", help="CSV file with features and target"),
    target_column: Optional[str] = typer.Option(None, "--target-column", help="Target column name or position"),
    header: Optional[bool] = typer.Option(None, "--header/--no-header", help="Whether the CSV has a header row"),
    synthetic: Optional[SyntheticTarget] = typer.Option(None, "--synthetic", help="Synthetic target instead of a CSV"),
    n: Optional[int] = typer.Option(None, "--n", help="Synthetic sample size"),
    noise_sigma: Optional[float] = typer.Option(None, "--noise-sigma", help="Synthetic noise level"),
    method: Optional[FitMethod] = typer.Option(None, "--method", "-m", help="Training method"),
    kernel: Optional[List[str]] = typer.Option(
        None,
        "--kernel",
        "-k",
        help='Kernel as family[:key=value,...], e.g. "matern:nu=1.5,gamma=0.1". Repeat for MKL.',
    ),
    select_gamma: Optional[bool] = typer.Option(
        None, "--select-gamma/--fixed-gamma", help="Choose gamma by cross-validation"
    ),
    gamma_grid: Optional[List[float]] = typer.Option(None, "--gamma", help="Gamma candidate, repeatable"),
    lambda_grid: Optional[List[float]] = typer.Option(None, "--lambda", help="Lambda candidate for krr-cv, repeatable"),
    delta: Optional[str] = typer.Option(None, "--delta", help="Feature radius or 'auto' for 1/sqrt(n)"),
    lam: Optional[float] = typer.Option(None, "--lam", help="Ridge weight of 'krr'"),
    test_fraction: Optional[float] = typer.Option(None, "--test-fraction", help="Held-out share, 0 for none"),
    folds: Optional[int] = typer.Option(None, "--folds", help="Cross-validation folds"),
    train_radius: Optional[float] = typer.Option(None, "--train-radius", help="Input-space training radius"),
    norm: Optional[Norm] = typer.Option(None, "--norm", help="Input-space training norm"),
    epochs: Optional[int] = typer.Option(None, "--epochs", help="Input-space training epochs"),
    lr: Optional[float] = typer.Option(None, "--lr", help="Input-space Adam learning rate"),
):
    """
    Fit a model and write model.json, fit_summary.json and the split files.

    Example:
        advkern --seed 1 --out runs/sine fit --synthetic sine --n 200 -k matern:nu=2.5
    """
    def action(run_ctx: RunContext) -> None:
        options = run_ctx.merge("fit", {
            "data": data, "target_column": column(target_column), "has_header": header,
            "synthetic": synthetic, "n": n, "noise_sigma": noise_sigma, "method": method,
            "kernels": kernel, "select_gamma": select_gamma, "gamma_grid": gamma_grid,
            "lambda_grid": lambda_grid, "delta": delta, "lam": lam, "test_fraction": test_fraction,
            "folds": folds, "train_radius": train_radius, "norm": norm, "epochs": epochs, "lr": lr,
        })
        options.setdefault("folds", run_ctx.settings.cv_folds)
        config = FitConfig.model_validate(options)
        outcome = run_fit(config, run_ctx.seed, run_ctx.threads, run_ctx.settings)

        record = provenance(run_ctx, "fit", config)
        write_json(run_ctx.output("model.json"), outcome.model.to_dict())
        write_json(run_ctx.output("fit_summary.json"), {**record, "summary": outcome.summary})
        write_csv(run_ctx.output("train_predictions.csv"), outcome.train_rows, ["index", "y", "prediction"],
                  record["config_sha256"], run_ctx.seed)
        if outcome.stats is not None:
            write_json(run_ctx.output("standardization.json"), outcome.stats.to_dict())
        if outcome.split is not None:
            write_json(run_ctx.output("split.json"), outcome.split)
        typer.echo(f"Model written to {run_ctx.output('model.json')}")

    execute(ctx, "fit", action)
