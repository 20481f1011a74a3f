"""
Benchmark and Bounds Command Modules

``benchmark`` scores a roster of methods on a real dataset, clean and under
attack, with bootstrap quartiles. ``bounds`` reports the complexity of a
design's kernel matrix and the resulting excess-risk bounds.
"""

from pathlib import Path
from typing import List, Optional

import typer
from rich.console import Console
from rich.table import Table

from advkern.cli.commands import column, execute, provenance
from advkern.core.configs import BenchmarkConfig, BenchmarkMethod, BoundsConfig
from advkern.core.context import RunContext
from advkern.core.experiments import run_benchmark, run_bounds
from advkern.core.specs import KernelFamily, SyntheticTarget
from advkern.utils.io import write_csv, write_json

benchmark_app = typer.Typer(
    name="benchmark",
    help="Clean and robust R^2 of the method roster on a dataset",
    add_completion=False,
    invoke_without_command=True,
)

bounds_app = typer.Typer(
    name="bounds",
    help="Complexity report and excess-risk bounds of a design",
    add_completion=False,
    invoke_without_command=True,
)

BENCHMARK_COLUMNS = ["method", "attack", "r2", "median", "q1", "q3"]


def _results_table(rows) -> Table:
    table = Table(title="Test R^2 (bootstrap median [Q1, Q3])")
    attacks = list(dict.fromkeys(row["attack"] for row in rows))
    table.add_column("method")
    for attack in attacks:
        table.add_column(attack, justify="right")
    for method in dict.fromkeys(row["method"] for row in rows):
        cells = {row["attack"]: row for row in rows if row["method"] == method}
        table.add_row(method, *(
            f"{cells[a]['median']:.3f} [{cells[a]['q1']:.3f}, {cells[a]['q3']:.3f}]" if a in cells else "-"
            for a in attacks
        ))
    return table


@benchmark_app.callback(invoke_without_command=True)
def benchmark(
    ctx: typer.Context,
    data: Optional[Path] = typer.Option(None, "--data", help="CSV file with features and target"),
    target_column: Optional[str] = typer.Option(None, "--target-column", help="Target column name or position"),
    header: Optional[bool] = typer.Option(None, "--header/--no-header", help="Whether the CSV has a header row"),
    test_fraction: Optional[float] = typer.Option(None, "--test-fraction", help="Held-out share"),
    family: Optional[KernelFamily] = typer.Option(None, "--family", help="Kernel family searched by cross-validation"),
    methods: Optional[List[BenchmarkMethod]] = typer.Option(None, "--method", "-m", help="Method, repeatable"),
    fixed_deltas: Optional[List[float]] = typer.Option(None, "--fixed-delta", help="Fixed radius, repeatable"),
    input_radius: Optional[float] = typer.Option(None, "--input-radius", help="Input-space training radius"),
    input_epochs: Optional[int] = typer.Option(None, "--input-epochs", help="Input-space training epochs"),
    attacks: Optional[List[str]] = typer.Option(None, "--attack", "-a", help="Attack as norm:radius, repeatable"),
    bootstrap_reps: Optional[int] = typer.Option(None, "--bootstrap-reps", help="Bootstrap replicates"),
    folds: Optional[int] = typer.Option(None, "--folds", help="Cross-validation folds"),
):
    """
    Write benchmark.csv and benchmark_selections.json and print the result table.

    Example:
        advkern --threads 8 benchmark --data abalone.csv --target-column Rings
    """
    def action(run_ctx: RunContext) -> None:
        options = run_ctx.merge("benchmark", {
            "data": data, "target_column": column(target_column), "has_header": header,
            "test_fraction": test_fraction, "family": family, "methods": methods,
            "fixed_deltas": fixed_deltas, "input_radius": input_radius, "input_epochs": input_epochs,
            "attacks": attacks, "bootstrap_reps": bootstrap_reps, "folds": folds,
        })
        options.setdefault("folds", run_ctx.settings.cv_folds)
        config = BenchmarkConfig.model_validate(options)
        result = run_benchmark(config, run_ctx.seed, run_ctx.threads, run_ctx.settings)

        record = provenance(run_ctx, "benchmark", config)
        write_csv(
            run_ctx.output("benchmark.csv"), result.rows, BENCHMARK_COLUMNS, record["config_sha256"], run_ctx.seed
        )
        write_json(run_ctx.output("benchmark_selections.json"), {**record, "selections": result.selections})
        Console().print(_results_table(result.rows))

    execute(ctx, "benchmark", action)


@bounds_app.callback(invoke_without_command=True)
def bounds(
    ctx: typer.Context,
    data: Optional[Path] = typer.Option(None, "--data", help="CSV file with features and target"),
    target_column: Optional[str] = typer.Option(None, "--target-column", help="Target column name or position"),
    header: Optional[bool] = typer.Option(None, "--header/--no-header", help="Whether the CSV has a header row"),
    synthetic: Optional[SyntheticTarget] = typer.Option(None, "--synthetic", help="Synthetic design instead of a CSV"),
    n: Optional[int] = typer.Option(None, "--n", help="Synthetic sample size"),
    kernel: Optional[str] = typer.Option(None, "--kernel", "-k", help="Kernel as family[:key=value,...]"),
    mc_samples: Optional[int] = typer.Option(None, "--mc-samples", help="Monte Carlo draws"),
    sigma_grid: Optional[List[float]] = typer.Option(None, "--sigma", help="Noise magnitude, repeatable"),
    R_grid: Optional[List[float]] = typer.Option(None, "--R", help="Target RKHS norm, repeatable"),
    delta_grid: Optional[List[float]] = typer.Option(None, "--delta", help="Radius or ridge weight, repeatable"),
):
    """
    Write bounds.json.

    Example:
        advkern bounds --synthetic sine --n 500 -k matern:nu=1.5 --delta 0.05
    """
    def action(run_ctx: RunContext) -> None:
        options = run_ctx.merge("bounds", {
            "data": data, "target_column": column(target_column), "has_header": header,
            "synthetic": synthetic, "n": n, "kernel": kernel, "mc_samples": mc_samples,
            "sigma_grid": sigma_grid, "R_grid": R_grid, "delta_grid": delta_grid,
        })
        options.setdefault("mc_samples", run_ctx.settings.mc_samples)
        config = BoundsConfig.model_validate(options)
        report = run_bounds(config, run_ctx.seed)
        path = write_json(run_ctx.output("bounds.json"), {**provenance(run_ctx, "bounds", config), **report})
        complexity = report["complexity"]
        typer.echo(
            f"Gaussian complexity {complexity['gamma_bar_mc']:.4e} (analytic {complexity['gamma_bar_analytic']:.4e}), "
            f"critical radius {complexity['beta_bar']:.4e}; written to {path}"
        )

    execute(ctx, "bounds", action)
