"""
advkern CLI

A command-line harness for adversarially trained kernel regression: fitting,
prediction, attacks, the rate, noise and sensitivity sweeps, the benchmark
and the complexity bounds.
"""

from pathlib import Path
from typing import Optional

import typer

from advkern import __description__, __version__
from advkern.core.context import RunContext, exit_code_for
from advkern.exceptions import AdvKernError

from .commands import benchmark, fit, predict, sweeps

app = typer.Typer(
    name="advkern",
    help="advkern - Adversarial training of kernel regression models",
    add_completion=False,
)

app.add_typer(fit.fit_app, name="fit")
app.add_typer(predict.predict_app, name="predict")
app.add_typer(predict.attack_app, name="attack")
app.add_typer(sweeps.rate_app, name="rate-sweep")
app.add_typer(sweeps.noise_app, name="noise-sweep")
app.add_typer(sweeps.sensitivity_app, name="sensitivity")
app.add_typer(benchmark.benchmark_app, name="benchmark")
app.add_typer(benchmark.bounds_app, name="bounds")


@app.callback()
def main(
    ctx: typer.Context,
    seed: int = typer.Option(0, "--seed", help="Run seed"),
    out: Path = typer.Option(Path("results"), "--out", help="Output directory"),
    threads: Optional[int] = typer.Option(None, "--threads", help="Worker threads (default: ADVKERN_THREADS or 1)"),
    config: Optional[Path] = typer.Option(
        None,
        "--config",
        help="JSON file with one object per command name; command-line options override it",
    ),
):
    """
    Initialize the advkern run context.

    The context holds the seed, output directory, thread count and the
    configuration file, and is stored in ctx.obj for every subcommand.

    Example:
        advkern --seed 7 --out runs/demo --config experiments.json rate-sweep
    """
    try:
        ctx.obj = RunContext(seed=seed, out_dir=out, threads=threads, config_file=config)
    except AdvKernError as e:
        typer.echo(f"Error: {e}", err=True)
        raise typer.Exit(exit_code_for(e))


@app.command()
def version():
    """
    Display version information for advkern.

    Example:
        advkern version
    """
    typer.echo(f"advkern version {__version__}")
    typer.echo(__description__)


if __name__ == "__main__":
    app()
