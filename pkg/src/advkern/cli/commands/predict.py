"""
Predict and Attack Command Modules

``predict`` evaluates a stored model on new inputs; ``attack`` perturbs a
labelled dataset against a stored model and reports the robust score and the
certified loss.
"""

from pathlib import Path
from typing import Optional

import typer

from advkern.cli.commands import column, execute, provenance
from advkern.core.configs import AttackConfig, PredictConfig
from advkern.core.context import RunContext
from advkern.core.experiments import run_attack, run_predict
from advkern.utils.io import write_csv, write_json

predict_app = typer.Typer(
    name="predict",
    help="Predict with a stored model",
    add_completion=False,
    invoke_without_command=True,
)

attack_app = typer.Typer(
    name="attack",
    help="Attack a stored model with projected gradient ascent",
    add_completion=False,
    invoke_without_command=True,
)


@predict_app.callback(invoke_without_command=True)
def predict(
    ctx: typer.Context,
    model: Optional[Path] = typer.Option(None, "--model", help="model.json written by fit"),
    data: Optional[Path] = typer.Option(None, "--data", help="CSV file with inputs"),
    header: Optional[bool] = typer.Option(None, "--header/--no-header", help="Whether the CSV has a header row"),
    drop_column: Optional[str] = typer.Option(None, "--drop-column", help="Column to ignore, e.g. a target"),
    standardization: Optional[Path] = typer.Option(
        None, "--standardization", help="standardization.json written by fit"
    ),
):
    """
    Write predictions.csv with one prediction per input row.

    Example:
        advkern --out runs/abalone predict --model runs/abalone/model.json --data new.csv
    """
    def action(run_ctx: RunContext) -> None:
        config = PredictConfig.model_validate(run_ctx.merge("predict", {
            "model": model, "data": data, "has_header": header,
            "drop_column": column(drop_column), "standardization": standardization,
        }))
        rows = run_predict(config)
        record = provenance(run_ctx, "predict", config)
        path = write_csv(run_ctx.output("predictions.csv"), rows, ["index", "prediction"],
                         record["config_sha256"], run_ctx.seed)
        typer.echo(f"{len(rows)} predictions written to {path}")

    execute(ctx, "predict", action)


@attack_app.callback(invoke_without_command=True)
def attack(
    ctx: typer.Context,
    model: Optional[Path] = typer.Option(None, "--model", help="model.json written by fit"),
    data: Optional[Path] = typer.Option(None, "--data", help="CSV file with inputs and target"),
    target_column: Optional[str] = typer.Option(None, "--target-column", help="Target column name or position"),
    header: Optional[bool] = typer.Option(None, "--header/--no-header", help="Whether the CSV has a header row"),
    standardization: Optional[Path] = typer.Option(
        None, "--standardization", help="standardization.json written by fit"
    ),
    attack_spec: Optional[str] = typer.Option(
        None, "--attack", "-a", help='Attack ball as norm:radius, e.g. "linf:0.1"'
    ),
):
    """
    Write attack.csv and attack_summary.json.

    Example:
        advkern --seed 3 attack --model runs/m/model.json --data test.csv -a l2:0.1
    """
    def action(run_ctx: RunContext) -> None:
        config = AttackConfig.model_validate(run_ctx.merge("attack", {
            "model": model, "data": data, "target_column": column(target_column), "has_header": header,
            "standardization": standardization, "attack": attack_spec,
        }))
        rows, summary = run_attack(config, run_ctx.seed, run_ctx.threads)
        record = provenance(run_ctx, "attack", config)
        write_csv(
            run_ctx.output("attack.csv"),
            rows,
            ["index", "y", "clean_prediction", "attacked_prediction", "perturbation_norm"],
            record["config_sha256"],
            run_ctx.seed,
        )
        write_json(run_ctx.output("attack_summary.json"), {**record, "summary": summary})
        typer.echo(f"Robust R^2 under {summary['attack']}: {summary['robust_r2']}")

    execute(ctx, "attack", action)
