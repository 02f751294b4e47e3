"""Command-line client for the audit service.

Every subcommand is a thin wrapper around one service endpoint. By default
requests are dispatched in-process against the bundled FastAPI app; pass
--server to talk to a running instance instead.
"""

from __future__ import annotations

import asyncio
import json

import click
import httpx


def _call(ctx: click.Context, path: str, payload: dict) -> dict:
    server = ctx.obj.get("server")
    if server:
        resp = httpx.post(server.rstrip("/") + path, json=payload, timeout=None)
    else:
        from .service.app import app

        async def _go():
            # surface unexpected 500s the same way a remote server would
            transport = httpx.ASGITransport(app=app, raise_app_exceptions=False)
            async with httpx.AsyncClient(
                transport=transport, base_url="http://service", timeout=None
            ) as client:
                return await client.post(path, json=payload)

        resp = asyncio.run(_go())
    if resp.status_code != 200:
        try:
            detail = resp.json().get("detail", resp.text)
        except ValueError:
            detail = resp.text
        raise click.ClickException(f"{path} failed ({resp.status_code}): {detail}")
    return resp.json()


def _parse_params(pairs: tuple[str, ...]) -> dict:
    params = {}
    for pair in pairs:
        if "=" not in pair:
            raise click.BadParameter(f"expected key=value, got {pair!r}")
        key, _, raw = pair.partition("=")
        try:
            params[key] = json.loads(raw)
        except ValueError:
            params[key] = raw
    return params


def _echo_fields(data: dict, keys: list[str]) -> None:
    for key in keys:
        value = data.get(key)
        if isinstance(value, float):
            value = f"{value:.4f}"
        click.echo(f"{key}: {value}")


@click.group()
@click.option("--server", default=None, metavar="URL",
              help="Base URL of a running service (default: in-process).")
@click.pass_context
def main(ctx: click.Context, server: str | None) -> None:
    """Privacy auditing for feature-attribution explanations."""
    ctx.ensure_object(dict)
    ctx.obj["server"] = server


@main.command()
@click.option("--fixture", default=None, help="Bundled dataset name.")
@click.option("--csv", "csv_path", default=None, type=click.Path(),
              help="Raw CSV to audit (requires --schema-file).")
@click.option("--schema-file", default=None, type=click.Path(),
              help="JSON with columns, sensitive specs, target_positive.")
@click.option("--rows", default=None, type=int, help="Fixture row count.")
@click.option("--missing-rate", default=0.0, type=float)
@click.option("--seed", default=0, type=int, help="Fixture generation seed.")
@click.option("--split-seed", default=0, type=int)
@click.option("--out", "out_dir", required=True, type=click.Path())
@click.pass_context
def prep(ctx, fixture, csv_path, schema_file, rows, missing_rate, seed,
         split_seed, out_dir):
    """Load, clean, encode, and split a dataset into a bundle."""
    source: dict = {"rows": rows, "missing_rate": missing_rate, "seed": seed}
    if fixture is not None:
        source["fixture"] = fixture
    if csv_path is not None:
        if schema_file is None:
            raise click.UsageError("--csv requires --schema-file")
        with open(schema_file, "r", encoding="utf-8") as fh:
            schema = json.load(fh)
        source["csv"] = csv_path
        source["schema_columns"] = schema["columns"]
        source["sensitive"] = schema["sensitive"]
        source["target_positive"] = schema.get("target_positive")
    data = _call(ctx, "/prep", {
        "source": source, "out_dir": out_dir, "split_seed": split_seed,
    })
    _echo_fields(data, ["bundle", "n_rows", "n_features", "n_dropped_rows"])
    click.echo(f"sizes: {data['sizes']}")
    click.echo(f"sensitive: {', '.join(data['sensitive_attributes'])}")


@main.command()
@click.option("--bundle", required=True, type=click.Path())
@click.option("--out", "out_dir", required=True, type=click.Path())
@click.option("--architecture", default="default")
@click.option("--epochs", default=50, type=int)
@click.option("--learning-rate", default=1e-3, type=float)
@click.option("--batch-size", default=48, type=int)
@click.option("--l2-lambda", default=0.0, type=float)
@click.option("--seed", default=0, type=int)
@click.pass_context
def train(ctx, bundle, out_dir, architecture, epochs, learning_rate,
          batch_size, l2_lambda, seed):
    """Train the target model on the bundle's training split."""
    data = _call(ctx, "/train", {
        "bundle": bundle, "out_dir": out_dir, "architecture": architecture,
        "epochs": epochs, "learning_rate": learning_rate,
        "batch_size": batch_size, "l2_lambda": l2_lambda, "seed": seed,
    })
    _echo_fields(data, ["model_path", "train_accuracy", "test_accuracy",
                        "train_seconds", "parameter_count"])


@main.command("dp-train")
@click.option("--bundle", required=True, type=click.Path())
@click.option("--out", "out_dir", required=True, type=click.Path())
@click.option("--architecture", default="default")
@click.option("--epochs", default=50, type=int)
@click.option("--learning-rate", default=1e-3, type=float)
@click.option("--batch-size", default=48, type=int)
@click.option("--l2-clip", default=1.0, type=float)
@click.option("--delta", default=1e-6, type=float)
@click.option("--epsilon", default=None, type=float,
              help="Target epsilon; noise is calibrated to meet it.")
@click.option("--noise-multiplier", default=None, type=float,
              help="Direct noise setting (alternative to --epsilon).")
@click.option("--seed", default=0, type=int)
@click.pass_context
def dp_train(ctx, bundle, out_dir, architecture, epochs, learning_rate,
             batch_size, l2_clip, delta, epsilon, noise_multiplier, seed):
    """Train the target model with clipped, noised gradients."""
    data = _call(ctx, "/dp-train", {
        "bundle": bundle, "out_dir": out_dir, "architecture": architecture,
        "epochs": epochs, "learning_rate": learning_rate,
        "batch_size": batch_size, "l2_clip": l2_clip, "delta": delta,
        "target_epsilon": epsilon, "noise_multiplier": noise_multiplier,
        "seed": seed,
    })
    _echo_fields(data, ["model_path", "train_accuracy", "test_accuracy",
                        "train_seconds"])
    privacy = data["privacy"]
    click.echo(f"epsilon: {privacy['epsilon']:.4f} (delta {privacy['delta']})")


@main.command()
@click.option("--bundle", required=True, type=click.Path())
@click.option("--out", "out_dir", required=True, type=click.Path())
@click.option("--rows", default=None, type=int,
              help="Rows to sample (default: size of the training split).")
@click.option("--seed", default=0, type=int)
@click.pass_context
def synth(ctx, bundle, out_dir, rows, seed):
    """Fit a copula generator on the training split and sample from it."""
    data = _call(ctx, "/synth", {
        "bundle": bundle, "out_dir": out_dir, "n_rows": rows, "seed": seed,
    })
    _echo_fields(data, ["synthetic_csv", "diagnostics_json", "data_validity",
                        "data_structure", "n_rows", "ms_per_record"])


@main.command()
@click.option("--bundle", required=True, type=click.Path())
@click.option("--model", "model_path", required=True, type=click.Path())
@click.option("--out", "out_dir", required=True, type=click.Path())
@click.option("--method", default="ig",
              type=click.Choice(["ig", "sg", "shap", "lime"]))
@click.option("--split", default="aux_all",
              help="Which records to explain (aux_all or a split name).")
@click.option("--seed", default=0, type=int)
@click.option("--param", "params", multiple=True, metavar="KEY=VALUE",
              help="Explainer setting, repeatable (e.g. ig_steps=100).")
@click.pass_context
def explain(ctx, bundle, model_path, out_dir, method, split, seed, params):
    """Attribute the model's predictions feature by feature."""
    data = _call(ctx, "/explain", {
        "bundle": bundle, "model_path": model_path, "out_dir": out_dir,
        "method": method, "split": split, "seed": seed,
        "params": _parse_params(params),
    })
    _echo_fields(data, ["explanation_csv", "method", "n_records",
                        "ms_per_record"])


@main.command()
@click.option("--explanations", "explanation_csv", required=True,
              type=click.Path())
@click.option("--out", "out_dir", required=True, type=click.Path())
@click.option("--family", default="gaussian",
              type=click.Choice(["gaussian", "laplace"]))
@click.option("--calibration", default="dp", type=click.Choice(["dp", "random"]))
@click.option("--epsilon", default=1.0, type=float)
@click.option("--delta", default=1e-6, type=float)
@click.option("--scale-low", default=0.5, type=float)
@click.option("--scale-high", default=1.5, type=float)
@click.option("--seed", default=0, type=int)
@click.pass_context
def perturb(ctx, explanation_csv, out_dir, family, calibration, epsilon,
            delta, scale_low, scale_high, seed):
    """Add calibrated noise to a saved explanation matrix."""
    data = _call(ctx, "/perturb", {
        "explanation_csv": explanation_csv, "out_dir": out_dir,
        "family": family, "calibration": calibration, "epsilon": epsilon,
        "delta": delta, "random_scale_low": scale_low,
        "random_scale_high": scale_high, "seed": seed,
    })
    _echo_fields(data, ["explanation_csv", "variant", "ms_per_record"])


@main.command()
@click.option("--explanations", "explanation_csv", required=True,
              type=click.Path())
@click.option("--bundle", required=True, type=click.Path())
@click.option("--attribute", required=True,
              help="Sensitive attribute to infer (e.g. sex).")
@click.option("--repetitions", default=5, type=int)
@click.option("--out", "out_dir", default=None, type=click.Path())
@click.pass_context
def attack(ctx, explanation_csv, bundle, attribute, repetitions, out_dir):
    """Infer a sensitive attribute from explanations alone."""
    data = _call(ctx, "/attack", {
        "explanation_csv": explanation_csv, "bundle": bundle,
        "attribute": attribute, "repetitions": repetitions,
        "out_dir": out_dir,
    })
    mean = data["mean"]
    click.echo(f"attribute: {data['attribute']}")
    click.echo(f"repetitions: {data['repetitions']}")
    for key in ("attack_success", "f1", "precision", "recall"):
        click.echo(f"{key}: {mean[key]:.4f}")
    click.echo(f"random_guess: {data['random_guess']:.4f}")
    click.echo(f"coin_guess: {data['coin_guess']:.4f}")
    if data.get("report_json"):
        click.echo(f"report_json: {data['report_json']}")


@main.command()
@click.option("--explanations", "explanation_csv", required=True,
              type=click.Path())
@click.option("--bundle", required=True, type=click.Path())
@click.option("--model", "model_path", required=True, type=click.Path())
@click.option("--out", "out_dir", default=None, type=click.Path())
@click.option("--seed", default=0, type=int)
@click.option("--param", "params", multiple=True, metavar="KEY=VALUE",
              help="Metric setting, repeatable (e.g. sample_size=100).")
@click.pass_context
def metrics(ctx, explanation_csv, bundle, model_path, out_dir, seed, params):
    """Score explanation quality against the model that produced it."""
    data = _call(ctx, "/metrics", {
        "explanation_csv": explanation_csv, "bundle": bundle,
        "model_path": model_path, "out_dir": out_dir, "seed": seed,
        "params": _parse_params(params),
    })
    _echo_fields(data, ["method", "faithfulness_correlation",
                        "faithfulness_estimate", "sufficiency", "n_records"])


@main.command()
@click.option("--config", "config_path", required=True, type=click.Path(),
              help="Campaign configuration JSON.")
@click.option("--out", "out_dir", default=None, type=click.Path(),
              help="Override the config's output directory.")
@click.pass_context
def run(ctx, config_path, out_dir):
    """Execute a full campaign and write report.csv/json and summary.csv."""
    data = _call(ctx, "/run", {"config_path": config_path, "out_dir": out_dir})
    _echo_fields(data, ["report_csv", "report_json", "summary_csv",
                        "n_cells", "n_failed", "seconds"])
    if data["n_failed"]:
        for key in data["failed_keys"]:
            click.echo(f"failed: {key}", err=True)
        raise SystemExit(1)


@main.command()
@click.option("--report", "report_json", required=True, type=click.Path(),
              help="A report.json produced by `run`.")
@click.option("--out", "out_dir", default=None, type=click.Path())
@click.pass_context
def summarize(ctx, report_json, out_dir):
    """Recompute summary.csv from an existing report."""
    data = _call(ctx, "/summarize", {
        "report_json": report_json, "out_dir": out_dir,
    })
    click.echo(f"summary_csv: {data['summary_csv']}")
    for row in data["rows"]:
        if row["kind"] != "stage":
            continue
        click.echo(
            f"stage {row['stage']}: fraction_mitigated "
            f"{row['fraction_mitigated']:.4f}"
        )


if __name__ == "__main__":
    main()
