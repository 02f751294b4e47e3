"""FastAPI application wrapping the audit pipeline.

Endpoints mirror the CLI subcommands one-to-one and exchange server-local
artifact paths; the CLI mounts this app in-process by default, so the same
code path serves both local and remote use.
"""

from __future__ import annotations

import time
from pathlib import Path

from fastapi import FastAPI, Request
from fastapi.responses import JSONResponse

from .. import __version__
from .. import attack as attack_mod
from .. import copula as copula_mod
from .. import dp as dp_mod
from .. import explainers as expl_mod
from .. import faithfulness as faith_mod
from .. import fixtures as fixtures_mod
from .. import noise as noise_mod
from .. import nn as nn_mod
from .. import pipeline as pipeline_mod
from .. import tabular
from . import schemas

app = FastAPI(title="explaudit", version=__version__)

_CLIENT_ERRORS = (
    ValueError,
    KeyError,
    FileNotFoundError,
    tabular.SchemaError,
    tabular.PreprocessError,
    pipeline_mod.ConfigError,
    dp_mod.CalibrationError,
)


async def _client_error(request: Request, exc: Exception):
    return JSONResponse(
        status_code=400, content={"detail": f"{type(exc).__name__}: {exc}"}
    )


# registered per class (not on Exception) so responses are delivered without
# re-raising; unexpected errors still become plain 500s below
for _cls in _CLIENT_ERRORS:
    app.add_exception_handler(_cls, _client_error)


@app.exception_handler(Exception)
async def _server_error(request: Request, exc: Exception):
    return JSONResponse(
        status_code=500, content={"detail": f"{type(exc).__name__}: {exc}"}
    )


def _out(path_str: str) -> Path:
    path = Path(path_str)
    path.mkdir(parents=True, exist_ok=True)
    return path


def _load_source(src: schemas.DatasetSource):
    if src.fixture is not None:
        cfg = fixtures_mod.dataset_config(src.fixture)
        raw = fixtures_mod.generate(
            src.fixture, rows=src.rows, seed=src.seed, missing_rate=src.missing_rate
        )
        sens = [tabular.SensitiveSpec.parse(s) for s in cfg["sensitive"]]
        return raw, sens, cfg["target_positive"]
    schema = [
        tabular.ColumnSchema(c.name, c.kind, c.role) for c in src.schema_columns
    ]
    raw = tabular.load_csv(src.csv, schema)
    sens = [tabular.SensitiveSpec.parse(s) for s in src.sensitive]
    return raw, sens, src.target_positive


def _full_dataset(bundle: tabular.SplitBundle) -> tabular.TabularDataset:
    return tabular.concat(bundle.target_train, bundle.aux_all())


def _pick_split(bundle: tabular.SplitBundle, name: str) -> tabular.TabularDataset:
    if name == "aux_all":
        return bundle.aux_all()
    parts = bundle.parts()
    if name not in parts:
        raise ValueError(f"unknown split {name!r}; choose from "
                         f"{sorted(parts) + ['aux_all']}")
    return parts[name]


@app.get("/health", response_model=schemas.HealthResponse)
def health() -> schemas.HealthResponse:
    return schemas.HealthResponse(status="ok", version=__version__)


@app.post("/prep", response_model=schemas.PrepResponse)
def prep(req: schemas.PrepRequest) -> schemas.PrepResponse:
    raw, sens, target_positive = _load_source(req.source)
    ds = tabular.preprocess(raw, sens, target_positive)
    bundle = tabular.split(ds, seed=req.split_seed)
    out = _out(req.out_dir)
    bundle_path = out / "bundle.npz"
    bundle.save(bundle_path)
    return schemas.PrepResponse(
        bundle=str(bundle_path),
        n_rows=ds.n_rows,
        n_features=ds.n_features,
        n_dropped_rows=raw.frame.shape[0] - ds.n_rows,
        sizes=schemas.SplitSizes(
            target_train=bundle.target_train.n_rows,
            aux_attack_train=bundle.aux_attack_train.n_rows,
            aux_attack_test=bundle.aux_attack_test.n_rows,
        ),
        sensitive_attributes=sorted(ds.sensitive),
        screening=tabular.screening_table(ds),
    )


@app.post("/train", response_model=schemas.TrainResponse)
def train(req: schemas.TrainRequest) -> schemas.TrainResponse:
    bundle = tabular.SplitBundle.load(req.bundle)
    train_ds = bundle.target_train
    cfg = nn_mod.TrainConfig(
        epochs=req.epochs,
        learning_rate=req.learning_rate,
        batch_size=req.batch_size,
        l2_lambda=req.l2_lambda,
    )
    model = nn_mod.init_model(
        train_ds.n_features, nn_mod.architecture(req.architecture), req.seed
    )
    t0 = time.perf_counter()
    model, history = nn_mod.train(model, train_ds, cfg, seed=req.seed)
    seconds = time.perf_counter() - t0
    out = _out(req.out_dir)
    model_path = out / "model.npz"
    nn_mod.save_model(model, model_path)
    return schemas.TrainResponse(
        model_path=str(model_path),
        train_accuracy=nn_mod.evaluate(model, train_ds),
        test_accuracy=nn_mod.evaluate(model, bundle.aux_attack_test),
        train_seconds=seconds,
        final_loss=history[-1],
        parameter_count=model.parameter_count,
    )


@app.post("/dp-train", response_model=schemas.DpTrainResponse)
def dp_train(req: schemas.DpTrainRequest) -> schemas.DpTrainResponse:
    bundle = tabular.SplitBundle.load(req.bundle)
    train_ds = bundle.target_train
    cfg = nn_mod.TrainConfig(
        epochs=req.epochs,
        learning_rate=req.learning_rate,
        batch_size=req.batch_size,
    )
    nm = req.noise_multiplier
    if nm is None:
        import math

        n = train_ds.n_rows
        batch = min(req.batch_size, n)
        steps = req.epochs * math.ceil(n / batch)
        nm = dp_mod.calibrate_noise(
            req.target_epsilon, steps, batch / n, req.delta
        )
    dp_cfg = dp_mod.DpConfig(
        noise_multiplier=nm, l2_clip=req.l2_clip, delta=req.delta
    )
    model = nn_mod.init_model(
        train_ds.n_features, nn_mod.architecture(req.architecture), req.seed
    )
    t0 = time.perf_counter()
    model, spent, _ = dp_mod.dp_train(model, train_ds, cfg, dp_cfg, seed=req.seed)
    seconds = time.perf_counter() - t0
    out = _out(req.out_dir)
    model_path = out / "model.npz"
    nn_mod.save_model(model, model_path)
    return schemas.DpTrainResponse(
        model_path=str(model_path),
        train_accuracy=nn_mod.evaluate(model, train_ds),
        test_accuracy=nn_mod.evaluate(model, bundle.aux_attack_test),
        train_seconds=seconds,
        privacy=schemas.PrivacySpentModel(**spent.to_dict()),
    )


@app.post("/synth", response_model=schemas.SynthResponse)
def synth(req: schemas.SynthRequest) -> schemas.SynthResponse:
    bundle = tabular.SplitBundle.load(req.bundle)
    train_ds = bundle.target_train
    model = copula_mod.fit(train_ds)
    n = req.n_rows or train_ds.n_rows
    t0 = time.perf_counter()
    synth_ds = copula_mod.sample(model, n, seed=req.seed)
    ms = (time.perf_counter() - t0) * 1000.0 / max(n, 1)
    diag = copula_mod.diagnostics(train_ds, synth_ds)
    out = _out(req.out_dir)
    csv_path = out / "synthetic.csv"
    synth_ds.decode().to_csv(csv_path, index=False, lineterminator="\n")
    diag_path = out / "synthetic-diagnostics.json"
    import json

    with open(diag_path, "w", encoding="utf-8") as fh:
        json.dump(
            {
                "data_validity": diag.data_validity,
                "data_structure": diag.data_structure,
                "details": diag.details,
                "n_rows": n,
            },
            fh,
            indent=2,
            sort_keys=True,
        )
        fh.write("\n")
    return schemas.SynthResponse(
        synthetic_csv=str(csv_path),
        diagnostics_json=str(diag_path),
        data_validity=diag.data_validity,
        data_structure=diag.data_structure,
        n_rows=n,
        ms_per_record=ms,
    )


@app.post("/explain", response_model=schemas.ExplainResponse)
def explain(req: schemas.ExplainRequest) -> schemas.ExplainResponse:
    bundle = tabular.SplitBundle.load(req.bundle)
    ds = _pick_split(bundle, req.split)
    model = nn_mod.load_model(req.model_path)
    cfg = expl_mod.ExplainerConfig(**req.params)
    matrix = expl_mod.explain_dataset(model, ds, req.method, cfg, seed=req.seed)
    out = _out(req.out_dir)
    csv_path = out / f"explanations-{req.method}.csv"
    matrix.to_csv(csv_path)
    return schemas.ExplainResponse(
        explanation_csv=str(csv_path),
        sidecar_json=str(matrix.sidecar_path(csv_path)),
        method=matrix.method,
        n_records=matrix.n_records,
        n_features=len(matrix.feature_names),
        ms_per_record=matrix.ms_per_record,
    )


@app.post("/perturb", response_model=schemas.PerturbResponse)
def perturb(req: schemas.PerturbRequest) -> schemas.PerturbResponse:
    matrix = expl_mod.ExplanationMatrix.from_csv(req.explanation_csv)
    spec = noise_mod.NoiseSpec(
        family=req.family,
        calibration=req.calibration,
        epsilon=req.epsilon,
        delta=req.delta,
        random_scale_range=(req.random_scale_low, req.random_scale_high),
        seed=req.seed,
    )
    noisy = noise_mod.perturb(matrix, spec)
    out = _out(req.out_dir)
    csv_path = out / f"explanations-{matrix.method}-{spec.name}.csv"
    noisy.to_csv(csv_path)
    return schemas.PerturbResponse(
        explanation_csv=str(csv_path),
        sidecar_json=str(noisy.sidecar_path(csv_path)),
        variant=spec.name,
        ms_per_record=noisy.ms_per_record,
    )


@app.post("/attack", response_model=schemas.AttackResponse)
def attack(req: schemas.AttackRequest) -> schemas.AttackResponse:
    matrix = expl_mod.ExplanationMatrix.from_csv(req.explanation_csv)
    bundle = tabular.SplitBundle.load(req.bundle)
    ads = attack_mod.build_attack_dataset(matrix, bundle, req.attribute)
    report = attack_mod.run_attack(
        ads, attack_mod.AttackModelSpec(), seeds=tuple(range(req.repetitions))
    )
    report_path = None
    if req.out_dir is not None:
        import json

        out = _out(req.out_dir)
        report_path = out / f"attack-{req.attribute}.json"
        with open(report_path, "w", encoding="utf-8") as fh:
            json.dump(report.to_dict(), fh, indent=2, sort_keys=True)
            fh.write("\n")
    return schemas.AttackResponse(
        attribute=report.attribute,
        repetitions=report.repetitions,
        mean=schemas.AttackMetricsModel(
            precision=report.precision,
            recall=report.recall,
            f1=report.f1,
            attack_success=report.attack_success,
        ),
        random_guess=report.random_guess,
        coin_guess=report.coin_guess,
        per_repetition=[m.to_dict() for m in report.per_repetition],
        report_json=str(report_path) if report_path else None,
    )


@app.post("/metrics", response_model=schemas.MetricsResponse)
def metrics(req: schemas.MetricsRequest) -> schemas.MetricsResponse:
    matrix = expl_mod.ExplanationMatrix.from_csv(req.explanation_csv)
    bundle = tabular.SplitBundle.load(req.bundle)
    model = nn_mod.load_model(req.model_path)
    cfg = faith_mod.FaithfulnessConfig(**req.params, seed=req.seed)
    report = faith_mod.faithfulness_report(model, _full_dataset(bundle), matrix, cfg)
    report_path = None
    if req.out_dir is not None:
        import json

        out = _out(req.out_dir)
        report_path = out / f"faithfulness-{matrix.method}.json"
        with open(report_path, "w", encoding="utf-8") as fh:
            json.dump(report.to_dict(), fh, indent=2, sort_keys=True)
            fh.write("\n")
    return schemas.MetricsResponse(
        method=report.method,
        faithfulness_correlation=report.faithfulness_correlation,
        faithfulness_estimate=report.faithfulness_estimate,
        sufficiency=report.sufficiency,
        n_records=report.n_records,
        report_json=str(report_path) if report_path else None,
    )


@app.post("/run", response_model=schemas.RunResponse)
def run(req: schemas.RunRequest) -> schemas.RunResponse:
    if req.config_path is not None:
        cfg = pipeline_mod.ExperimentConfig.from_file(req.config_path)
    else:
        cfg = pipeline_mod.ExperimentConfig.from_dict(req.config)
    out_dir = req.out_dir or cfg.output_dir
    t0 = time.perf_counter()
    result = pipeline_mod.run_pipeline(cfg)
    paths = pipeline_mod.emit_report(result, out_dir)
    return schemas.RunResponse(
        report_csv=str(paths["csv"]),
        report_json=str(paths["json"]),
        summary_csv=str(paths["summary"]),
        n_cells=len(result.cells),
        n_failed=result.n_failed,
        failed_keys=[c.key.as_string() for c in result.cells if not c.ok],
        seconds=time.perf_counter() - t0,
    )


@app.post("/summarize", response_model=schemas.SummarizeResponse)
def summarize(req: schemas.SummarizeRequest) -> schemas.SummarizeResponse:
    import json

    with open(req.report_json, "r", encoding="utf-8") as fh:
        payload = json.load(fh)
    cells = pipeline_mod.cells_from_json(payload)
    rows = pipeline_mod.summarize(pipeline_mod.comparable_cells(cells))
    out_dir = req.out_dir or str(Path(req.report_json).parent)
    out = _out(out_dir)
    summary_path = out / "summary.csv"
    pipeline_mod.write_summary_csv(summary_path, rows)
    return schemas.SummarizeResponse(summary_csv=str(summary_path), rows=rows)


def serve() -> None:
    """Console entry point: run the service under uvicorn."""
    import argparse

    import uvicorn

    parser = argparse.ArgumentParser(description="explaudit audit service")
    parser.add_argument("--host", default="127.0.0.1")
    parser.add_argument("--port", type=int, default=8000)
    args = parser.parse_args()
    uvicorn.run(app, host=args.host, port=args.port)
