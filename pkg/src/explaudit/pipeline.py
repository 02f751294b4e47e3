"""Campaign orchestration: baseline, pre-, in-, and post-model audits.

A campaign crosses datasets x stages x PET variants x explainers x sensitive
attributes into cells. Every cell trains (or reuses) a target model, releases
explanations for the auxiliary split, attacks them, and scores utility,
privacy, and explanation quality. Cell seeds derive from the campaign seed
and the run key, so scheduling and repetition order never change results, and
two runs of one config emit byte-identical report CSVs (timings live only in
the JSON report, where nondeterminism is expected).
"""

from __future__ import annotations

import csv
import json
import math
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import attack as attack_mod
from . import copula as copula_mod
from . import dp as dp_mod
from . import explainers as expl_mod
from . import faithfulness as faith_mod
from . import fixtures as fixtures_mod
from . import noise as noise_mod
from . import nn as nn_mod
from . import tabular
from .util import config_digest, stream_key

STAGES = ("baseline", "pre", "in", "post")
CONFIG_VERSION = 1

DEFAULT_EPSILON_TARGETS = (0.01, 0.1, 1.0, 5.0)
DEFAULT_NOISE_VARIANTS = (
    {"family": "laplace", "calibration": "random"},
    {"family": "gaussian", "calibration": "random"},
    {"family": "laplace", "calibration": "dp", "epsilon": 1.0},
    {"family": "gaussian", "calibration": "dp", "epsilon": 1.0, "delta": 1e-6},
)

CSV_COLUMNS = [
    "run_key",
    "dataset",
    "stage",
    "variant",
    "explainer",
    "attribute",
    "repetitions",
    "attack_success",
    "attack_f1",
    "attack_precision",
    "attack_recall",
    "random_guess",
    "coin_guess",
    "faithfulness_correlation",
    "faithfulness_estimate",
    "sufficiency",
    "train_accuracy",
    "test_accuracy",
    "epsilon",
    "synth_validity",
    "synth_structure",
]

SUMMARY_COLUMNS = [
    "kind",
    "dataset",
    "stage",
    "variant",
    "explainer",
    "attribute",
    "attack_success",
    "baseline_success",
    "delta_success",
    "delta_f1",
    "mitigated",
    "random_guess",
    "coin_guess",
    "fraction_mitigated",
]


class ConfigError(ValueError):
    """Invalid or incomplete experiment configuration."""


@dataclass(frozen=True)
class RunKey:
    """Identity of one campaign cell."""

    dataset: str
    stage: str
    variant: str
    explainer: str
    attribute: str

    def as_string(self) -> str:
        return "|".join(
            (self.dataset, self.stage, self.variant, self.explainer, self.attribute)
        )

    def sort_key(self):
        return (
            self.dataset,
            STAGES.index(self.stage),
            self.variant,
            self.explainer,
            self.attribute,
        )


@dataclass
class CellResult:
    """Everything measured for one cell (or its failure)."""

    key: RunKey
    repetitions: int = 0
    attack: attack_mod.AttackReport | None = None
    faith: faith_mod.FaithfulnessReport | None = None
    train_accuracy: float | None = None
    test_accuracy: float | None = None
    epsilon: float | None = None
    privacy: dict | None = None
    synth_validity: float | None = None
    synth_structure: float | None = None
    timings: dict = field(default_factory=dict)
    error: str | None = None

    @property
    def ok(self) -> bool:
        return self.error is None

    def to_csv_row(self) -> dict:
        def fmt(v):
            return "" if v is None else repr(float(v))

        return {
            "run_key": self.key.as_string(),
            "dataset": self.key.dataset,
            "stage": self.key.stage,
            "variant": self.key.variant,
            "explainer": self.key.explainer,
            "attribute": self.key.attribute,
            "repetitions": str(self.repetitions),
            "attack_success": fmt(self.attack.attack_success),
            "attack_f1": fmt(self.attack.f1),
            "attack_precision": fmt(self.attack.precision),
            "attack_recall": fmt(self.attack.recall),
            "random_guess": fmt(self.attack.random_guess),
            "coin_guess": fmt(self.attack.coin_guess),
            "faithfulness_correlation": fmt(self.faith.faithfulness_correlation),
            "faithfulness_estimate": fmt(self.faith.faithfulness_estimate),
            "sufficiency": fmt(self.faith.sufficiency),
            "train_accuracy": fmt(self.train_accuracy),
            "test_accuracy": fmt(self.test_accuracy),
            "epsilon": fmt(self.epsilon),
            "synth_validity": fmt(self.synth_validity),
            "synth_structure": fmt(self.synth_structure),
        }

    def to_json_dict(self) -> dict:
        out = {
            "run_key": self.key.as_string(),
            "dataset": self.key.dataset,
            "stage": self.key.stage,
            "variant": self.key.variant,
            "explainer": self.key.explainer,
            "attribute": self.key.attribute,
            "repetitions": self.repetitions,
            "error": self.error,
            "timings": self.timings,
        }
        if self.attack is not None:
            out["attack"] = self.attack.to_dict()
        if self.faith is not None:
            out["faithfulness"] = self.faith.to_dict()
        for k in (
            "train_accuracy",
            "test_accuracy",
            "epsilon",
            "privacy",
            "synth_validity",
            "synth_structure",
        ):
            v = getattr(self, k)
            if v is not None:
                out[k] = v
        return out


@dataclass
class ExperimentConfig:
    """Versioned campaign configuration (JSON on disk).

    ``datasets`` entries are either live sources (``{"fixture": name}`` or
    ``{"csv": path, "schema": [...], "sensitive": [...]}``) or plan-only
    declarations (``{"name": ..., "attributes": [...]}``) usable for
    bookkeeping arithmetic but not execution.
    """

    datasets: list
    stages: list = field(default_factory=lambda: list(STAGES))
    explainers: list = field(default_factory=lambda: list(expl_mod.METHODS))
    repetitions: int = 5
    seed: int = 0
    name: str = "campaign"
    output_dir: str = "audit-out"
    generators: list = field(default_factory=lambda: ["copula"])
    epsilon_targets: list = field(
        default_factory=lambda: list(DEFAULT_EPSILON_TARGETS)
    )
    delta: float = 1e-6
    l2_clip: float = 1.0
    noise_variants: list = field(
        default_factory=lambda: [dict(v) for v in DEFAULT_NOISE_VARIANTS]
    )
    train: dict = field(default_factory=dict)
    explainer_params: dict = field(default_factory=dict)
    faithfulness_params: dict = field(default_factory=dict)
    version: int = CONFIG_VERSION

    def __post_init__(self):
        self.validate()

    def validate(self) -> None:
        if self.version != CONFIG_VERSION:
            raise ConfigError(
                f"config version {self.version} unsupported (expected {CONFIG_VERSION})"
            )
        if not self.datasets:
            raise ConfigError("at least one dataset is required")
        if not self.explainers:
            raise ConfigError("at least one explainer is required")
        bad = [m for m in self.explainers if m not in expl_mod.METHODS]
        if bad:
            raise ConfigError(f"unknown explainers {bad}; choose from {expl_mod.METHODS}")
        bad = [s for s in self.stages if s not in STAGES]
        if bad:
            raise ConfigError(f"unknown stages {bad}; choose from {STAGES}")
        if self.repetitions < 1:
            raise ConfigError("repetitions must be >= 1")
        # epsilon tiers: strong (<= 1) or reasonable (<= 10); nothing beyond
        for eps in self.epsilon_targets:
            if not 0 < eps <= 10:
                raise ConfigError(
                    f"epsilon target {eps} outside the supported tiers (0, 10]"
                )
        names = [self._noise_name(v) for v in self.noise_variants]
        if len(set(names)) != len(names):
            raise ConfigError(f"duplicate noise variants: {names}")
        for params, label in (
            (self.faithfulness_params, "faithfulness_params"),
            (self.explainer_params, "explainer_params"),
            (self.train, "train"),
        ):
            if "seed" in params:
                raise ConfigError(
                    f"{label} must not set 'seed'; per-cell seeds derive "
                    "from the campaign seed"
                )
        for v in self.noise_variants:
            if "seed" in v:
                raise ConfigError(
                    "noise variants must not set 'seed'; per-cell seeds "
                    "derive from the campaign seed"
                )
        for ds in self.datasets:
            self._dataset_name(ds)

    @staticmethod
    def _noise_name(variant: dict) -> str:
        return f"{variant['calibration']}-{variant['family']}"

    @staticmethod
    def _dataset_name(spec: dict) -> str:
        if "fixture" in spec:
            return spec.get("name", spec["fixture"])
        if "csv" in spec:
            return spec.get("name", Path(spec["csv"]).stem)
        if "name" in spec:
            return spec["name"]
        raise ConfigError(f"dataset spec needs fixture/csv/name: {spec}")

    def dataset_attributes(self, spec: dict) -> list:
        """Sensitive attribute names of a dataset spec, without loading data."""
        if "attributes" in spec:
            return list(spec["attributes"])
        if "sensitive" in spec:
            return [tabular.SensitiveSpec.parse(s).attribute_name for s in spec["sensitive"]]
        if "fixture" in spec:
            cfg = fixtures_mod.dataset_config(spec["fixture"])
            return [tabular.SensitiveSpec.parse(s).attribute_name for s in cfg["sensitive"]]
        raise ConfigError(f"cannot resolve sensitive attributes for {spec}")

    def to_dict(self) -> dict:
        return {
            "version": self.version,
            "name": self.name,
            "seed": self.seed,
            "output_dir": self.output_dir,
            "datasets": self.datasets,
            "stages": self.stages,
            "explainers": self.explainers,
            "repetitions": self.repetitions,
            "generators": self.generators,
            "epsilon_targets": self.epsilon_targets,
            "delta": self.delta,
            "l2_clip": self.l2_clip,
            "noise_variants": self.noise_variants,
            "train": self.train,
            "explainer_params": self.explainer_params,
            "faithfulness_params": self.faithfulness_params,
        }

    def digest(self) -> str:
        return config_digest(self.to_dict())

    @classmethod
    def from_dict(cls, payload: dict) -> "ExperimentConfig":
        payload = dict(payload)
        known = {
            "version", "name", "seed", "output_dir", "datasets", "stages",
            "explainers", "repetitions", "generators", "epsilon_targets",
            "delta", "l2_clip", "noise_variants", "train",
            "explainer_params", "faithfulness_params",
        }
        unknown = set(payload) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        return cls(**payload)

    @classmethod
    def from_file(cls, path: str | Path) -> "ExperimentConfig":
        with open(path, "r", encoding="utf-8") as fh:
            return cls.from_dict(json.load(fh))


def _stage_variants(cfg: ExperimentConfig, stage: str) -> list[str]:
    if stage == "baseline":
        return ["none"]
    if stage == "pre":
        return list(cfg.generators)
    if stage == "in":
        return [f"eps={t:g}" for t in cfg.epsilon_targets]
    if stage == "post":
        return [cfg._noise_name(v) for v in cfg.noise_variants]
    raise ConfigError(f"unknown stage {stage!r}")


def effective_stages(cfg: ExperimentConfig) -> list[str]:
    """Requested stages plus the always-run baseline, in canonical order."""
    wanted = set(cfg.stages) | {"baseline"}
    return [s for s in STAGES if s in wanted]


def plan_cells(cfg: ExperimentConfig) -> list[RunKey]:
    """Enumerate the campaign's cells without executing anything.

    The cell count is the exact cross-product
    datasets x stage variants x explainers x sensitive attributes.
    """
    keys = []
    for spec in cfg.datasets:
        name = cfg._dataset_name(spec)
        attrs = cfg.dataset_attributes(spec)
        for stage in effective_stages(cfg):
            for variant in _stage_variants(cfg, stage):
                for method in cfg.explainers:
                    for attr in attrs:
                        keys.append(RunKey(name, stage, variant, method, attr))
    dupes = len(keys) - len(set(keys))
    if dupes:
        raise ConfigError(f"{dupes} duplicate run keys in plan")
    return keys


@dataclass
class CampaignResult:
    config: ExperimentConfig
    cells: list[CellResult]
    started: float
    finished: float

    @property
    def n_failed(self) -> int:
        return sum(1 for c in self.cells if not c.ok)

    def ok_cells(self) -> list[CellResult]:
        return [c for c in self.cells if c.ok]


class _DatasetContext:
    """Shared per-dataset state: encoded data, split, and caches."""

    def __init__(self, cfg: ExperimentConfig, spec: dict):
        self.name = cfg._dataset_name(spec)
        self.cfg = cfg
        raw, sens_specs, target_positive = _load_raw(spec)
        self.dataset = tabular.preprocess(raw, sens_specs, target_positive)
        self.bundle = tabular.split(
            self.dataset, seed=stream_key((cfg.seed, self.name, "split"))
        )
        self.aux = self.bundle.aux_all()
        self.train_cfg = nn_mod.TrainConfig(**cfg.train)
        self.arch = nn_mod.architecture(spec.get("architecture", "default"))
        self.expl_cfg = expl_mod.ExplainerConfig(**cfg.explainer_params)
        self._models: dict = {}
        self._matrices: dict = {}

    def _seed(self, *parts) -> int:
        return stream_key((self.cfg.seed, self.name) + parts)

    def model_for(self, stage: str, variant: str):
        """(model, train_seconds, privacy, synth diag) for a stage variant."""
        key = (stage, variant) if stage in ("pre", "in") else ("baseline", "none")
        if key not in self._models:
            self._models[key] = self._train_variant(*key)
        return self._models[key]

    def _train_variant(self, stage: str, variant: str):
        train_ds = self.bundle.target_train
        privacy = None
        diag = None
        synth_ms = None
        t0 = time.perf_counter()
        if stage == "baseline":
            model = nn_mod.init_model(
                train_ds.n_features, self.arch, self._seed("baseline", "init")
            )
            model, _ = nn_mod.train(
                model, train_ds, self.train_cfg, seed=self._seed("baseline", "shuffle")
            )
        elif stage == "pre":
            if variant != "copula":
                raise ConfigError(f"generator {variant!r} is not available")
            gen = copula_mod.fit(train_ds)
            t_s = time.perf_counter()
            synth = copula_mod.sample(
                gen, train_ds.n_rows, seed=self._seed("pre", variant, "sample")
            )
            synth_ms = (time.perf_counter() - t_s) * 1000.0 / max(train_ds.n_rows, 1)
            diag = copula_mod.diagnostics(train_ds, synth)
            model = nn_mod.init_model(
                synth.n_features, self.arch, self._seed("pre", variant, "init")
            )
            model, _ = nn_mod.train(
                model, synth, self.train_cfg, seed=self._seed("pre", variant, "shuffle")
            )
        elif stage == "in":
            target_eps = float(variant.split("=", 1)[1])
            n = train_ds.n_rows
            batch = min(self.train_cfg.batch_size, n)
            steps = self.train_cfg.epochs * math.ceil(n / batch)
            q = batch / n
            nm = dp_mod.calibrate_noise(target_eps, steps, q, self.cfg.delta)
            dp_cfg = dp_mod.DpConfig(
                noise_multiplier=nm, l2_clip=self.cfg.l2_clip, delta=self.cfg.delta
            )
            model, spent, _ = dp_mod.dp_train(
                nn_mod.init_model(
                    train_ds.n_features, self.arch, self._seed("in", variant, "init")
                ),
                train_ds,
                self.train_cfg,
                dp_cfg,
                seed=self._seed("in", variant, "shuffle"),
            )
            privacy = spent.to_dict()
        else:
            raise ConfigError(f"stage {stage!r} has no model variant")
        train_seconds = time.perf_counter() - t0
        train_acc = nn_mod.evaluate(model, train_ds)
        test_acc = nn_mod.evaluate(model, self.bundle.aux_attack_test)
        return {
            "model": model,
            "train_seconds": train_seconds,
            "train_accuracy": train_acc,
            "test_accuracy": test_acc,
            "privacy": privacy,
            "diag": diag,
            "synth_ms_per_record": synth_ms,
        }

    def matrix_for(self, stage: str, variant: str, method: str):
        """Released explanation matrix for (stage variant, explainer)."""
        model_key = (stage, variant) if stage in ("pre", "in") else ("baseline", "none")
        key = model_key + (method,)
        if key not in self._matrices:
            entry = self.model_for(*model_key)
            self._matrices[key] = expl_mod.explain_dataset(
                entry["model"],
                self.aux,
                method,
                self.expl_cfg,
                seed=self._seed(*model_key, method, "explain"),
            )
        clean = self._matrices[key]
        if stage != "post":
            return clean, None, clean.ms_per_record
        variant_cfg = next(
            v
            for v in self.cfg.noise_variants
            if self.cfg._noise_name(v) == variant
        )
        spec = noise_mod.NoiseSpec(
            **variant_cfg, seed=self._seed("post", variant, method, "noise")
        )
        return noise_mod.perturb(clean, spec), spec, clean.ms_per_record


def _load_raw(spec: dict):
    if "fixture" in spec:
        cfg = fixtures_mod.dataset_config(spec["fixture"])
        raw = fixtures_mod.generate(
            spec["fixture"],
            rows=spec.get("rows"),
            seed=spec.get("seed", 0),
            missing_rate=spec.get("missing_rate", 0.0),
        )
        sens = [tabular.SensitiveSpec.parse(s) for s in cfg["sensitive"]]
        return raw, sens, cfg["target_positive"]
    if "csv" in spec:
        schema = [tabular.ColumnSchema(**c) for c in spec["schema"]]
        raw = tabular.load_csv(spec["csv"], schema)
        sens = [tabular.SensitiveSpec.parse(s) for s in spec["sensitive"]]
        return raw, sens, spec.get("target_positive")
    raise ConfigError(f"dataset spec is plan-only, cannot execute: {spec}")


def run_pipeline(cfg: ExperimentConfig) -> CampaignResult:
    """Execute the campaign cell by cell.

    A failing cell is recorded with its error and the rest proceed; shared
    stage models and clean explanation matrices are computed once per
    dataset and reused across cells.
    """
    started = time.time()
    cells: list[CellResult] = []
    for spec in cfg.datasets:
        try:
            ctx = _DatasetContext(cfg, spec)
        except Exception as exc:  # dataset-level failure poisons its cells
            name = cfg._dataset_name(spec)
            for key in plan_cells(cfg):
                if key.dataset == name:
                    cells.append(CellResult(key=key, error=f"{type(exc).__name__}: {exc}"))
            continue
        attrs = cfg.dataset_attributes(spec)
        for stage in effective_stages(cfg):
            for variant in _stage_variants(cfg, stage):
                for method in cfg.explainers:
                    for attr in attrs:
                        key = RunKey(ctx.name, stage, variant, method, attr)
                        cells.append(_run_cell(ctx, key, attrs))
    cells.sort(key=lambda c: c.key.sort_key())
    return CampaignResult(
        config=cfg, cells=cells, started=started, finished=time.time()
    )


def _run_cell(ctx: _DatasetContext, key: RunKey, attrs: list) -> CellResult:
    cfg = ctx.cfg
    result = CellResult(key=key, repetitions=cfg.repetitions)
    try:
        entry = ctx.model_for(key.stage, key.variant)
        matrix, noise_spec, explain_ms = ctx.matrix_for(
            key.stage, key.variant, key.explainer
        )

        ads = attack_mod.build_attack_dataset(matrix, ctx.bundle, key.attribute)
        t0 = time.perf_counter()
        report = attack_mod.run_attack(
            ads, attack_mod.AttackModelSpec(), seeds=tuple(range(cfg.repetitions))
        )
        attack_seconds = time.perf_counter() - t0

        fcfg = faith_mod.FaithfulnessConfig(
            **cfg.faithfulness_params,
            seed=stream_key((cfg.seed, key.as_string(), "faithfulness")),
        )
        faith = faith_mod.faithfulness_report(entry["model"], ctx.aux, matrix, fcfg)

        result.attack = report
        result.faith = faith
        result.train_accuracy = float(entry["train_accuracy"])
        result.test_accuracy = float(entry["test_accuracy"])
        if entry["privacy"] is not None:
            result.privacy = entry["privacy"]
            result.epsilon = float(entry["privacy"]["epsilon"])
        if entry["diag"] is not None:
            result.synth_validity = float(entry["diag"].data_validity)
            result.synth_structure = float(entry["diag"].data_structure)
        result.timings = {
            "train_seconds": entry["train_seconds"],
            "attack_seconds": attack_seconds,
            "explain_ms_per_record": explain_ms,
        }
        if entry["synth_ms_per_record"] is not None:
            result.timings["synth_ms_per_record"] = entry["synth_ms_per_record"]
        if noise_spec is not None:
            result.timings["noise_ms_per_record"] = matrix.ms_per_record
    except Exception as exc:
        result.error = f"{type(exc).__name__}: {exc}"
    return result


def summarize(cells: list[CellResult]) -> list[dict]:
    """Per-cell deltas vs the matching baseline plus per-stage aggregates.

    Every PET cell is compared to the baseline cell sharing its (dataset,
    explainer, attribute); a missing baseline is an error. Rows with
    kind="cell" carry the deltas; rows with kind="stage" carry the fraction
    of that stage's cells that mitigated (delta < 0).
    """
    ok = [c for c in cells if c.ok]
    baselines = {
        (c.key.dataset, c.key.explainer, c.key.attribute): c
        for c in ok
        if c.key.stage == "baseline"
    }
    rows: list[dict] = []
    stage_hits: dict[str, list[bool]] = {}
    for c in sorted(ok, key=lambda c: c.key.sort_key()):
        if c.key.stage == "baseline":
            continue
        ref = baselines.get((c.key.dataset, c.key.explainer, c.key.attribute))
        if ref is None:
            raise ValueError(
                f"no baseline cell for {c.key.as_string()} "
                "(baseline stage must run in the same campaign)"
            )
        delta = c.attack.attack_success - ref.attack.attack_success
        mitigated = delta < 0
        stage_hits.setdefault(c.key.stage, []).append(mitigated)
        rows.append(
            {
                "kind": "cell",
                "dataset": c.key.dataset,
                "stage": c.key.stage,
                "variant": c.key.variant,
                "explainer": c.key.explainer,
                "attribute": c.key.attribute,
                "attack_success": c.attack.attack_success,
                "baseline_success": ref.attack.attack_success,
                "delta_success": delta,
                "delta_f1": c.attack.f1 - ref.attack.f1,
                "mitigated": mitigated,
                "random_guess": c.attack.random_guess,
                "coin_guess": c.attack.coin_guess,
                "fraction_mitigated": None,
            }
        )
    for stage in STAGES:
        hits = stage_hits.get(stage)
        if hits:
            rows.append(
                {
                    "kind": "stage",
                    "dataset": "",
                    "stage": stage,
                    "variant": "",
                    "explainer": "",
                    "attribute": "",
                    "attack_success": None,
                    "baseline_success": None,
                    "delta_success": None,
                    "delta_f1": None,
                    "mitigated": None,
                    "random_guess": None,
                    "coin_guess": None,
                    "fraction_mitigated": sum(hits) / len(hits),
                }
            )
    return rows


def _write_csv(path: Path, columns: list[str], rows: list[dict]) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=columns, lineterminator="\n")
        writer.writeheader()
        for row in rows:
            writer.writerow(row)


def _summary_csv_rows(summary: list[dict]) -> list[dict]:
    out = []
    for row in summary:
        fmt = {}
        for col in SUMMARY_COLUMNS:
            v = row[col]
            if v is None:
                fmt[col] = ""
            elif isinstance(v, bool):
                fmt[col] = "true" if v else "false"
            elif isinstance(v, float):
                fmt[col] = repr(v)
            else:
                fmt[col] = str(v)
        out.append(fmt)
    return out


def emit_report(result: CampaignResult, out_dir: str | Path) -> dict:
    """Write report.csv, report.json, and summary.csv; returns their paths.

    The CSV holds one row per succeeded cell with a fixed column order and
    repr-formatted floats, so identical campaigns produce identical bytes.
    Timings, per-repetition metrics, confusion counts, and failures are in
    the JSON report only.
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    csv_path = out / "report.csv"
    json_path = out / "report.json"
    summary_path = out / "summary.csv"

    _write_csv(
        csv_path, CSV_COLUMNS, [c.to_csv_row() for c in result.ok_cells()]
    )
    summary = summarize(comparable_cells(result.cells))
    write_summary_csv(summary_path, summary)

    payload = {
        "version": CONFIG_VERSION,
        "config": result.config.to_dict(),
        "config_digest": result.config.digest(),
        "started": result.started,
        "finished": result.finished,
        "n_cells": len(result.cells),
        "n_failed": result.n_failed,
        "cells": [c.to_json_dict() for c in result.cells],
        "summary": summary,
    }
    with open(json_path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return {"csv": csv_path, "json": json_path, "summary": summary_path}


def comparable_cells(cells: list[CellResult]) -> list[CellResult]:
    """Ok cells restricted to those `summarize` can pair with a baseline.

    A cell whose baseline failed cannot be compared; it stays in the reports
    (with the failure recorded in the JSON) but is excluded here.
    """
    ok = [c for c in cells if c.ok]
    have_baseline = {
        (c.key.dataset, c.key.explainer, c.key.attribute)
        for c in ok
        if c.key.stage == "baseline"
    }
    return [
        c
        for c in ok
        if c.key.stage == "baseline"
        or (c.key.dataset, c.key.explainer, c.key.attribute) in have_baseline
    ]


def write_summary_csv(path: str | Path, rows: list[dict]) -> None:
    """Write summary rows with the canonical column order and formatting."""
    _write_csv(Path(path), SUMMARY_COLUMNS, _summary_csv_rows(rows))


def parse_report_csv(path: str | Path) -> list[dict]:
    """Read a report CSV back into row dicts (strings as written)."""
    with open(path, "r", encoding="utf-8", newline="") as fh:
        return list(csv.DictReader(fh))


def cells_from_json(payload: dict) -> list[CellResult]:
    """Rebuild cell results from a report JSON payload.

    Only the fields `summarize` consumes are restored (per-repetition attack
    metrics and faithfulness per-record scores stay behind in the JSON), so
    a summary can be recomputed without rerunning the campaign.
    """
    if payload.get("version") != CONFIG_VERSION:
        raise ConfigError(
            f"report version {payload.get('version')!r} not supported "
            f"(expected {CONFIG_VERSION})"
        )
    cells: list[CellResult] = []
    for entry in payload.get("cells", []):
        key = RunKey(
            dataset=entry["dataset"],
            stage=entry["stage"],
            variant=entry["variant"],
            explainer=entry["explainer"],
            attribute=entry["attribute"],
        )
        report = None
        if "attack" in entry:
            a = entry["attack"]
            report = attack_mod.AttackReport(
                attribute=a["attribute"],
                repetitions=a["repetitions"],
                per_repetition=[],
                precision=a["precision"],
                recall=a["recall"],
                f1=a["f1"],
                attack_success=a["attack_success"],
                random_guess=a["random_guess"],
                coin_guess=a.get("coin_guess", 0.5),
                seeds=tuple(a.get("seeds", ())),
            )
        faith = None
        if "faithfulness" in entry:
            f = entry["faithfulness"]
            faith = faith_mod.FaithfulnessReport(
                method=f["method"],
                faithfulness_correlation=f["faithfulness_correlation"],
                faithfulness_estimate=f["faithfulness_estimate"],
                sufficiency=f["sufficiency"],
                n_records=f["n_records"],
                flagged_correlation=f.get("flagged_correlation", 0),
                flagged_estimate=f.get("flagged_estimate", 0),
            )
        cells.append(
            CellResult(
                key=key,
                repetitions=entry.get("repetitions", 0),
                attack=report,
                faith=faith,
                train_accuracy=entry.get("train_accuracy"),
                test_accuracy=entry.get("test_accuracy"),
                epsilon=entry.get("epsilon"),
                privacy=entry.get("privacy"),
                synth_validity=entry.get("synth_validity"),
                synth_structure=entry.get("synth_structure"),
                timings=entry.get("timings", {}),
                error=entry.get("error"),
            )
        )
    return cells
