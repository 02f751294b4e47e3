"""Feature-attribution methods over a trained model.

Four explainers with one contract: given (model, record, config, seed) return
one attribution value per feature column, attributing the positive-class
probability. Integrated gradients and SmoothGrad consume analytic input
gradients; KernelSHAP and LIME only query the forward pass.
"""

from __future__ import annotations

import csv
import json
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .nn import MlpModel, forward, input_gradient
from .tabular import ColumnKind, FeatureGroup, TabularDataset
from .util import config_digest, derived_rng

EXACT = "exact"
METHODS = ("ig", "sg", "shap", "lime")


@dataclass(frozen=True)
class ExplainerConfig:
    """Hyperparameters for all four explainers.

    None of these are dictated by the audited pipeline itself; they are
    surfaced here so every run records exactly what produced its
    attributions (see config_digest).
    """

    ig_steps: int = 64
    ig_rule: str = "midpoint"  # or "left"
    ig_baseline: tuple[float, ...] | None = None  # None means all-zeros
    sg_samples: int = 25
    sg_sigma: float = 0.1
    shap_background_size: int = 100
    shap_coalitions: int | str = 256  # integer sample count or EXACT
    lime_samples: int = 1000
    lime_sigma: float = 0.3
    lime_kernel_width: float | None = None  # None means 0.75 * sqrt(d)
    lime_ridge: float = 1.0
    lime_top_k: int | None = None  # None keeps all coefficients

    def __post_init__(self):
        if self.ig_steps < 1 or self.sg_samples < 1 or self.lime_samples < 1:
            raise ValueError("all sample/step counts must be >= 1")
        if self.sg_sigma <= 0:
            raise ValueError("sg_sigma must be positive")
        if self.ig_rule not in ("midpoint", "left"):
            raise ValueError("ig_rule must be midpoint or left")
        if isinstance(self.shap_coalitions, str) and self.shap_coalitions != EXACT:
            raise ValueError("shap_coalitions must be an integer or EXACT")

    def digest(self, method: str) -> str:
        payload = {"method": method, **self.__dict__}
        return config_digest(payload)


@dataclass
class ExplanationMatrix:
    """Per-record attribution vectors aligned to feature columns."""

    method: str
    feature_names: list[str]
    record_ids: np.ndarray
    values: np.ndarray
    config_digest: str
    ms_per_record: float = 0.0
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64)
        self.record_ids = np.asarray(self.record_ids, dtype=np.int64)
        if self.values.ndim != 2:
            raise ValueError("values must be a 2-d matrix")
        if self.values.shape[0] != len(self.record_ids):
            raise ValueError("record_ids length does not match value rows")
        if self.values.shape[1] != len(self.feature_names):
            raise ValueError("attribution width does not match feature names")
        if not np.all(np.isfinite(self.values)):
            raise ValueError("non-finite attribution values")

    @property
    def n_records(self) -> int:
        return self.values.shape[0]

    def row_for(self, record_id: int) -> np.ndarray:
        idx = np.flatnonzero(self.record_ids == record_id)
        if len(idx) != 1:
            raise KeyError(f"record id {record_id} not present exactly once")
        return self.values[idx[0]]

    def copy_with(self, values: np.ndarray, **meta) -> "ExplanationMatrix":
        merged = dict(self.meta)
        merged.update(meta)
        return ExplanationMatrix(
            method=self.method,
            feature_names=list(self.feature_names),
            record_ids=self.record_ids.copy(),
            values=values,
            config_digest=self.config_digest,
            ms_per_record=self.ms_per_record,
            meta=merged,
        )

    def sidecar_path(self, csv_path: str | Path) -> Path:
        p = Path(csv_path)
        return p.with_suffix(".json") if p.suffix == ".csv" else Path(str(p) + ".json")

    def to_csv(self, path: str | Path) -> None:
        """Write record_id + one column per feature, plus a JSON sidecar."""
        path = Path(path)
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(["record_id"] + self.feature_names)
            for rid, row in zip(self.record_ids, self.values):
                writer.writerow([int(rid)] + [repr(float(v)) for v in row])
        sidecar = {
            "method": self.method,
            "config_digest": self.config_digest,
            "ms_per_record": self.ms_per_record,
            "n_records": int(self.n_records),
            "meta": self.meta,
        }
        with open(self.sidecar_path(path), "w") as fh:
            json.dump(sidecar, fh, indent=2, sort_keys=True, default=str)
            fh.write("\n")

    @classmethod
    def from_csv(cls, path: str | Path) -> "ExplanationMatrix":
        path = Path(path)
        with open(path, newline="") as fh:
            reader = csv.reader(fh)
            header = next(reader)
            rows = list(reader)
        record_ids = np.array([int(r[0]) for r in rows], dtype=np.int64)
        values = np.array([[float(v) for v in r[1:]] for r in rows])
        sidecar_path = (
            path.with_suffix(".json") if path.suffix == ".csv"
            else Path(str(path) + ".json")
        )
        meta: dict = {}
        method = "unknown"
        digest = ""
        ms = 0.0
        if sidecar_path.exists():
            with open(sidecar_path) as fh:
                sidecar = json.load(fh)
            method = sidecar.get("method", method)
            digest = sidecar.get("config_digest", digest)
            ms = sidecar.get("ms_per_record", ms)
            meta = sidecar.get("meta", meta)
        return cls(
            method=method,
            feature_names=header[1:],
            record_ids=record_ids,
            values=values if len(rows) else np.zeros((0, len(header) - 1)),
            config_digest=digest,
            ms_per_record=ms,
            meta=meta,
        )


def _baseline(cfg: ExplainerConfig, d: int) -> np.ndarray:
    if cfg.ig_baseline is None:
        return np.zeros(d)
    b = np.asarray(cfg.ig_baseline, dtype=np.float64)
    if b.shape != (d,):
        raise ValueError("ig_baseline dimension does not match the input")
    return b


def explain_ig(model: MlpModel, x: np.ndarray, cfg: ExplainerConfig) -> np.ndarray:
    """Integrated gradients along the straight path from the baseline."""
    x = np.asarray(x, dtype=np.float64)
    b = _baseline(cfg, len(x))
    m = cfg.ig_steps
    if cfg.ig_rule == "midpoint":
        ts = (np.arange(m) + 0.5) / m
    else:
        ts = np.arange(m) / m
    points = b + ts[:, None] * (x - b)
    grads = input_gradient(model, points)
    return (x - b) * grads.mean(axis=0)


def ig_completeness_gap(model: MlpModel, x: np.ndarray, cfg: ExplainerConfig) -> float:
    """|sum of attributions - (f(x) - f(baseline))|, the completeness residual."""
    x = np.asarray(x, dtype=np.float64)
    b = _baseline(cfg, len(x))
    attr = explain_ig(model, x, cfg)
    return abs(float(attr.sum()) - (forward(model, x) - forward(model, b)))


def explain_sg(
    model: MlpModel, x: np.ndarray, cfg: ExplainerConfig,
    rng: np.random.Generator,
) -> np.ndarray:
    """SmoothGrad: mean input gradient under Gaussian input perturbations."""
    x = np.asarray(x, dtype=np.float64)
    noise = rng.normal(0.0, cfg.sg_sigma, size=(cfg.sg_samples, len(x)))
    grads = input_gradient(model, x + noise)
    return grads.mean(axis=0)


def _shapley_kernel_weights(d: int, sizes: np.ndarray) -> np.ndarray:
    # w(S) = (d-1) / (C(d,|S|) * |S| * (d-|S|)) for 0 < |S| < d
    from scipy.special import comb

    return (d - 1.0) / (comb(d, sizes) * sizes * (d - sizes))


def _coalition_values(
    model: MlpModel, x: np.ndarray, masks: np.ndarray, background: np.ndarray,
) -> np.ndarray:
    """v(S): mean model output over background-completed composites."""
    k = background.shape[0]
    values = np.empty(len(masks))
    chunk = max(1, 200_000 // max(k, 1))
    for start in range(0, len(masks), chunk):
        Z = masks[start : start + chunk]
        composites = Z[:, None, :] * x + (1.0 - Z[:, None, :]) * background[None, :, :]
        preds = forward(model, composites.reshape(-1, x.shape[0]))
        values[start : start + len(Z)] = preds.reshape(len(Z), k).mean(axis=1)
    return values


def _solve_kernel_shap(
    masks: np.ndarray, values: np.ndarray, weights: np.ndarray,
    v0: float, v1: float,
) -> np.ndarray:
    # weighted least squares with the efficiency constraint eliminated into
    # the last coefficient
    d = masks.shape[1]
    e = v1 - v0
    if d == 1:
        return np.array([e])
    A = masks[:, : d - 1] - masks[:, d - 1 :]
    t = values - v0 - masks[:, d - 1] * e
    sw = np.sqrt(weights)
    phi_head, *_ = np.linalg.lstsq(A * sw[:, None], t * sw, rcond=None)
    phi = np.empty(d)
    phi[: d - 1] = phi_head
    phi[d - 1] = e - phi_head.sum()
    return phi


def explain_shap(
    model: MlpModel, x: np.ndarray, cfg: ExplainerConfig,
    rng: np.random.Generator, background: np.ndarray,
) -> np.ndarray:
    """Kernel SHAP with background-completed coalitions.

    With shap_coalitions == EXACT all 2^d coalitions are enumerated (d <= 15
    only); otherwise coalition masks are sampled with probability
    proportional to the Shapley kernel.
    """
    x = np.asarray(x, dtype=np.float64)
    background = np.atleast_2d(np.asarray(background, dtype=np.float64))
    if background.shape[0] == 0:
        raise ValueError("background set must be nonempty")
    d = len(x)
    v0 = float(np.mean(forward(model, background)))
    v1 = float(forward(model, x))
    if d == 1:
        return np.array([v1 - v0])

    if cfg.shap_coalitions == EXACT:
        if d > 15:
            raise ValueError("EXACT enumeration is limited to d <= 15")
        codes = np.arange(1, 2**d - 1, dtype=np.int64)
        masks = ((codes[:, None] >> np.arange(d)) & 1).astype(np.float64)
        sizes = masks.sum(axis=1)
        weights = _shapley_kernel_weights(d, sizes)
    else:
        n_masks = int(cfg.shap_coalitions)
        sizes_domain = np.arange(1, d)
        p = (d - 1.0) / (sizes_domain * (d - sizes_domain))
        p = p / p.sum()
        sizes = rng.choice(sizes_domain, size=n_masks, p=p)
        masks = np.zeros((n_masks, d))
        for row, k in enumerate(sizes):
            masks[row, rng.choice(d, size=int(k), replace=False)] = 1.0
        weights = np.ones(n_masks)

    values = _coalition_values(model, x, masks, background)
    return _solve_kernel_shap(masks, values, weights, v0, v1)


def explain_lime(
    model: MlpModel, x: np.ndarray, cfg: ExplainerConfig,
    rng: np.random.Generator,
    groups: list[FeatureGroup] | None = None,
    background: np.ndarray | None = None,
    info: dict | None = None,
) -> np.ndarray:
    """LIME: weighted ridge fit to model outputs on local perturbations.

    Continuous columns get Gaussian perturbations around x; categorical
    one-hot groups and binary columns are resampled from background
    frequencies. Returns the top-k ridge coefficients (others zeroed).
    """
    x = np.asarray(x, dtype=np.float64)
    d = len(x)
    n = cfg.lime_samples
    if n < d + 2:
        raise ValueError("lime_samples must be at least d + 2")
    X = np.tile(x, (n, 1))

    gaussian_cols = np.ones(d, dtype=bool)
    if groups is not None:
        if background is None:
            raise ValueError("grouped perturbation requires a background matrix")
        for group in groups:
            idx = list(group.indices)
            if group.kind == ColumnKind.CATEGORICAL:
                gaussian_cols[idx] = False
                freqs = background[:, idx].mean(axis=0)
                total = freqs.sum()
                freqs = freqs / total if total > 0 else np.full(len(idx), 1 / len(idx))
                picks = rng.choice(len(idx), size=n, p=freqs)
                block = np.zeros((n, len(idx)))
                block[np.arange(n), picks] = 1.0
                X[:, idx] = block
            elif group.kind == ColumnKind.BINARY:
                gaussian_cols[idx] = False
                rate = float(background[:, idx[0]].mean())
                X[:, idx[0]] = (rng.random(n) < rate).astype(np.float64)
    if gaussian_cols.any():
        cols = np.flatnonzero(gaussian_cols)
        X[:, cols] += rng.normal(0.0, cfg.lime_sigma, size=(n, len(cols)))

    preds = forward(model, X)
    width = cfg.lime_kernel_width or 0.75 * np.sqrt(d)
    dist2 = ((X - x) ** 2).sum(axis=1)
    w = np.exp(-dist2 / width**2)

    A = np.hstack([np.ones((n, 1)), X])
    sw = np.sqrt(w)
    Aw = A * sw[:, None]
    gram = Aw.T @ Aw
    penalty = np.eye(d + 1) * cfg.lime_ridge
    penalty[0, 0] = 0.0  # intercept is not penalized
    system = gram + penalty
    coef = np.linalg.solve(system, Aw.T @ (preds * sw))
    if info is not None:
        info["condition_number"] = float(np.linalg.cond(system))
        info["kernel_width"] = float(width)
    attr = coef[1:]
    k = cfg.lime_top_k
    if k is not None and k < d:
        keep = np.argsort(-np.abs(attr))[:k]
        masked = np.zeros(d)
        masked[keep] = attr[keep]
        attr = masked
    return attr


def explain_dataset(
    model: MlpModel,
    ds: TabularDataset,
    method: str,
    cfg: ExplainerConfig,
    seed: int,
    background: np.ndarray | None = None,
) -> ExplanationMatrix:
    """Explain every record of a dataset.

    Per-record randomness is derived from (seed, method, record_id), so
    results do not depend on evaluation order. The background matrix (for
    SHAP values and LIME frequencies) should come from the model's training
    split; it falls back to the explained rows themselves.
    """
    if method not in METHODS:
        raise ValueError(f"unknown method {method!r}; expected one of {METHODS}")
    X = ds.X
    n, d = X.shape
    if background is None:
        background = X
    start = time.perf_counter()
    if method == "ig":
        values = _ig_batch(model, X, cfg)
    elif method == "sg":
        values = np.vstack(
            [
                explain_sg(model, X[i], cfg, derived_rng(seed, "sg", int(rid)))
                for i, rid in enumerate(ds.record_ids)
            ]
        ) if n else np.zeros((0, d))
    elif method == "shap":
        bg = _shap_background(background, cfg, seed)
        values = np.vstack(
            [
                explain_shap(
                    model, X[i], cfg, derived_rng(seed, "shap", int(rid)), bg
                )
                for i, rid in enumerate(ds.record_ids)
            ]
        ) if n else np.zeros((0, d))
    else:
        groups = ds.groups
        values = np.vstack(
            [
                explain_lime(
                    model, X[i], cfg, derived_rng(seed, "lime", int(rid)),
                    groups=groups, background=background,
                )
                for i, rid in enumerate(ds.record_ids)
            ]
        ) if n else np.zeros((0, d))
    elapsed_ms = (time.perf_counter() - start) * 1000.0
    return ExplanationMatrix(
        method=method,
        feature_names=list(ds.feature_names),
        record_ids=ds.record_ids.copy(),
        values=values,
        config_digest=cfg.digest(method),
        ms_per_record=elapsed_ms / max(n, 1),
        meta={"seed": seed, "n_background": int(np.atleast_2d(background).shape[0])},
    )


def _ig_batch(model: MlpModel, X: np.ndarray, cfg: ExplainerConfig) -> np.ndarray:
    n, d = X.shape
    if n == 0:
        return np.zeros((0, d))
    b = _baseline(cfg, d)
    m = cfg.ig_steps
    ts = (np.arange(m) + 0.5) / m if cfg.ig_rule == "midpoint" else np.arange(m) / m
    out = np.empty_like(X)
    chunk = max(1, 200_000 // m)
    for start in range(0, n, chunk):
        block = X[start : start + chunk]
        points = b + ts[None, :, None] * (block[:, None, :] - b)
        grads = input_gradient(model, points.reshape(-1, d)).reshape(len(block), m, d)
        out[start : start + len(block)] = (block - b) * grads.mean(axis=1)
    return out


def _shap_background(background: np.ndarray, cfg: ExplainerConfig, seed: int):
    background = np.atleast_2d(background)
    if background.shape[0] <= cfg.shap_background_size:
        return background
    rng = derived_rng(seed, "shap-background")
    idx = rng.choice(background.shape[0], cfg.shap_background_size, replace=False)
    return background[idx]
