"""Explanation-quality metrics: faithfulness and sufficiency.

Faithfulness correlation perturbs random feature subsets toward a baseline
and correlates attribution mass with the model's output change; faithfulness
estimate does the same feature-by-feature. Sufficiency checks whether records
with near-identical explanations receive the same predicted label.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .explainers import ExplanationMatrix
from .nn import MlpModel, forward
from .tabular import TabularDataset, UndefinedCorrelationError, pearson_vectors
from .util import derived_rng


@dataclass(frozen=True)
class FaithfulnessConfig:
    """Protocol constants for the faithfulness metrics.

    Args:
        subset_size: Features perturbed together per correlation draw.
        iterations: Number of random subsets per record.
        baseline_value: Value a perturbed feature is set to.
        similarity_threshold: Relative L2 radius for sufficiency neighbors.
        sample_size: Records sampled per dataset-level metric.
        seed: Stream seed for subset and record sampling.
    """

    subset_size: int = 3
    iterations: int = 100
    baseline_value: float = 0.0
    similarity_threshold: float = 0.1
    sample_size: int = 200
    seed: int = 0

    def __post_init__(self):
        if self.subset_size < 1:
            raise ValueError("subset_size must be >= 1")
        if self.iterations < 2:
            raise ValueError("iterations must be >= 2")
        if self.sample_size < 1:
            raise ValueError("sample_size must be >= 1")
        if not 0.0 <= self.similarity_threshold:
            raise ValueError("similarity_threshold must be >= 0")


@dataclass(frozen=True)
class MetricValue:
    """A metric score with a degenerate-input flag.

    `flagged` means the score was undefined (for example a constant vector
    on either side of a correlation) and was reported as 0.0.
    """

    value: float
    flagged: bool = False

    def __float__(self) -> float:
        return float(self.value)


@dataclass
class FaithfulnessReport:
    """Dataset-level explanation quality scores."""

    method: str
    faithfulness_correlation: float
    faithfulness_estimate: float
    sufficiency: float
    n_records: int
    flagged_correlation: int = 0
    flagged_estimate: int = 0
    per_record: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "method": self.method,
            "faithfulness_correlation": self.faithfulness_correlation,
            "faithfulness_estimate": self.faithfulness_estimate,
            "sufficiency": self.sufficiency,
            "n_records": self.n_records,
            "flagged_correlation": self.flagged_correlation,
            "flagged_estimate": self.flagged_estimate,
        }


def faithfulness_correlation(
    model: MlpModel,
    x: np.ndarray,
    attribution: np.ndarray,
    cfg: FaithfulnessConfig,
    rng: np.random.Generator,
) -> MetricValue:
    """Correlate subset attribution mass with the output drop it causes.

    Draws `cfg.iterations` random feature subsets of size `cfg.subset_size`,
    sets each subset to the baseline value, and computes the Pearson
    correlation between the summed attributions of the subset and the change
    in model output. Constant inputs on either side yield a flagged 0.0.
    """
    x = np.asarray(x, dtype=np.float64)
    attribution = np.asarray(attribution, dtype=np.float64)
    d = x.shape[0]
    if attribution.shape[0] != d:
        raise ValueError("attribution length must match feature count")
    k = min(cfg.subset_size, d)
    base = forward(model, x)
    perturbed = np.tile(x, (cfg.iterations, 1))
    mass = np.empty(cfg.iterations)
    for i in range(cfg.iterations):
        subset = rng.choice(d, size=k, replace=False)
        perturbed[i, subset] = cfg.baseline_value
        mass[i] = attribution[subset].sum()
    drops = base - forward(model, perturbed)
    try:
        return MetricValue(pearson_vectors(mass, drops))
    except UndefinedCorrelationError:
        return MetricValue(0.0, flagged=True)


def faithfulness_estimate(
    model: MlpModel,
    x: np.ndarray,
    attribution: np.ndarray,
    cfg: FaithfulnessConfig,
) -> MetricValue:
    """Correlate per-feature attributions with single-feature output drops."""
    x = np.asarray(x, dtype=np.float64)
    attribution = np.asarray(attribution, dtype=np.float64)
    d = x.shape[0]
    if attribution.shape[0] != d:
        raise ValueError("attribution length must match feature count")
    base = forward(model, x)
    perturbed = np.tile(x, (d, 1))
    perturbed[np.arange(d), np.arange(d)] = cfg.baseline_value
    drops = base - forward(model, perturbed)
    try:
        return MetricValue(pearson_vectors(attribution, drops))
    except UndefinedCorrelationError:
        return MetricValue(0.0, flagged=True)


def sufficiency(
    values: np.ndarray,
    predictions: np.ndarray,
    threshold: float,
) -> tuple[float, np.ndarray]:
    """Fraction of explanation-space neighbors sharing the predicted label.

    Record j is a neighbor of record i when the relative L2 distance
    ||e_i - e_j|| / (||e_i|| + 1e-12) is at or below `threshold`. Each
    record is its own neighbor, so every per-record score is well defined.

    Returns:
        (mean score, per-record scores).
    """
    values = np.asarray(values, dtype=np.float64)
    predictions = np.asarray(predictions).astype(np.int8)
    n = values.shape[0]
    if predictions.shape[0] != n:
        raise ValueError("predictions length must match explanation count")
    if n == 0:
        raise ValueError("sufficiency requires at least one record")
    norms = np.linalg.norm(values, axis=1) + 1e-12
    scores = np.empty(n)
    for i in range(n):
        dist = np.linalg.norm(values - values[i], axis=1) / norms[i]
        neighbors = dist <= threshold
        scores[i] = np.mean(predictions[neighbors] == predictions[i])
    return float(scores.mean()), scores


def faithfulness_report(
    model: MlpModel,
    ds: TabularDataset,
    expl: ExplanationMatrix,
    cfg: FaithfulnessConfig | None = None,
) -> FaithfulnessReport:
    """Evaluate all three quality metrics for one explanation matrix.

    Faithfulness metrics average over up to `cfg.sample_size` records drawn
    without replacement (flagged records are excluded from the mean and
    counted); sufficiency uses the same sampled records' explanations and
    the model's predicted labels.
    """
    cfg = cfg or FaithfulnessConfig()
    index = {int(rid): i for i, rid in enumerate(ds.record_ids)}
    rows = [index[int(rid)] for rid in expl.record_ids if int(rid) in index]
    if len(rows) != len(expl.record_ids):
        raise ValueError("explanation matrix covers records outside the dataset")
    n = len(rows)
    take = min(cfg.sample_size, n)
    sample_rng = derived_rng(cfg.seed, "faithfulness-sample")
    picked = np.sort(sample_rng.choice(n, size=take, replace=False))

    fc_vals, fe_vals = [], []
    fc_flagged = fe_flagged = 0
    for pos in picked:
        x = ds.X[rows[pos]]
        attr = expl.values[pos]
        rid = int(expl.record_ids[pos])
        fc = faithfulness_correlation(
            model, x, attr, cfg, derived_rng(cfg.seed, "fc", rid)
        )
        fe = faithfulness_estimate(model, x, attr, cfg)
        if fc.flagged:
            fc_flagged += 1
        else:
            fc_vals.append(fc.value)
        if fe.flagged:
            fe_flagged += 1
        else:
            fe_vals.append(fe.value)

    sample_values = expl.values[picked]
    sample_X = ds.X[[rows[p] for p in picked]]
    preds = (forward(model, sample_X) >= 0.5).astype(np.int8)
    suff, per_rec = sufficiency(sample_values, preds, cfg.similarity_threshold)

    return FaithfulnessReport(
        method=expl.method,
        faithfulness_correlation=float(np.mean(fc_vals)) if fc_vals else 0.0,
        faithfulness_estimate=float(np.mean(fe_vals)) if fe_vals else 0.0,
        sufficiency=suff,
        n_records=take,
        flagged_correlation=fc_flagged,
        flagged_estimate=fe_flagged,
        per_record={"sufficiency": per_rec.tolist()},
    )
