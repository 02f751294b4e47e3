"""Attribute-inference attack harness.

The adversary sees only released explanation vectors and tries to recover a
binary sensitive attribute. Attack datasets are id-joined from an explanation
matrix and the auxiliary split halves; the attack classifier is a fixed-shape
MLP trained with L2-regularized binary cross-entropy; metrics follow the
precision / recall / F1 / success definitions with a majority-class
random-guess baseline.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from .explainers import ExplanationMatrix
from .nn import LayerSpec, MlpModel, TrainConfig, init_model, train_arrays
from .tabular import SplitBundle
from .util import stream_key


@dataclass(frozen=True)
class AttackModelSpec:
    """Attack classifier shape and training protocol.

    Args:
        hidden: Hidden-layer widths (ReLU), followed by one sigmoid unit.
        l2_lambda: L2 penalty added to the training loss.
        max_epochs: Upper bound on training epochs.
        tolerance: Minimum loss improvement; training stops once the loss
            has not improved by more than this for `patience` epochs.
        standardize: Z-score the explanation features with training-half
            statistics before fitting (recorded in reports).
    """

    hidden: tuple[int, ...] = (64, 128, 32)
    l2_lambda: float = 1e-3
    max_epochs: int = 500
    learning_rate: float = 1e-3
    batch_size: int = 48
    tolerance: float = 1e-4
    patience: int = 10
    standardize: bool = True

    def layers(self) -> list[LayerSpec]:
        return [LayerSpec(w, "relu") for w in self.hidden] + [
            LayerSpec(1, "sigmoid")
        ]

    def to_dict(self) -> dict:
        return {
            "hidden": list(self.hidden),
            "l2_lambda": self.l2_lambda,
            "max_epochs": self.max_epochs,
            "learning_rate": self.learning_rate,
            "batch_size": self.batch_size,
            "tolerance": self.tolerance,
            "patience": self.patience,
            "standardize": self.standardize,
        }


@dataclass
class AttackDataset:
    """Explanation features joined with binary sensitive labels.

    Predictions of the target model are deliberately excluded: the attack
    input is the explanation vector alone.
    """

    attribute: str
    feature_names: list[str]
    train_X: np.ndarray
    train_y: np.ndarray
    test_X: np.ndarray
    test_y: np.ndarray

    def __post_init__(self):
        if len(self.train_X) != len(self.train_y):
            raise ValueError("attack train features/labels misaligned")
        if len(self.test_X) != len(self.test_y):
            raise ValueError("attack test features/labels misaligned")


@dataclass(frozen=True)
class ConfusionCounts:
    """Binary confusion-matrix counts on the attack test half."""

    tp: int
    fp: int
    fn: int
    tn: int

    @property
    def total(self) -> int:
        return self.tp + self.fp + self.fn + self.tn

    def to_dict(self) -> dict:
        return {"tp": self.tp, "fp": self.fp, "fn": self.fn, "tn": self.tn}


@dataclass(frozen=True)
class AttackMetrics:
    """Eq-style attack scores for one repetition.

    precision = TP / (TP + FP); recall = TP / (TP + FN); f1 is their
    harmonic mean; attack_success = (TP + TN) / total, the fraction of
    attack-test records whose sensitive attribute was inferred correctly.
    Undefined ratios are reported as 0.0 with the matching flag set.
    """

    precision: float
    recall: float
    f1: float
    attack_success: float
    counts: ConfusionCounts
    precision_defined: bool = True
    recall_defined: bool = True

    def to_dict(self) -> dict:
        return {
            "precision": self.precision,
            "recall": self.recall,
            "f1": self.f1,
            "attack_success": self.attack_success,
            "counts": self.counts.to_dict(),
            "precision_defined": self.precision_defined,
            "recall_defined": self.recall_defined,
        }


@dataclass
class AttackReport:
    """Mean attack metrics over the repetition protocol.

    Attributes:
        attribute: Sensitive attribute under attack.
        repetitions: Number of train/evaluate repetitions (seeds 0..k-1).
        per_repetition: Metrics for each repetition in seed order.
        random_guess: Majority-class prior of the attack-test labels.
    """

    attribute: str
    repetitions: int
    per_repetition: list[AttackMetrics]
    precision: float
    recall: float
    f1: float
    attack_success: float
    random_guess: float
    coin_guess: float = 0.5
    train_seconds: float = 0.0
    seeds: tuple[int, ...] = ()

    def to_dict(self) -> dict:
        return {
            "attribute": self.attribute,
            "repetitions": self.repetitions,
            "precision": self.precision,
            "recall": self.recall,
            "f1": self.f1,
            "attack_success": self.attack_success,
            "random_guess": self.random_guess,
            "coin_guess": self.coin_guess,
            "train_seconds": self.train_seconds,
            "seeds": list(self.seeds),
            "per_repetition": [m.to_dict() for m in self.per_repetition],
        }


@dataclass
class TrainedAttack:
    """Fitted attack classifier plus its input standardization."""

    model: MlpModel
    mean: np.ndarray
    scale: np.ndarray
    loss_history: list[float] = field(default_factory=list)

    def transform(self, X: np.ndarray) -> np.ndarray:
        return (X - self.mean) / self.scale

    def predict(self, X: np.ndarray) -> np.ndarray:
        from .nn import predict

        return predict(self.model, self.transform(X))


def build_attack_dataset(
    expl: ExplanationMatrix, bundle: SplitBundle, attribute: str
) -> AttackDataset:
    """Id-join explanations with the auxiliary halves' sensitive labels.

    Args:
        expl: Explanations covering every record of both auxiliary halves.
        bundle: Split bundle whose aux halves define train/test membership.
        attribute: Sensitive attribute name providing the labels.

    Raises:
        KeyError: Attribute missing from the bundle.
        ValueError: An aux half is empty or an aux record lacks a row.
    """
    parts = []
    for ds in (bundle.aux_attack_train, bundle.aux_attack_test):
        if ds.n_rows == 0:
            raise ValueError("auxiliary split half is empty")
        if attribute not in ds.sensitive:
            raise KeyError(f"sensitive attribute {attribute!r} missing from bundle")
        index = {int(rid): i for i, rid in enumerate(expl.record_ids)}
        rows = []
        for rid in ds.record_ids:
            i = index.get(int(rid))
            if i is None:
                raise ValueError(f"no explanation for auxiliary record {int(rid)}")
            rows.append(i)
        parts.append((expl.values[rows], ds.sensitive[attribute].astype(np.int8)))
    (train_X, train_y), (test_X, test_y) = parts
    return AttackDataset(
        attribute=attribute,
        feature_names=list(expl.feature_names),
        train_X=train_X,
        train_y=train_y,
        test_X=test_X,
        test_y=test_y,
    )


def train_attack(
    ads: AttackDataset, spec: AttackModelSpec, seed: int
) -> TrainedAttack:
    """Train the attack classifier on the attack-train half.

    Args:
        ads: Attack dataset (train half is used).
        spec: Architecture and protocol.
        seed: Controls initialization and shuffling.

    Returns:
        TrainedAttack carrying the model and feature standardization.
    """
    if len(ads.train_X) == 0:
        raise ValueError("attack training set is empty")
    if spec.standardize:
        mean = ads.train_X.mean(axis=0)
        scale = ads.train_X.std(axis=0)
        scale = np.where(scale > 0, scale, 1.0)
    else:
        mean = np.zeros(ads.train_X.shape[1])
        scale = np.ones(ads.train_X.shape[1])
    X = (ads.train_X - mean) / scale
    model = init_model(X.shape[1], spec.layers(), seed)
    cfg = TrainConfig(
        epochs=spec.max_epochs,
        learning_rate=spec.learning_rate,
        batch_size=spec.batch_size,
        l2_lambda=spec.l2_lambda,
        early_stop_tol=spec.tolerance,
        early_stop_patience=spec.patience,
    )
    trained, history = train_arrays(model, X, ads.train_y, cfg, seed=stream_key((seed, "shuffle")))
    return TrainedAttack(model=trained, mean=mean, scale=scale, loss_history=history)


def attack_metrics(preds: np.ndarray, labels: np.ndarray) -> AttackMetrics:
    """Compute precision, recall, F1, and attack success from predictions.

    Args:
        preds: Binary predictions of the sensitive attribute.
        labels: True binary attribute values, same length.
    """
    preds = np.asarray(preds).astype(np.int8)
    labels = np.asarray(labels).astype(np.int8)
    if preds.shape != labels.shape or len(preds) == 0:
        raise ValueError("predictions and labels must be equal-length, nonempty")
    tp = int(np.sum((preds == 1) & (labels == 1)))
    fp = int(np.sum((preds == 1) & (labels == 0)))
    fn = int(np.sum((preds == 0) & (labels == 1)))
    tn = int(np.sum((preds == 0) & (labels == 0)))
    counts = ConfusionCounts(tp=tp, fp=fp, fn=fn, tn=tn)
    precision_defined = (tp + fp) > 0
    recall_defined = (tp + fn) > 0
    precision = tp / (tp + fp) if precision_defined else 0.0
    recall = tp / (tp + fn) if recall_defined else 0.0
    f1 = (
        2.0 * precision * recall / (precision + recall)
        if (precision + recall) > 0
        else 0.0
    )
    success = (tp + tn) / counts.total
    return AttackMetrics(
        precision=precision,
        recall=recall,
        f1=f1,
        attack_success=success,
        counts=counts,
        precision_defined=precision_defined,
        recall_defined=recall_defined,
    )


def random_guess_baseline(labels: np.ndarray) -> float:
    """Majority-class prior: max(p, 1 - p) of the positive-label fraction."""
    labels = np.asarray(labels)
    if len(labels) == 0:
        raise ValueError("labels must be nonempty")
    p = float(np.mean(labels == 1))
    return max(p, 1.0 - p)


def run_attack(
    ads: AttackDataset,
    spec: AttackModelSpec | None = None,
    seeds: tuple[int, ...] = (0, 1, 2, 3, 4),
) -> AttackReport:
    """Repeat the attack once per seed and report per-seed plus mean metrics.

    Args:
        ads: Attack dataset.
        spec: Attack protocol (defaults to the standard shape).
        seeds: Repetition seeds; the default five repetitions use 0..4.
    """
    spec = spec or AttackModelSpec()
    per_rep: list[AttackMetrics] = []
    start = time.perf_counter()
    for seed in seeds:
        fitted = train_attack(ads, spec, seed)
        preds = fitted.predict(ads.test_X)
        per_rep.append(attack_metrics(preds, ads.test_y))
    elapsed = time.perf_counter() - start
    return AttackReport(
        attribute=ads.attribute,
        repetitions=len(seeds),
        per_repetition=per_rep,
        precision=float(np.mean([m.precision for m in per_rep])),
        recall=float(np.mean([m.recall for m in per_rep])),
        f1=float(np.mean([m.f1 for m in per_rep])),
        attack_success=float(np.mean([m.attack_success for m in per_rep])),
        random_guess=random_guess_baseline(ads.test_y),
        train_seconds=elapsed,
        seeds=tuple(seeds),
    )
