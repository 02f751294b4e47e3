"""Explanation-noise defense: perturb released attribution matrices.

Four variants: {random, dp} x {laplace, gaussian}. The dp variants calibrate
per-column scales from an empirical sensitivity (the observed column range of
the released matrix), so they are an empirical calibration rather than a
formal worst-case DP guarantee; reports carry that flag.
"""

from __future__ import annotations

import time
from dataclasses import dataclass

import numpy as np

from .explainers import ExplanationMatrix
from .util import derived_rng

FAMILIES = ("laplace", "gaussian")
CALIBRATIONS = ("random", "dp")


@dataclass(frozen=True)
class NoiseSpec:
    """One noise variant.

    dp-laplace uses per-column scale delta_j / epsilon; dp-gaussian uses
    sigma_j = delta_j * sqrt(2 ln(1.25/delta)) / epsilon (valid for
    epsilon <= 1). random draws one scale factor per column uniformly from
    random_scale_range and multiplies it by delta_j.
    """

    family: str
    calibration: str
    epsilon: float = 1.0
    delta: float = 1e-6
    random_scale_range: tuple[float, float] = (0.5, 1.5)
    seed: int = 0

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise ValueError(f"family must be one of {FAMILIES}")
        if self.calibration not in CALIBRATIONS:
            raise ValueError(f"calibration must be one of {CALIBRATIONS}")
        if self.calibration == "dp" and self.epsilon <= 0:
            raise ValueError("epsilon must be positive for dp calibration")
        lo, hi = self.random_scale_range
        if self.calibration == "random" and not (0 < lo < hi):
            raise ValueError("random_scale_range must satisfy 0 < low < high")

    @property
    def name(self) -> str:
        return f"{self.calibration}-{self.family}"

    def to_dict(self) -> dict:
        return {
            "family": self.family,
            "calibration": self.calibration,
            "epsilon": self.epsilon,
            "delta": self.delta,
            "random_scale_range": list(self.random_scale_range),
            "seed": self.seed,
        }


@dataclass(frozen=True)
class SensitivityProfile:
    """Per-column empirical sensitivity: observed max - min."""

    deltas: np.ndarray
    clip: float | None = None

    def __post_init__(self):
        object.__setattr__(
            self, "deltas", np.asarray(self.deltas, dtype=np.float64)
        )
        if np.any(self.deltas < 0):
            raise ValueError("sensitivities must be nonnegative")


def estimate_sensitivity(
    expl: ExplanationMatrix, clip: float | None = None
) -> SensitivityProfile:
    """Observed per-column range of the matrix; constant columns get zero."""
    if expl.n_records == 0:
        raise ValueError("empty explanation matrix")
    deltas = expl.values.max(axis=0) - expl.values.min(axis=0)
    if clip is not None:
        deltas = np.minimum(deltas, clip)
    return SensitivityProfile(deltas=deltas, clip=clip)


def noise_scales(spec: NoiseSpec, profile: SensitivityProfile) -> np.ndarray:
    """Per-column noise scale (Laplace b or Gaussian sigma)."""
    deltas = profile.deltas
    if spec.calibration == "dp":
        if spec.family == "laplace":
            return deltas / spec.epsilon
        return deltas * np.sqrt(2.0 * np.log(1.25 / spec.delta)) / spec.epsilon
    lo, hi = spec.random_scale_range
    factors = derived_rng(spec.seed, "column-scales").uniform(lo, hi, len(deltas))
    return factors * deltas


def perturb(expl: ExplanationMatrix, spec: NoiseSpec) -> ExplanationMatrix:
    """Add independent noise to every cell; shape and alignment are preserved.

    The dp path releases each record through its own derived RNG stream so
    records can be processed in parallel (or audited one release at a time)
    without changing the output; the random path is one vectorized draw.
    """
    if expl.n_records == 0:
        raise ValueError("empty explanation matrix")
    profile = estimate_sensitivity(expl)
    scales = noise_scales(spec, profile)
    values = expl.values.copy()
    start = time.perf_counter()
    if spec.calibration == "dp":
        active = np.flatnonzero(scales > 0)
        for i, rid in enumerate(expl.record_ids):
            rng = derived_rng(spec.seed, "cell", int(rid))
            for j in active:
                if spec.family == "laplace":
                    values[i, j] += rng.laplace(0.0, scales[j])
                else:
                    values[i, j] += rng.normal(0.0, scales[j])
    else:
        rng = derived_rng(spec.seed, "matrix")
        active = scales > 0
        n = expl.n_records
        if active.any():
            if spec.family == "laplace":
                noise = rng.laplace(0.0, scales[active], size=(n, int(active.sum())))
            else:
                noise = rng.normal(0.0, scales[active], size=(n, int(active.sum())))
            values[:, active] += noise
    elapsed_ms = (time.perf_counter() - start) * 1000.0
    out = expl.copy_with(
        values,
        noise_spec=spec.to_dict(),
        noise_scales=[float(s) for s in scales],
        sensitivity=[float(d) for d in profile.deltas],
        dp_guarantee="empirical-sensitivity calibration, not a worst-case bound"
        if spec.calibration == "dp"
        else None,
    )
    out.ms_per_record = elapsed_ms / expl.n_records
    out.meta["noise_ms_per_record"] = out.ms_per_record
    return out
