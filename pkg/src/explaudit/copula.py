"""Gaussian-copula synthetic tabular data with validity/structure diagnostics.

The copula is fitted on the pre-encoding representation (original columns,
target included): per-column marginals coupled through the correlation matrix
of normal scores. Samples are pushed back through the fitted dataset's
codebook so the synthetic set carries the identical encoding, which is what
keeps the structure diagnostic at 1.0 by construction.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import pandas as pd
from scipy import stats
from scipy.special import ndtr, ndtri

from .tabular import (
    ColumnKind,
    RawDataset,
    TabularDataset,
    encode_with,
    from_frame,
)

_EIG_FLOOR = 1e-6


@dataclass
class ContinuousMarginal:
    """Empirical CDF with linear interpolation between order statistics.

    Parameters
    ----------
    sorted_values : np.ndarray
        Ascending observed values; the inverse transform never leaves
        [min, max] of these.
    """

    sorted_values: np.ndarray

    @classmethod
    def fit(cls, values: np.ndarray) -> "ContinuousMarginal":
        return cls(np.sort(np.asarray(values, dtype=np.float64)))

    def _probs(self) -> np.ndarray:
        n = len(self.sorted_values)
        return (np.arange(n) + 0.5) / n

    def normal_scores(self, values: np.ndarray) -> np.ndarray:
        ranks = stats.rankdata(values, method="average")
        u = (ranks - 0.5) / len(values)
        return ndtri(u)

    def ppf(self, u: np.ndarray) -> np.ndarray:
        return np.interp(u, self._probs(), self.sorted_values)


@dataclass
class CategoricalMarginal:
    """Frequency table; categories occupy stacked probability intervals.

    Parameters
    ----------
    categories : list
        Category values in a fixed (sorted) order.
    probs : np.ndarray
        Relative frequency of each category.
    """

    categories: list
    probs: np.ndarray

    @classmethod
    def fit(cls, values) -> "CategoricalMarginal":
        series = pd.Series(values)
        counts = series.value_counts()
        cats = sorted(counts.index.tolist(), key=str)
        probs = np.array([counts[c] for c in cats], dtype=np.float64)
        return cls(cats, probs / probs.sum())

    def _cum(self) -> np.ndarray:
        return np.cumsum(self.probs)

    def _midpoints(self) -> np.ndarray:
        cum = self._cum()
        return cum - self.probs / 2.0

    def normal_scores(self, values) -> np.ndarray:
        mid = {c: m for c, m in zip(self.categories, self._midpoints())}
        u = np.array([mid[v] for v in values])
        return ndtri(np.clip(u, 1e-9, 1 - 1e-9))

    def ppf(self, u: np.ndarray):
        idx = np.searchsorted(self._cum(), u, side="left")
        idx = np.clip(idx, 0, len(self.categories) - 1)
        return [self.categories[i] for i in idx]


@dataclass
class DiagnosticScore:
    """Validity and structure scores, both in [0, 1]."""

    data_validity: float
    data_structure: float
    details: dict

    def to_dict(self) -> dict:
        return {
            "data_validity": self.data_validity,
            "data_structure": self.data_structure,
            "details": self.details,
        }


@dataclass
class CopulaModel:
    """Fitted marginals plus the repaired normal-scores correlation matrix."""

    column_names: list[str]
    kinds: list[ColumnKind]
    marginals: list
    correlation: np.ndarray
    codebook: object
    schema: list
    fit_row_keys: set
    n_fit: int


def _repair_psd(corr: np.ndarray) -> np.ndarray:
    """Clip eigenvalues at a small floor and renormalize to unit diagonal."""
    corr = (corr + corr.T) / 2.0
    vals, vecs = np.linalg.eigh(corr)
    if vals.min() >= _EIG_FLOOR:
        return corr
    vals = np.clip(vals, _EIG_FLOOR, None)
    fixed = vecs @ np.diag(vals) @ vecs.T
    scale = np.sqrt(np.diag(fixed))
    fixed = fixed / np.outer(scale, scale)
    np.fill_diagonal(fixed, 1.0)
    return fixed


def _row_key(row) -> tuple:
    out = []
    for v in row:
        if isinstance(v, float):
            out.append(round(v, 12))
        else:
            out.append(v)
    return tuple(out)


def fit(ds: TabularDataset) -> CopulaModel:
    """Fit marginals and the normal-scores correlation.

    Parameters
    ----------
    ds : TabularDataset
        Encoded dataset; it is decoded back to original columns (target
        included) before fitting.

    Returns
    -------
    CopulaModel
    """
    if ds.n_rows < 2:
        raise ValueError("copula fitting needs at least 2 rows")
    frame = ds.decode(include_target=True)
    kinds = [codec.kind for codec in ds.codebook.codecs]
    kinds.append(ds.codebook.target.kind)
    names = list(frame.columns)

    marginals = []
    scores = np.empty((len(frame), len(names)))
    constant = np.zeros(len(names), dtype=bool)
    for j, (name, kind) in enumerate(zip(names, kinds)):
        col = frame[name].to_numpy()
        if kind == ColumnKind.CONTINUOUS:
            marginal = ContinuousMarginal.fit(col)
            constant[j] = marginal.sorted_values[0] == marginal.sorted_values[-1]
        else:
            marginal = CategoricalMarginal.fit(col)
            constant[j] = len(marginal.categories) == 1
        marginals.append(marginal)
        scores[:, j] = 0.0 if constant[j] else marginal.normal_scores(col)

    corr = np.eye(len(names))
    free = np.flatnonzero(~constant)
    if len(free) >= 2:
        sub = np.corrcoef(scores[:, free], rowvar=False)
        corr[np.ix_(free, free)] = _repair_psd(sub)

    keys = {_row_key(row) for row in frame.itertuples(index=False, name=None)}
    return CopulaModel(
        column_names=names,
        kinds=kinds,
        marginals=marginals,
        correlation=corr,
        codebook=ds.codebook,
        schema=list(ds.schema),
        fit_row_keys=keys,
        n_fit=ds.n_rows,
    )


def _draw_frame(model: CopulaModel, n: int, rng: np.random.Generator) -> pd.DataFrame:
    chol = np.linalg.cholesky(model.correlation)
    Z = rng.standard_normal((n, len(model.column_names))) @ chol.T
    U = ndtr(Z)
    data = {}
    for j, (name, marginal) in enumerate(zip(model.column_names, model.marginals)):
        data[name] = marginal.ppf(U[:, j])
    return pd.DataFrame(data)


def sample(model: CopulaModel, n: int, seed: int) -> TabularDataset:
    """Draw n synthetic rows.

    Parameters
    ----------
    model : CopulaModel
    n : int
        Number of rows, >= 1.
    seed : int
        Sampling is deterministic given the seed.

    Returns
    -------
    TabularDataset
        Encoded with the fitted dataset's codebook. When the schema has at
        least one continuous column, rows that exactly reproduce a fit row
        are redrawn.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    rng = np.random.default_rng(seed)
    frame = _draw_frame(model, n, rng)
    has_continuous = any(k == ColumnKind.CONTINUOUS for k in model.kinds)
    if has_continuous:
        for _ in range(20):
            keys = [_row_key(r) for r in frame.itertuples(index=False, name=None)]
            collisions = [i for i, k in enumerate(keys) if k in model.fit_row_keys]
            if not collisions:
                break
            redraw = _draw_frame(model, len(collisions), rng)
            frame.iloc[collisions] = redraw.to_numpy()
        else:
            raise RuntimeError("could not avoid duplicating fit rows")
    raw = from_frame(frame, model.schema)
    return encode_with(model.codebook, raw)


def diagnostics(real: TabularDataset, synth: TabularDataset) -> DiagnosticScore:
    """Score a synthetic set against the real one.

    data_validity is the fraction of (column, check) pairs passing three
    checks per column: kind/type match, no missing values, and range
    containment (continuous) or category subset (categorical/binary).
    data_structure is 1.0 iff column names and order match, else the
    matching fraction.
    """
    if real.n_rows == 0 or synth.n_rows == 0:
        raise ValueError("diagnostics need nonempty datasets")
    real_frame = real.decode(include_target=True)
    synth_frame = synth.decode(include_target=True)
    real_kinds = [c.kind for c in real.codebook.codecs] + [real.codebook.target.kind]
    synth_kinds = [c.kind for c in synth.codebook.codecs] + [
        synth.codebook.target.kind
    ]

    real_cols = list(real_frame.columns)
    synth_cols = list(synth_frame.columns)
    width = max(len(real_cols), len(synth_cols))
    matches = sum(
        1
        for i in range(min(len(real_cols), len(synth_cols)))
        if real_cols[i] == synth_cols[i]
    )
    structure = 1.0 if real_cols == synth_cols else matches / width

    checks = 0
    passed = 0
    failures: list[str] = []
    for j, name in enumerate(real_cols):
        kind = real_kinds[j]
        present = name in synth_frame.columns
        # check 1: column exists with the same kind
        checks += 1
        kind_ok = present and synth_kinds[synth_cols.index(name)] == kind
        if kind_ok:
            passed += 1
        else:
            failures.append(f"{name}: kind mismatch or missing column")
        # check 2: no missing values
        checks += 1
        if present and not synth_frame[name].isna().any():
            passed += 1
        elif present:
            failures.append(f"{name}: missing values")
        # check 3: range containment / category subset
        checks += 1
        if present:
            if kind == ColumnKind.CONTINUOUS:
                lo, hi = real_frame[name].min(), real_frame[name].max()
                vals = synth_frame[name]
                if bool((vals >= lo).all() and (vals <= hi).all()):
                    passed += 1
                else:
                    failures.append(f"{name}: values outside [{lo}, {hi}]")
            else:
                real_cats = set(map(str, real_frame[name].unique()))
                synth_cats = set(map(str, synth_frame[name].unique()))
                if synth_cats <= real_cats:
                    passed += 1
                else:
                    failures.append(
                        f"{name}: unseen categories {sorted(synth_cats - real_cats)}"
                    )

    positives = float(np.mean(synth.y)) if synth.n_rows else 0.0
    details = {
        "failures": failures,
        "synthetic_positive_rate": positives,
        "real_positive_rate": float(np.mean(real.y)),
    }
    return DiagnosticScore(
        data_validity=passed / checks,
        data_structure=structure,
        details=details,
    )
