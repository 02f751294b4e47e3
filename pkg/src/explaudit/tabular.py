"""CSV ingestion, preprocessing, splitting, and correlation screening.

The preprocessing contract: rows with missing values are dropped, categorical
columns are one-hot encoded, continuous columns are min-max scaled to [0, 1],
the target is binarized, and each sensitive attribute is reduced to a binary
vector via its declared criterion. Sensitive attributes stay in the feature
matrix; the binarized copies exist only as attack labels.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path

import numpy as np
import pandas as pd


class SchemaError(ValueError):
    """Raised when a file or frame does not match the declared schema."""


class PreprocessError(ValueError):
    """Raised when preprocessing cannot produce a usable dataset."""


class UndefinedCorrelationError(ValueError):
    """Raised when a Pearson coefficient is requested for a constant vector."""


class ColumnKind(str, Enum):
    CONTINUOUS = "continuous"
    CATEGORICAL = "categorical"
    BINARY = "binary"


class ColumnRole(str, Enum):
    FEATURE = "feature"
    SENSITIVE = "sensitive"
    TARGET = "target"


@dataclass(frozen=True)
class ColumnSchema:
    """One declared input column.

    Args:
        name: Column header in the CSV.
        kind: Value domain (continuous, categorical, binary).
        role: How the column is used (feature, sensitive, target).
    """

    name: str
    kind: ColumnKind
    role: ColumnRole = ColumnRole.FEATURE

    def __post_init__(self):
        object.__setattr__(self, "kind", ColumnKind(self.kind))
        object.__setattr__(self, "role", ColumnRole(self.role))


_SPEC_OPS = {
    "==": lambda v, ref: v == ref,
    "<": lambda v, ref: v < ref,
    "<=": lambda v, ref: v <= ref,
    ">": lambda v, ref: v > ref,
    ">=": lambda v, ref: v >= ref,
}


@dataclass(frozen=True)
class SensitiveSpec:
    """Binarization criterion for one sensitive attribute.

    The criterion maps every attribute value to 1 (criterion holds) or 0,
    e.g. ``Sex == Male`` or ``Age < 40``.
    """

    attribute_name: str
    op: str
    value: object

    def __post_init__(self):
        if self.op not in _SPEC_OPS:
            raise ValueError(f"unsupported criterion operator {self.op!r}")

    @classmethod
    def parse(cls, text: str) -> "SensitiveSpec":
        """Parse a compact criterion string like ``"Sex == Male"``."""
        m = re.match(r"^\s*(\S+)\s*(==|<=|>=|<|>)\s*(.+?)\s*$", text)
        if not m:
            raise ValueError(f"cannot parse sensitive criterion {text!r}")
        name, op, raw = m.groups()
        value: object = raw
        try:
            value = float(raw)
        except ValueError:
            pass
        return cls(name, op, value)

    def apply(self, values: pd.Series) -> np.ndarray:
        """Evaluate the criterion on a column, returning an int8 0/1 vector."""
        if isinstance(self.value, (int, float)):
            col = pd.to_numeric(values, errors="coerce")
        else:
            col = values.astype(str).str.strip()
        result = _SPEC_OPS[self.op](col, self.value)
        return np.asarray(result, dtype=np.int8)

    def describe(self) -> str:
        return f"{self.attribute_name} {self.op} {self.value}"


@dataclass(frozen=True)
class ColumnCodec:
    """Fitted encoding state for one original column."""

    name: str
    kind: ColumnKind
    vmin: float | None = None
    vmax: float | None = None
    categories: tuple[str, ...] | None = None


@dataclass(frozen=True)
class FeatureGroup:
    """Block of encoded feature columns that came from one original column."""

    name: str
    kind: ColumnKind
    indices: tuple[int, ...]
    categories: tuple[str, ...] | None = None


@dataclass(frozen=True)
class Codebook:
    """Everything needed to encode new raw rows the same way as the fit data."""

    codecs: tuple[ColumnCodec, ...]
    target: ColumnCodec
    target_positive: str | None
    sensitive_specs: tuple[SensitiveSpec, ...]

    def feature_names(self) -> list[str]:
        names: list[str] = []
        for codec in self.codecs:
            if codec.kind == ColumnKind.CATEGORICAL:
                names.extend(f"{codec.name}={cat}" for cat in codec.categories)
            else:
                names.append(codec.name)
        return names

    def groups(self) -> list[FeatureGroup]:
        groups: list[FeatureGroup] = []
        pos = 0
        for codec in self.codecs:
            width = len(codec.categories) if codec.kind == ColumnKind.CATEGORICAL else 1
            groups.append(
                FeatureGroup(
                    codec.name,
                    codec.kind,
                    tuple(range(pos, pos + width)),
                    codec.categories,
                )
            )
            pos += width
        return groups

    def encode_features(self, frame: pd.DataFrame) -> np.ndarray:
        """Encode raw feature columns; unknown categories become all-zero groups."""
        blocks: list[np.ndarray] = []
        n = len(frame)
        for codec in self.codecs:
            col = frame[codec.name]
            if codec.kind == ColumnKind.CATEGORICAL:
                block = np.zeros((n, len(codec.categories)))
                vals = col.astype(str).str.strip().to_numpy()
                index = {cat: j for j, cat in enumerate(codec.categories)}
                for i, v in enumerate(vals):
                    j = index.get(v)
                    if j is not None:
                        block[i, j] = 1.0
                blocks.append(block)
            elif codec.kind == ColumnKind.CONTINUOUS:
                raw = pd.to_numeric(col, errors="coerce").to_numpy(dtype=np.float64)
                span = codec.vmax - codec.vmin
                scaled = np.zeros(n) if span == 0 else (raw - codec.vmin) / span
                blocks.append(scaled.reshape(-1, 1))
            else:
                raw = pd.to_numeric(col, errors="coerce").to_numpy(dtype=np.float64)
                blocks.append(raw.reshape(-1, 1))
        return np.hstack(blocks) if blocks else np.zeros((n, 0))

    def encode_target(self, col: pd.Series) -> np.ndarray:
        if self.target.kind == ColumnKind.CATEGORICAL:
            vals = col.astype(str).str.strip()
            return (vals == self.target_positive).to_numpy(dtype=np.int8)
        raw = pd.to_numeric(col, errors="coerce").to_numpy()
        return (raw >= 0.5).astype(np.int8)

    def decode_features(self, X: np.ndarray) -> pd.DataFrame:
        """Map encoded rows back to original-unit columns (copula fitting)."""
        out: dict[str, object] = {}
        for group, codec in zip(self.groups(), self.codecs):
            block = X[:, group.indices]
            if codec.kind == ColumnKind.CATEGORICAL:
                picks = np.argmax(block, axis=1)
                out[codec.name] = [codec.categories[j] for j in picks]
            elif codec.kind == ColumnKind.CONTINUOUS:
                span = codec.vmax - codec.vmin
                out[codec.name] = block[:, 0] * span + codec.vmin
            else:
                out[codec.name] = block[:, 0].astype(np.int8)
        return pd.DataFrame(out)

    def decode_target(self, y: np.ndarray) -> pd.Series:
        if self.target.kind == ColumnKind.CATEGORICAL:
            negative = next(
                c for c in self.target.categories if c != self.target_positive
            )
            vals = np.where(y == 1, self.target_positive, negative)
            return pd.Series(vals, name=self.target.name)
        return pd.Series(y.astype(np.int8), name=self.target.name)

    def to_dict(self) -> dict:
        return {
            "codecs": [
                {
                    "name": c.name,
                    "kind": c.kind.value,
                    "vmin": c.vmin,
                    "vmax": c.vmax,
                    "categories": list(c.categories) if c.categories else None,
                }
                for c in self.codecs
            ],
            "target": {
                "name": self.target.name,
                "kind": self.target.kind.value,
                "categories": list(self.target.categories)
                if self.target.categories
                else None,
            },
            "target_positive": self.target_positive,
            "sensitive_specs": [
                {"attribute": s.attribute_name, "op": s.op, "value": s.value}
                for s in self.sensitive_specs
            ],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Codebook":
        codecs = tuple(
            ColumnCodec(
                c["name"],
                ColumnKind(c["kind"]),
                c["vmin"],
                c["vmax"],
                tuple(c["categories"]) if c["categories"] else None,
            )
            for c in d["codecs"]
        )
        t = d["target"]
        target = ColumnCodec(
            t["name"],
            ColumnKind(t["kind"]),
            categories=tuple(t["categories"]) if t["categories"] else None,
        )
        specs = tuple(
            SensitiveSpec(s["attribute"], s["op"], s["value"])
            for s in d["sensitive_specs"]
        )
        return cls(codecs, target, d["target_positive"], specs)


@dataclass
class RawDataset:
    """Parsed but unencoded rows; unparseable cells are recorded as missing."""

    schema: list[ColumnSchema]
    frame: pd.DataFrame

    @property
    def n_rows(self) -> int:
        return len(self.frame)

    @property
    def n_missing_cells(self) -> int:
        return int(self.frame.isna().sum().sum())


@dataclass
class TabularDataset:
    """Encoded dataset: feature matrix, binary target, sensitive label vectors."""

    schema: list[ColumnSchema]
    feature_names: list[str]
    X: np.ndarray
    y: np.ndarray
    sensitive: dict[str, np.ndarray]
    record_ids: np.ndarray
    codebook: Codebook

    def __post_init__(self):
        self.X = np.asarray(self.X, dtype=np.float64)
        self.y = np.asarray(self.y, dtype=np.int8)
        self.record_ids = np.asarray(self.record_ids, dtype=np.int64)
        self.validate()

    @property
    def n_rows(self) -> int:
        return self.X.shape[0]

    @property
    def n_features(self) -> int:
        return self.X.shape[1]

    @property
    def groups(self) -> list[FeatureGroup]:
        return self.codebook.groups()

    def validate(self) -> None:
        n = self.X.shape[0]
        if len(self.y) != n or len(self.record_ids) != n:
            raise ValueError("row count mismatch between matrix and labels")
        for name, vec in self.sensitive.items():
            if len(vec) != n:
                raise ValueError(f"sensitive vector {name!r} length mismatch")
        if self.X.shape[1] != len(self.feature_names):
            raise ValueError("feature name count does not match matrix width")
        if not np.all(np.isfinite(self.X)):
            raise ValueError("non-finite values in feature matrix")
        for group in self.groups:
            if group.kind == ColumnKind.CATEGORICAL and n > 0:
                sums = self.X[:, group.indices].sum(axis=1)
                # all-zero rows are allowed only for categories unseen at fit
                if not np.all((np.abs(sums - 1.0) < 1e-9) | (sums == 0.0)):
                    raise ValueError(f"one-hot group {group.name!r} is not a simplex")

    def take(self, indices: np.ndarray) -> "TabularDataset":
        """Row subset preserving record identities."""
        indices = np.asarray(indices)
        return TabularDataset(
            schema=self.schema,
            feature_names=self.feature_names,
            X=self.X[indices],
            y=self.y[indices],
            sensitive={k: v[indices] for k, v in self.sensitive.items()},
            record_ids=self.record_ids[indices],
            codebook=self.codebook,
        )

    def decode(self, include_target: bool = True) -> pd.DataFrame:
        frame = self.codebook.decode_features(self.X)
        if include_target:
            frame[self.codebook.target.name] = self.codebook.decode_target(self.y)
        return frame

    def save(self, path: str | Path) -> None:
        meta = {
            "schema": [
                {"name": c.name, "kind": c.kind.value, "role": c.role.value}
                for c in self.schema
            ],
            "feature_names": self.feature_names,
            "sensitive_order": list(self.sensitive.keys()),
            "codebook": self.codebook.to_dict(),
        }
        arrays = {
            "X": self.X,
            "y": self.y,
            "record_ids": self.record_ids,
            "meta_json": np.array(json.dumps(meta)),
        }
        for i, (_, vec) in enumerate(self.sensitive.items()):
            arrays[f"sens_{i}"] = vec
        np.savez_compressed(path, **arrays)

    @classmethod
    def load(cls, path: str | Path) -> "TabularDataset":
        with np.load(path, allow_pickle=False) as data:
            meta = json.loads(str(data["meta_json"]))
            sensitive = {
                name: data[f"sens_{i}"]
                for i, name in enumerate(meta["sensitive_order"])
            }
            return cls(
                schema=[ColumnSchema(**c) for c in meta["schema"]],
                feature_names=meta["feature_names"],
                X=data["X"],
                y=data["y"],
                sensitive=sensitive,
                record_ids=data["record_ids"],
                codebook=Codebook.from_dict(meta["codebook"]),
            )


@dataclass
class SplitBundle:
    """Disjoint target-training split plus the two auxiliary attack halves."""

    target_train: TabularDataset
    aux_attack_train: TabularDataset
    aux_attack_test: TabularDataset
    seed: int

    def parts(self) -> dict[str, TabularDataset]:
        return {
            "target_train": self.target_train,
            "aux_attack_train": self.aux_attack_train,
            "aux_attack_test": self.aux_attack_test,
        }

    def aux_all(self) -> TabularDataset:
        return concat(self.aux_attack_train, self.aux_attack_test)

    def save(self, path: str | Path) -> None:
        arrays: dict[str, np.ndarray] = {"seed": np.array(self.seed)}
        metas = {}
        for tag, ds in self.parts().items():
            meta = {
                "schema": [
                    {"name": c.name, "kind": c.kind.value, "role": c.role.value}
                    for c in ds.schema
                ],
                "feature_names": ds.feature_names,
                "sensitive_order": list(ds.sensitive.keys()),
                "codebook": ds.codebook.to_dict(),
            }
            metas[tag] = meta
            arrays[f"{tag}__X"] = ds.X
            arrays[f"{tag}__y"] = ds.y
            arrays[f"{tag}__ids"] = ds.record_ids
            for i, vec in enumerate(ds.sensitive.values()):
                arrays[f"{tag}__sens_{i}"] = vec
        arrays["meta_json"] = np.array(json.dumps(metas))
        np.savez_compressed(path, **arrays)

    @classmethod
    def load(cls, path: str | Path) -> "SplitBundle":
        with np.load(path, allow_pickle=False) as data:
            metas = json.loads(str(data["meta_json"]))
            parts = {}
            for tag, meta in metas.items():
                sensitive = {
                    name: data[f"{tag}__sens_{i}"]
                    for i, name in enumerate(meta["sensitive_order"])
                }
                parts[tag] = TabularDataset(
                    schema=[ColumnSchema(**c) for c in meta["schema"]],
                    feature_names=meta["feature_names"],
                    X=data[f"{tag}__X"],
                    y=data[f"{tag}__y"],
                    sensitive=sensitive,
                    record_ids=data[f"{tag}__ids"],
                    codebook=Codebook.from_dict(meta["codebook"]),
                )
            return cls(seed=int(data["seed"]), **parts)


def concat(a: TabularDataset, b: TabularDataset) -> TabularDataset:
    if a.feature_names != b.feature_names:
        raise ValueError("cannot concatenate datasets with different encodings")
    return TabularDataset(
        schema=a.schema,
        feature_names=a.feature_names,
        X=np.vstack([a.X, b.X]),
        y=np.concatenate([a.y, b.y]),
        sensitive={
            k: np.concatenate([a.sensitive[k], b.sensitive[k]]) for k in a.sensitive
        },
        record_ids=np.concatenate([a.record_ids, b.record_ids]),
        codebook=a.codebook,
    )


def load_csv(path: str | Path, schema: list[ColumnSchema]) -> RawDataset:
    """Read a CSV against a declared schema.

    Values that fail to parse for their column kind are recorded as missing
    and resolved (dropped) at preprocessing time. A header that does not match
    the schema is fatal.
    """
    path = Path(path)
    if not path.exists():
        raise SchemaError(f"no such file: {path}")
    frame = pd.read_csv(path, dtype=str, keep_default_na=False, skipinitialspace=True)
    expected = [c.name for c in schema]
    if list(frame.columns) != expected:
        raise SchemaError(
            f"header {list(frame.columns)} does not match schema {expected}"
        )
    return _parse_frame(frame, schema)


def from_frame(frame: pd.DataFrame, schema: list[ColumnSchema]) -> RawDataset:
    """Build a RawDataset from an in-memory frame (fixtures, synthetic data)."""
    expected = [c.name for c in schema]
    if list(frame.columns) != expected:
        raise SchemaError(
            f"columns {list(frame.columns)} do not match schema {expected}"
        )
    return _parse_frame(frame.astype(str), schema)


def _parse_frame(frame: pd.DataFrame, schema: list[ColumnSchema]) -> RawDataset:
    _validate_schema(schema)
    parsed = pd.DataFrame(index=frame.index)
    for col in schema:
        raw = frame[col.name].astype(str).str.strip()
        if col.kind == ColumnKind.CATEGORICAL:
            vals = raw.replace({"": None, "?": None, "nan": None})
            parsed[col.name] = vals
        else:
            nums = pd.to_numeric(raw, errors="coerce")
            if col.kind == ColumnKind.BINARY:
                nums = nums.where(nums.isin([0.0, 1.0]))
            parsed[col.name] = nums
    return RawDataset(schema=list(schema), frame=parsed)


def _validate_schema(schema: list[ColumnSchema]) -> None:
    names = [c.name for c in schema]
    if len(set(names)) != len(names):
        raise SchemaError("duplicate column names in schema")
    targets = [c for c in schema if c.role == ColumnRole.TARGET]
    if len(targets) != 1:
        raise SchemaError("schema must declare exactly one target column")
    if not any(c.role == ColumnRole.SENSITIVE for c in schema):
        raise SchemaError("schema must declare at least one sensitive column")


def preprocess(
    raw: RawDataset,
    sensitive_specs: list[SensitiveSpec],
    target_positive: str | None = None,
) -> TabularDataset:
    """Drop incomplete rows, encode features, binarize target and sensitives.

    Args:
        raw: Parsed dataset (missing cells as NaN/None).
        sensitive_specs: One binarization criterion per audited attribute.
        target_positive: Category mapped to label 1 when the target column is
            categorical; ignored for numeric binary targets.

    Returns:
        TabularDataset with min-max scaled continuous features, one-hot
        categorical features, and aligned label vectors.
    """
    schema = raw.schema
    _validate_schema(schema)
    by_name = {c.name: c for c in schema}
    for spec in sensitive_specs:
        col = by_name.get(spec.attribute_name)
        if col is None:
            raise PreprocessError(f"sensitive attribute {spec.attribute_name!r} absent")
        if col.role != ColumnRole.SENSITIVE:
            raise PreprocessError(
                f"column {spec.attribute_name!r} is not declared sensitive"
            )

    kept = raw.frame.dropna(axis=0, how="any")
    if len(kept) == 0:
        raise PreprocessError("all rows dropped during missing-value removal")

    target_col = next(c for c in schema if c.role == ColumnRole.TARGET)
    feature_cols = [c for c in schema if c.role != ColumnRole.TARGET]

    codecs = []
    for col in feature_cols:
        series = kept[col.name]
        if col.kind == ColumnKind.CATEGORICAL:
            cats = tuple(sorted(series.astype(str).str.strip().unique()))
            codecs.append(ColumnCodec(col.name, col.kind, categories=cats))
        elif col.kind == ColumnKind.CONTINUOUS:
            vals = series.to_numpy(dtype=np.float64)
            codecs.append(
                ColumnCodec(col.name, col.kind, float(vals.min()), float(vals.max()))
            )
        else:
            codecs.append(ColumnCodec(col.name, col.kind, 0.0, 1.0))

    if target_col.kind == ColumnKind.CATEGORICAL:
        cats = tuple(sorted(kept[target_col.name].astype(str).str.strip().unique()))
        if target_positive is None:
            raise PreprocessError("categorical target requires target_positive")
        if target_positive not in cats:
            raise PreprocessError(
                f"target_positive {target_positive!r} not among {cats}"
            )
        if len(cats) != 2:
            raise PreprocessError(f"target must be binary, found categories {cats}")
        target_codec = ColumnCodec(target_col.name, target_col.kind, categories=cats)
    else:
        target_codec = ColumnCodec(target_col.name, target_col.kind)

    codebook = Codebook(
        codecs=tuple(codecs),
        target=target_codec,
        target_positive=target_positive,
        sensitive_specs=tuple(sensitive_specs),
    )

    X = codebook.encode_features(kept)
    y = codebook.encode_target(kept[target_col.name])
    sensitive = {
        spec.attribute_name: spec.apply(kept[spec.attribute_name])
        for spec in sensitive_specs
    }
    return TabularDataset(
        schema=list(schema),
        feature_names=codebook.feature_names(),
        X=X,
        y=y,
        sensitive=sensitive,
        record_ids=np.arange(len(kept), dtype=np.int64),
        codebook=codebook,
    )


def encode_with(codebook: Codebook, raw: RawDataset) -> TabularDataset:
    """Encode new raw rows with an existing codebook (synthetic data path)."""
    kept = raw.frame.dropna(axis=0, how="any")
    if len(kept) == 0:
        raise PreprocessError("all rows dropped during missing-value removal")
    X = codebook.encode_features(kept)
    y = codebook.encode_target(kept[codebook.target.name])
    sensitive = {
        spec.attribute_name: spec.apply(kept[spec.attribute_name])
        for spec in codebook.sensitive_specs
    }
    return TabularDataset(
        schema=list(raw.schema),
        feature_names=codebook.feature_names(),
        X=X,
        y=y,
        sensitive=sensitive,
        record_ids=np.arange(len(kept), dtype=np.int64),
        codebook=codebook,
    )


def split(ds: TabularDataset, seed: int) -> SplitBundle:
    """67/33 shuffle split; the 33% is halved into attack train/test.

    Sizes follow a fixed floor policy: target train gets floor(0.67 N),
    attack train gets floor(remainder / 2), attack test gets the rest.
    """
    n = ds.n_rows
    if n < 6:
        raise ValueError("dataset too small to split (need at least 6 rows)")
    rng = np.random.default_rng(seed)
    perm = rng.permutation(n)
    n_train = int(np.floor(0.67 * n))
    rem = n - n_train
    n_attack_train = rem // 2
    return SplitBundle(
        target_train=ds.take(perm[:n_train]),
        aux_attack_train=ds.take(perm[n_train : n_train + n_attack_train]),
        aux_attack_test=ds.take(perm[n_train + n_attack_train :]),
        seed=seed,
    )


def _resolve_vector(ds: TabularDataset, key: str) -> np.ndarray:
    if key in ("target", "y", ds.codebook.target.name):
        return ds.y.astype(np.float64)
    if key in ds.sensitive:
        return ds.sensitive[key].astype(np.float64)
    if key in ds.feature_names:
        return ds.X[:, ds.feature_names.index(key)]
    for group in ds.groups:
        if group.name == key and len(group.indices) == 1:
            return ds.X[:, group.indices[0]]
    raise KeyError(f"no column, sensitive attribute, or target named {key!r}")


def pearson(ds: TabularDataset, col_a: str, col_b: str) -> float:
    """Pearson product-moment correlation between two resolved vectors.

    Accepts feature column names, sensitive attribute names, or "target".
    """
    a = _resolve_vector(ds, col_a)
    b = _resolve_vector(ds, col_b)
    return pearson_vectors(a, b)


def pearson_vectors(a: np.ndarray, b: np.ndarray) -> float:
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape or a.size < 2:
        raise ValueError("need two equal-length vectors of size >= 2")
    da = a - a.mean()
    db = b - b.mean()
    denom = np.sqrt((da**2).sum() * (db**2).sum())
    if denom == 0:
        raise UndefinedCorrelationError("zero variance input")
    return float(np.clip((da * db).sum() / denom, -1.0, 1.0))


def screening_table(ds: TabularDataset) -> list[dict]:
    """Correlation screen: each sensitive attribute vs target and all features."""
    rows = []
    for name in ds.sensitive:
        rows.append(
            {
                "sensitive": name,
                "against": "target",
                "pearson": pearson(ds, name, "target"),
            }
        )
        own_group = next((g for g in ds.groups if g.name == name), None)
        own_indices = set(own_group.indices) if own_group else set()
        for j, feat in enumerate(ds.feature_names):
            if j in own_indices:
                continue
            try:
                rho = pearson_vectors(ds.sensitive[name], ds.X[:, j])
            except UndefinedCorrelationError:
                continue
            rows.append({"sensitive": name, "against": feat, "pearson": rho})
    return rows
