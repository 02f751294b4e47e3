"""Deterministic synthetic benchmark datasets.

Three census/credit/recidivism-flavored generators produce raw tabular data
with known class structure, so utility and attack results are stable across
machines. Column sets:

* ``adult``: age, workclass, education_num, marital_status, occupation,
  race, sex, capital_gain, hours_per_week -> income {<=50K, >50K}.
  Sensitive: ``sex == Male``, ``race == White``.
* ``credit``: duration_months, credit_amount, checking_status,
  savings_status, purpose, housing, employment, sex, age -> risk
  {bad, good}. Sensitive: ``sex == Male``, ``age > 25``.
* ``compas``: age, priors_count, juv_fel_count, length_of_stay,
  charge_degree, race, sex -> two_year_recid {0, 1}. Sensitive:
  ``race == African-American``, ``sex == Male``.

The ``adult`` generator is calibrated so that the Male rate is about 0.67,
the positive rate about 0.24, and the sex/income point correlation about
0.216. Small bundled CSV copies (with a few percent missing cells in the
adult one) live in ``explaudit.fixtures_data`` for loader and CLI demos.
"""

from __future__ import annotations

from importlib import resources

import numpy as np
import pandas as pd

from .tabular import ColumnSchema, RawDataset, from_frame
from .util import derived_rng

FIXTURE_NAMES = ("adult", "credit", "compas")

# P(Male | y) values chosen so that with P(y=1)=0.24 the overall Male rate
# is 0.67 and the phi coefficient between sex and income is about 0.216.
_ADULT_P_MALE_POS = 0.851
_ADULT_P_MALE_NEG = 0.6129

_SCHEMAS: dict[str, list[tuple[str, str, str]]] = {
    "adult": [
        ("age", "continuous", "feature"),
        ("workclass", "categorical", "feature"),
        ("education_num", "continuous", "feature"),
        ("marital_status", "categorical", "feature"),
        ("occupation", "categorical", "feature"),
        ("race", "categorical", "sensitive"),
        ("sex", "categorical", "sensitive"),
        ("capital_gain", "continuous", "feature"),
        ("hours_per_week", "continuous", "feature"),
        ("income", "categorical", "target"),
    ],
    "credit": [
        ("duration_months", "continuous", "feature"),
        ("credit_amount", "continuous", "feature"),
        ("checking_status", "categorical", "feature"),
        ("savings_status", "categorical", "feature"),
        ("purpose", "categorical", "feature"),
        ("housing", "categorical", "feature"),
        ("employment", "categorical", "feature"),
        ("sex", "categorical", "sensitive"),
        ("age", "continuous", "sensitive"),
        ("risk", "categorical", "target"),
    ],
    "compas": [
        ("age", "continuous", "feature"),
        ("priors_count", "continuous", "feature"),
        ("juv_fel_count", "continuous", "feature"),
        ("length_of_stay", "continuous", "feature"),
        ("charge_degree", "categorical", "feature"),
        ("race", "categorical", "sensitive"),
        ("sex", "categorical", "sensitive"),
        ("two_year_recid", "binary", "target"),
    ],
}

_CONFIGS: dict[str, dict] = {
    "adult": {
        "sensitive": ["sex == Male", "race == White"],
        "target_positive": ">50K",
        "default_rows": 8000,
        "architecture": "default",
    },
    "credit": {
        "sensitive": ["sex == Male", "age > 25"],
        "target_positive": "good",
        "default_rows": 1000,
        "architecture": "default",
    },
    "compas": {
        "sensitive": ["race == African-American", "sex == Male"],
        "target_positive": None,
        "default_rows": 1200,
        "architecture": "default",
    },
}


def fixture_schema(name: str) -> list[ColumnSchema]:
    if name not in _SCHEMAS:
        raise KeyError(f"unknown fixture {name!r}; choose from {FIXTURE_NAMES}")
    return [ColumnSchema(n, k, r) for n, k, r in _SCHEMAS[name]]


def dataset_config(name: str) -> dict:
    """JSON-ready description of a fixture: schema, sensitive specs, target."""
    if name not in _CONFIGS:
        raise KeyError(f"unknown fixture {name!r}; choose from {FIXTURE_NAMES}")
    cfg = dict(_CONFIGS[name])
    cfg["name"] = name
    cfg["schema"] = [
        {"name": n, "kind": k, "role": r} for n, k, r in _SCHEMAS[name]
    ]
    return cfg


def _pick(rng: np.random.Generator, options: list[str], probs_pos, probs_neg, y):
    """Class-conditional categorical draw as a string array."""
    n = len(y)
    out = np.empty(n, dtype=object)
    u = rng.random(n)
    for mask, probs in ((y == 1, probs_pos), (y == 0, probs_neg)):
        edges = np.cumsum(probs)
        idx = np.searchsorted(edges, u[mask], side="right").clip(0, len(options) - 1)
        out[mask] = np.asarray(options, dtype=object)[idx]
    return out


def _adult_frame(n: int, rng: np.random.Generator) -> pd.DataFrame:
    y = (rng.random(n) < 0.24).astype(np.int8)
    pos = y == 1

    male = np.where(
        pos, rng.random(n) < _ADULT_P_MALE_POS, rng.random(n) < _ADULT_P_MALE_NEG
    )
    sex = np.where(male, "Male", "Female")

    age = np.where(pos, rng.normal(44, 10, n), rng.normal(36, 12, n))
    age = np.clip(np.round(age), 17, 90)
    edu = np.where(pos, rng.normal(12.5, 2.0, n), rng.normal(9.5, 2.5, n))
    edu = np.clip(np.round(edu), 1, 16)
    hours = np.where(pos, rng.normal(45, 8, n), rng.normal(38, 10, n))
    hours = np.clip(np.round(hours), 1, 99)
    gain_on = np.where(pos, rng.random(n) < 0.20, rng.random(n) < 0.03)
    gain = np.where(gain_on, np.exp(rng.normal(8.5, 0.8, n)), 0.0)
    gain = np.clip(np.round(gain), 0, 99999)

    workclass = _pick(
        rng,
        ["Private", "Self-emp", "Government"],
        [0.65, 0.20, 0.15],
        [0.75, 0.10, 0.15],
        y,
    )
    marital = _pick(
        rng,
        ["Married", "Never-married", "Divorced"],
        [0.80, 0.12, 0.08],
        [0.42, 0.38, 0.20],
        y,
    )
    occupation = _pick(
        rng,
        ["Tech", "Admin", "Service", "Manual"],
        [0.35, 0.30, 0.10, 0.25],
        [0.15, 0.25, 0.30, 0.30],
        y,
    )
    race = _pick(
        rng,
        ["White", "Black", "Other"],
        [0.88, 0.07, 0.05],
        [0.83, 0.12, 0.05],
        y,
    )
    income = np.where(pos, ">50K", "<=50K")
    return pd.DataFrame(
        {
            "age": age,
            "workclass": workclass,
            "education_num": edu,
            "marital_status": marital,
            "occupation": occupation,
            "race": race,
            "sex": sex,
            "capital_gain": gain,
            "hours_per_week": hours,
            "income": income,
        }
    )


def _credit_frame(n: int, rng: np.random.Generator) -> pd.DataFrame:
    y = (rng.random(n) < 0.70).astype(np.int8)  # 1 = good risk
    pos = y == 1

    duration = np.clip(
        np.round(np.where(pos, rng.normal(18, 9, n), rng.normal(28, 12, n))), 4, 72
    )
    amount = np.clip(
        np.round(np.where(pos, np.exp(rng.normal(7.6, 0.6, n)), np.exp(rng.normal(8.1, 0.7, n)))),
        250,
        20000,
    )
    age = np.clip(
        np.round(np.where(pos, rng.normal(38, 11, n), rng.normal(31, 10, n))), 19, 75
    )
    male = np.where(pos, rng.random(n) < 0.72, rng.random(n) < 0.60)
    sex = np.where(male, "Male", "Female")
    checking = _pick(
        rng,
        ["none", "low", "medium", "high"],
        [0.42, 0.18, 0.22, 0.18],
        [0.12, 0.45, 0.30, 0.13],
        y,
    )
    savings = _pick(
        rng,
        ["low", "medium", "high"],
        [0.40, 0.32, 0.28],
        [0.68, 0.22, 0.10],
        y,
    )
    purpose = _pick(
        rng,
        ["car", "furniture", "education", "business"],
        [0.38, 0.30, 0.12, 0.20],
        [0.30, 0.28, 0.25, 0.17],
        y,
    )
    housing = _pick(
        rng, ["own", "rent", "free"], [0.72, 0.20, 0.08], [0.52, 0.38, 0.10], y
    )
    employment = _pick(
        rng,
        ["unemployed", "short", "medium", "long"],
        [0.04, 0.20, 0.38, 0.38],
        [0.15, 0.40, 0.28, 0.17],
        y,
    )
    risk = np.where(pos, "good", "bad")
    return pd.DataFrame(
        {
            "duration_months": duration,
            "credit_amount": amount,
            "checking_status": checking,
            "savings_status": savings,
            "purpose": purpose,
            "housing": housing,
            "employment": employment,
            "sex": sex,
            "age": age,
            "risk": risk,
        }
    )


def _compas_frame(n: int, rng: np.random.Generator) -> pd.DataFrame:
    y = (rng.random(n) < 0.45).astype(np.int8)
    pos = y == 1

    age = np.clip(
        np.round(np.where(pos, rng.normal(28, 8, n), rng.normal(36, 11, n))), 18, 70
    )
    priors = np.clip(
        np.round(np.where(pos, rng.gamma(2.2, 2.2, n), rng.gamma(1.2, 1.4, n))), 0, 25
    )
    juv = np.clip(
        np.round(np.where(pos, rng.gamma(0.8, 0.8, n), rng.gamma(0.3, 0.6, n))), 0, 6
    )
    stay = np.clip(
        np.round(np.where(pos, np.exp(rng.normal(3.4, 1.0, n)), np.exp(rng.normal(2.6, 1.0, n)))),
        0,
        800,
    )
    charge = _pick(rng, ["F", "M"], [0.72, 0.28], [0.55, 0.45], y)
    race = _pick(
        rng,
        ["African-American", "Caucasian", "Hispanic", "Other"],
        [0.58, 0.26, 0.10, 0.06],
        [0.44, 0.38, 0.12, 0.06],
        y,
    )
    male = np.where(pos, rng.random(n) < 0.84, rng.random(n) < 0.76)
    sex = np.where(male, "Male", "Female")
    return pd.DataFrame(
        {
            "age": age,
            "priors_count": priors,
            "juv_fel_count": juv,
            "length_of_stay": stay,
            "charge_degree": charge,
            "race": race,
            "sex": sex,
            "two_year_recid": y.astype(int),
        }
    )


_GENERATORS = {
    "adult": _adult_frame,
    "credit": _credit_frame,
    "compas": _compas_frame,
}


def generate(
    name: str, rows: int | None = None, seed: int = 0, missing_rate: float = 0.0
) -> RawDataset:
    """Generate a raw fixture dataset.

    Args:
        name: One of ``adult``, ``credit``, ``compas``.
        rows: Row count (fixture default when omitted).
        seed: Stream seed; same (name, rows, seed) always yields the same data.
        missing_rate: Fraction of rows given one missing categorical cell.
    """
    if name not in _GENERATORS:
        raise KeyError(f"unknown fixture {name!r}; choose from {FIXTURE_NAMES}")
    rows = rows if rows is not None else _CONFIGS[name]["default_rows"]
    if rows < 10:
        raise ValueError("fixture needs at least 10 rows")
    rng = derived_rng("fixture", name, seed)
    frame = _GENERATORS[name](rows, rng)
    if missing_rate > 0.0:
        cat_cols = [
            n for n, k, r in _SCHEMAS[name] if k == "categorical" and r == "feature"
        ]
        hit = rng.random(rows) < missing_rate
        cols = rng.integers(0, len(cat_cols), rows)
        for j, col in enumerate(cat_cols):
            mask = hit & (cols == j)
            frame.loc[mask, col] = "?"
    return from_frame(frame, fixture_schema(name))


def bundled_csv(name: str):
    """Filesystem path of the small bundled CSV copy of a fixture."""
    if name not in FIXTURE_NAMES:
        raise KeyError(f"unknown fixture {name!r}; choose from {FIXTURE_NAMES}")
    path = resources.files("explaudit.fixtures_data").joinpath(f"{name}_mini.csv")
    with resources.as_file(path) as p:
        return p
