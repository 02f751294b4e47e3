"""Loading, encoding, splitting, and correlation screening."""

import numpy as np
import pandas as pd
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from explaudit import fixtures, tabular
from explaudit.tabular import (
    ColumnSchema,
    SchemaError,
    SensitiveSpec,
    from_frame,
    pearson_vectors,
    preprocess,
    split,
)


def tiny_frame(n=60, seed=0):
    rng = np.random.default_rng(seed)
    return pd.DataFrame(
        {
            "age": rng.integers(18, 70, n).astype(str),
            "color": rng.choice(["red", "green", "blue"], n),
            "label": rng.choice(["yes", "no"], n),
        }
    )


def tiny_schema():
    return [
        ColumnSchema("age", "continuous", "sensitive"),
        ColumnSchema("color", "categorical", "sensitive"),
        ColumnSchema("label", "categorical", "target"),
    ]


def tiny_dataset(n=60, seed=0, sensitive=("age > 40",)):
    raw = from_frame(tiny_frame(n, seed), tiny_schema())
    specs = [SensitiveSpec.parse(s) for s in sensitive]
    return preprocess(raw, specs, target_positive="yes")


class TestSchema:
    def test_duplicate_column_rejected(self):
        schema = tiny_schema() + [ColumnSchema("age", "continuous", "feature")]
        with pytest.raises(SchemaError):
            from_frame(tiny_frame(), schema)

    def test_missing_target_rejected(self):
        schema = tiny_schema()[:2]
        with pytest.raises(SchemaError):
            from_frame(tiny_frame()[["age", "color"]], schema)

    def test_header_mismatch_rejected(self, tmp_path):
        path = tmp_path / "bad.csv"
        tiny_frame().rename(columns={"age": "years"}).to_csv(path, index=False)
        with pytest.raises(SchemaError):
            tabular.load_csv(path, tiny_schema())

    def test_load_missing_file(self):
        with pytest.raises(SchemaError):
            tabular.load_csv("/nonexistent/x.csv", tiny_schema())


class TestPreprocess:
    def test_continuous_min_max_scaled(self):
        ds = tiny_dataset(n=200)
        col = ds.feature_names.index("age")
        vals = ds.X[:, col]
        assert vals.min() == 0.0
        assert vals.max() == 1.0
        assert np.all((vals >= 0.0) & (vals <= 1.0))

    def test_one_hot_simplex(self):
        ds = tiny_dataset(n=200)
        idx = [i for i, n in enumerate(ds.feature_names) if n.startswith("color=")]
        assert len(idx) == 3
        np.testing.assert_allclose(ds.X[:, idx].sum(axis=1), 1.0)

    def test_target_binarized(self):
        ds = tiny_dataset()
        assert set(np.unique(ds.y)) <= {0, 1}

    def test_threshold_sensitive(self):
        ds = tiny_dataset(sensitive=("age > 40",))
        raw_age = tiny_frame()["age"].astype(float).to_numpy()
        np.testing.assert_array_equal(ds.sensitive["age"], (raw_age > 40).astype(int))

    def test_equality_sensitive(self):
        ds = tiny_dataset(sensitive=("color == red",))
        raw_color = tiny_frame()["color"].to_numpy()
        np.testing.assert_array_equal(
            ds.sensitive["color"], (raw_color == "red").astype(int)
        )

    def test_missing_rows_dropped(self):
        frame = tiny_frame(n=50)
        frame.loc[3, "color"] = "?"
        frame.loc[7, "age"] = ""
        raw = from_frame(frame, tiny_schema())
        ds = preprocess(raw, [SensitiveSpec.parse("age > 40")], "yes")
        assert ds.n_rows == 48
        # surviving rows are renumbered into a dense id range
        np.testing.assert_array_equal(ds.record_ids, np.arange(48))

    def test_unknown_sensitive_column(self):
        raw = from_frame(tiny_frame(), tiny_schema())
        with pytest.raises(tabular.PreprocessError):
            preprocess(raw, [SensitiveSpec.parse("height > 1")], "yes")

    def test_bundled_mini_fixtures_load(self):
        for name in fixtures.FIXTURE_NAMES:
            raw = tabular.load_csv(fixtures.bundled_csv(name), fixtures.fixture_schema(name))
            cfg = fixtures.dataset_config(name)
            sens = [SensitiveSpec.parse(s) for s in cfg["sensitive"]]
            ds = preprocess(raw, sens, cfg["target_positive"])
            assert ds.n_rows > 350
            assert len(ds.sensitive) == 2

    def test_adult_mini_drops_incomplete_rows(self):
        raw = tabular.load_csv(
            fixtures.bundled_csv("adult"), fixtures.fixture_schema("adult")
        )
        cfg = fixtures.dataset_config("adult")
        sens = [SensitiveSpec.parse(s) for s in cfg["sensitive"]]
        ds = preprocess(raw, sens, cfg["target_positive"])
        assert raw.frame.shape[0] == 520
        assert ds.n_rows == 498


class TestSplit:
    def test_size_policy(self):
        ds = tiny_dataset(n=200)
        bundle = split(ds, seed=0)
        assert bundle.target_train.n_rows == 134
        assert bundle.aux_attack_train.n_rows == 33
        assert bundle.aux_attack_test.n_rows == 33

    def test_size_policy_large(self):
        n = 32561
        rng = np.random.default_rng(0)
        frame = pd.DataFrame(
            {
                "x": rng.normal(size=n).astype(str),
                "label": rng.choice(["yes", "no"], n),
            }
        )
        schema = [
            ColumnSchema("x", "continuous", "sensitive"),
            ColumnSchema("label", "categorical", "target"),
        ]
        ds = preprocess(from_frame(frame, schema), [], "yes")
        bundle = split(ds, seed=0)
        sizes = [p.n_rows for p in bundle.parts().values()]
        assert sizes == [21815, 5373, 5373]

    @given(st.integers(min_value=6, max_value=300), st.integers(0, 3))
    @settings(max_examples=25, deadline=None)
    def test_partition_is_exact(self, n, seed):
        ids = np.arange(n)
        n_train = int(np.floor(0.67 * n))
        rem = n - n_train
        sizes = (n_train, rem // 2, rem - rem // 2)
        assert sum(sizes) == n
        assert all(s >= 0 for s in sizes)

    def test_split_disjoint_and_complete(self):
        ds = tiny_dataset(n=97)
        bundle = split(ds, seed=3)
        all_ids = np.concatenate([p.record_ids for p in bundle.parts().values()])
        assert len(all_ids) == 97
        assert len(set(all_ids)) == 97
        assert set(all_ids) == set(ds.record_ids)

    def test_split_deterministic(self):
        ds = tiny_dataset(n=80)
        a = split(ds, seed=5)
        b = split(ds, seed=5)
        np.testing.assert_array_equal(
            a.target_train.record_ids, b.target_train.record_ids
        )

    def test_too_small_rejected(self):
        ds = tiny_dataset(n=60).take(np.arange(4))
        with pytest.raises(ValueError):
            split(ds, seed=0)


class TestBundleIO:
    def test_save_load_round_trip(self, tmp_path, adult_bundle):
        path = tmp_path / "bundle.npz"
        adult_bundle.save(path)
        loaded = tabular.SplitBundle.load(path)
        for tag, ds in adult_bundle.parts().items():
            other = loaded.parts()[tag]
            np.testing.assert_array_equal(ds.X, other.X)
            np.testing.assert_array_equal(ds.y, other.y)
            np.testing.assert_array_equal(ds.record_ids, other.record_ids)
            assert ds.feature_names == other.feature_names
            for name in ds.sensitive:
                np.testing.assert_array_equal(ds.sensitive[name], other.sensitive[name])
        assert loaded.seed == adult_bundle.seed

    def test_concat_preserves_ids(self, adult_bundle):
        both = adult_bundle.aux_all()
        n = adult_bundle.aux_attack_train.n_rows + adult_bundle.aux_attack_test.n_rows
        assert both.n_rows == n
        assert set(both.record_ids) == (
            set(adult_bundle.aux_attack_train.record_ids)
            | set(adult_bundle.aux_attack_test.record_ids)
        )

    def test_decode_inverts_encode(self):
        ds = tiny_dataset(n=40)
        frame = ds.decode(include_target=True)
        orig = tiny_frame(n=40)
        kept = orig.loc[ds.record_ids].reset_index(drop=True)
        assert list(frame["color"]) == list(kept["color"])
        np.testing.assert_allclose(
            frame["age"].astype(float), kept["age"].astype(float), rtol=1e-9
        )

    def test_encode_with_matches_codebook(self):
        ds = tiny_dataset(n=60)
        raw = from_frame(tiny_frame(n=30, seed=1), tiny_schema())
        other = tabular.encode_with(ds.codebook, raw)
        assert other.feature_names == ds.feature_names
        col = other.feature_names.index("age")
        # same scaling constants: re-encoding uses the fitted min/max
        raw_age = tiny_frame(n=30, seed=1)["age"].astype(float).to_numpy()
        fit_age = tiny_frame(n=60)["age"].astype(float)
        span = fit_age.max() - fit_age.min()
        np.testing.assert_allclose(
            other.X[:, col], (raw_age - fit_age.min()) / span, rtol=1e-9
        )


class TestCorrelation:
    def test_pearson_perfect(self):
        x = np.arange(50, dtype=float)
        assert abs(pearson_vectors(x, 2 * x + 1) - 1.0) < 1e-12
        assert abs(pearson_vectors(x, -x) + 1.0) < 1e-12

    def test_pearson_constant_raises(self):
        with pytest.raises(tabular.UndefinedCorrelationError):
            pearson_vectors(np.ones(10), np.arange(10.0))

    @given(
        st.lists(
            st.floats(min_value=-1e6, max_value=1e6, allow_nan=False),
            min_size=3,
            max_size=40,
        ),
        st.lists(
            st.floats(min_value=-1e6, max_value=1e6, allow_nan=False),
            min_size=3,
            max_size=40,
        ),
    )
    @settings(max_examples=60, deadline=None)
    def test_pearson_bounded(self, a, b):
        n = min(len(a), len(b))
        x = np.array(a[:n])
        y = np.array(b[:n])
        if x.std() == 0 or y.std() == 0:
            return
        r = pearson_vectors(x, y)
        assert -1.0 - 1e-9 <= r <= 1.0 + 1e-9

    def test_screening_table_covers_pairs(self, adult_bundle):
        ds = adult_bundle.target_train
        rows = tabular.screening_table(ds)
        for name in ds.sensitive:
            mine = [r for r in rows if r["sensitive"] == name]
            assert any(r["against"] == "target" for r in mine)
            # an attribute is never screened against its own encoded columns
            own = {f for f in ds.feature_names if f.startswith(f"{name}=")}
            assert not any(r["against"] in own for r in mine)
        for row in rows:
            assert row["against"] == "target" or row["against"] in ds.feature_names
            assert -1.0 <= row["pearson"] <= 1.0
