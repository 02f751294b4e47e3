"""Copula generator: dependence preservation, marginals, diagnostics."""

import numpy as np
import pandas as pd
import pytest
from scipy import stats

from explaudit import copula, tabular
from explaudit.tabular import ColumnSchema, SensitiveSpec, from_frame, preprocess


def gaussian_triple(n=20_000, rho=0.7, seed=0):
    """Three jointly Gaussian features with uniform pairwise correlation."""
    rng = np.random.default_rng(seed)
    cov = np.full((3, 3), rho)
    np.fill_diagonal(cov, 1.0)
    X = rng.multivariate_normal(np.zeros(3), cov, size=n)
    frame = pd.DataFrame(
        {
            "a": X[:, 0].astype(str),
            "b": X[:, 1].astype(str),
            "c": X[:, 2].astype(str),
            "label": rng.choice(["yes", "no"], n),
        }
    )
    schema = [
        ColumnSchema("a", "continuous", "sensitive"),
        ColumnSchema("b", "continuous", "feature"),
        ColumnSchema("c", "continuous", "feature"),
        ColumnSchema("label", "categorical", "target"),
    ]
    return preprocess(from_frame(frame, schema), [SensitiveSpec.parse("a > 0")], "yes")


def mixed_dataset(n=400, seed=0):
    rng = np.random.default_rng(seed)
    frame = pd.DataFrame(
        {
            "height": rng.normal(170, 10, n).astype(str),
            "city": rng.choice(["kyoto", "oslo", "lima"], n, p=[0.5, 0.3, 0.2]),
            "label": rng.choice(["yes", "no"], n),
        }
    )
    schema = [
        ColumnSchema("height", "continuous", "sensitive"),
        ColumnSchema("city", "categorical", "feature"),
        ColumnSchema("label", "categorical", "target"),
    ]
    return preprocess(
        from_frame(frame, schema), [SensitiveSpec.parse("height > 170")], "yes"
    )


class TestDependence:
    def test_rank_correlation_preserved(self):
        ds = gaussian_triple()
        model = copula.fit(ds)
        synth = copula.sample(model, 20_000, seed=1)
        frame = synth.decode(include_target=False)
        # analytic Spearman of a bivariate Gaussian with this rho
        want = 6.0 / np.pi * np.arcsin(0.7 / 2.0)
        for x, y in (("a", "b"), ("a", "c"), ("b", "c")):
            got = stats.spearmanr(frame[x], frame[y]).statistic
            assert abs(got - want) <= 0.05

    def test_independent_columns_stay_independent(self):
        ds = gaussian_triple(rho=0.0, seed=2)
        model = copula.fit(ds)
        synth = copula.sample(model, 20_000, seed=3)
        frame = synth.decode(include_target=False)
        got = stats.spearmanr(frame["a"], frame["b"]).statistic
        assert abs(got) <= 0.05


class TestMarginals:
    def test_continuous_quantiles_close(self):
        ds = mixed_dataset(n=2000)
        model = copula.fit(ds)
        synth = copula.sample(model, 4000, seed=0)
        real_h = ds.decode()["height"].to_numpy(dtype=float)
        synth_h = synth.decode()["height"].to_numpy(dtype=float)
        for p in (0.1, 0.25, 0.5, 0.75, 0.9):
            rq = np.quantile(real_h, p)
            sq = np.quantile(synth_h, p)
            assert abs(sq - rq) < 2.0  # raw units: centimeters

    def test_categorical_frequencies_close(self):
        ds = mixed_dataset(n=2000)
        model = copula.fit(ds)
        synth = copula.sample(model, 8000, seed=0)
        real = ds.decode()["city"].value_counts(normalize=True)
        got = synth.decode()["city"].value_counts(normalize=True)
        for cat in real.index:
            assert abs(got.get(cat, 0.0) - real[cat]) < 0.03

    def test_target_rate_close(self):
        ds = mixed_dataset(n=2000)
        model = copula.fit(ds)
        synth = copula.sample(model, 8000, seed=0)
        assert abs(float(np.mean(synth.y)) - float(np.mean(ds.y))) < 0.03


class TestSample:
    def test_deterministic(self):
        ds = mixed_dataset()
        model = copula.fit(ds)
        a = copula.sample(model, 300, seed=9)
        b = copula.sample(model, 300, seed=9)
        np.testing.assert_array_equal(a.X, b.X)
        np.testing.assert_array_equal(a.y, b.y)

    def test_seed_changes_rows(self):
        ds = mixed_dataset()
        model = copula.fit(ds)
        a = copula.sample(model, 300, seed=0)
        b = copula.sample(model, 300, seed=1)
        assert not np.array_equal(a.X, b.X)

    def test_no_verbatim_fit_rows(self):
        ds = mixed_dataset(n=300)
        model = copula.fit(ds)
        synth = copula.sample(model, 600, seed=0)
        fit_rows = {
            tuple(r) for r in ds.decode().astype(str).itertuples(index=False)
        }
        synth_rows = [
            tuple(r) for r in synth.decode().astype(str).itertuples(index=False)
        ]
        assert not any(r in fit_rows for r in synth_rows)

    def test_uses_fitted_codebook(self):
        ds = mixed_dataset()
        model = copula.fit(ds)
        synth = copula.sample(model, 100, seed=0)
        assert synth.feature_names == ds.feature_names

    def test_bad_n_rejected(self):
        model = copula.fit(mixed_dataset())
        with pytest.raises(ValueError):
            copula.sample(model, 0, seed=0)


class TestDiagnostics:
    def test_self_scores_perfect(self):
        ds = mixed_dataset()
        model = copula.fit(ds)
        synth = copula.sample(model, 500, seed=0)
        score = copula.diagnostics(ds, synth)
        assert score.data_validity == 1.0
        assert score.data_structure == 1.0
        assert score.details["failures"] == []

    def test_adult_fixture_scores_perfect(self, adult_bundle):
        train = adult_bundle.target_train
        model = copula.fit(train)
        synth = copula.sample(model, train.n_rows, seed=0)
        score = copula.diagnostics(train, synth)
        assert score.data_validity == 1.0
        assert score.data_structure == 1.0

    def test_structure_penalizes_column_mismatch(self):
        a = mixed_dataset()
        b = gaussian_triple(n=200)
        score = copula.diagnostics(a, b)
        assert score.data_structure < 1.0
        assert score.data_validity < 1.0

    def test_range_containment(self):
        ds = mixed_dataset(n=2000)
        model = copula.fit(ds)
        synth = copula.sample(model, 4000, seed=0)
        real_h = ds.decode()["height"].to_numpy(dtype=float)
        synth_h = synth.decode()["height"].to_numpy(dtype=float)
        assert synth_h.min() >= real_h.min()
        assert synth_h.max() <= real_h.max()

    def test_empty_rejected(self):
        ds = mixed_dataset()
        with pytest.raises(ValueError):
            copula.diagnostics(ds, ds.take(np.arange(0)))
