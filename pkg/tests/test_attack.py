"""Attribute-inference attack: planted signal, nulls, metric arithmetic."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import stats

from explaudit import tabular
from explaudit.attack import (
    AttackDataset,
    AttackModelSpec,
    attack_metrics,
    build_attack_dataset,
    random_guess_baseline,
    run_attack,
    train_attack,
)


def synthetic_attack_data(
    n_train=400, n_test=400, d=6, signal=1.0, prior=0.5, seed=0
):
    """Attack dataset where column 0 carries `signal` fraction of the label."""
    rng = np.random.default_rng(seed)

    def half(n):
        y = (rng.random(n) < prior).astype(np.int8)
        X = rng.normal(size=(n, d))
        X[:, 0] = signal * y + (1.0 - signal) * rng.normal(size=n)
        return X, y

    train_X, train_y = half(n_train)
    test_X, test_y = half(n_test)
    return AttackDataset(
        attribute="probe",
        feature_names=[f"f{j}" for j in range(d)],
        train_X=train_X,
        train_y=train_y,
        test_X=test_X,
        test_y=test_y,
    )


FAST = AttackModelSpec(max_epochs=120)


class TestAttackSpec:
    def test_layer_stack(self):
        layers = AttackModelSpec().layers()
        assert [l.width for l in layers] == [64, 128, 32, 1]
        assert layers[-1].activation == "sigmoid"

    def test_defaults(self):
        spec = AttackModelSpec()
        assert spec.l2_lambda == 1e-3
        assert spec.max_epochs == 500
        assert spec.tolerance == 1e-4
        assert spec.patience == 10

    def test_to_dict_round_shape(self):
        d = AttackModelSpec().to_dict()
        assert d["hidden"] == [64, 128, 32]
        assert set(d) >= {"l2_lambda", "max_epochs", "learning_rate", "batch_size"}


class TestSignalRecovery:
    def test_planted_signal_recovered(self):
        ads = synthetic_attack_data(signal=1.0, seed=0)
        report = run_attack(ads, FAST, seeds=(0, 1))
        assert report.attack_success >= 0.99
        assert report.f1 >= 0.99

    def test_fair_coin_null(self):
        # no dependence between explanations and attribute: the attack cannot
        # beat a fair coin by more than sampling noise
        ads = synthetic_attack_data(
            n_train=1000, n_test=1000, signal=0.0, prior=0.5, seed=1
        )
        report = run_attack(ads, FAST, seeds=(0, 1))
        assert abs(report.attack_success - 0.5) <= 0.05
        assert abs(report.random_guess - 0.5) <= 0.05

    def test_skewed_null_one_sided(self):
        # with a skewed prior and pure noise, success may drift below the
        # majority prior (memorized noise) but must not beat it materially
        ads = synthetic_attack_data(
            n_train=1000, n_test=1000, signal=0.0, prior=0.65, seed=2
        )
        report = run_attack(ads, FAST, seeds=(0, 1))
        assert report.attack_success - report.random_guess <= 0.03

    def test_success_tracks_signal_strength(self):
        strengths = np.linspace(0.0, 0.9, 10)
        successes = []
        for i, s in enumerate(strengths):
            ads = synthetic_attack_data(
                n_train=300, n_test=300, signal=float(s), seed=10 + i
            )
            report = run_attack(ads, FAST, seeds=(0,))
            successes.append(report.attack_success)
        rho = stats.spearmanr(strengths, successes).statistic
        assert rho >= 0.9


class TestMetricsArithmetic:
    def test_reference_confusion(self):
        labels = np.array([1] * 30 + [0] * 10 + [1] * 20 + [0] * 40)
        preds = np.array([1] * 30 + [1] * 10 + [0] * 20 + [0] * 40)
        m = attack_metrics(preds, labels)
        assert m.counts.tp == 30
        assert m.counts.fp == 10
        assert m.counts.fn == 20
        assert m.counts.tn == 40
        assert m.precision == pytest.approx(0.75)
        assert m.recall == pytest.approx(0.6)
        assert m.f1 == pytest.approx(2 * 0.75 * 0.6 / (0.75 + 0.6))
        assert m.attack_success == pytest.approx(0.7)

    def test_undefined_precision_flagged(self):
        m = attack_metrics(np.zeros(10), np.array([1] * 5 + [0] * 5))
        assert not m.precision_defined
        assert m.precision == 0.0
        assert m.recall == 0.0

    def test_undefined_recall_flagged(self):
        m = attack_metrics(np.array([1] * 5 + [0] * 5), np.zeros(10))
        assert not m.recall_defined
        assert m.recall == 0.0

    def test_perfect_prediction(self):
        y = np.array([0, 1, 1, 0, 1])
        m = attack_metrics(y, y)
        assert m.precision == m.recall == m.f1 == m.attack_success == 1.0

    def test_empty_rejected(self):
        with pytest.raises(ValueError):
            attack_metrics(np.zeros(0), np.zeros(0))
        with pytest.raises(ValueError):
            attack_metrics(np.zeros(3), np.zeros(4))

    @given(st.integers(0, 40), st.integers(0, 40), st.integers(0, 40),
           st.integers(0, 40))
    @settings(max_examples=80, deadline=None)
    def test_f1_identity_and_ranges(self, tp, fp, fn, tn):
        if tp + fp + fn + tn == 0:
            return
        labels = np.array([1] * tp + [0] * fp + [1] * fn + [0] * tn)
        preds = np.array([1] * tp + [1] * fp + [0] * fn + [0] * tn)
        m = attack_metrics(preds, labels)
        for v in (m.precision, m.recall, m.f1, m.attack_success):
            assert 0.0 <= v <= 1.0
        if m.precision + m.recall > 0:
            want = 2 * m.precision * m.recall / (m.precision + m.recall)
            assert m.f1 == pytest.approx(want)
        else:
            assert m.f1 == 0.0

    def test_random_guess_is_majority_prior(self):
        assert random_guess_baseline(np.array([1, 1, 0, 0, 0])) == 0.6
        assert random_guess_baseline(np.array([1, 1, 1, 0])) == 0.75
        assert random_guess_baseline(np.zeros(5)) == 1.0
        with pytest.raises(ValueError):
            random_guess_baseline(np.zeros(0))


class TestJoin:
    def test_join_aligns_rows(self, adult_bundle, adult_ig):
        ads = build_attack_dataset(adult_ig, adult_bundle, "sex")
        train_ds = adult_bundle.aux_attack_train
        test_ds = adult_bundle.aux_attack_test
        assert ads.train_X.shape == (train_ds.n_rows, len(adult_ig.feature_names))
        assert ads.test_X.shape == (test_ds.n_rows, len(adult_ig.feature_names))
        for k in (0, 7, 31):
            rid = int(train_ds.record_ids[k])
            np.testing.assert_array_equal(ads.train_X[k], adult_ig.row_for(rid))
        np.testing.assert_array_equal(ads.train_y, train_ds.sensitive["sex"])
        np.testing.assert_array_equal(ads.test_y, test_ds.sensitive["sex"])

    def test_missing_attribute(self, adult_bundle, adult_ig):
        with pytest.raises(KeyError):
            build_attack_dataset(adult_ig, adult_bundle, "height")

    def test_missing_explanation_row(self, adult_bundle, adult_ig):
        partial = type(adult_ig)(
            method=adult_ig.method,
            feature_names=adult_ig.feature_names,
            record_ids=adult_ig.record_ids[:-5],
            values=adult_ig.values[:-5],
            config_digest=adult_ig.config_digest,
        )
        with pytest.raises(ValueError):
            build_attack_dataset(partial, adult_bundle, "sex")

    def test_empty_half_rejected(self, adult_bundle, adult_ig):
        empty = adult_bundle.aux_attack_test.take(np.arange(0))
        broken = tabular.SplitBundle(
            target_train=adult_bundle.target_train,
            aux_attack_train=adult_bundle.aux_attack_train,
            aux_attack_test=empty,
            seed=0,
        )
        with pytest.raises(ValueError):
            build_attack_dataset(adult_ig, broken, "sex")


class TestProtocol:
    def test_repetition_bookkeeping(self):
        ads = synthetic_attack_data(n_train=200, n_test=200, signal=0.8, seed=3)
        report = run_attack(ads, FAST, seeds=(0, 1, 2))
        assert report.repetitions == 3
        assert report.seeds == (0, 1, 2)
        assert len(report.per_repetition) == 3
        assert report.attack_success == pytest.approx(
            np.mean([m.attack_success for m in report.per_repetition])
        )
        assert report.f1 == pytest.approx(
            np.mean([m.f1 for m in report.per_repetition])
        )
        assert report.train_seconds > 0.0

    def test_deterministic_per_seed(self):
        ads = synthetic_attack_data(n_train=200, n_test=200, signal=0.5, seed=4)
        a = run_attack(ads, FAST, seeds=(7,))
        b = run_attack(ads, FAST, seeds=(7,))
        assert a.attack_success == b.attack_success
        assert a.per_repetition[0].counts == b.per_repetition[0].counts

    def test_constant_feature_column_tolerated(self):
        ads = synthetic_attack_data(n_train=150, n_test=150, signal=0.9, seed=5)
        ads.train_X[:, 3] = 1.0
        ads.test_X[:, 3] = 1.0
        fitted = train_attack(ads, FAST, seed=0)
        preds = fitted.predict(ads.test_X)
        assert np.all(np.isfinite(preds.astype(float)))

    def test_standardization_uses_train_stats(self):
        ads = synthetic_attack_data(n_train=150, n_test=150, signal=0.7, seed=6)
        fitted = train_attack(ads, FAST, seed=0)
        np.testing.assert_allclose(fitted.mean, ads.train_X.mean(axis=0))
        np.testing.assert_allclose(fitted.scale, ads.train_X.std(axis=0))

    def test_report_dict_shape(self):
        ads = synthetic_attack_data(n_train=150, n_test=150, signal=0.5, seed=7)
        d = run_attack(ads, FAST, seeds=(0,)).to_dict()
        assert set(d) >= {
            "attribute",
            "repetitions",
            "precision",
            "recall",
            "f1",
            "attack_success",
            "random_guess",
            "coin_guess",
            "per_repetition",
        }
        assert d["coin_guess"] == 0.5
