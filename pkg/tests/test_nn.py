"""Model init, training, gradients, and persistence."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from explaudit import nn
from explaudit.nn import (
    LayerSpec,
    MlpModel,
    TrainConfig,
    TrainingDiverged,
    architecture,
    bce_loss,
    evaluate_arrays,
    forward,
    init_model,
    input_gradient,
    predict,
    train_arrays,
)


def blob_data(n=400, d=6, seed=0):
    """Two linearly separable Gaussian blobs."""
    rng = np.random.default_rng(seed)
    X = rng.normal(size=(n, d))
    w = rng.normal(size=d)
    y = (X @ w > 0).astype(float)
    return X, y


class TestArchitecture:
    def test_default_parameter_count(self):
        model = init_model(81, architecture("default"), seed=0)
        assert model.parameter_count == 4961

    def test_attack_stack_shape(self):
        layers = architecture("attack")
        assert [l.width for l in layers] == [64, 128, 32, 1]
        assert [l.activation for l in layers] == ["relu"] * 3 + ["sigmoid"]

    def test_unknown_profile(self):
        with pytest.raises(KeyError):
            architecture("tiny")

    def test_stack_must_end_sigmoid(self):
        with pytest.raises(ValueError):
            init_model(4, [LayerSpec(8, "relu")], seed=0)

    def test_init_deterministic(self):
        a = init_model(10, architecture("default"), seed=3)
        b = init_model(10, architecture("default"), seed=3)
        assert a.digest() == b.digest()
        c = init_model(10, architecture("default"), seed=4)
        assert a.digest() != c.digest()


class TestForward:
    def test_output_is_probability(self):
        model = init_model(6, architecture("default"), seed=0)
        X = np.random.default_rng(0).normal(size=(50, 6))
        p = forward(model, X)
        assert p.shape == (50,)
        assert np.all((p > 0) & (p < 1))

    def test_single_row_matches_batch(self):
        model = init_model(6, architecture("default"), seed=0)
        X = np.random.default_rng(1).normal(size=(5, 6))
        batch = forward(model, X)
        singles = np.array([forward(model, x) for x in X])
        np.testing.assert_allclose(batch, singles, rtol=1e-12)

    def test_predict_thresholds_at_half(self):
        model = init_model(6, architecture("default"), seed=0)
        X = np.random.default_rng(2).normal(size=(30, 6))
        p = forward(model, X)
        np.testing.assert_array_equal(predict(model, X), (p >= 0.5).astype(int))


class TestLoss:
    def test_bce_known_value(self):
        p = np.array([0.9, 0.1])
        y = np.array([1.0, 0.0])
        assert abs(bce_loss(p, y) - (-np.log(0.9))) < 1e-12

    def test_bce_symmetric_miss(self):
        p = np.array([0.3])
        assert abs(
            bce_loss(p, np.array([1.0]))
            - bce_loss(1 - p, np.array([0.0]))
        ) < 1e-12

    @given(st.integers(0, 10_000))
    @settings(max_examples=30, deadline=None)
    def test_bce_nonnegative(self, seed):
        rng = np.random.default_rng(seed)
        p = rng.uniform(0.01, 0.99, size=8)
        y = rng.integers(0, 2, size=8).astype(float)
        assert bce_loss(p, y) >= 0.0


class TestTraining:
    def test_loss_decreases_on_separable_data(self):
        X, y = blob_data()
        model = init_model(X.shape[1], architecture("default"), seed=0)
        _, history = train_arrays(model, X, y, TrainConfig(epochs=15), seed=0)
        assert history[-1] < history[0] * 0.5

    def test_learns_separable_data(self):
        X, y = blob_data()
        model = init_model(X.shape[1], architecture("default"), seed=0)
        trained, _ = train_arrays(model, X, y, TrainConfig(epochs=30), seed=0)
        assert evaluate_arrays(trained, X, y) > 0.97

    def test_training_deterministic(self):
        X, y = blob_data(n=120)
        cfg = TrainConfig(epochs=5)
        m = init_model(X.shape[1], architecture("default"), seed=0)
        a, ha = train_arrays(m, X, y, cfg, seed=1)
        b, hb = train_arrays(m, X, y, cfg, seed=1)
        assert a.digest() == b.digest()
        assert ha == hb

    def test_original_model_untouched(self):
        X, y = blob_data(n=80)
        model = init_model(X.shape[1], architecture("default"), seed=0)
        before = model.digest()
        train_arrays(model, X, y, TrainConfig(epochs=2), seed=0)
        assert model.digest() == before

    def test_early_stopping_cuts_epochs(self):
        X, y = blob_data(n=150)
        model = init_model(X.shape[1], architecture("default"), seed=0)
        cfg = TrainConfig(
            epochs=500, early_stop_tol=0.05, early_stop_patience=3
        )
        _, history = train_arrays(model, X, y, cfg, seed=0)
        assert len(history) < 500

    def test_l2_shrinks_weights(self):
        X, y = blob_data(n=200)
        model = init_model(X.shape[1], architecture("default"), seed=0)
        plain, _ = train_arrays(model, X, y, TrainConfig(epochs=20), seed=0)
        reg, _ = train_arrays(
            model, X, y, TrainConfig(epochs=20, l2_lambda=0.05), seed=0
        )
        norm = lambda m: sum(float(np.sum(w**2)) for w in m.weights)
        assert norm(reg) < norm(plain)

    @pytest.mark.filterwarnings("ignore::RuntimeWarning")
    def test_divergence_raises(self):
        X, y = blob_data(n=60)
        X[10, 2] = np.inf  # poisoned input must abort, not emit NaN weights
        model = init_model(X.shape[1], architecture("default"), seed=0)
        with pytest.raises(TrainingDiverged):
            train_arrays(model, X, y, TrainConfig(epochs=3, batch_size=60), seed=0)

    def test_empty_data_rejected(self):
        model = init_model(3, architecture("default"), seed=0)
        with pytest.raises(ValueError):
            train_arrays(model, np.zeros((0, 3)), np.zeros(0), TrainConfig(), seed=0)


class TestInputGradient:
    def test_matches_finite_differences(self):
        model = init_model(7, architecture("default"), seed=2)
        rng = np.random.default_rng(0)
        x = rng.normal(size=7)
        analytic = input_gradient(model, x)
        eps = 1e-6
        numeric = np.zeros(7)
        for j in range(7):
            hi = x.copy()
            lo = x.copy()
            hi[j] += eps
            lo[j] -= eps
            numeric[j] = (forward(model, hi) - forward(model, lo)) / (2 * eps)
        np.testing.assert_allclose(analytic, numeric, rtol=1e-5, atol=1e-8)

    def test_batch_matches_rows(self):
        model = init_model(5, architecture("default"), seed=1)
        X = np.random.default_rng(3).normal(size=(4, 5))
        batch = input_gradient(model, X)
        rows = np.vstack([input_gradient(model, x) for x in X])
        np.testing.assert_allclose(batch, rows, rtol=1e-12)


class TestPersistence:
    def test_save_load_round_trip(self, tmp_path):
        model = init_model(9, architecture("default"), seed=5)
        X = np.random.default_rng(0).normal(size=(20, 9))
        path = tmp_path / "model.npz"
        nn.save_model(model, path)
        loaded = nn.load_model(path)
        assert loaded.digest() == model.digest()
        np.testing.assert_array_equal(forward(loaded, X), forward(model, X))

    def test_trained_model_round_trip(self, tmp_path, adult_model, adult_bundle):
        path = tmp_path / "trained.npz"
        nn.save_model(adult_model, path)
        loaded = nn.load_model(path)
        ds = adult_bundle.aux_attack_test
        np.testing.assert_array_equal(
            predict(loaded, ds.X), predict(adult_model, ds.X)
        )
