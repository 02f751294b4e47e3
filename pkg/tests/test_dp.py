"""Privacy accountant oracles and noisy-training invariants."""

import math

import numpy as np
import pytest
from scipy import integrate

from explaudit import dp, nn
from explaudit.dp import (
    AccountantError,
    CalibrationError,
    DpConfig,
    calibrate_noise,
    compute_epsilon,
    compute_rdp,
    dp_train,
    rdp_to_epsilon,
)
from explaudit.nn import TrainConfig, architecture, init_model

from test_nn import blob_data


def rdp_quad_oracle(q: float, sigma: float, alpha: int) -> float:
    """Renyi divergence of the subsampled Gaussian by direct quadrature.

    Integrates E_{x~N(0,sigma^2)}[((1-q) + q e^{(2x-1)/(2 sigma^2)})^alpha]
    with the power folded into the exponent so moderate alpha stays finite.
    """

    def integrand(x):
        shift = (2.0 * x - 1.0) / (2.0 * sigma**2)
        log_mix = np.logaddexp(math.log1p(-q), math.log(q) + shift)
        log_weight = -(x**2) / (2.0 * sigma**2) - 0.5 * math.log(
            2.0 * math.pi * sigma**2
        )
        return np.exp(alpha * log_mix + log_weight)

    lim = 30.0 * sigma + alpha
    val, err = integrate.quad(integrand, -lim, lim, limit=400)
    assert err < 1e-8 * max(val, 1.0)
    return math.log(val) / (alpha - 1.0)


# regimes chosen to keep the quadrature itself inside float64 range
ORACLE_REGIMES = [
    (0.01, 1.1, 2),
    (0.01, 1.1, 4),
    (0.01, 1.1, 8),
    (0.01, 1.1, 16),
    (0.1, 2.0, 2),
    (0.1, 2.0, 8),
    (0.5, 4.0, 16),
]


class TestAccountantOracle:
    @pytest.mark.parametrize("q,sigma,alpha", ORACLE_REGIMES)
    def test_single_step_rdp_matches_quadrature(self, q, sigma, alpha):
        got = compute_rdp(q, sigma, 1, [float(alpha)])[0]
        want = rdp_quad_oracle(q, sigma, alpha)
        assert got == pytest.approx(want, rel=1e-7)

    def test_full_batch_closed_form(self):
        # q = 1 is the plain Gaussian mechanism: RDP = alpha / (2 sigma^2)
        for sigma in (0.5, 1.0, 4.0):
            for alpha in (2.0, 8.0, 64.0):
                got = compute_rdp(1.0, sigma, 1, [alpha])[0]
                assert got == pytest.approx(alpha / (2 * sigma**2), rel=1e-12)

    def test_composition_is_linear(self):
        one = compute_rdp(0.02, 1.5, 1, [4.0])[0]
        many = compute_rdp(0.02, 1.5, 730, [4.0])[0]
        assert many == pytest.approx(730 * one, rel=1e-12)

    def test_epsilon_reference_values(self):
        assert compute_epsilon(10000, 0.01, 1.1, 1e-5) == pytest.approx(
            6.279811029572249, rel=1e-9
        )
        assert compute_epsilon(1, 1.0, 1.0, 1e-5) == pytest.approx(
            5.302585092994046, rel=1e-9
        )
        assert compute_epsilon(100, 1.0, 10.0, 1e-6) == pytest.approx(
            5.763102111592855, rel=1e-9
        )

    def test_zero_steps_costs_nothing(self):
        assert compute_epsilon(0, 0.01, 1.0, 1e-5) == 0.0
        assert compute_epsilon(100, 0.0, 1.0, 1e-5) == 0.0

    def test_epsilon_monotone_in_steps(self):
        values = [
            compute_epsilon(s, 0.01, 1.1, 1e-5) for s in (1, 10, 100, 1000, 10000)
        ]
        assert all(a < b for a, b in zip(values, values[1:]))

    def test_epsilon_monotone_in_noise(self):
        values = [
            compute_epsilon(1000, 0.01, nm, 1e-5) for nm in (0.6, 1.0, 2.0, 4.0)
        ]
        assert all(a > b for a, b in zip(values, values[1:]))

    def test_epsilon_monotone_in_sampling_rate(self):
        values = [compute_epsilon(1000, q, 1.1, 1e-5) for q in (0.005, 0.02, 0.1)]
        assert all(a < b for a, b in zip(values, values[1:]))

    def test_invalid_arguments(self):
        with pytest.raises(ValueError):
            compute_epsilon(-1, 0.01, 1.0, 1e-5)
        with pytest.raises(ValueError):
            compute_epsilon(10, 1.5, 1.0, 1e-5)
        with pytest.raises(ValueError):
            compute_epsilon(10, 0.01, 0.0, 1e-5)
        with pytest.raises(ValueError):
            compute_epsilon(10, 0.01, 1.0, 1.5)
        with pytest.raises(ValueError):
            compute_rdp(0.01, 1.0, 1, [0.5])

    def test_no_finite_bound_raises(self):
        with pytest.raises(AccountantError):
            rdp_to_epsilon([2.0, 4.0], [np.inf, np.inf], 1e-5)


class TestCalibration:
    @pytest.mark.parametrize("target", [5.0, 1.0, 0.1])
    def test_round_trip_within_tolerance(self, target):
        steps, q, delta = 5600, 0.008955, 1e-6
        nm = calibrate_noise(target, steps, q, delta)
        achieved = compute_epsilon(steps, q, nm, delta)
        assert abs(achieved - target) / target <= 0.05

    def test_tighter_target_needs_more_noise(self):
        steps, q, delta = 5600, 0.008955, 1e-6
        nms = [calibrate_noise(t, steps, q, delta) for t in (5.0, 1.0, 0.1)]
        assert nms[0] < nms[1] < nms[2]

    def test_unreachable_target_raises(self):
        with pytest.raises(CalibrationError):
            calibrate_noise(1e-12, 10000, 0.5, 1e-6)

    def test_nonpositive_target_rejected(self):
        with pytest.raises(ValueError):
            calibrate_noise(0.0, 100, 0.01, 1e-6)


class TestDpTrain:
    def setup_method(self):
        self.X, self.y = blob_data(n=240, d=5, seed=1)
        self.model = init_model(5, architecture("default"), seed=0)
        self.cfg = TrainConfig(epochs=2, batch_size=48)

    class _Arrays:
        def __init__(self, X, y):
            self.X = X
            self.y = y

    def _ds(self):
        return self._Arrays(self.X, self.y)

    def test_clipping_invariant(self):
        seen = []

        def audit(step, norms):
            seen.extend(norms)

        dp_cfg = DpConfig(noise_multiplier=1.0, l2_clip=0.05)
        dp_train(self.model, self._ds(), self.cfg, dp_cfg, seed=0, audit=audit)
        assert seen
        assert max(seen) <= 0.05 + 1e-12
        # with such a tight clip, at least some gradients had to be cut
        assert any(abs(n - 0.05) < 1e-12 for n in seen)

    def test_privacy_spent_matches_accountant(self):
        dp_cfg = DpConfig(noise_multiplier=1.3, l2_clip=1.0, delta=1e-6)
        _, spent, _ = dp_train(self.model, self._ds(), self.cfg, dp_cfg, seed=0)
        expected_steps = self.cfg.epochs * math.ceil(len(self.X) / 48)
        assert spent.steps == expected_steps
        assert spent.sampling_rate == pytest.approx(48 / len(self.X))
        assert spent.epsilon == pytest.approx(
            compute_epsilon(spent.steps, spent.sampling_rate, 1.3, 1e-6)
        )
        assert not spent.non_private

    def test_zero_noise_flagged_non_private(self):
        dp_cfg = DpConfig(noise_multiplier=0.0, l2_clip=1.0, delta=1e-6)
        _, spent, _ = dp_train(self.model, self._ds(), self.cfg, dp_cfg, seed=0)
        assert spent.non_private
        assert spent.epsilon == np.inf

    def test_deterministic(self):
        dp_cfg = DpConfig(noise_multiplier=1.0, l2_clip=1.0, delta=1e-6)
        a, _, _ = dp_train(self.model, self._ds(), self.cfg, dp_cfg, seed=4)
        b, _, _ = dp_train(self.model, self._ds(), self.cfg, dp_cfg, seed=4)
        assert a.digest() == b.digest()

    def test_noise_seed_changes_weights(self):
        dp_cfg = DpConfig(noise_multiplier=1.0, l2_clip=1.0, delta=1e-6)
        a, _, _ = dp_train(self.model, self._ds(), self.cfg, dp_cfg, seed=4)
        b, _, _ = dp_train(self.model, self._ds(), self.cfg, dp_cfg, seed=5)
        assert a.digest() != b.digest()

    def test_microbatch_must_divide_batch(self):
        dp_cfg = DpConfig(noise_multiplier=1.0, l2_clip=1.0, microbatch_size=7)
        with pytest.raises(ValueError):
            dp_train(self.model, self._ds(), self.cfg, dp_cfg, seed=0)

    def test_large_delta_warns(self):
        dp_cfg = DpConfig(noise_multiplier=1.0, l2_clip=1.0, delta=0.5)
        with pytest.warns(UserWarning, match="delta"):
            dp_train(self.model, self._ds(), self.cfg, dp_cfg, seed=0)

    def test_still_learns_with_mild_noise(self):
        # a loose privacy setting must not destroy a trivially separable task
        cfg = TrainConfig(epochs=12, batch_size=48)
        dp_cfg = DpConfig(noise_multiplier=0.3, l2_clip=2.0, delta=1e-6)
        trained, _, _ = dp_train(self.model, self._ds(), cfg, dp_cfg, seed=0)
        acc = nn.evaluate_arrays(trained, self.X, self.y)
        assert acc >= 0.75

    def test_spent_dict_shape(self):
        dp_cfg = DpConfig(noise_multiplier=1.0, l2_clip=1.0, delta=1e-6)
        _, spent, _ = dp_train(self.model, self._ds(), self.cfg, dp_cfg, seed=0)
        d = spent.to_dict()
        assert set(d) == {
            "epsilon",
            "delta",
            "steps",
            "sampling_rate",
            "noise_multiplier",
            "non_private",
        }
