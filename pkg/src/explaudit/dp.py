"""Differentially private training and an RDP privacy accountant.

Training: per-microbatch mean gradients are clipped to a fixed L2 norm,
summed, perturbed with Gaussian noise of standard deviation
noise_multiplier * l2_clip, averaged, and applied with Adam.

Accounting: Renyi differential privacy of the subsampled Gaussian mechanism,
evaluated over a grid of orders and converted to (epsilon, delta). Batches
drawn by shuffle-and-partition are treated as Poisson sampling with
q = batch_size / n; this is a documented approximation.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np
from scipy import special

from .nn import AdamState, MlpModel, TrainConfig, TrainingDiverged, _batch_gradients


class AccountantError(ValueError):
    """Raised when no finite privacy bound exists on the order grid."""


class CalibrationError(ValueError):
    """Raised when no noise multiplier reaches the target epsilon."""


@dataclass(frozen=True)
class DpConfig:
    """Mechanism parameters for one DP training run.

    Args:
        noise_multiplier: Ratio of Gaussian noise std to l2_clip. Zero is
            accepted but yields a non-private run flagged with infinite
            epsilon.
        l2_clip: Clipping threshold for each microbatch-mean gradient.
        microbatch_size: Rows per clipped unit; 1 gives per-example clipping.
        delta: Failure probability of the (epsilon, delta) guarantee.
    """

    noise_multiplier: float
    l2_clip: float
    microbatch_size: int = 1
    delta: float = 1e-6

    def __post_init__(self):
        if self.noise_multiplier < 0:
            raise ValueError("noise_multiplier must be >= 0")
        if self.l2_clip <= 0:
            raise ValueError("l2_clip must be positive")
        if self.microbatch_size < 1:
            raise ValueError("microbatch_size must be >= 1")
        if not (0.0 < self.delta < 1.0):
            raise ValueError("delta must lie in (0, 1)")


@dataclass(frozen=True)
class PrivacySpent:
    """Privacy budget consumed by a training run."""

    epsilon: float
    delta: float
    steps: int
    sampling_rate: float
    noise_multiplier: float
    non_private: bool = False

    def to_dict(self) -> dict:
        return {
            "epsilon": self.epsilon,
            "delta": self.delta,
            "steps": self.steps,
            "sampling_rate": self.sampling_rate,
            "noise_multiplier": self.noise_multiplier,
            "non_private": self.non_private,
        }


# Orders for the RDP accountant. Small fractional orders cover the
# high-epsilon regime; the large integer tail keeps the conversion floor
# log(1/delta)/(alpha-1) well below any epsilon this tool reports.
DEFAULT_ORDERS: tuple[float, ...] = tuple(
    [1.25, 1.5, 1.75, 2.0, 2.25, 2.5, 3.0, 3.5, 4.0, 4.5]
    + list(range(5, 64))
    + [64, 80, 96, 128, 192, 256, 384, 512, 768, 1024, 2048, 4096, 8192, 16384]
)


def _log_add(a: float, b: float) -> float:
    if a == -np.inf:
        return b
    if b == -np.inf:
        return a
    hi, lo = max(a, b), min(a, b)
    return hi + math.log1p(math.exp(lo - hi))


def _log_sub(a: float, b: float) -> float:
    if b == -np.inf:
        return a
    if a == b:
        return -np.inf
    if b > a:
        raise ValueError("log_sub of a larger value")
    return a + math.log1p(-math.exp(b - a))


def _log_erfc(x: float) -> float:
    # log(erfc(x)) without underflow, via the normal log-CDF
    return math.log(2.0) + special.log_ndtr(-x * math.sqrt(2.0))


def _log_a_int(q: float, sigma: float, alpha: int) -> float:
    """log A_alpha for integer alpha via the binomial expansion."""
    i = np.arange(alpha + 1, dtype=np.float64)
    log_coef = (
        special.gammaln(alpha + 1)
        - special.gammaln(i + 1)
        - special.gammaln(alpha - i + 1)
        + i * math.log(q)
        + (alpha - i) * math.log1p(-q)
    )
    s = log_coef + (i * i - i) / (2.0 * sigma**2)
    return float(special.logsumexp(s))


def _log_a_frac(q: float, sigma: float, alpha: float) -> float:
    """log A_alpha for fractional alpha via the two-sided series."""
    log_a0, log_a1 = -np.inf, -np.inf
    z0 = sigma**2 * math.log(1.0 / q - 1.0) + 0.5
    i = 0
    while True:
        coef = special.binom(alpha, i)
        log_coef = math.log(abs(coef))
        j = alpha - i
        log_t0 = log_coef + i * math.log(q) + j * math.log1p(-q)
        log_t1 = log_coef + j * math.log(q) + i * math.log1p(-q)
        log_e0 = math.log(0.5) + _log_erfc((i - z0) / (math.sqrt(2.0) * sigma))
        log_e1 = math.log(0.5) + _log_erfc((z0 - j) / (math.sqrt(2.0) * sigma))
        log_s0 = log_t0 + (i * i - i) / (2.0 * sigma**2) + log_e0
        log_s1 = log_t1 + (j * j - j) / (2.0 * sigma**2) + log_e1
        if coef > 0:
            log_a0 = _log_add(log_a0, log_s0)
            log_a1 = _log_add(log_a1, log_s1)
        else:
            log_a0 = _log_sub(log_a0, log_s0)
            log_a1 = _log_sub(log_a1, log_s1)
        i += 1
        if max(log_s0, log_s1) < -30 and i > alpha:
            break
        if i > 10000:
            raise AccountantError("fractional-order series failed to converge")
    return _log_add(log_a0, log_a1)


def _rdp_step(q: float, sigma: float, alpha: float) -> float:
    """RDP of one subsampled-Gaussian invocation at one order."""
    if q == 0.0:
        return 0.0
    if sigma == 0.0:
        return np.inf
    if q == 1.0:
        return alpha / (2.0 * sigma**2)
    if float(alpha).is_integer():
        log_a = _log_a_int(q, sigma, int(alpha))
    else:
        log_a = _log_a_frac(q, sigma, alpha)
    return log_a / (alpha - 1.0)


def compute_rdp(
    q: float, noise_multiplier: float, steps: int, orders
) -> np.ndarray:
    """RDP at each order after `steps` compositions."""
    orders = np.atleast_1d(np.asarray(orders, dtype=np.float64))
    if np.any(orders <= 1):
        raise ValueError("orders must be > 1")
    rdp = np.array(
        [_rdp_step(q, noise_multiplier, float(a)) for a in orders]
    )
    return rdp * steps


def rdp_to_epsilon(orders, rdp, delta: float) -> tuple[float, float]:
    """Convert an RDP curve to (epsilon, best order) at a fixed delta."""
    orders = np.atleast_1d(np.asarray(orders, dtype=np.float64))
    rdp = np.atleast_1d(np.asarray(rdp, dtype=np.float64))
    eps = rdp + math.log(1.0 / delta) / (orders - 1.0)
    finite = np.isfinite(eps)
    if not np.any(finite):
        raise AccountantError(
            "no finite privacy bound on the order grid; "
            "increase noise or reduce steps"
        )
    idx = int(np.argmin(np.where(finite, eps, np.inf)))
    return float(max(eps[idx], 0.0)), float(orders[idx])


def compute_epsilon(
    steps: int,
    sampling_rate: float,
    noise_multiplier: float,
    delta: float,
    orders=DEFAULT_ORDERS,
) -> float:
    """Epsilon spent by `steps` subsampled-Gaussian invocations.

    Args:
        steps: Number of noisy gradient steps; 0 means the mechanism never
            ran and costs epsilon 0.
        sampling_rate: Poisson sampling probability q in (0, 1].
        noise_multiplier: Noise std divided by the clipping norm.
        delta: Target delta of the conversion.
    """
    if steps < 0:
        raise ValueError("steps must be >= 0")
    if not (0.0 <= sampling_rate <= 1.0):
        raise ValueError("sampling_rate must lie in [0, 1]")
    if noise_multiplier <= 0:
        raise ValueError("noise_multiplier must be positive for accounting")
    if not (0.0 < delta < 1.0):
        raise ValueError("delta must lie in (0, 1)")
    if steps == 0 or sampling_rate == 0.0:
        return 0.0
    grid = [
        a
        for a in orders
        # the alternating fractional series is reliable only for q < 0.5
        if float(a).is_integer() or sampling_rate < 0.5
    ]
    rdp = compute_rdp(sampling_rate, noise_multiplier, steps, grid)
    eps, _ = rdp_to_epsilon(grid, rdp, delta)
    return eps


def calibrate_noise(
    target_epsilon: float,
    steps: int,
    sampling_rate: float,
    delta: float,
    rtol: float = 0.05,
) -> float:
    """Smallest-noise multiplier whose epsilon is within rtol of the target.

    Bisection over the noise multiplier; epsilon is monotone nonincreasing in
    the multiplier, so the bracket is expanded geometrically until it
    straddles the target.
    """
    if target_epsilon <= 0:
        raise ValueError("target_epsilon must be positive")

    def eps_at(nm: float) -> float:
        try:
            return compute_epsilon(steps, sampling_rate, nm, delta)
        except AccountantError:
            return np.inf

    lo, hi = 0.05, 64.0
    while eps_at(lo) < target_epsilon and lo > 1e-6:
        lo /= 8.0
    while eps_at(hi) > target_epsilon and hi < 1e9:
        hi *= 8.0
    if eps_at(lo) < target_epsilon or eps_at(hi) > target_epsilon:
        raise CalibrationError(
            f"target epsilon {target_epsilon} unreachable within the "
            f"multiplier bracket [{lo}, {hi}]"
        )
    for _ in range(200):
        mid = math.sqrt(lo * hi)
        e = eps_at(mid)
        if abs(e - target_epsilon) / target_epsilon <= rtol:
            return mid
        if e > target_epsilon:
            lo = mid
        else:
            hi = mid
    raise CalibrationError(
        f"bisection failed to reach epsilon {target_epsilon} within "
        f"{rtol:.0%}; nearest bracket [{lo}, {hi}]"
    )


def dp_train(
    model: MlpModel,
    ds,
    train_cfg: TrainConfig,
    dp_cfg: DpConfig,
    seed: int,
    audit=None,
):
    """Differentially private Adam training.

    Args:
        model: Initialized model (trained copy is returned).
        ds: TabularDataset or any object with X and y arrays.
        train_cfg: Epochs, learning rate, batch size.
        dp_cfg: Clipping and noise parameters.
        seed: Controls shuffling and the noise draws.
        audit: Optional callable(step, clipped_norms) invoked every step with
            the post-clipping microbatch gradient norms (debug invariant).

    Returns:
        (trained model, PrivacySpent, per-epoch loss history)
    """
    X = np.asarray(ds.X, dtype=np.float64)
    y = np.asarray(ds.y, dtype=np.float64)
    n = len(X)
    if n == 0:
        raise ValueError("cannot train on an empty dataset")
    batch = min(train_cfg.batch_size, n)
    if batch % dp_cfg.microbatch_size != 0:
        raise ValueError(
            f"microbatch_size {dp_cfg.microbatch_size} must divide "
            f"batch_size {batch}"
        )
    if dp_cfg.delta > 1.0 / n:
        warnings.warn(
            f"delta {dp_cfg.delta} exceeds 1/n = {1.0 / n:.2e}", stacklevel=2
        )

    out = model.copy()
    rng = np.random.default_rng(seed)
    adam = AdamState(out, train_cfg.learning_rate)
    clip = dp_cfg.l2_clip
    sigma = dp_cfg.noise_multiplier * clip
    history: list[float] = []
    steps = 0
    for epoch in range(train_cfg.epochs):
        perm = rng.permutation(n)
        losses = []
        for start in range(0, n, batch):
            idx = perm[start : start + batch]
            sum_w = [np.zeros_like(w) for w in out.weights]
            sum_b = [np.zeros_like(b) for b in out.biases]
            norms = []
            micro_losses = []
            n_micro = 0
            for mstart in range(0, len(idx), dp_cfg.microbatch_size):
                midx = idx[mstart : mstart + dp_cfg.microbatch_size]
                gw, gb, loss = _batch_gradients(out, X[midx], y[midx])
                if not np.isfinite(loss):
                    raise TrainingDiverged(
                        f"non-finite loss at epoch {epoch}, step {steps}"
                    )
                norm = math.sqrt(
                    sum(float((g**2).sum()) for g in gw)
                    + sum(float((g**2).sum()) for g in gb)
                )
                if norm > clip:
                    scale = clip / norm
                    gw = [g * scale for g in gw]
                    gb = [g * scale for g in gb]
                    norm = clip
                norms.append(norm)
                micro_losses.append(loss)
                for l in range(len(sum_w)):
                    sum_w[l] += gw[l]
                    sum_b[l] += gb[l]
                n_micro += 1
            if sigma > 0:
                for l in range(len(sum_w)):
                    sum_w[l] += rng.normal(0.0, sigma, size=sum_w[l].shape)
                    sum_b[l] += rng.normal(0.0, sigma, size=sum_b[l].shape)
            grads_w = [g / n_micro for g in sum_w]
            grads_b = [g / n_micro for g in sum_b]
            adam.step(out, grads_w, grads_b)
            steps += 1
            if audit is not None:
                audit(steps, norms)
            losses.append(float(np.mean(micro_losses)))
        history.append(float(np.mean(losses)))

    q = min(batch / n, 1.0)
    if dp_cfg.noise_multiplier == 0:
        spent = PrivacySpent(
            epsilon=np.inf,
            delta=dp_cfg.delta,
            steps=steps,
            sampling_rate=q,
            noise_multiplier=0.0,
            non_private=True,
        )
    else:
        eps = compute_epsilon(steps, q, dp_cfg.noise_multiplier, dp_cfg.delta)
        spent = PrivacySpent(
            epsilon=eps,
            delta=dp_cfg.delta,
            steps=steps,
            sampling_rate=q,
            noise_multiplier=dp_cfg.noise_multiplier,
        )
    return out, spent, history
