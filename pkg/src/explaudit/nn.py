"""Dense feedforward binary classifier with manual backpropagation.

Implements exactly what the audit needs: He/Glorot initialization, mini-batch
Adam on binary cross-entropy, accuracy evaluation, and analytic gradients of
the probability output with respect to the inputs (consumed by the
gradient-based explainers). Everything is float64 numpy; no autodiff.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

_PROB_EPS = 1e-12


class TrainingDiverged(RuntimeError):
    """Raised when the training loss becomes non-finite."""


@dataclass(frozen=True)
class LayerSpec:
    """Width and activation of one dense layer.

    Args:
        width: Number of units, >= 1.
        activation: One of "relu", "sigmoid", "identity".
    """

    width: int
    activation: str = "relu"

    def __post_init__(self):
        if self.width < 1:
            raise ValueError("layer width must be >= 1")
        if self.activation not in ("relu", "sigmoid", "identity"):
            raise ValueError(f"unknown activation {self.activation!r}")


@dataclass(frozen=True)
class TrainConfig:
    """Mini-batch training hyperparameters.

    Args:
        epochs: Full passes over the data, >= 1.
        learning_rate: Adam step size.
        batch_size: Rows per mini-batch (clamped to the dataset size).
        l2_lambda: Weight-decay coefficient added to the loss as
            l2_lambda * sum(W**2); zero disables it.
        early_stop_tol: If set, training stops once the epoch loss has not
            improved by more than this for `early_stop_patience` epochs.
    """

    epochs: int = 50
    learning_rate: float = 1e-3
    batch_size: int = 48
    optimizer: str = "adam"
    loss: str = "binary_cross_entropy"
    l2_lambda: float = 0.0
    early_stop_tol: float | None = None
    early_stop_patience: int = 10

    def __post_init__(self):
        if self.epochs < 1:
            raise ValueError("epochs must be >= 1")
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be positive")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if self.optimizer != "adam":
            raise ValueError("only the adam optimizer is supported")
        if self.loss != "binary_cross_entropy":
            raise ValueError("only binary_cross_entropy loss is supported")


@dataclass
class MlpModel:
    """Feedforward network ending in a single sigmoid unit.

    Weights are a list of (fan_in, fan_out) matrices; biases are vectors.
    Instances are treated as immutable after training: `train` works on a
    copy and returns it.
    """

    input_dim: int
    layers: list[LayerSpec]
    weights: list[np.ndarray]
    biases: list[np.ndarray]
    seed: int

    def copy(self) -> "MlpModel":
        return MlpModel(
            input_dim=self.input_dim,
            layers=list(self.layers),
            weights=[w.copy() for w in self.weights],
            biases=[b.copy() for b in self.biases],
            seed=self.seed,
        )

    @property
    def parameter_count(self) -> int:
        return sum(w.size for w in self.weights) + sum(b.size for b in self.biases)

    def digest(self) -> str:
        h = hashlib.sha256()
        for w, b in zip(self.weights, self.biases):
            h.update(np.ascontiguousarray(w).tobytes())
            h.update(np.ascontiguousarray(b).tobytes())
        return h.hexdigest()[:16]


def architecture(profile: str) -> list[LayerSpec]:
    """Named layer stacks used by the audit profiles."""
    stacks = {
        "default": [40, 40],
        "wide": [1024, 512, 256, 128],
        "attack": [64, 128, 32],
    }
    if profile not in stacks:
        raise KeyError(f"unknown architecture profile {profile!r}")
    hidden = [LayerSpec(w, "relu") for w in stacks[profile]]
    return hidden + [LayerSpec(1, "sigmoid")]


def init_model(input_dim: int, layers: list[LayerSpec], seed: int) -> MlpModel:
    """Deterministically initialize a model.

    ReLU layers use He-uniform fan-in limits, sigmoid and identity layers use
    Glorot-uniform limits; all biases start at zero.

    Args:
        input_dim: Width of the input vector.
        layers: Layer stack; the last layer must be width 1 with sigmoid.
        seed: Initialization seed.

    Returns:
        A new MlpModel with freshly drawn parameters.
    """
    if input_dim < 1:
        raise ValueError("input_dim must be >= 1")
    if not layers or layers[-1].width != 1 or layers[-1].activation != "sigmoid":
        raise ValueError("layer stack must end in a width-1 sigmoid layer")
    rng = np.random.default_rng(seed)
    weights, biases = [], []
    fan_in = input_dim
    for spec in layers:
        if spec.activation == "relu":
            limit = np.sqrt(6.0 / fan_in)
        else:
            limit = np.sqrt(6.0 / (fan_in + spec.width))
        weights.append(rng.uniform(-limit, limit, size=(fan_in, spec.width)))
        biases.append(np.zeros(spec.width))
        fan_in = spec.width
    return MlpModel(
        input_dim=input_dim, layers=list(layers), weights=weights, biases=biases,
        seed=seed,
    )


def _activate(z: np.ndarray, kind: str) -> np.ndarray:
    if kind == "relu":
        return np.maximum(z, 0.0)
    if kind == "sigmoid":
        # numerically stable logistic
        out = np.empty_like(z)
        pos = z >= 0
        out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
        ez = np.exp(z[~pos])
        out[~pos] = ez / (1.0 + ez)
        return out
    return z


def _activate_grad(z: np.ndarray, a: np.ndarray, kind: str) -> np.ndarray:
    if kind == "relu":
        return (z > 0).astype(np.float64)
    if kind == "sigmoid":
        return a * (1.0 - a)
    return np.ones_like(z)


def _forward_pass(model: MlpModel, X: np.ndarray):
    """Return (activations, pre-activations); activations[0] is the input."""
    acts = [X]
    pres = []
    a = X
    for spec, w, b in zip(model.layers, model.weights, model.biases):
        z = a @ w + b
        a = _activate(z, spec.activation)
        pres.append(z)
        acts.append(a)
    return acts, pres


def forward(model: MlpModel, x: np.ndarray) -> np.ndarray | float:
    """Probability of the positive class.

    Args:
        x: A single feature vector or an (n, d) batch.

    Returns:
        A float for a single vector, else a length-n array. Values are
        clamped into the open interval (0, 1).
    """
    x = np.asarray(x, dtype=np.float64)
    single = x.ndim == 1
    X = x.reshape(1, -1) if single else x
    if X.shape[1] != model.input_dim:
        raise ValueError(
            f"input width {X.shape[1]} does not match model input_dim "
            f"{model.input_dim}"
        )
    acts, _ = _forward_pass(model, X)
    p = np.clip(acts[-1][:, 0], _PROB_EPS, 1.0 - _PROB_EPS)
    return float(p[0]) if single else p


def predict(model: MlpModel, X: np.ndarray) -> np.ndarray:
    """Hard labels with the tie rule: probability >= 0.5 maps to 1."""
    p = np.atleast_1d(forward(model, X))
    return (p >= 0.5).astype(np.int8)


def evaluate(model: MlpModel, ds) -> float:
    """Accuracy of thresholded predictions on a dataset."""
    return evaluate_arrays(model, ds.X, ds.y)


def evaluate_arrays(model: MlpModel, X: np.ndarray, y: np.ndarray) -> float:
    if len(X) == 0:
        raise ValueError("cannot evaluate on an empty dataset")
    return float(np.mean(predict(model, X) == np.asarray(y)))


def bce_loss(p: np.ndarray, y: np.ndarray) -> float:
    p = np.clip(p, _PROB_EPS, 1.0 - _PROB_EPS)
    return float(-np.mean(y * np.log(p) + (1 - y) * np.log(1 - p)))


def _batch_gradients(model: MlpModel, X: np.ndarray, y: np.ndarray,
                     l2_lambda: float = 0.0):
    """Mean BCE gradient over a batch, plus the batch loss."""
    n = X.shape[0]
    acts, pres = _forward_pass(model, X)
    p = acts[-1][:, 0]
    loss = bce_loss(p, y)
    # d(mean BCE)/dz for a sigmoid output collapses to (p - y) / n
    delta = ((np.clip(p, _PROB_EPS, 1 - _PROB_EPS) - y) / n).reshape(-1, 1)
    grads_w = [np.empty(0)] * len(model.weights)
    grads_b = [np.empty(0)] * len(model.biases)
    for l in range(len(model.layers) - 1, -1, -1):
        grads_w[l] = acts[l].T @ delta
        grads_b[l] = delta.sum(axis=0)
        if l2_lambda > 0.0:
            grads_w[l] = grads_w[l] + 2.0 * l2_lambda * model.weights[l]
        if l > 0:
            spec = model.layers[l - 1]
            delta = (delta @ model.weights[l].T) * _activate_grad(
                pres[l - 1], acts[l], spec.activation
            )
    if l2_lambda > 0.0:
        loss += l2_lambda * sum(float((w**2).sum()) for w in model.weights)
    return grads_w, grads_b, loss


class AdamState:
    """First/second moment accumulators for one parameter set."""

    def __init__(self, model: MlpModel, lr: float,
                 beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.t = 0
        self.m_w = [np.zeros_like(w) for w in model.weights]
        self.v_w = [np.zeros_like(w) for w in model.weights]
        self.m_b = [np.zeros_like(b) for b in model.biases]
        self.v_b = [np.zeros_like(b) for b in model.biases]

    def step(self, model: MlpModel, grads_w, grads_b) -> None:
        self.t += 1
        bc1 = 1.0 - self.beta1**self.t
        bc2 = 1.0 - self.beta2**self.t
        for l in range(len(model.weights)):
            for params, grads, m, v in (
                (model.weights, grads_w, self.m_w, self.v_w),
                (model.biases, grads_b, self.m_b, self.v_b),
            ):
                m[l] = self.beta1 * m[l] + (1 - self.beta1) * grads[l]
                v[l] = self.beta2 * v[l] + (1 - self.beta2) * grads[l] ** 2
                m_hat = m[l] / bc1
                v_hat = v[l] / bc2
                params[l] = params[l] - self.lr * m_hat / (np.sqrt(v_hat) + self.eps)


def train(model: MlpModel, ds, cfg: TrainConfig, seed: int):
    """Train on a TabularDataset; see `train_arrays`."""
    return train_arrays(model, ds.X, ds.y, cfg, seed)


def train_arrays(model: MlpModel, X: np.ndarray, y: np.ndarray,
                 cfg: TrainConfig, seed: int):
    """Mini-batch Adam training on binary cross-entropy.

    Args:
        model: Initialized model; left untouched (a copy is trained).
        X: Feature matrix (n, d).
        y: Binary labels (n,).
        cfg: Hyperparameters.
        seed: Shuffling seed; together with the model's init seed this makes
            training fully deterministic.

    Returns:
        (trained model, per-epoch mean loss history)

    Raises:
        TrainingDiverged: If the loss stops being finite.
    """
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if len(X) == 0:
        raise ValueError("cannot train on an empty dataset")
    out = model.copy()
    rng = np.random.default_rng(seed)
    adam = AdamState(out, cfg.learning_rate)
    batch = min(cfg.batch_size, len(X))
    history: list[float] = []
    best = np.inf
    stale = 0
    for epoch in range(cfg.epochs):
        perm = rng.permutation(len(X))
        losses = []
        for start in range(0, len(X), batch):
            idx = perm[start : start + batch]
            grads_w, grads_b, loss = _batch_gradients(
                out, X[idx], y[idx], cfg.l2_lambda
            )
            if not np.isfinite(loss):
                raise TrainingDiverged(
                    f"non-finite loss at epoch {epoch}, batch start {start} "
                    f"(lr={cfg.learning_rate}, batch={batch})"
                )
            adam.step(out, grads_w, grads_b)
            losses.append(loss)
        epoch_loss = float(np.mean(losses))
        history.append(epoch_loss)
        if cfg.early_stop_tol is not None:
            if epoch_loss < best - cfg.early_stop_tol:
                best = epoch_loss
                stale = 0
            else:
                stale += 1
                if stale >= cfg.early_stop_patience:
                    break
    return out, history


def input_gradient(model: MlpModel, x: np.ndarray) -> np.ndarray:
    """Analytic gradient of the probability output w.r.t. the inputs.

    Args:
        x: Single vector (d,) or batch (n, d).

    Returns:
        Gradient array with the same shape as `x`.
    """
    x = np.asarray(x, dtype=np.float64)
    single = x.ndim == 1
    X = x.reshape(1, -1) if single else x
    acts, pres = _forward_pass(model, X)
    # seed the backward pass with dp/dz at the sigmoid output
    out_spec = model.layers[-1]
    delta = _activate_grad(pres[-1], acts[-1], out_spec.activation)
    for l in range(len(model.layers) - 1, 0, -1):
        delta = (delta @ model.weights[l].T) * _activate_grad(
            pres[l - 1], acts[l], model.layers[l - 1].activation
        )
    grad = delta @ model.weights[0].T
    return grad[0] if single else grad


def save_model(model: MlpModel, path: str | Path) -> None:
    """Serialize to a versioned npz (layer dims plus row-major parameters)."""
    meta = {
        "format": "mlp-v1",
        "input_dim": model.input_dim,
        "widths": [l.width for l in model.layers],
        "activations": [l.activation for l in model.layers],
        "seed": model.seed,
    }
    arrays = {"meta_json": np.array(json.dumps(meta))}
    for i, (w, b) in enumerate(zip(model.weights, model.biases)):
        arrays[f"w{i}"] = w
        arrays[f"b{i}"] = b
    np.savez_compressed(path, **arrays)


def load_model(path: str | Path) -> MlpModel:
    with np.load(path, allow_pickle=False) as data:
        meta = json.loads(str(data["meta_json"]))
        if meta.get("format") != "mlp-v1":
            raise ValueError(f"unsupported model format {meta.get('format')!r}")
        layers = [
            LayerSpec(w, a) for w, a in zip(meta["widths"], meta["activations"])
        ]
        weights = [data[f"w{i}"] for i in range(len(layers))]
        biases = [data[f"b{i}"] for i in range(len(layers))]
        return MlpModel(
            input_dim=int(meta["input_dim"]),
            layers=layers,
            weights=weights,
            biases=biases,
            seed=int(meta["seed"]),
        )
