"""Small dense classifier operating on flat parameter vectors.

The network is a plain MLP: ReLU hidden layers, softmax output,
cross-entropy loss, gradients written out by hand. Parameters live in
a single flat float64 vector (per layer: weight matrix then bias) so
the rest of the simulator can treat a model as one point in R^d.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class ModelArch:
    """Layer widths, input first, classifier output last."""

    layer_dims: tuple[int, ...]

    def __post_init__(self):
        if len(self.layer_dims) < 2:
            raise ValueError("need at least input and output dims")
        if any(d < 1 for d in self.layer_dims):
            raise ValueError(f"layer dims must be positive: {self.layer_dims}")

    @property
    def input_dim(self) -> int:
        return self.layer_dims[0]

    @property
    def class_count(self) -> int:
        return self.layer_dims[-1]


@dataclass
class Batch:
    """A block of training rows: features (n, d) and integer labels (n,)."""

    features: np.ndarray
    labels: np.ndarray

    def __post_init__(self):
        self.features = np.asarray(self.features, dtype=np.float64)
        self.labels = np.asarray(self.labels, dtype=np.int64)
        if self.features.ndim != 2 or self.labels.ndim != 1:
            raise ValueError("features must be (n, d), labels (n,)")
        if self.features.shape[0] != self.labels.shape[0]:
            raise ValueError("features and labels disagree on row count")
        if self.features.shape[0] == 0:
            raise ValueError("empty batch")
        if not np.all(np.isfinite(self.features)):
            raise ValueError("batch features contain NaN or Inf")


def param_count(arch: ModelArch) -> int:
    """Total number of parameters: sum of (fan_in + 1) * fan_out."""
    dims = arch.layer_dims
    return sum((dims[i] + 1) * dims[i + 1] for i in range(len(dims) - 1))


def init_params(arch: ModelArch, seed: int) -> np.ndarray:
    """Seeded Gaussian init, std 1/sqrt(fan_in) per layer, zero biases."""
    rng = np.random.default_rng(seed)
    dims = arch.layer_dims
    parts = []
    for i in range(len(dims) - 1):
        fan_in, fan_out = dims[i], dims[i + 1]
        w = rng.normal(0.0, 1.0 / np.sqrt(fan_in), size=(fan_in, fan_out))
        parts.append(w.ravel())
        parts.append(np.zeros(fan_out))
    return np.concatenate(parts)


def unpack(params: np.ndarray, arch: ModelArch) -> list[tuple[np.ndarray, np.ndarray]]:
    """Views of (W, b) per layer into the flat vector; no copies."""
    dims = arch.layer_dims
    if params.shape != (param_count(arch),):
        raise ValueError(
            f"params shape {params.shape} does not match arch {dims} "
            f"({param_count(arch)} values)")
    layers = []
    off = 0
    for i in range(len(dims) - 1):
        fan_in, fan_out = dims[i], dims[i + 1]
        w = params[off:off + fan_in * fan_out].reshape(fan_in, fan_out)
        off += fan_in * fan_out
        b = params[off:off + fan_out]
        off += fan_out
        layers.append((w, b))
    return layers


def indicative_features(params: np.ndarray, arch: ModelArch) -> np.ndarray:
    """Copy of the output-layer weights and biases (tail of the vector).

    These are the parameters that directly shape class scores; the
    similarity check watches only this slice, which also bounds the
    per-worker state the chief has to retain.
    """
    dims = arch.layer_dims
    if params.shape != (param_count(arch),):
        raise ValueError("params do not match arch")
    tail = (dims[-2] + 1) * dims[-1]
    return params[-tail:].copy()


def _forward(params: np.ndarray, arch: ModelArch, features: np.ndarray):
    """Return (pre-activations per hidden layer, activations, logits)."""
    layers = unpack(params, arch)
    acts = [features]
    pres = []
    a = features
    for w, b in layers[:-1]:
        z = a @ w + b
        pres.append(z)
        a = np.maximum(z, 0.0)
        acts.append(a)
    w, b = layers[-1]
    logits = a @ w + b
    return pres, acts, logits


def _log_softmax(logits: np.ndarray) -> np.ndarray:
    shifted = logits - logits.max(axis=1, keepdims=True)
    return shifted - np.log(np.exp(shifted).sum(axis=1, keepdims=True))


def loss_and_grad(params: np.ndarray, arch: ModelArch,
                  batch) -> tuple[float, np.ndarray]:
    """Mean cross-entropy loss and its gradient as a flat vector.

    The loss is averaged over the batch, so duplicating every row
    leaves both outputs unchanged.
    """
    x = np.asarray(batch.features, dtype=np.float64)
    y = np.asarray(batch.labels, dtype=np.int64)
    if x.shape[0] == 0:
        raise ValueError("empty batch")
    if x.shape[1] != arch.input_dim:
        raise ValueError(f"feature dim {x.shape[1]} != input dim {arch.input_dim}")
    if y.min() < 0 or y.max() >= arch.class_count:
        raise ValueError("label outside class range")

    n = x.shape[0]
    layers = unpack(params, arch)
    pres, acts, logits = _forward(params, arch, x)
    logp = _log_softmax(logits)
    loss = -float(logp[np.arange(n), y].sum()) / n

    # dL/dlogits for mean cross-entropy with softmax
    dz = np.exp(logp)
    dz[np.arange(n), y] -= 1.0
    dz /= n

    grads = [None] * len(layers)
    for i in range(len(layers) - 1, -1, -1):
        w, _ = layers[i]
        grads[i] = (acts[i].T @ dz, dz.sum(axis=0))
        if i > 0:
            dz = dz @ w.T
            dz[pres[i - 1] <= 0.0] = 0.0

    flat = np.concatenate([np.concatenate([gw.ravel(), gb])
                           for gw, gb in grads])
    return loss, flat


def evaluate(params: np.ndarray, arch: ModelArch, dataset) -> tuple[float, float]:
    """Return (mean loss, accuracy) on a dataset; ties go to the lowest id."""
    x = np.asarray(dataset.features, dtype=np.float64)
    y = np.asarray(dataset.labels, dtype=np.int64)
    if x.shape[0] == 0:
        raise ValueError("cannot evaluate on an empty dataset")
    _, _, logits = _forward(params, arch, x)
    logp = _log_softmax(logits)
    loss = -float(logp[np.arange(x.shape[0]), y].sum()) / x.shape[0]
    pred = np.argmax(logits, axis=1)
    accuracy = float(np.mean(pred == y))
    return loss, accuracy
