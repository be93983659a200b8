"""Backpropagation, mini-batch SGD and finite-difference gradient checks.

Samples are stored as rows, so a layer maps ``a`` of shape ``(n, fan_in)`` to
``z = a W^T + b`` of shape ``(n, fan_out)``.
"""

from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .activations import Activation, get_activation
from .errors import DimensionMismatch, EmptyDataset, InvalidNetwork, NonPositiveProbability, StaleCache
from .network import Kind, LinearLayer, Network, check_valid

log = logging.getLogger(__name__)

LOSSES = ("quadratic", "cross_entropy")
REGULARIZERS = ("none", "l1", "l2")


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 0.1
    batch_size: int = 16
    epochs: int = 50
    loss: str = "quadratic"
    regularizer: str = "none"
    lam: float = 0.0
    patience: int | None = None
    validation_split: float = 0.0
    seed: int = 42

    def __post_init__(self):
        if not self.learning_rate >= 0.0:
            raise ValueError("learning_rate must be nonnegative")
        if self.batch_size < 1:
            raise ValueError("batch_size must be at least 1")
        if self.epochs < 1:
            raise ValueError("epochs must be at least 1")
        if self.loss not in LOSSES:
            raise ValueError(f"loss must be one of {LOSSES}")
        if self.regularizer not in REGULARIZERS:
            raise ValueError(f"regularizer must be one of {REGULARIZERS}")
        if not self.lam >= 0.0:
            raise ValueError("lam must be nonnegative")
        if not 0.0 <= self.validation_split < 1.0:
            raise ValueError("validation_split must lie in [0, 1)")
        if self.patience is not None:
            if self.patience < 1:
                raise ValueError("patience must be at least 1")
            if self.validation_split <= 0.0:
                raise ValueError("early stopping needs a validation split")


@dataclass(frozen=True)
class Dataset:
    """Inputs ``(n, d)`` and targets ``(n, k)``; class labels are one-hot encoded."""

    inputs: np.ndarray
    targets: np.ndarray

    def __post_init__(self):
        x = np.atleast_2d(np.asarray(self.inputs, dtype=float))
        y = np.asarray(self.targets, dtype=float)
        if y.ndim == 1:
            y = y[:, None]
        if x.shape[0] != y.shape[0]:
            raise DimensionMismatch(f"{x.shape[0]} inputs but {y.shape[0]} targets")
        object.__setattr__(self, "inputs", x)
        object.__setattr__(self, "targets", y)

    def __len__(self) -> int:
        return self.inputs.shape[0]

    @classmethod
    def from_labels(cls, inputs, labels, classes: int | None = None) -> "Dataset":
        labels = np.asarray(labels, dtype=int)
        classes = int(labels.max()) + 1 if classes is None else classes
        if labels.size and (labels.min() < 0 or labels.max() >= classes):
            raise ValueError("labels out of range")
        return cls(inputs, np.eye(classes)[labels])

    def subset(self, idx) -> "Dataset":
        return Dataset(self.inputs[idx], self.targets[idx])


def load_dataset(path, n_inputs: int, labels: bool = False) -> Dataset:
    """Read a CSV with one sample per row, inputs first, then targets.

    With ``labels`` the single target column holds integer class labels.
    """
    rows = []
    with open(path, newline="") as fh:
        for row in csv.reader(fh):
            if not row or row[0].lstrip().startswith("#"):
                continue
            try:
                rows.append([float(v) for v in row])
            except ValueError:
                if rows:
                    raise
                continue  # header line
    if not rows:
        raise EmptyDataset(f"{path} holds no samples")
    data = np.array(rows)
    x, y = data[:, :n_inputs], data[:, n_inputs:]
    if y.shape[1] == 0:
        raise DimensionMismatch("no target columns")
    if labels:
        return Dataset.from_labels(x, y[:, 0].astype(int))
    return Dataset(x, y)


def save_dataset(data: Dataset, path) -> None:
    with open(Path(path), "w", newline="") as fh:
        w = csv.writer(fh)
        for x, y in zip(data.inputs, data.targets):
            w.writerow([repr(float(v)) for v in (*x, *y)])


class TrainState:
    """Mutable parameters of a standard network plus forward caches.

    ``version`` increases whenever parameters change so stale caches are
    detected.  After :func:`forward_cached` the lists ``zs`` and ``activations``
    hold ``z^l`` and ``a^l`` (with ``activations[0]`` the input); after
    :func:`backprop` ``deltas`` holds ``δ^l``.
    """

    def __init__(self, weights, biases, activations):
        self.weights = [np.array(w, dtype=float) for w in weights]
        self.biases = [np.array(b, dtype=float) for b in biases]
        self.activation_fns = [get_activation(a) for a in activations]
        if not (len(self.weights) == len(self.biases) == len(self.activation_fns)):
            raise DimensionMismatch("weights, biases and activations differ in length")
        for t, (w, b) in enumerate(zip(self.weights, self.biases)):
            if w.ndim != 2 or b.shape != (w.shape[0],):
                raise DimensionMismatch(f"layer {t}: bias does not match weights")
            if t and w.shape[1] != self.weights[t - 1].shape[0]:
                raise DimensionMismatch(f"layer {t}: fan-in does not match previous layer")
        for act in self.activation_fns[:-1]:
            if act.name == "softmax":
                raise InvalidNetwork("softmax is only supported on the output layer")
        self.version = 0
        self.zs: list[np.ndarray] = []
        self.activations: list[np.ndarray] = []
        self.deltas: list[np.ndarray] = []
        self._cache_version = -1
        self._cache_input: np.ndarray | None = None

    @property
    def input_dim(self) -> int:
        return self.weights[0].shape[1]

    @property
    def output_dim(self) -> int:
        return self.weights[-1].shape[0]

    @classmethod
    def from_network(cls, net: Network) -> "TrainState":
        check_valid(net)
        if net.kind != Kind.STANDARD:
            raise InvalidNetwork("training needs a standard network")
        return cls(
            [layer.weights for layer in net.layers],
            [layer.bias for layer in net.layers],
            [layer.activation for layer in net.layers],
        )

    def to_network(self) -> Network:
        layers = tuple(
            LinearLayer(w, b, a)
            for w, b, a in zip(self.weights, self.biases, self.activation_fns)
        )
        return Network(Kind.STANDARD, self.input_dim, layers)

    def copy(self) -> "TrainState":
        return TrainState(self.weights, self.biases, self.activation_fns)

    def parameters(self) -> list[np.ndarray]:
        """Weights then biases, layer by layer; views into the live arrays."""
        out = []
        for w, b in zip(self.weights, self.biases):
            out.extend([w, b])
        return out

    def touch(self) -> None:
        self.version += 1


def init_state(
    sizes: Sequence[int],
    seed: int = 42,
    hidden="relu",
    output="identity",
) -> TrainState:
    """Weights uniform in ``±1/sqrt(fan_in)``, zero biases."""
    if len(sizes) < 2:
        raise ValueError("sizes needs an input and an output entry")
    rng = np.random.default_rng(seed)
    weights, biases, acts = [], [], []
    for t, (fan_in, fan_out) in enumerate(zip(sizes[:-1], sizes[1:])):
        r = 1.0 / math.sqrt(fan_in)
        weights.append(rng.uniform(-r, r, (fan_out, fan_in)))
        biases.append(np.zeros(fan_out))
        acts.append(output if t == len(sizes) - 2 else hidden)
    return TrainState(weights, biases, acts)


def _as_batch(x, dim: int) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if x.ndim == 1:
        x = x[None, :] if dim > 1 or x.size == 1 else x[:, None]
    if x.ndim != 2 or x.shape[1] != dim:
        raise DimensionMismatch(f"expected inputs with {dim} columns, got shape {x.shape}")
    return x


def _forward(state: TrainState, x: np.ndarray, weights=None, biases=None):
    weights = state.weights if weights is None else weights
    biases = state.biases if biases is None else biases
    zs, acts = [], [x]
    a = x
    for w, b, act in zip(weights, biases, state.activation_fns):
        z = a @ w.T + b
        a = act(z, axis=-1)
        zs.append(z)
        acts.append(a)
    return zs, acts


def forward_cached(state: TrainState, x) -> np.ndarray:
    """Run the batch ``x`` forward, store ``z^l`` and ``a^l``, return the output."""
    x = _as_batch(x, state.input_dim)
    state.zs, state.activations = _forward(state, x)
    state.deltas = []
    state._cache_version = state.version
    state._cache_input = x
    return state.activations[-1]


def _as_targets(y, k: int, n: int) -> np.ndarray:
    y = np.asarray(y, dtype=float)
    if y.ndim <= 1:
        y = y.reshape(n, k) if y.size == n * k else y
    if y.shape != (n, k):
        raise DimensionMismatch(f"targets of shape {np.shape(y)} do not match outputs ({n}, {k})")
    return y


def sample_losses(kind: str, y, a) -> np.ndarray:
    """Per-sample loss for row-stacked targets and outputs."""
    a = np.atleast_2d(np.asarray(a, dtype=float))
    y = _as_targets(y, a.shape[1], a.shape[0])
    if kind == "quadratic":
        return 0.5 * np.sum((y - a) ** 2, axis=1)
    if kind == "cross_entropy":
        true = np.sum(y * a, axis=1)
        if np.any(true <= 0.0):
            raise NonPositiveProbability("cross-entropy needs a positive probability on the true class")
        return -np.log(true)
    raise ValueError(f"unknown loss {kind!r}")


def loss(kind: str, y, a) -> float:
    """Mean over samples of the quadratic or cross-entropy cost."""
    return float(np.mean(sample_losses(kind, y, a)))


@dataclass
class Gradients:
    weights: list[np.ndarray]
    biases: list[np.ndarray]

    def flat(self) -> np.ndarray:
        parts = []
        for w, b in zip(self.weights, self.biases):
            parts.extend([w.ravel(), b.ravel()])
        return np.concatenate(parts)


def _output_delta(state: TrainState, kind: str, y: np.ndarray) -> np.ndarray:
    a, z = state.activations[-1], state.zs[-1]
    act = state.activation_fns[-1]
    if kind == "cross_entropy":
        if act.name == "softmax":
            # combined softmax and cross-entropy derivative, y one-hot
            return a - y
        true = np.sum(y * a, axis=1, keepdims=True)
        if np.any(true <= 0.0):
            raise NonPositiveProbability("cross-entropy needs a positive probability on the true class")
        grad_a = -y / true
    elif kind == "quadratic":
        grad_a = a - y
    else:
        raise ValueError(f"unknown loss {kind!r}")
    if act.name == "softmax":
        # Jacobian diag(a) - a a^T applied to grad_a, row by row
        return a * (grad_a - np.sum(grad_a * a, axis=1, keepdims=True))
    return grad_a * act.derivative(z)


def backprop(state: TrainState, x, y, loss_kind: str) -> Gradients:
    """Batch-mean gradients of the loss from the caches of :func:`forward_cached`."""
    x = _as_batch(x, state.input_dim)
    if (
        state._cache_version != state.version
        or state._cache_input is None
        or state._cache_input.shape != x.shape
        or not np.array_equal(state._cache_input, x)
    ):
        raise StaleCache("run forward_cached on these inputs with the current parameters first")
    n = x.shape[0]
    y = _as_targets(y, state.output_dim, n)
    L = len(state.weights)
    deltas = [None] * L
    deltas[-1] = _output_delta(state, loss_kind, y)
    for t in range(L - 2, -1, -1):
        back = deltas[t + 1] @ state.weights[t + 1]
        deltas[t] = back * state.activation_fns[t].derivative(state.zs[t])
    state.deltas = deltas
    gw = [d.T @ a / n for d, a in zip(deltas, state.activations[:-1])]
    gb = [d.mean(axis=0) for d in deltas]
    return Gradients(gw, gb)


def gradient(state: TrainState, x, y, loss_kind: str) -> Gradients:
    forward_cached(state, x)
    return backprop(state, x, y, loss_kind)


def _pattern(state: TrainState, zs: list[np.ndarray]) -> list[np.ndarray]:
    out = []
    for z, act in zip(zs, state.activation_fns):
        for k in act.kinks():
            out.append(z >= k)
    return out


@dataclass(frozen=True)
class GradCheckResult:
    """Worst relative discrepancy over parameters whose activation pattern is stable."""

    max_relative: float
    max_absolute: float
    checked: int
    flagged: int

    def ok(self, tol: float) -> bool:
        return self.max_relative <= tol


def grad_check(
    state: TrainState,
    x,
    y,
    loss_kind: str,
    h: float = 1e-6,
    floor: float = 1e-3,
) -> GradCheckResult:
    """Compare backprop with central differences ``(C(θ+h) − C(θ−h)) / 2h``.

    A parameter is flagged, and left out of the maximum, when either
    perturbation changes which linear piece some piecewise-linear activation
    is on; the cost is not differentiable across such a switch.  The relative
    discrepancy is ``|g − g_fd| / max(|g|, |g_fd|, floor)``.
    """
    if not 0.0 < h <= 1e-3:
        raise ValueError("h must lie in (0, 1e-3]")
    x = _as_batch(x, state.input_dim)
    y = _as_targets(y, state.output_dim, x.shape[0])
    work = state.copy()
    grads = gradient(work, x, y, loss_kind).flat()
    base = _pattern(work, work.zs)
    params = work.parameters()
    worst_rel = worst_abs = 0.0
    checked = flagged = 0
    pos = 0
    for p in params:
        flat = p.reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            values = []
            stable = True
            for step in (h, -h):
                flat[i] = orig + step
                zs, acts = _forward(work, x)
                values.append(loss(loss_kind, y, acts[-1]))
                if any(not np.array_equal(u, v) for u, v in zip(base, _pattern(work, zs))):
                    stable = False
            flat[i] = orig
            g_bp = grads[pos]
            pos += 1
            if not stable:
                flagged += 1
                continue
            g_fd = (values[0] - values[1]) / (2.0 * h)
            diff = abs(g_bp - g_fd)
            worst_abs = max(worst_abs, diff)
            worst_rel = max(worst_rel, diff / max(abs(g_bp), abs(g_fd), floor))
            checked += 1
    return GradCheckResult(worst_rel, worst_abs, checked, flagged)


@dataclass
class TrainResult:
    state: TrainState
    losses: list[float]
    val_losses: list[float] = field(default_factory=list)
    epochs_run: int = 0
    stopped_early: bool = False
    best_epoch: int | None = None
    weight_norms: list[float] = field(default_factory=list)

    @property
    def network(self) -> Network:
        return self.state.to_network()


def _apply_update(state: TrainState, grads: Gradients, cfg: TrainConfig) -> None:
    eta, lam = cfg.learning_rate, cfg.lam
    for t in range(len(state.weights)):
        w = state.weights[t]
        step = eta * grads.weights[t]
        if cfg.regularizer == "l2":
            step = step + eta * lam * w
        elif cfg.regularizer == "l1":
            step = step + eta * lam * np.sign(w)
        state.weights[t] = w - step
        state.biases[t] = state.biases[t] - eta * grads.biases[t]
    state.touch()


def batch_slices(n: int, batch_size: int) -> list[slice]:
    """``ceil(n / batch_size)`` consecutive slices; the last one may be shorter."""
    return [slice(s, min(s + batch_size, n)) for s in range(0, n, batch_size)]


def sgd_train(model: Network | TrainState, data: Dataset, config: TrainConfig) -> TrainResult:
    """Mini-batch SGD over shuffled epochs with optional regularization and early stopping."""
    if len(data) == 0:
        raise EmptyDataset("no training samples")
    state = model.copy() if isinstance(model, TrainState) else TrainState.from_network(model)
    rng = np.random.default_rng(config.seed)
    train, val = data, None
    if config.validation_split > 0.0:
        perm = rng.permutation(len(data))
        n_val = max(1, int(round(config.validation_split * len(data))))
        if n_val >= len(data):
            raise EmptyDataset("validation split leaves no training samples")
        val, train = data.subset(perm[:n_val]), data.subset(perm[n_val:])
    if config.batch_size > len(train):
        raise ValueError(f"batch_size {config.batch_size} exceeds {len(train)} training samples")

    result = TrainResult(state, [])
    best = math.inf
    best_params = None
    wait = 0
    for epoch in range(config.epochs):
        order = rng.permutation(len(train))
        for sl in batch_slices(len(train), config.batch_size):
            idx = order[sl]
            xb, yb = train.inputs[idx], train.targets[idx]
            _apply_update(state, gradient(state, xb, yb, config.loss), config)
        result.losses.append(evaluate_loss(state, train, config.loss))
        result.weight_norms.append(float(sum(np.sum(w * w) for w in state.weights)))
        result.epochs_run = epoch + 1
        if val is not None:
            v = evaluate_loss(state, val, config.loss)
            result.val_losses.append(v)
            if v < best:
                best, wait = v, 0
                result.best_epoch = epoch + 1
                best_params = ([w.copy() for w in state.weights], [b.copy() for b in state.biases])
            else:
                wait += 1
                if config.patience is not None and wait >= config.patience:
                    result.stopped_early = True
                    log.info("early stop after epoch %d, best epoch %d", epoch + 1, result.best_epoch)
                    break
    if result.stopped_early and best_params is not None:
        state.weights, state.biases = best_params
        state.touch()
    return result


def evaluate_loss(state: TrainState, data: Dataset, kind: str) -> float:
    _, acts = _forward(state, _as_batch(data.inputs, state.input_dim))
    return loss(kind, data.targets, acts[-1])


def predict(state: TrainState, x) -> np.ndarray:
    _, acts = _forward(state, _as_batch(x, state.input_dim))
    return acts[-1]


def accuracy(state: TrainState, data: Dataset) -> float:
    pred = np.argmax(predict(state, data.inputs), axis=1)
    return float(np.mean(pred == np.argmax(data.targets, axis=1)))
