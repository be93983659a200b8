"""Feed-forward network representation, evaluation, validation and I/O.

Three kinds of networks share one container:

``standard``
    layer ``l`` reads the output of layer ``l - 1`` only.
``connected``
    layer ``l`` reads the input and every earlier hidden layer; its weight
    matrix is the horizontal block ``(W_l0 | W_l1 | ... | W_l,l-1)``.
``special``
    univariate standard networks of uniform hidden width whose top neuron
    (source channel) carries the input and whose bottom neuron (collation
    channel) accumulates partial sums.  Both channel neurons skip the ReLU.

Evaluation goes through per-block CSR matrices.  Every output row is the
sum of its nonzero terms in column order followed by the bias, so two rows
with the same nonzero pattern and values produce bit-identical results,
whatever else the surrounding network contains.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from enum import Enum
from functools import cached_property
from pathlib import Path
from typing import Sequence

import numpy as np
import scipy.sparse as sp

from .activations import IDENTITY, RELU, Activation, get_activation
from .errors import ChannelViolation, DimensionMismatch, InvalidNetwork

# points per evaluation chunk scale inversely with network size
_CHUNK_BUDGET = 1 << 22


class Kind(str, Enum):
    STANDARD = "standard"
    CONNECTED = "connected"
    SPECIAL = "special"


def _frozen(a) -> np.ndarray:
    arr = np.array(a, dtype=float)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class LinearLayer:
    """Affine map followed by an activation.  ``weights`` has shape (out, in)."""

    weights: np.ndarray
    bias: np.ndarray
    activation: Activation = RELU

    def __post_init__(self):
        w = _frozen(self.weights)
        if w.ndim == 1:
            w = _frozen(w.reshape(1, -1))
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "bias", _frozen(np.atleast_1d(self.bias)))
        object.__setattr__(self, "activation", get_activation(self.activation))

    @property
    def fan_out(self) -> int:
        return self.weights.shape[0]

    @property
    def fan_in(self) -> int:
        return self.weights.shape[1]


@dataclass(frozen=True)
class ChannelMeta:
    """Indices of the source and collation neuron in every hidden layer."""

    source: tuple[int, ...]
    collation: tuple[int, ...]

    def __post_init__(self):
        object.__setattr__(self, "source", tuple(int(i) for i in self.source))
        object.__setattr__(self, "collation", tuple(int(i) for i in self.collation))

    @classmethod
    def uniform(cls, width: int, hidden_layers: int) -> "ChannelMeta":
        return cls((0,) * hidden_layers, (width - 1,) * hidden_layers)


@dataclass(frozen=True)
class Violation:
    code: str
    layer: int | None
    message: str

    def __str__(self):
        where = "" if self.layer is None else f" (layer {self.layer})"
        return f"{self.code}{where}: {self.message}"


@dataclass(frozen=True)
class ComplexityReport:
    """Size measures of a network.

    ``nonzero_params`` counts weights and biases that are not exactly zero.
    ``param_slots`` counts every weight and bias entry of the stored matrices.
    ``closed_form_n`` is ``W(W+1)L - (W-1)^2 + 2`` for standard networks with
    one input, one output and ``L >= 1`` hidden layers of uniform width ``W``;
    it equals ``param_slots`` for such networks.
    """

    hidden_layers: int
    total_layers: int
    total_neurons: int
    nonzero_params: int
    param_slots: int
    width: int
    closed_form_n: int | None = None

    def as_dict(self) -> dict:
        return {
            "hidden_layers": self.hidden_layers,
            "total_layers": self.total_layers,
            "total_neurons": self.total_neurons,
            "nonzero_params": self.nonzero_params,
            "param_slots": self.param_slots,
            "width": self.width,
            "closed_form_n": self.closed_form_n,
        }


def closed_form_params(width: int, hidden_layers: int) -> int:
    """Parameter slots of a uniform-width network in ``M_{W,L}``."""
    w = width
    return w * (w + 1) * hidden_layers - (w - 1) ** 2 + 2


@dataclass(frozen=True, eq=False)
class Network:
    """Immutable network.  ``layers[-1]`` is the output layer."""

    kind: Kind
    input_dim: int
    layers: tuple[LinearLayer, ...]
    channel_meta: ChannelMeta | None = None
    info: dict = field(default_factory=dict, repr=False, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "kind", Kind(self.kind))
        object.__setattr__(self, "input_dim", int(self.input_dim))
        object.__setattr__(self, "layers", tuple(self.layers))

    # -- shape helpers ---------------------------------------------------
    @property
    def output_dim(self) -> int:
        return self.layers[-1].fan_out

    @property
    def hidden_layers(self) -> int:
        return len(self.layers) - 1

    @property
    def total_layers(self) -> int:
        return len(self.layers)

    @property
    def widths(self) -> list[int]:
        """Neuron counts ``[input, hidden..., output]``."""
        return [self.input_dim] + [layer.fan_out for layer in self.layers]

    @property
    def hidden_widths(self) -> list[int]:
        return [layer.fan_out for layer in self.layers[:-1]]

    def block_offsets(self, layer: int) -> list[int]:
        """Column offsets of the blocks read by ``layers[layer]`` (connected)."""
        sizes = self.widths[: layer + 1]
        return list(np.concatenate([[0], np.cumsum(sizes)]).astype(int))

    def __call__(self, x):
        return evaluate_batch(self, x)

    # -- cached evaluation plan -------------------------------------------
    @cached_property
    def violations(self) -> list[Violation]:
        return validate(self)

    @cached_property
    def _plan(self):
        plan = []
        for idx, layer in enumerate(self.layers):
            w = layer.weights
            if self.kind == Kind.CONNECTED:
                off = self.block_offsets(idx)
                parts = []
                for b in range(idx + 1):
                    blk = w[:, off[b] : off[b + 1]]
                    if np.any(blk):
                        parts.append((b, sp.csr_matrix(blk)))
            else:
                parts = [(idx, sp.csr_matrix(w))] if np.any(w) else []
            linear_rows = None
            if self.kind == Kind.SPECIAL and idx < self.hidden_layers:
                meta = self.channel_meta
                linear_rows = np.array([meta.source[idx], meta.collation[idx]])
            plan.append((parts, linear_rows))
        return plan


# -- constructors -------------------------------------------------------------
def make_layer(weights, bias=None, activation="relu") -> LinearLayer:
    w = np.atleast_2d(np.asarray(weights, dtype=float))
    b = np.zeros(w.shape[0]) if bias is None else bias
    return LinearLayer(w, b, get_activation(activation))


def standard_network(input_dim: int, layers: Sequence[LinearLayer]) -> Network:
    return Network(Kind.STANDARD, input_dim, tuple(layers))


def relu_network(weights: Sequence, biases: Sequence, output_activation="identity") -> Network:
    """Standard network with ReLU hidden layers from weight/bias lists."""
    layers = []
    for i, (w, b) in enumerate(zip(weights, biases)):
        act = output_activation if i == len(weights) - 1 else "relu"
        layers.append(make_layer(w, b, act))
    w0 = np.atleast_2d(np.asarray(weights[0], dtype=float))
    return standard_network(w0.shape[1], layers)


# -- validation ----------------------------------------------------------------
def validate(net: Network) -> list[Violation]:
    """Return the list of structural violations; empty means valid."""
    out: list[Violation] = []
    if net.input_dim < 1:
        out.append(Violation("DimensionMismatch", None, "input_dim must be positive"))
    if not net.layers:
        out.append(Violation("DimensionMismatch", None, "network has no layers"))
        return out
    widths = net.widths
    for idx, layer in enumerate(net.layers):
        w, b = layer.weights, layer.bias
        if w.ndim != 2:
            out.append(Violation("DimensionMismatch", idx, "weights must be a matrix"))
            continue
        if b.shape != (w.shape[0],):
            out.append(Violation("BiasMismatch", idx, f"bias length {b.size} != {w.shape[0]} rows"))
        if not (np.all(np.isfinite(w)) and np.all(np.isfinite(b))):
            out.append(Violation("NonFinite", idx, "non-finite parameter"))
        expected = sum(widths[: idx + 1]) if net.kind == Kind.CONNECTED else widths[idx]
        if w.shape[1] != expected:
            out.append(
                Violation("DimensionMismatch", idx, f"fan-in {w.shape[1]} != expected {expected}")
            )
    if net.kind != Kind.SPECIAL and net.channel_meta is not None:
        out.append(Violation("ChannelViolation", None, "channel_meta on non-special network"))
    if net.kind == Kind.SPECIAL and not out:
        out.extend(_validate_special(net))
    return out


def _validate_special(net: Network) -> list[Violation]:
    out: list[Violation] = []

    def bad(layer, msg):
        out.append(Violation("ChannelViolation", layer, msg))

    if net.input_dim != 1:
        bad(None, "special networks are univariate")
    hidden = net.hidden_widths
    if not hidden:
        bad(None, "special networks need at least one hidden layer")
        return out
    if len(set(hidden)) != 1 or hidden[0] < 4:
        bad(None, f"hidden widths {hidden} must be uniform and at least 4")
        return out
    meta = net.channel_meta
    if meta is None or len(meta.source) != len(hidden) or len(meta.collation) != len(hidden):
        bad(None, "channel_meta must list one source and one collation index per hidden layer")
        return out
    width = hidden[0]
    for l, (s, c) in enumerate(zip(meta.source, meta.collation)):
        if not (0 <= s < width and 0 <= c < width and s != c):
            bad(l, "channel indices out of range")
    if out:
        return out
    for l in range(len(hidden)):
        layer = net.layers[l]
        w, b = layer.weights, layer.bias
        s, c = meta.source[l], meta.collation[l]
        if l == 0:
            if w[s, 0] != 1.0 or b[s] != 0.0:
                bad(l, "source must copy the input with unit weight and zero bias")
            if w[c, 0] != 0.0 or b[c] != 0.0:
                bad(l, "first collation neuron must be identically zero")
            continue
        ps, pc = meta.source[l - 1], meta.collation[l - 1]
        expect = np.zeros(width)
        expect[ps] = 1.0
        if not np.array_equal(w[s], expect) or b[s] != 0.0:
            bad(l, "source must carry the previous source with unit weight only")
        compute = [r for r in range(width) if r not in (s, c)]
        if np.any(w[compute, pc] != 0.0):
            bad(l, "compute neurons may not read the collation channel")
        if w[c, pc] != 1.0:
            bad(l, "collation must carry the previous collation with unit weight")
    last = net.layers[-1]
    if np.any(last.weights[:, meta.collation[-1]] != 1.0):
        bad(net.hidden_layers, "output must read the collation channel with unit weight")
    return out


def check_valid(net: Network) -> None:
    violations = net.violations
    if violations:
        cls = ChannelViolation if all(v.code == "ChannelViolation" for v in violations) else InvalidNetwork
        raise cls("; ".join(str(v) for v in violations), violations)


# -- evaluation ------------------------------------------------------------------
def _forward_columns(net: Network, a0: np.ndarray) -> np.ndarray:
    """Propagate a (input_dim, n) column batch; returns (output_dim, n)."""
    blocks = [a0]
    connected = net.kind == Kind.CONNECTED
    for idx, (layer, (parts, linear_rows)) in enumerate(zip(net.layers, net._plan)):
        z = None
        for b, mat in parts:
            src = blocks[b] if connected else blocks[-1]
            term = mat @ src
            z = term if z is None else z + term
        if z is None:
            z = np.zeros((layer.fan_out, a0.shape[1]))
        z = z + layer.bias[:, None]
        act = layer.activation
        a = act(z, axis=0)
        if linear_rows is not None:
            a[linear_rows] = z[linear_rows]
        if connected:
            blocks.append(a)
        else:
            blocks = [a]
    return blocks[-1]


def forward_trace(net: Network, x) -> list[np.ndarray]:
    """Pre-activations of every layer at points ``x``; each entry is (n, width)."""
    x = np.asarray(x, dtype=float)
    if x.ndim == 1:
        x = x[:, None]
    if x.shape[1] != net.input_dim:
        raise DimensionMismatch(f"expected shape (n, {net.input_dim}), got {x.shape}")
    check_valid(net)
    blocks = [np.ascontiguousarray(x.T)]
    connected = net.kind == Kind.CONNECTED
    trace = []
    for layer, (parts, linear_rows) in zip(net.layers, net._plan):
        z = np.zeros((layer.fan_out, x.shape[0]))
        for b, mat in parts:
            z = z + (mat @ (blocks[b] if connected else blocks[-1]))
        z = z + layer.bias[:, None]
        trace.append(z.T.copy())
        a = layer.activation(z, axis=0)
        if linear_rows is not None:
            a[linear_rows] = z[linear_rows]
        blocks = blocks + [a] if connected else [a]
    return trace


def evaluate_batch(net: Network, x) -> np.ndarray:
    """Evaluate on points ``x`` of shape (n, input_dim); returns (n, output_dim).

    A 1-D ``x`` is read as n scalar points when ``input_dim == 1``.
    """
    x = np.asarray(x, dtype=float)
    if x.ndim == 1:
        if net.input_dim != 1:
            raise DimensionMismatch(f"expected points of dimension {net.input_dim}")
        x = x[:, None]
    if x.ndim != 2 or x.shape[1] != net.input_dim:
        raise DimensionMismatch(f"expected shape (n, {net.input_dim}), got {x.shape}")
    check_valid(net)
    n = x.shape[0]
    out = np.empty((n, net.output_dim))
    chunk = max(1, _CHUNK_BUDGET // max(1, sum(net.widths)))
    for start in range(0, n, chunk):
        cols = np.ascontiguousarray(x[start : start + chunk].T)
        out[start : start + chunk] = _forward_columns(net, cols).T
    return out


def evaluate(net: Network, x) -> np.ndarray:
    """Evaluate at a single point of length ``input_dim``."""
    x = np.atleast_1d(np.asarray(x, dtype=float))
    if x.shape != (net.input_dim,):
        raise DimensionMismatch(f"expected a point of length {net.input_dim}, got {x.shape}")
    return evaluate_batch(net, x[None, :])[0]


def evaluate_scalar(net: Network, x) -> np.ndarray:
    """Evaluate a univariate, single-output network on an array of points."""
    x = np.asarray(x, dtype=float)
    return evaluate_batch(net, x.reshape(-1)).reshape(x.shape)


# -- complexity -------------------------------------------------------------------
def complexity(net: Network) -> ComplexityReport:
    nnz = 0
    slots = 0
    for layer in net.layers:
        nnz += int(np.count_nonzero(layer.weights)) + int(np.count_nonzero(layer.bias))
        slots += layer.weights.size + layer.bias.size
    hidden = net.hidden_widths
    width = max(hidden) if hidden else 0
    closed = None
    if (
        net.kind == Kind.STANDARD
        and hidden
        and len(set(hidden)) == 1
        and net.input_dim == 1
        and net.output_dim == 1
    ):
        closed = closed_form_params(width, len(hidden))
    return ComplexityReport(
        hidden_layers=len(hidden),
        total_layers=len(net.layers),
        total_neurons=int(sum(net.widths)),
        nonzero_params=nnz,
        param_slots=int(slots),
        width=width,
        closed_form_n=closed,
    )


# -- serialization ------------------------------------------------------------------
def to_json(net: Network) -> dict:
    """Plain-data form.  Floats are written with ``repr`` and round-trip exactly."""
    layers = []
    for layer in net.layers:
        entry = {"weights": layer.weights.tolist(), "bias": layer.bias.tolist()}
        entry.update(layer.activation.to_json())
        layers.append(entry)
    meta = None
    if net.channel_meta is not None:
        meta = {"source": list(net.channel_meta.source), "collation": list(net.channel_meta.collation)}
    return {"kind": net.kind.value, "input_dim": net.input_dim, "layers": layers, "channel_meta": meta}


def from_json(data: dict) -> Network:
    try:
        layers = []
        for entry in data["layers"]:
            act = get_activation(entry.get("activation", "relu"), entry.get("alpha"))
            w = np.array(entry["weights"], dtype=float).reshape(len(entry["bias"]), -1)
            layers.append(LinearLayer(w, entry["bias"], act))
        meta = data.get("channel_meta")
        if meta is not None:
            meta = ChannelMeta(meta["source"], meta["collation"])
        net = Network(Kind(data["kind"]), int(data["input_dim"]), tuple(layers), meta)
    except (KeyError, TypeError, ValueError) as exc:
        raise InvalidNetwork(f"malformed network document: {exc}") from exc
    check_valid(net)
    return net


def save_network(net: Network, path) -> None:
    Path(path).write_text(json.dumps(to_json(net)))


def load_network(path) -> Network:
    return from_json(json.loads(Path(path).read_text()))


def identity_output(width: int) -> LinearLayer:
    return LinearLayer(np.eye(width), np.zeros(width), IDENTITY)


def random_network(
    rng: np.random.Generator,
    input_dim: int = 1,
    output_dim: int = 1,
    hidden_layers: int = 2,
    max_width: int = 8,
    scale: float = 1.0,
) -> Network:
    """Standard ReLU network with random widths in ``[1, max_width]`` and normal parameters."""
    sizes = [input_dim] + [int(rng.integers(1, max_width + 1)) for _ in range(hidden_layers)]
    sizes.append(output_dim)
    layers = []
    for t, (fan_in, fan_out) in enumerate(zip(sizes[:-1], sizes[1:])):
        w = rng.normal(0.0, scale / np.sqrt(fan_in), (fan_out, fan_in))
        b = rng.normal(0.0, 0.5 * scale, fan_out)
        layers.append(LinearLayer(w, b, IDENTITY if t == len(sizes) - 2 else RELU))
    return Network(Kind.STANDARD, input_dim, tuple(layers))
