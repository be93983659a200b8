"""Iterated compositions, weighted composition sums and Takagi networks."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple, Sequence

import numpy as np

from .activations import IDENTITY, RELU
from .algebra import compose_merge, special_network
from .errors import DegenerateFit, DimensionMismatch, InvalidNetwork
from .network import Kind, LinearLayer, Network, check_valid, evaluate_scalar


def _require_scalar(net: Network, name: str) -> None:
    check_valid(net)
    if net.kind != Kind.STANDARD:
        raise InvalidNetwork(f"{name} must be a standard network")
    if net.input_dim != 1 or net.output_dim != 1:
        raise DimensionMismatch(f"{name} must map R to R")
    if net.hidden_layers < 1:
        raise InvalidNetwork(f"{name} needs at least one hidden layer")


def compose_power(T: Network, k: int) -> Network:
    """``T`` composed with itself ``k`` times, with hidden depth ``k L(T)``."""
    if T.input_dim != T.output_dim:
        raise DimensionMismatch("T must map a space into itself")
    if k < 1:
        raise ValueError("k must be at least 1")
    out = T
    for _ in range(k - 1):
        out = compose_merge(T, out)
    return out


class _Block:
    """Hidden layers of a scalar network padded to a common row count."""

    def __init__(self, net: Network, width: int):
        self.depth = net.hidden_layers
        self.width = width
        self.weights = []
        self.biases = []
        for t, layer in enumerate(net.layers[:-1]):
            cols = 1 if t == 0 else width
            w = np.zeros((width, cols))
            w[: layer.fan_out, : layer.fan_in] = layer.weights
            b = np.zeros(width)
            b[: layer.fan_out] = layer.bias
            self.weights.append(w)
            self.biases.append(b)
        out = net.layers[-1]
        self.out_w = np.zeros(width)
        self.out_w[: out.fan_in] = out.weights[0]
        self.out_b = float(out.bias[0])


class _Assembler:
    """Collects the hidden layers of a special network with fixed channel rows."""

    def __init__(self, width: int):
        self.width = width
        self.coll = width - 1
        self.layers: list[LinearLayer] = []

    def layer(self, first: bool) -> tuple[np.ndarray, np.ndarray]:
        w = np.zeros((self.width, 1 if first else self.width))
        b = np.zeros(self.width)
        w[0, 0] = 1.0
        if not first:
            w[self.coll, self.coll] = 1.0
        return w, b

    def push(self, w: np.ndarray, b: np.ndarray) -> None:
        self.layers.append(LinearLayer(w, b, RELU))

    def finish(self, row: np.ndarray, bias: float) -> Network:
        w = np.array(row, dtype=float)[None, :]
        w[0, self.coll] += 1.0
        self.layers.append(LinearLayer(w, [bias], IDENTITY))
        return special_network(self.layers, 0, self.coll)


def _place_block_layer(
    asm: _Assembler,
    w: np.ndarray,
    b: np.ndarray,
    blk: _Block,
    t: int,
    rows: slice,
    feed: np.ndarray | None,
    feed_bias: float,
) -> None:
    """Write layer ``t`` of ``blk`` into ``rows``.

    For ``t == 0`` the scalar input is either the network input (``feed`` is
    None) or the affine read-out ``feed @ a + feed_bias`` of the previous layer,
    which is fused into the weights.
    """
    if t == 0:
        col = blk.weights[0][:, 0]
        if feed is None:
            w[rows, 0] = col
            b[rows] = blk.biases[0]
        else:
            w[rows, :] = np.outer(col, feed)
            b[rows] = col * feed_bias + blk.biases[0]
    else:
        w[rows, rows] = blk.weights[t]
        b[rows] = blk.biases[t]


def weighted_composition_sum(T: Network, coeffs: Sequence[float]) -> Network:
    """Special network of width ``W + 2`` and depth ``m L`` computing ``Σ a_i T^i``.

    Copy ``i`` of ``T`` reads the output of copy ``i - 1`` through the fused
    seam weights, and the collation neuron at that seam adds ``a_{i-1}`` times
    the same read-out.
    """
    _require_scalar(T, "T")
    coeffs = [float(a) for a in coeffs]
    if not coeffs:
        raise ValueError("at least one coefficient is needed")
    inner = max(T.hidden_widths)
    width = inner + 2
    blk = _Block(T, inner)
    asm = _Assembler(width)
    rows = slice(1, 1 + inner)
    readout = np.zeros(width)
    for i in range(len(coeffs)):
        for t in range(blk.depth):
            first = i == 0 and t == 0
            w, b = asm.layer(first)
            feed = None if i == 0 else readout
            _place_block_layer(asm, w, b, blk, t, rows, feed, blk.out_b)
            if t == 0 and i > 0:
                w[asm.coll, rows] += coeffs[i - 1] * blk.out_w
                b[asm.coll] += coeffs[i - 1] * blk.out_b
            asm.push(w, b)
        readout = np.zeros(width)
        readout[rows] = blk.out_w
    net = asm.finish(coeffs[-1] * readout, coeffs[-1] * blk.out_b)
    net.info.update({"coeffs": tuple(coeffs), "block_depth": blk.depth, "block_width": inner})
    return net


def weighted_g_composition_sum(T: Network, g: Network, coeffs: Sequence[float]) -> Network:
    """Special network of width ``W1 + W2 + 2`` and depth ``(m + 1) L`` computing ``Σ a_i g(T^i)``.

    Block ``b`` runs ``T`` on ``T^{b-1}(x)`` in the first group of rows and
    ``g`` on the same value in the second group, so ``g`` lags one block
    behind.  The collation neuron collects ``a_i g(T^i(x))`` one block later.
    """
    _require_scalar(T, "T")
    _require_scalar(g, "g")
    if T.hidden_layers != g.hidden_layers:
        raise DimensionMismatch(
            f"T and g need equal depth, got {T.hidden_layers} and {g.hidden_layers}"
        )
    coeffs = [float(a) for a in coeffs]
    if not coeffs:
        raise ValueError("at least one coefficient is needed")
    m = len(coeffs)
    w1, w2 = max(T.hidden_widths), max(g.hidden_widths)
    width = w1 + w2 + 2
    tb, gb = _Block(T, w1), _Block(g, w2)
    asm = _Assembler(width)
    t_rows = slice(1, 1 + w1)
    g_rows = slice(1 + w1, 1 + w1 + w2)
    t_read = np.zeros(width)
    t_read[t_rows] = tb.out_w
    g_read = np.zeros(width)
    g_read[g_rows] = gb.out_w
    for blk_idx in range(m + 1):
        for t in range(tb.depth):
            w, b = asm.layer(blk_idx == 0 and t == 0)
            feed = None if blk_idx == 0 else t_read
            if blk_idx < m:
                _place_block_layer(asm, w, b, tb, t, t_rows, feed, tb.out_b)
            if blk_idx > 0:
                _place_block_layer(asm, w, b, gb, t, g_rows, t_read, tb.out_b)
                if t == 0 and blk_idx > 1:
                    a = coeffs[blk_idx - 2]
                    w[asm.coll] += a * g_read
                    b[asm.coll] += a * gb.out_b
            asm.push(w, b)
    net = asm.finish(coeffs[-1] * g_read, coeffs[-1] * gb.out_b)
    net.info.update({"coeffs": tuple(coeffs), "block_depth": tb.depth})
    return net


def hat_block() -> Network:
    """``H(x) = 2σ(x) − 4σ(x − 1/2)``: the hat on [0, 1] with two neurons."""
    first = LinearLayer(np.ones((2, 1)), [0.0, -0.5], RELU)
    last = LinearLayer([[2.0, -4.0]], [0.0], IDENTITY)
    return Network(Kind.STANDARD, 1, (first, last))


@dataclass(frozen=True)
class TakagiSpec:
    """Coefficients ``a_k`` of ``Σ a_k H^k`` truncated at ``depth``.

    Either ``base`` is given, with ``a_k = base^{-k}``, or ``coeffs`` lists
    ``a_1, a_2, ...`` explicitly together with ``tail_bound`` bounding
    ``Σ |a_k|`` over the indices past the end of the list.
    """

    depth: int
    base: float | None = None
    coeffs: tuple[float, ...] | None = None
    tail_bound: float = 0.0

    def __post_init__(self):
        if self.depth < 1:
            raise ValueError("depth must be at least 1")
        if (self.base is None) == (self.coeffs is None):
            raise ValueError("give exactly one of base and coeffs")
        if self.base is not None and not abs(self.base) > 1.0:
            raise ValueError("geometric base must satisfy |a| > 1")
        if self.coeffs is not None:
            object.__setattr__(self, "coeffs", tuple(float(c) for c in self.coeffs))
            if len(self.coeffs) < self.depth:
                raise ValueError("explicit coefficients must cover the depth")
            if not (math.isfinite(self.tail_bound) and self.tail_bound >= 0.0):
                raise ValueError("tail_bound must be finite and nonnegative")

    @classmethod
    def geometric(cls, base: float, depth: int) -> "TakagiSpec":
        return cls(depth=depth, base=base)

    def coefficients(self, count: int | None = None) -> np.ndarray:
        count = self.depth if count is None else count
        if self.base is not None:
            return float(self.base) ** -np.arange(1, count + 1, dtype=float)
        if count > len(self.coeffs):
            raise ValueError(f"only {len(self.coeffs)} coefficients are known")
        return np.array(self.coeffs[:count])

    def tail(self, after: int) -> float:
        """Bound on ``Σ_{k > after} |a_k|``."""
        if self.base is not None:
            a = abs(float(self.base))
            return a ** -after / (a - 1.0)
        rest = sum(abs(c) for c in self.coeffs[after:])
        return rest + self.tail_bound

    def truncation_bound(self) -> float:
        """Sup-norm distance between the depth-``L`` network and the full series."""
        return self.tail(self.depth)


def takagi_network(spec: TakagiSpec) -> Network:
    """Width-4 special network emitting ``Σ_{k ≤ L} a_k H^k``."""
    net = weighted_composition_sum(hat_block(), spec.coefficients())
    net.info["takagi_depth"] = spec.depth
    return net


def tent(x) -> np.ndarray:
    """The hat map on [0, 1]; exact in floating point."""
    x = np.asarray(x, dtype=float)
    return np.where(x <= 0.5, 2.0 * x, 2.0 * (1.0 - x))


class TakagiValue(NamedTuple):
    value: np.ndarray
    tail_bound: float


def takagi_reference(spec: TakagiSpec, x, terms: int) -> TakagiValue:
    """``Σ_{k ≤ terms} a_k H^k(x)`` by iterating the hat map, plus the tail bound."""
    if terms < spec.depth:
        raise ValueError("terms must be at least the network depth")
    x = np.asarray(x, dtype=float)
    coeffs = spec.coefficients(terms)
    y = x.copy()
    total = np.zeros_like(x)
    for a in coeffs:
        y = tent(y)
        total = total + a * y
    return TakagiValue(total, spec.tail(terms))


@dataclass(frozen=True)
class RateFit:
    """``error ≈ constant · base^{-depth}`` fitted by least squares in log space."""

    base: float
    constant: float
    slope: float
    residual: float

    def predict(self, depth) -> np.ndarray:
        return self.constant * self.base ** -np.asarray(depth, dtype=float)


def rate_fit(samples: Sequence[tuple[float, float]]) -> RateFit:
    """Fit ``log error = log C − depth log base`` to ``(depth, error)`` pairs."""
    pts = np.asarray(samples, dtype=float)
    if pts.ndim != 2 or pts.shape[0] < 4:
        raise DegenerateFit("at least four (depth, error) samples are needed")
    depth, err = pts[:, 0], pts[:, 1]
    if np.any(~np.isfinite(err)) or np.any(err <= 0.0):
        raise DegenerateFit("errors must be positive and finite")
    if np.ptp(depth) == 0.0:
        raise DegenerateFit("depths must not all coincide")
    slope, intercept = np.polyfit(depth, np.log(err), 1)
    resid = np.log(err) - (slope * depth + intercept)
    return RateFit(
        base=float(np.exp(-slope)),
        constant=float(np.exp(intercept)),
        slope=float(slope),
        residual=float(np.max(np.abs(resid))),
    )


def takagi_errors(base: float, depths: Sequence[int], grid: int = 2**14 + 1, terms: int = 60):
    """Sup distance between ``takagi_network`` and a long reference sum, per depth."""
    xs = np.linspace(0.0, 1.0, grid)
    out = []
    for L in depths:
        spec = TakagiSpec.geometric(base, L)
        ref = takagi_reference(spec, xs, terms).value
        out.append((L, float(np.max(np.abs(evaluate_scalar(takagi_network(spec), xs) - ref)))))
    return out
