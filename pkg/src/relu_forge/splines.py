"""Free-knot linear splines on [0,1] and their exact ReLU embeddings.

A spline with ``M = q (W - 2)`` interior knots that vanishes at the ends
(``q = floor((W - 2) / 6)``) is written as a sum of skewed hats, one per
knot.  The hats are grouped so that each group has coefficients of one
sign and peaks at principal knots at least three apart; each group is then
``+-relu(g_p)`` for a piecewise-linear ``g_p`` whose kinks sit only at the
principal knots.  That gives a special network of width ``W`` and depth 2,
and chaining blocks gives depth ``2L`` for ``L M`` knots.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .activations import IDENTITY, RELU
from .algebra import special_network, special_sum, special_to_standard
from .errors import (
    EmptyGroup,
    NotVanishing,
    OutOfDomain,
    TooManyKnots,
    VerificationFailure,
    WrongKnotCount,
)
from .network import (
    ComplexityReport,
    Kind,
    LinearLayer,
    Network,
    check_valid,
    complexity,
    evaluate_scalar,
)


@dataclass(frozen=True, eq=False)
class FreeKnotSpline:
    """Continuous piecewise-linear function with nodal ``values`` at ``0, breakpoints..., 1``."""

    breakpoints: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        bp = np.array(self.breakpoints, dtype=float).reshape(-1)
        vals = np.array(self.values, dtype=float).reshape(-1)
        if vals.size != bp.size + 2:
            raise ValueError(f"need {bp.size + 2} values for {bp.size} breakpoints, got {vals.size}")
        if bp.size and (bp[0] <= 0.0 or bp[-1] >= 1.0 or np.any(np.diff(bp) <= 0.0)):
            raise ValueError("breakpoints must be strictly increasing inside (0, 1)")
        if not (np.all(np.isfinite(bp)) and np.all(np.isfinite(vals))):
            raise ValueError("spline data must be finite")
        bp.setflags(write=False)
        vals.setflags(write=False)
        object.__setattr__(self, "breakpoints", bp)
        object.__setattr__(self, "values", vals)

    @property
    def n(self) -> int:
        return self.breakpoints.size

    @property
    def nodes(self) -> np.ndarray:
        return np.concatenate([[0.0], self.breakpoints, [1.0]])

    def __call__(self, x) -> np.ndarray:
        return eval_spline(self, x)

    def to_json(self) -> dict:
        return {"breakpoints": self.breakpoints.tolist(), "values": self.values.tolist()}

    @classmethod
    def from_json(cls, data: dict) -> "FreeKnotSpline":
        return cls(data["breakpoints"], data["values"])


def save_spline(spline: FreeKnotSpline, path) -> None:
    Path(path).write_text(json.dumps(spline.to_json()))


def load_spline(path) -> FreeKnotSpline:
    return FreeKnotSpline.from_json(json.loads(Path(path).read_text()))


def random_spline(
    n: int,
    rng: np.random.Generator,
    scale: float = 1.0,
    min_gap: float | None = None,
) -> FreeKnotSpline:
    """Spline with ``n`` random knots and uniform values in ``[-scale, scale]``.

    Segment lengths are ``min_gap`` plus a uniformly random (Dirichlet) share of
    the remaining length. The default ``min_gap = 0.1 / (n + 1)`` keeps slopes,
    and hence floating-point conditioning, bounded by ``O(n)``. Pass
    ``min_gap=0`` for knots distributed as sorted uniform samples.
    """
    if min_gap is None:
        min_gap = 0.1 / (n + 1)
    if not 0.0 <= min_gap * (n + 1) < 1.0:
        raise ValueError("min_gap too large for n knots")
    while True:
        gaps = min_gap + (1.0 - (n + 1) * min_gap) * rng.dirichlet(np.ones(n + 1))
        bp = np.cumsum(gaps)[:-1]
        if n == 0 or (bp[0] > 0.0 and bp[-1] < 1.0 and np.all(np.diff(bp) > 0.0)):
            break
    return FreeKnotSpline(bp, rng.uniform(-scale, scale, n + 2))


def eval_spline(spline: FreeKnotSpline, x) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if np.any((x < 0.0) | (x > 1.0)) or not np.all(np.isfinite(x)):
        raise OutOfDomain("spline arguments must lie in [0, 1]")
    return np.interp(x, spline.nodes, spline.values)


def pad_spline(spline: FreeKnotSpline, count: int) -> FreeKnotSpline:
    """Insert inert knots at midpoints of the longest segments until ``count`` knots."""
    nodes = list(spline.nodes)
    values = list(spline.values)
    while len(nodes) - 2 < count:
        gaps = np.diff(nodes)
        i = int(np.argmax(gaps))
        mid = 0.5 * (nodes[i] + nodes[i + 1])
        nodes.insert(i + 1, mid)
        values.insert(i + 1, 0.5 * (values[i] + values[i + 1]))
    return FreeKnotSpline(nodes[1:-1], values)


# -- one hidden layer ---------------------------------------------------------
def spline_to_shallow(spline: FreeKnotSpline, width: int | None = None) -> Network:
    """``S(x) = a relu(x) + b + sum_j m_j relu(x - x_j)`` with slope increments ``m_j``."""
    n = spline.n
    width = n + 1 if width is None else int(width)
    if n > width - 1:
        raise TooManyKnots(f"{n} knots need width at least {n + 1}, got {width}")
    nodes = spline.nodes
    slopes = np.diff(spline.values) / np.diff(nodes)
    w = np.zeros((width, 1))
    b = np.zeros(width)
    out = np.zeros((1, width))
    w[: n + 1, 0] = 1.0
    b[1 : n + 1] = -spline.breakpoints
    out[0, 0] = slopes[0]
    out[0, 1 : n + 1] = np.diff(slopes)
    layers = (LinearLayer(w, b, RELU), LinearLayer(out, [spline.values[0]], IDENTITY))
    return Network(Kind.STANDARD, 1, layers)


def network_to_spline(net: Network) -> FreeKnotSpline:
    """Spline read off a one-hidden-layer univariate network on [0,1]."""
    check_valid(net)
    if net.kind != Kind.STANDARD or net.hidden_layers != 1 or net.input_dim != 1 or net.output_dim != 1:
        raise ValueError("network_to_spline needs a standard 1-in/1-out network with one hidden layer")
    hidden, out = net.layers
    w = hidden.weights[:, 0]
    active = (w != 0.0) & (out.weights[0] != 0.0)
    knots = -hidden.bias[active] / w[active]
    knots = np.unique(knots[(knots > 0.0) & (knots < 1.0)])
    nodes = np.concatenate([[0.0], knots, [1.0]])
    return FreeKnotSpline(knots, evaluate_scalar(net, nodes))


# -- depth-2 construction -----------------------------------------------------
def _q(width: int) -> int:
    return (width - 2) // 6


@dataclass
class BasisDecomposition:
    """Hat expansion of a spline vanishing at the ends of ``[knots[0], knots[-1]]``.

    Hat ``k`` (1-based) has nodes ``(x_{k-1}, 0), (xi_j, 1), (x_{jq+1}, 0)``
    with ``j = ceil(k/q)``.  ``groups[p]`` lists the hats of group ``p``.
    """

    width: int
    q: int
    knots: np.ndarray
    coeffs: np.ndarray
    groups: list[list[int]]
    group_sign: list[int]
    group_label: list[tuple[int, int, int]] = field(default_factory=list)

    @property
    def M(self) -> int:
        return self.q * (self.width - 2)

    @property
    def principal(self) -> np.ndarray:
        q = self.q
        return self.knots[q : self.M + 1 : q]

    def hat(self, k: int) -> tuple[int, int]:
        """``(i, j)`` for hat ``k``."""
        j = -(-k // self.q)
        return j * self.q - k + 1, j

    def hat_nodes(self, k: int) -> tuple[float, float, float]:
        _, j = self.hat(k)
        x = self.knots
        return x[k - 1], x[j * self.q], x[j * self.q + 1]

    def hat_values(self, k: int, x) -> np.ndarray:
        left, peak, right = self.hat_nodes(k)
        return np.interp(x, [left, peak, right], [0.0, 1.0, 0.0], left=0.0, right=0.0)

    def reconstruct(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        out = np.zeros_like(x)
        for k in range(1, self.M + 1):
            if self.coeffs[k - 1] != 0.0:
                out = out + self.coeffs[k - 1] * self.hat_values(k, x)
        return out


def _decompose(knots: np.ndarray, interior: np.ndarray, width: int) -> BasisDecomposition:
    q = _q(width)
    if q < 1:
        raise ValueError("the depth-2 construction needs width at least 8")
    M = q * (width - 2)
    if interior.size != M:
        raise WrongKnotCount(f"expected {M} interior knots, got {interior.size}")
    decomp = BasisDecomposition(width, q, np.asarray(knots, float), np.zeros(M), [], [])
    coeffs = decomp.coeffs
    for k in range(1, M + 1):
        _, j = decomp.hat(k)
        xk = knots[k]
        acc = interior[k - 1]
        # only earlier hats sharing the principal knot reach x_k
        for kk in range((j - 1) * q + 1, k):
            acc -= coeffs[kk - 1] * decomp.hat_values(kk, xk)
        coeffs[k - 1] = acc / decomp.hat_values(k, xk)

    buckets: dict[tuple[int, int, int], list[int]] = {}
    for k in range(1, M + 1):
        c = coeffs[k - 1]
        if c == 0.0:
            continue
        i, j = decomp.hat(k)
        key = (i, j % 3, 1 if c > 0 else -1)
        buckets.setdefault(key, []).append(k)
    labels = sorted(buckets)
    if len(labels) > width - 2:
        raise AssertionError("more groups than compute neurons")
    decomp.groups = [buckets[key] for key in labels] + [[] for _ in range(width - 2 - len(labels))]
    decomp.group_sign = [key[2] for key in labels] + [0] * (width - 2 - len(labels))
    decomp.group_label = labels
    return decomp


def _vanishing_check(values: np.ndarray) -> None:
    scale = max(1.0, float(np.max(np.abs(values))))
    if abs(values[0]) > 1e-12 * scale or abs(values[-1]) > 1e-12 * scale:
        raise NotVanishing("the spline must vanish at both ends")


def decompose_basis(spline: FreeKnotSpline, width: int) -> BasisDecomposition:
    """Hat coefficients by forward substitution and a sign-pure, 3-separated grouping."""
    _vanishing_check(spline.values)
    return _decompose(spline.nodes, spline.values[1:-1], width)


@dataclass
class GroupFunction:
    """``g_p``: piecewise linear with kinks at the principal knots only.

    The group contributes ``sign * relu(g_p(x))``.  ``slope_increments[0]``
    is the slope on ``[0, xi_1]``; entry ``j`` is the slope change at
    ``xi_j``.
    """

    nodes: np.ndarray
    values: np.ndarray
    sign: int
    slope_increments: np.ndarray
    bias: float

    def __call__(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        out = self.bias + self.slope_increments[0] * x
        for xi, m in zip(self.nodes[1:-1], self.slope_increments[1:]):
            out = out + m * np.maximum(x - xi, 0.0)
        return out

    def contribution(self, x) -> np.ndarray:
        return self.sign * np.maximum(self(x), 0.0)


def build_gp(decomp: BasisDecomposition, p: int) -> GroupFunction:
    """Nodal values of ``g_p`` at ``[0, xi_1, ..., xi_{W-2}, 1]`` and its slope form.

    An engaged principal knot takes ``|c|``; its neighbours are set on the
    lines through the hat's zero crossings; every other node gets
    ``-(max |c| + 1)`` so the ReLU clips it.
    """
    group = decomp.groups[p]
    if not group:
        raise EmptyGroup(f"group {p} is empty")
    width = decomp.width
    q = decomp.q
    x = decomp.knots
    nodes = np.concatenate([[0.0], decomp.principal, [1.0]])
    values = np.full(width, np.nan)
    mags = np.abs(decomp.coeffs[[k - 1 for k in group]])
    for k, c in zip(group, mags):
        left, peak, right = decomp.hat_nodes(k)
        _, j = decomp.hat(k)
        values[j] = c
        values[j - 1] = c * (nodes[j - 1] - left) / (peak - left)
        values[j + 1] = c * (right - nodes[j + 1]) / (right - peak)
    values[np.isnan(values)] = -(float(mags.max()) + 1.0)
    slopes = np.diff(values) / np.diff(nodes)
    increments = np.concatenate([[slopes[0]], np.diff(slopes)])
    return GroupFunction(nodes, values, decomp.group_sign[p], increments, float(values[0]))


def _embed_local(knots: np.ndarray, interior: np.ndarray, width: int) -> Network:
    decomp = _decompose(knots, interior, width)
    xi = decomp.principal
    coll = width - 1
    w1 = np.zeros((width, 1))
    b1 = np.zeros(width)
    w1[0, 0] = 1.0
    w1[1 : width - 1, 0] = 1.0
    b1[1 : width - 1] = -xi
    w2 = np.zeros((width, width))
    b2 = np.zeros(width)
    w2[0, 0] = 1.0
    w2[coll, coll] = 1.0
    out = np.zeros((1, width))
    out[0, coll] = 1.0
    for p in range(width - 2):
        if not decomp.groups[p]:
            continue
        g = build_gp(decomp, p)
        row = 1 + p
        w2[row, 0] = g.slope_increments[0]
        w2[row, 1 : width - 1] = g.slope_increments[1:]
        b2[row] = g.bias
        out[0, row] = g.sign
    layers = [
        LinearLayer(w1, b1, RELU),
        LinearLayer(w2, b2, RELU),
        LinearLayer(out, [0.0], IDENTITY),
    ]
    return special_network(layers, 0, coll)


def embed_S0(spline: FreeKnotSpline, width: int) -> Network:
    """Depth-2 special network of width ``W`` for a spline with ``q(W-2)`` knots vanishing at 0 and 1."""
    _vanishing_check(spline.values)
    return _embed_local(spline.nodes, spline.values[1:-1], width)


def embed_spline(spline: FreeKnotSpline, width: int) -> Network:
    """Depth-``2L`` special network for a spline with exactly ``L q(W-2)`` knots.

    The line through the end values is removed, the remainder is cut into
    ``L`` blocks that vanish at their ends, each block is embedded at depth
    2, the blocks are chained on the collation channel and the line is added
    back through the source channel.
    """
    q = _q(width)
    if q < 1:
        raise ValueError("width must be at least 8")
    M = q * (width - 2)
    n = spline.n
    if n == 0 or n % M:
        raise WrongKnotCount(f"knot count {n} is not a positive multiple of {M}")
    L = n // M
    nodes = spline.nodes
    vals = spline.values
    a = vals[-1] - vals[0]
    b = vals[0]
    resid = vals - (a * nodes + b)
    blocks = []
    for j in range(L):
        lo, hi = j * M, (j + 1) * M + 1
        blocks.append(_embed_local(nodes[lo : hi + 1], resid[lo + 1 : hi], width))
    net = special_sum(blocks)
    last = net.layers[-1]
    w = np.array(last.weights)
    w[0, net.channel_meta.source[-1]] += a
    final = LinearLayer(w, last.bias + b, last.activation)
    out = Network(Kind.SPECIAL, 1, net.layers[:-1] + (final,), net.channel_meta)
    check_valid(out)
    return out


@dataclass
class Theorem1Result:
    network: Network
    special: Network
    report: ComplexityReport
    hidden_layers: int
    padded_knots: int


def theorem1_depth(n: int, width: int) -> int:
    M = _q(width) * (width - 2)
    if n < M:
        return 2
    return 2 * math.ceil(n / M)


def theorem1(spline: FreeKnotSpline, width: int, seed: int = 42) -> Theorem1Result:
    """Standard ReLU network of width ``W`` and the prescribed depth reproducing ``spline``."""
    if width < 8:
        raise ValueError("width must be at least 8")
    M = _q(width) * (width - 2)
    n = spline.n
    L = theorem1_depth(n, width)
    padded = pad_spline(spline, (L // 2) * M)
    special = embed_spline(padded, width)
    net, _ = special_to_standard(special, (0.0, 1.0), seed=seed)
    report = complexity(net)
    if report.hidden_layers != L or report.width != width:
        raise VerificationFailure(f"depth/width {report.hidden_layers}/{report.width}, expected {L}/{width}")
    if n < M:
        if report.closed_form_n != width**2 + 4 * width + 1:
            raise VerificationFailure("small-case parameter count differs from W^2 + 4W + 1")
    elif report.closed_form_n > 61 * n:
        raise VerificationFailure(f"parameter count {report.closed_form_n} exceeds 61 n = {61 * n}")
    return Theorem1Result(net, special, report, L, padded.n)
