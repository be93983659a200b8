"""Explicit ReLU networks: hat, sawtooth, squarer, multiplier, products and
partition-of-unity pieces, assembled into Sobolev approximants."""

from __future__ import annotations

import itertools
import logging
import math
from dataclasses import dataclass
from functools import lru_cache
from typing import Mapping

import numpy as np

from .activations import IDENTITY, RELU
from .algebra import (
    affine_network,
    compose,
    concat,
    concat_all,
    connected_to_standard,
    drop_outputs,
    to_connected,
)
from .errors import EmptyIndexSet, FactorOutOfRange
from .network import Kind, LinearLayer, Network, complexity, evaluate_batch
from .sobolev import (
    DerivativeOracle,
    LocalPolynomial,
    MultiIndex,
    PoUIndex,
    global_approx,
    local_polynomials,
    lp_error,
    sobolev_norm,
    tensor_grid,
)

log = logging.getLogger(__name__)

# 2 sigma(x) - 4 sigma(x - 1/2) + 2 sigma(x - 1), read off three ReLUs
_HAT_ROW = np.array([2.0, -4.0, 2.0])
_HAT_BIAS = np.array([0.0, -0.5, -1.0])


def hat_network() -> Network:
    """``h(x) = 2 relu(x) - 4 relu(x - 1/2) + 2 relu(x - 1)``: the tent on [0,1], zero outside."""
    return sawtooth_network(1)


def sawtooth_network(s: int) -> Network:
    """``h_s``, the ``s``-fold composition of the hat, with ``2^(s-1)`` teeth."""
    if s < 1:
        raise ValueError("s must be at least 1")
    layers = [LinearLayer(np.ones((3, 1)), _HAT_BIAS, RELU)]
    for _ in range(s - 1):
        layers.append(LinearLayer(np.tile(_HAT_ROW, (3, 1)), _HAT_BIAS, RELU))
    layers.append(LinearLayer(_HAT_ROW[None, :], [0.0], IDENTITY))
    return Network(Kind.STANDARD, 1, tuple(layers))


@dataclass(frozen=True)
class SquarerSpec:
    """Interpolation level ``m``, given directly or derived from ``target_eps``."""

    m: int | None = None
    target_eps: float | None = None

    def __post_init__(self):
        if self.m is None and self.target_eps is None:
            raise ValueError("give m or target_eps")
        if self.target_eps is not None and not (0.0 < self.target_eps < 0.5):
            raise ValueError("target_eps must lie in (0, 1/2)")

    @classmethod
    def from_eps(cls, eps: float) -> "SquarerSpec":
        return cls(target_eps=eps)

    @property
    def level(self) -> int:
        if self.m is not None:
            return int(self.m)
        return max(1, math.ceil(0.5 * math.log2(1.0 / self.target_eps)))


def _squarer_layers(m: int) -> list[tuple[np.ndarray, np.ndarray]]:
    """Width-4 layers of ``g_m``: three hat neurons plus a carry of ``g_{l-1}``."""
    first = (np.ones((4, 1)), np.array([0.0, -0.5, -1.0, 0.0]))
    layers = [first]
    for l in range(1, m + 1):
        scale = 1.0 / 4.0**l
        carry = np.concatenate([-scale * _HAT_ROW, [1.0]])
        if l == m:
            layers.append((carry[None, :], np.zeros(1)))
        else:
            w = np.zeros((4, 4))
            w[:3, :3] = _HAT_ROW
            w[3] = carry
            layers.append((w, first[1].copy()))
    return layers


def squarer_network(spec: SquarerSpec | int) -> Network:
    """``g_m(x) = x - sum_{s<=m} h_s(x) / 4^s``, the dyadic interpolant of ``x^2``."""
    if not isinstance(spec, SquarerSpec):
        spec = SquarerSpec(m=int(spec))
    m = spec.level
    if m < 1:
        raise ValueError("m must be at least 1")
    parts = _squarer_layers(m)
    layers = [LinearLayer(w, b, RELU) for w, b in parts[:-1]]
    layers.append(LinearLayer(parts[-1][0], parts[-1][1], IDENTITY))
    return Network(Kind.STANDARD, 1, tuple(layers), info={"m": m})


@dataclass(frozen=True)
class MultiplierSpec:
    """Domain ``[-D, D]^2`` and accuracy ``eps``; the squarer runs at ``delta``."""

    D: float
    eps: float
    C0: float = 1.0

    def __post_init__(self):
        if self.D < 1:
            raise ValueError("D must be at least 1")
        if not (0.0 < self.eps < 0.5):
            raise ValueError("eps must lie in (0, 1/2)")

    @property
    def delta(self) -> float:
        return self.eps / (6.0 * self.D**2 * self.C0)


def _multiplier_from_level(D: float, m: int) -> Network:
    s = 1.0 / (2.0 * D)
    c = 2.0 * D * D
    first = np.array([[s, s], [-s, -s], [s, 0.0], [-s, 0.0], [0.0, s], [0.0, -s]])
    layers = [LinearLayer(first, np.zeros(6), RELU)]
    sq = _squarer_layers(m)
    # |u| / 2D = relu(u / 2D) + relu(-u / 2D) feeds each squarer copy
    w = np.zeros((12, 6))
    for t in range(3):
        w[4 * t : 4 * t + 4, 2 * t : 2 * t + 2] = 1.0
    layers.append(LinearLayer(w, np.tile(sq[0][1], 3), RELU))
    for wl, bl in sq[1:-1]:
        layers.append(LinearLayer(np.kron(np.eye(3), wl), np.tile(bl, 3), RELU))
    out_w, out_b = sq[-1]
    layers.append(LinearLayer(c * np.kron(np.eye(3), out_w), np.tile(c * out_b, 3), RELU))
    layers.append(LinearLayer(np.array([[1.0, -1.0, -1.0]]), [0.0], IDENTITY))
    return Network(Kind.STANDARD, 2, tuple(layers))


def _grid_error(net: Network, D: float, points: int = 500) -> float:
    t = np.linspace(-D, D, points)
    pts = tensor_grid(t, 2)
    vals = evaluate_batch(net, pts)[:, 0]
    return float(np.max(np.abs(vals - pts[:, 0] * pts[:, 1])))


@lru_cache(maxsize=64)
def _cached_multiplier(D: float, eps: float, C0: float, verify: bool) -> Network:
    spec = MultiplierSpec(D, eps, C0)
    delta = spec.delta
    for halvings in range(7):
        m = SquarerSpec(target_eps=min(delta, 0.25)).level
        net = _multiplier_from_level(D, m)
        if not verify:
            break
        err = _grid_error(net, D)
        if err <= eps:
            break
        if halvings == 6:
            raise ArithmeticError(f"multiplier misses eps={eps} after 6 halvings (error {err})")
        delta /= 2.0
    info = {"D": D, "eps": eps, "C0": C0, "delta": delta, "m": m, "halvings": halvings}
    return Network(net.kind, net.input_dim, net.layers, info=info)


def multiplier_network(spec: MultiplierSpec, verify: bool = True) -> Network:
    """Approximate ``xy`` on ``[-D, D]^2`` by a combination of three squarers.

    ``xy = 2 D^2 (((|x+y|)/2D)^2 - (|x|/2D)^2 - (|y|/2D)^2)``.  The first
    layer forms ``relu(+-u / 2D)`` for ``u`` in ``(x+y, x, y)``, so the
    rows for ``x + 0`` and ``x`` coincide and the output is exactly zero
    when either factor is.  With ``verify`` the sup error is checked on a
    500 x 500 grid and ``delta`` is halved (at most 6 times) until it holds.
    """
    return _cached_multiplier(float(spec.D), float(spec.eps), float(spec.C0), bool(verify))


def _append_output(net: Network, row: np.ndarray, bias: float) -> Network:
    """Connected ``net`` with one more output row; ``row`` covers its leading columns."""
    last = net.layers[-1]
    full = np.zeros(last.fan_in)
    full[: row.size] = row
    layer = LinearLayer(np.vstack([last.weights, full]), np.append(last.bias, bias), last.activation)
    return Network(Kind.CONNECTED, net.input_dim, net.layers[:-1] + (layer,))


def _check_factors(base: Network) -> None:
    d = base.input_dim
    per_dim = {1: 2001, 2: 201, 3: 41}.get(d, 9)
    pts = tensor_grid(np.linspace(0.0, 1.0, per_dim), d)
    vals = evaluate_batch(base, pts)
    worst = float(np.max(np.abs(vals)))
    if worst > 1.0 + 1e-9:
        raise FactorOutOfRange(f"factor magnitude {worst} exceeds 1 on the unit cube")


def product_network(base: Network, eps: float, check: bool = True) -> Network:
    """One-output network approximating the product of the outputs of ``base``.

    Built by induction: the product of the first ``j - 1`` outputs is
    extended by a copy of output ``j`` and fed to a multiplier on
    ``[-j, j]^2``.  The error is at most ``m * eps`` for ``m`` outputs and the
    result vanishes exactly wherever one of the factors does.
    """
    m = base.output_dim
    if m == 1:
        return base
    if check:
        _check_factors(base)
    conn = to_connected(base)
    last = conn.layers[-1]
    acc = drop_outputs(conn, [0])
    for j in range(2, m + 1):
        extended = _append_output(acc, last.weights[j - 1], last.bias[j - 1])
        mult = multiplier_network(MultiplierSpec(D=float(j), eps=eps))
        acc = compose(mult, extended)
    return acc


def pou_scalar_network(i: int, idx: PoUIndex) -> Network:
    """``psi(3n(x_i - m_i/n))`` from ``psi(z) = r(z+2) - r(z+1) - r(z-1) + r(z-2)``."""
    d = idx.d
    scale = 3.0 * idx.n
    shift = -3.0 * idx.m[i]
    w = np.zeros((4, d))
    w[:, i] = scale
    bias = shift + np.array([2.0, 1.0, -1.0, -2.0])
    hidden = LinearLayer(w, bias, RELU)
    out = LinearLayer(np.array([[1.0, -1.0, -1.0, 1.0]]), [0.0], IDENTITY)
    return Network(Kind.STANDARD, d, (hidden, out))


def pou_network(idx: PoUIndex) -> Network:
    """``d`` outputs whose product is ``phi_m``; one block of four ReLUs per coordinate."""
    d = idx.d
    hidden_w = np.zeros((4 * d, d))
    hidden_b = np.zeros(4 * d)
    out_w = np.zeros((d, 4 * d))
    for i in range(d):
        part = pou_scalar_network(i, idx)
        hidden_w[4 * i : 4 * i + 4] = part.layers[0].weights
        hidden_b[4 * i : 4 * i + 4] = part.layers[0].bias
        out_w[i, 4 * i : 4 * i + 4] = part.layers[1].weights[0]
    layers = (LinearLayer(hidden_w, hidden_b, RELU), LinearLayer(out_w, np.zeros(d), IDENTITY))
    return Network(Kind.STANDARD, d, layers)


def monomial_selector(alpha: MultiIndex, d: int) -> Network:
    """One hidden ReLU layer copying coordinate ``i`` ``alpha_i`` times.

    On ``[0,1]^d`` the product of the outputs is ``x^alpha``.  For
    ``alpha = 0`` the network outputs the constant 1.
    """
    alpha = tuple(int(a) for a in alpha)
    if len(alpha) != d or any(a < 0 for a in alpha):
        raise ValueError(f"invalid multi-index {alpha} for d={d}")
    order = sum(alpha)
    if order == 0:
        hidden = LinearLayer(np.zeros((1, d)), [0.0], RELU)
        return Network(Kind.STANDARD, d, (hidden, LinearLayer([[0.0]], [1.0], IDENTITY)))
    w = np.zeros((order, d))
    row = 0
    for i, a in enumerate(alpha):
        w[row : row + a, i] = 1.0
        row += a
    layers = (LinearLayer(w, np.zeros(order), RELU), LinearLayer(np.eye(order), np.zeros(order), IDENTITY))
    return Network(Kind.STANDARD, d, layers)


def _term_network(idx: PoUIndex, alpha: MultiIndex, eps: float) -> Network:
    pou = pou_network(idx)
    if sum(alpha) == 0:
        return product_network(pou, eps, check=False)
    return product_network(concat(monomial_selector(alpha, idx.d), pou), eps, check=False)


def _terms(local_polys) -> list[tuple[PoUIndex, MultiIndex, float]]:
    terms = []
    for poly, n in local_polys:
        for alpha, c in poly.coeffs.items():
            if c != 0.0:
                terms.append((PoUIndex(poly.center, n), alpha, float(c)))
    return terms


def _normalize(local_polys, n) -> list[tuple[LocalPolynomial, int]]:
    if isinstance(local_polys, Mapping):
        polys = list(local_polys.values())
    else:
        polys = list(local_polys)
    return [(p, n) for p in polys]


def sobolev_network(local_polys, n: int, eps: float) -> Network:
    """Connected network approximating ``f_n = sum_m phi_m p_m``.

    Every nonzero term ``c_{m,alpha} phi_m x^alpha`` becomes a product
    network; the products are concatenated and summed with weights
    ``c_{m,alpha}`` by a final affine map.
    """
    polys = _normalize(local_polys, n)
    if not polys:
        raise EmptyIndexSet("no local polynomials given")
    d = len(polys[0][0].center)
    terms = _terms(polys)
    if not terms:
        return affine_network(np.zeros((1, d)), [0.0])
    parts = [_term_network(idx, alpha, eps) for idx, alpha, _ in terms]
    coeffs = np.array([[c for _, _, c in terms]])
    return compose(affine_network(coeffs), concat_all(parts))


def network_error_bound(local_polys, n: int, eps: float) -> float:
    """Bound on ``|network - f_n|`` from the product errors of the active terms."""
    polys = _normalize(local_polys, n)
    d = len(polys[0][0].center)
    worst = 0.0
    for poly, _ in polys:
        worst = max(worst, sum(abs(c) * (sum(a) + d) for a, c in poly.coeffs.items()))
    return 2**d * worst * eps


@dataclass
class SobolevApproximation:
    """Result of the end-to-end pipeline; ``network`` is standard."""

    network: Network
    n: int
    k: int
    p: float
    eps: float
    network_eps: float
    norm_estimate: float
    measured_error: float
    slack: float = 2.0

    @property
    def within_slack(self) -> bool:
        return self.measured_error <= self.slack * self.eps


def grid_resolution(eps: float, k: int, d: int, norm: float) -> int:
    """``n = ceil((eps / (2 c ||f||))^(-1/k))`` with ``c = (2d/3)^k / k!``."""
    c = (2.0 * d / 3.0) ** k / math.factorial(k)
    if norm == 0.0:
        return 1
    return max(1, math.ceil((eps / (2.0 * c * norm)) ** (-1.0 / k)))


def approximate_sobolev(
    f: DerivativeOracle,
    k: int,
    p: float = math.inf,
    eps: float = 0.05,
    grid: int | None = None,
) -> SobolevApproximation:
    """Standard ReLU network within ``eps`` (up to slack 2) of ``f`` in ``L^p``.

    Half of the budget goes to the polynomial approximant ``f_n`` and half to
    the network error of the products.
    """
    d = f.dim
    norm = sobolev_norm(f, k, math.inf)
    n = grid_resolution(eps, k, d, norm)
    polys = local_polynomials(f, n, k)
    bound_per_eps = network_error_bound(polys, n, 1.0)
    net_eps = min(0.25, 0.5 * eps / bound_per_eps) if bound_per_eps > 0 else 0.25
    conn = sobolev_network(polys, n, net_eps)
    net = connected_to_standard(conn)
    if grid is None:
        grid = 10_001 if d == 1 else 201
    err = lp_error(lambda x: evaluate_batch(net, x)[:, 0], f.value, p, grid, d)
    report = complexity(net)
    log.info(
        "approximate_sobolev n=%d k=%d eps=%g error=%g L=%d N=%d P=%d",
        n, k, eps, err, report.hidden_layers, report.total_neurons, report.nonzero_params,
    )
    return SobolevApproximation(net, n, k, p, eps, net_eps, norm, err)


__all__ = [
    "MultiplierSpec",
    "PoUIndex",
    "SobolevApproximation",
    "SquarerSpec",
    "approximate_sobolev",
    "global_approx",
    "grid_resolution",
    "hat_network",
    "monomial_selector",
    "multiplier_network",
    "network_error_bound",
    "pou_network",
    "pou_scalar_network",
    "product_network",
    "sawtooth_network",
    "sobolev_network",
    "squarer_network",
]
