"""Partition of unity, localized Taylor polynomials and error norms on [0,1]^d.

The global approximant is

    f_n(x) = sum_m phi_m(x) p_m(x),   phi_m(x) = prod_l psi(3n (x_l - m_l / n)),

where ``p_m`` is the Taylor polynomial of order ``k`` of ``f`` at the grid
point ``m / n`` written in the global monomial basis.  The point Taylor
polynomial replaces the averaged one; for ``C^k`` targets it has the same
``n^-k`` rate.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Callable, Iterable, Mapping

import numpy as np

from .errors import InvalidP, OracleFailure

MultiIndex = tuple[int, ...]


def multi_indices(d: int, max_order: int) -> list[MultiIndex]:
    """All multi-indices of length ``d`` with ``|alpha| <= max_order``, graded."""
    out = []
    for order in range(max_order + 1):
        for combo in itertools.product(range(order + 1), repeat=d):
            if sum(combo) == order:
                out.append(tuple(combo))
    return out


def _as_points(x, d: int) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if x.ndim == 0:
        x = x.reshape(1, 1)
    elif x.ndim == 1:
        x = x[:, None] if d == 1 else x[None, :]
    if x.shape[1] != d:
        raise ValueError(f"expected points of dimension {d}, got shape {x.shape}")
    return x


def monomial(alpha: MultiIndex, x: np.ndarray) -> np.ndarray:
    out = np.ones(x.shape[0])
    for i, a in enumerate(alpha):
        if a:
            out = out * x[:, i] ** a
    return out


class DerivativeOracle:
    """Callable ``oracle(alpha, x)`` returning ``D^alpha f`` at points ``x`` of shape (N, d)."""

    def __init__(self, fn: Callable[[MultiIndex, np.ndarray], np.ndarray], dim: int, name: str = "f"):
        self._fn = fn
        self.dim = int(dim)
        self.name = name

    def __call__(self, alpha: MultiIndex, x) -> np.ndarray:
        pts = _as_points(x, self.dim)
        try:
            vals = np.asarray(self._fn(tuple(alpha), pts), dtype=float)
        except Exception as exc:
            raise OracleFailure(f"derivative {alpha} of {self.name} failed: {exc}") from exc
        vals = np.broadcast_to(vals, (pts.shape[0],)).astype(float)
        if not np.all(np.isfinite(vals)):
            raise OracleFailure(f"derivative {alpha} of {self.name} is not finite")
        return vals

    def value(self, x) -> np.ndarray:
        return self((0,) * self.dim, x)

    @classmethod
    def from_sympy(cls, expr, symbols, name: str | None = None) -> "DerivativeOracle":
        """Build an oracle by symbolic differentiation of a sympy expression."""
        import sympy

        symbols = list(symbols)
        cache: dict[MultiIndex, Callable] = {}

        def fn(alpha, pts):
            if alpha not in cache:
                deriv = expr
                for sym, order in zip(symbols, alpha):
                    if order:
                        deriv = sympy.diff(deriv, sym, order)
                cache[alpha] = sympy.lambdify(symbols, deriv, "numpy")
            return cache[alpha](*[pts[:, i] for i in range(len(symbols))])

        return cls(fn, len(symbols), name or str(expr))


@dataclass(frozen=True)
class PoUIndex:
    """Grid multi-index ``m`` in ``{0..n}^d``."""

    m: MultiIndex
    n: int

    def __post_init__(self):
        object.__setattr__(self, "m", tuple(int(v) for v in np.atleast_1d(self.m)))
        if self.n < 1:
            raise ValueError("n must be at least 1")
        if any(v < 0 or v > self.n for v in self.m):
            raise ValueError(f"index {self.m} outside 0..{self.n}")

    @property
    def d(self) -> int:
        return len(self.m)

    @property
    def center(self) -> np.ndarray:
        return np.array(self.m, dtype=float) / self.n


def grid_indices(n: int, d: int) -> list[PoUIndex]:
    return [PoUIndex(m, n) for m in itertools.product(range(n + 1), repeat=d)]


def psi(z):
    """Trapezoid bump: 1 on ``|z| < 1``, ``2 - |z|`` on ``1 <= |z| <= 2``, 0 beyond."""
    z = np.abs(np.asarray(z, dtype=float))
    return np.clip(2.0 - z, 0.0, 1.0)


def phi(idx: PoUIndex, x) -> np.ndarray:
    pts = _as_points(x, idx.d)
    out = np.ones(pts.shape[0])
    for l, ml in enumerate(idx.m):
        out = out * psi(3 * idx.n * (pts[:, l] - ml / idx.n))
    return out


@dataclass
class LocalPolynomial:
    """``p(x) = sum_alpha c_alpha x^alpha`` attached to grid cell ``center``."""

    center: MultiIndex
    coeffs: dict[MultiIndex, float] = field(default_factory=dict)

    @property
    def degree(self) -> int:
        return max((sum(a) for a in self.coeffs), default=0)

    def __call__(self, x) -> np.ndarray:
        pts = _as_points(x, len(self.center))
        out = np.zeros(pts.shape[0])
        for alpha, c in self.coeffs.items():
            out = out + c * monomial(alpha, pts)
        return out


def _reexpansion(alpha: MultiIndex, beta: MultiIndex, center: tuple[Fraction, ...]) -> Fraction:
    """Coefficient of x^alpha in (x - center)^beta / beta!."""
    out = Fraction(1)
    for a, b, c in zip(alpha, beta, center):
        out *= Fraction(math.comb(b, a)) * (-c) ** (b - a) / math.factorial(b)
    return out


def _taylor_coefficients(derivs: Mapping[MultiIndex, float], center, k: int) -> dict[MultiIndex, float]:
    alphas = list(derivs)
    coeffs = {}
    for alpha in alphas:
        total = 0.0
        for beta in alphas:
            if all(b >= a for a, b in zip(alpha, beta)):
                total += derivs[beta] * float(_reexpansion(alpha, beta, center))
        coeffs[alpha] = total
    return coeffs


def taylor_local(f: DerivativeOracle, idx: PoUIndex, k: int) -> LocalPolynomial:
    """Order-``k`` Taylor polynomial of ``f`` at ``m / n`` in the global monomial basis."""
    if k < 1:
        raise ValueError("k must be at least 1")
    center = tuple(Fraction(v, idx.n) for v in idx.m)
    x = np.array([float(c) for c in center])[None, :]
    derivs = {alpha: float(f(alpha, x)[0]) for alpha in multi_indices(idx.d, k - 1)}
    return LocalPolynomial(idx.m, _taylor_coefficients(derivs, center, k))


def local_polynomials(f: DerivativeOracle, n: int, k: int) -> dict[MultiIndex, LocalPolynomial]:
    """Taylor polynomials at every grid point, with vectorized oracle calls."""
    d = f.dim
    cells = list(itertools.product(range(n + 1), repeat=d))
    pts = np.array(cells, dtype=float) / n
    alphas = multi_indices(d, k - 1)
    table = {alpha: f(alpha, pts) for alpha in alphas}
    out = {}
    for row, m in enumerate(cells):
        center = tuple(Fraction(v, n) for v in m)
        derivs = {alpha: float(table[alpha][row]) for alpha in alphas}
        out[m] = LocalPolynomial(m, _taylor_coefficients(derivs, center, k))
    return out


class GlobalApproximant:
    """Callable ``f_n``; each point touches at most ``3^d`` local polynomials."""

    def __init__(self, polys: Mapping[MultiIndex, LocalPolynomial], n: int, d: int):
        self.polys = dict(polys)
        self.n = int(n)
        self.d = int(d)
        self.last_touched = 0

    def __call__(self, x) -> np.ndarray:
        pts = _as_points(x, self.d)
        n = self.n
        base = np.rint(pts * n).astype(int)
        out = np.zeros(pts.shape[0])
        touched = np.zeros(pts.shape[0], dtype=int)
        for off in itertools.product((-1, 0, 1), repeat=self.d):
            m = base + np.array(off)
            ok = np.all((m >= 0) & (m <= n), axis=1)
            weight = np.ones(pts.shape[0])
            for l in range(self.d):
                weight = weight * psi(3 * n * (pts[:, l] - m[:, l] / n))
            ok &= weight > 0.0
            touched += ok
            if not np.any(ok):
                continue
            sel = np.flatnonzero(ok)
            keys, inverse = np.unique(m[sel], axis=0, return_inverse=True)
            inverse = inverse.reshape(-1)
            for g, key in enumerate(keys):
                rows = sel[inverse == g]
                poly = self.polys[tuple(int(v) for v in key)]
                out[rows] += weight[rows] * poly(pts[rows])
        self.last_touched = int(touched.max(initial=0))
        return out


def global_approx(f: DerivativeOracle, n: int, k: int) -> GlobalApproximant:
    if n < 1:
        raise ValueError("n must be at least 1")
    return GlobalApproximant(local_polynomials(f, n, k), n, f.dim)


def _trapezoid_weights(nodes: np.ndarray) -> np.ndarray:
    w = np.zeros_like(nodes)
    h = np.diff(nodes)
    w[:-1] += h / 2
    w[1:] += h / 2
    return w


def tensor_grid(nodes: np.ndarray, d: int) -> np.ndarray:
    mesh = np.meshgrid(*([nodes] * d), indexing="ij")
    return np.stack([g.reshape(-1) for g in mesh], axis=1)


def _values(h, pts: np.ndarray) -> np.ndarray:
    if callable(h):
        return np.asarray(h(pts), dtype=float).reshape(-1)
    return np.broadcast_to(np.asarray(h, dtype=float), (pts.shape[0],))


def lp_error(f, g, p: float = math.inf, grid=10_001, dim: int = 1) -> float:
    """``||f - g||_p`` on ``[0,1]^dim``.

    ``f`` and ``g`` are callables on (N, dim) point arrays or constants.
    ``grid`` is a point count per dimension or an explicit node array.
    Finite ``p`` uses the composite trapezoid rule; ``p = inf`` the grid max.
    """
    if not (p >= 1):
        raise InvalidP(f"p must lie in [1, inf], got {p}")
    nodes = np.linspace(0.0, 1.0, int(grid)) if np.isscalar(grid) else np.asarray(grid, float)
    pts = tensor_grid(nodes, dim)
    diff = np.abs(_values(f, pts) - _values(g, pts))
    if math.isinf(p):
        return float(diff.max())
    w1 = _trapezoid_weights(nodes)
    w = w1
    for _ in range(dim - 1):
        w = np.multiply.outer(w, w1)
    return float(np.sum(w.reshape(-1) * diff**p) ** (1.0 / p))


def sobolev_norm(f: DerivativeOracle, k: int, p: float = math.inf, grid: int = 2001) -> float:
    """Grid estimate of ``||f||_{W^{k,p}}`` on the unit cube."""
    d = f.dim
    nodes = np.linspace(0.0, 1.0, grid if d == 1 else min(grid, 201))
    parts = [lp_error(lambda x, a=alpha: f(a, x), 0.0, p, nodes, d) for alpha in multi_indices(d, k)]
    if math.isinf(p):
        return max(parts)
    return float(np.sum(np.array(parts) ** p) ** (1.0 / p))


def bernstein(f: Callable, m: int) -> Callable:
    """Bernstein polynomial ``sum_k f(k/m) C(m,k) x^k (1-x)^(m-k)`` of a function on [0,1]."""
    if m < 1:
        raise ValueError("m must be at least 1")
    nodes = np.arange(m + 1) / m
    fk = np.asarray([float(f(t)) for t in nodes])

    def poly(x):
        x = np.asarray(x, dtype=float)
        return (bernstein_basis(m, x) @ fk).reshape(x.shape)

    return poly


def bernstein_basis(m: int, x) -> np.ndarray:
    """Matrix of ``b_{k,m}(x)``; rows follow ``x``, columns ``k = 0..m``."""
    xs = np.asarray(x, dtype=float).reshape(-1, 1)
    ks = np.arange(m + 1)
    binom = np.array([math.comb(m, k) for k in range(m + 1)], dtype=float)
    return binom * xs**ks * (1.0 - xs) ** (m - ks)


def loglog_slope(ns: Iterable[float], errors: Iterable[float]) -> float:
    """Least-squares slope of ``log(error)`` against ``log(n)``."""
    ns = np.log(np.asarray(list(ns), float))
    errs = np.log(np.asarray(list(errors), float))
    return float(np.polyfit(ns, errs, 1)[0])
