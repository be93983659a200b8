"""Parameter sweeps that measure errors and complexity and fit convergence rates."""

from __future__ import annotations

import csv
import io
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
import sympy

from .algebra import connected_to_standard
from .constructions import sobolev_network, squarer_network
from .network import complexity, evaluate_scalar
from .selfsimilar import TakagiSpec, rate_fit, takagi_network, takagi_reference
from .sobolev import DerivativeOracle, global_approx, local_polynomials, loglog_slope, lp_error
from .splines import eval_spline, random_spline, theorem1

HEADER = (
    "experiment",
    "param",
    "error",
    "hidden_layers",
    "neurons",
    "nonzero_params",
    "fitted_rate",
)
FAMILIES = ("squarer", "sobolev", "spline", "takagi")
DEFAULT_SWEEPS = {
    "squarer": tuple(range(1, 9)),
    "sobolev": (2, 4, 8, 16),
    "spline": (6, 12, 24, 48, 96),
    "takagi": tuple(range(2, 11)),
}


def target_oracle(name: str) -> DerivativeOracle:
    """Named smooth test functions with symbolic derivatives."""
    x1, x2 = sympy.symbols("x1 x2")
    if name == "sin":
        return DerivativeOracle.from_sympy(sympy.sin(2 * sympy.pi * x1), [x1], "sin")
    if name == "sincos":
        expr = sympy.sin(2 * sympy.pi * x1) * sympy.cos(2 * sympy.pi * x2)
        return DerivativeOracle.from_sympy(expr, [x1, x2], "sincos")
    if name == "exp":
        return DerivativeOracle.from_sympy(sympy.exp(x1), [x1], "exp")
    raise ValueError(f"unknown target {name!r}")


TARGETS = ("sin", "sincos", "exp")


@dataclass(frozen=True)
class Row:
    experiment: str
    param: float
    error: float
    hidden_layers: int
    neurons: int
    nonzero_params: int

    def __post_init__(self):
        if not all(math.isfinite(v) for v in (self.param, self.error)):
            raise ValueError("report fields must be finite")


@dataclass
class ExperimentReport:
    """Rows of one sweep plus the fitted rate (only with at least four rows)."""

    family: str
    rows: list[Row] = field(default_factory=list)
    fitted_rate: float | None = None
    rate_kind: str = ""

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(HEADER)
        rate = "" if self.fitted_rate is None else repr(self.fitted_rate)
        for r in self.rows:
            param = int(r.param) if float(r.param).is_integer() else r.param
            w.writerow(
                [r.experiment, param, repr(r.error), r.hidden_layers, r.neurons, r.nonzero_params, rate]
            )
        return buf.getvalue()

    def write(self, path) -> None:
        with open(path, "w", newline="") as fh:
            fh.write(self.to_csv())


def thread_count() -> int:
    raw = os.environ.get("RELU_FORGE_THREADS", "")
    try:
        value = int(raw)
    except ValueError:
        value = os.cpu_count() or 1
    return max(1, value)


def _squarer_point(m: int) -> Row:
    net = squarer_network(int(m))
    # the grid contains every dyadic midpoint where g_m - x^2 peaks
    xs = np.linspace(0.0, 1.0, 2 ** (int(m) + 3) + 1)
    err = float(np.max(np.abs(evaluate_scalar(net, xs) - xs * xs)))
    return _row("squarer", m, err, net)


def _row(name: str, param, err: float, net) -> Row:
    rep = complexity(net)
    return Row(name, float(param), err, rep.hidden_layers, rep.total_neurons, rep.nonzero_params)


def _sobolev_point(n: int, target: str = "sin", k: int = 2) -> Row:
    f = target_oracle(target)
    approx = global_approx(f, int(n), k)
    grid = 4001 if f.dim == 1 else 201
    err = lp_error(approx, f.value, math.inf, grid, f.dim)
    polys = local_polynomials(f, int(n), k)
    net = connected_to_standard(sobolev_network(polys, int(n), 1e-3))
    return _row(f"sobolev_{target}", n, err, net)


def _spline_point(n: int, width: int = 8, seed: int = 42) -> Row:
    spline = random_spline(int(n), np.random.default_rng(seed + int(n)))
    res = theorem1(spline, width, seed=seed)
    xs = np.linspace(0.0, 1.0, 10_001)
    err = float(np.max(np.abs(evaluate_scalar(res.network, xs) - eval_spline(spline, xs))))
    return _row(f"spline_w{width}", n, err, res.network)


def _takagi_point(L: int, base: float = 2.0, terms: int = 60) -> Row:
    spec = TakagiSpec.geometric(base, int(L))
    net = takagi_network(spec)
    xs = np.linspace(0.0, 1.0, 2**14 + 1)
    ref = takagi_reference(spec, xs, terms).value
    err = float(np.max(np.abs(evaluate_scalar(net, xs) - ref)))
    return _row(f"takagi_a{base:g}", L, err, net)


def _fit(family: str, rows: Sequence[Row]) -> tuple[float | None, str]:
    if len(rows) < 4:
        return None, ""
    params = [r.param for r in rows]
    if family == "sobolev":
        return loglog_slope(params, [r.error for r in rows]), "loglog_slope"
    if family == "spline":
        return loglog_slope(params, [r.nonzero_params for r in rows]), "param_loglog_slope"
    fit = rate_fit(list(zip(params, [r.error for r in rows])))
    if family == "squarer":
        # per-level error factor
        return 1.0 / fit.base, "per_level_factor"
    return fit.base, "decay_base"


def rate_report(
    family: str,
    sweep: Sequence[float] | None = None,
    workers: int | None = None,
    **options,
) -> ExperimentReport:
    """Run a sweep for ``family`` and fit its rate.

    Options: ``target`` and ``k`` for sobolev, ``width`` and ``seed`` for
    spline, ``base`` for takagi.
    """
    if family not in FAMILIES:
        raise ValueError(f"family must be one of {FAMILIES}")
    sweep = DEFAULT_SWEEPS[family] if sweep is None else tuple(sweep)
    point: Callable = {
        "squarer": _squarer_point,
        "sobolev": _sobolev_point,
        "spline": _spline_point,
        "takagi": _takagi_point,
    }[family]
    workers = thread_count() if workers is None else max(1, workers)
    if workers == 1:
        rows = [point(p, **options) for p in sweep]
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            rows = list(pool.map(lambda p: point(p, **options), sweep))
    rate, kind = _fit(family, rows)
    return ExperimentReport(family, rows, rate, kind)
