"""Quick invariant checks across all modules, used by ``relu-forge verify``."""

from __future__ import annotations

import math
import time
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .algebra import compose, concat, connected_to_standard, special_to_standard
from .constructions import MultiplierSpec, multiplier_network, pou_network, sawtooth_network, squarer_network
from .experiments import target_oracle
from .network import complexity, evaluate_batch, evaluate_scalar, random_network
from .pwl import count_teeth
from .selfsimilar import TakagiSpec, rate_fit, takagi_errors, takagi_network, tent
from .sobolev import PoUIndex, global_approx, grid_indices, loglog_slope, lp_error, phi, tensor_grid
from .splines import eval_spline, random_spline, theorem1
from .training import grad_check, init_state


@dataclass(frozen=True)
class CheckResult:
    name: str
    passed: bool
    detail: str
    seconds: float

    def line(self) -> str:
        return f"{'PASS' if self.passed else 'FAIL'} {self.name}: {self.detail} ({self.seconds:.2f}s)"


def _squarer(seed: int) -> tuple[bool, str]:
    worst = 0.0
    counts_ok = True
    for m in range(1, 9):
        net = squarer_network(m)
        xs = np.linspace(0.0, 1.0, 2 ** (m + 3) + 1)
        err = float(np.max(np.abs(evaluate_scalar(net, xs) - xs * xs)))
        worst = max(worst, abs(err - 4.0 ** -(m + 1)))
        rep = complexity(net)
        counts_ok &= rep.total_layers == m + 1 and rep.total_neurons == 4 * m + 2
        counts_ok &= rep.param_slots == 20 * m - 7
    return worst <= 1e-12 and counts_ok, f"max |err - 2^-2(m+1)| = {worst:.2e}, counts {counts_ok}"


def _sawtooth(seed: int) -> tuple[bool, str]:
    xs = np.linspace(0.0, 1.0, 2**12 + 1)
    worst, teeth_ok = 0.0, True
    ref = xs
    for s in range(1, 11):
        ref = tent(ref)
        vals = evaluate_scalar(sawtooth_network(s), xs)
        worst = max(worst, float(np.max(np.abs(vals - ref))))
        teeth_ok &= count_teeth(xs, vals) == 2 ** (s - 1)
    return worst <= 1e-12 and teeth_ok, f"sup gap {worst:.2e}, teeth {teeth_ok}"


def _multiplier(seed: int) -> tuple[bool, str]:
    net = multiplier_network(MultiplierSpec(D=2.0, eps=1e-3))
    t = np.linspace(-2.0, 2.0, 500)
    pts = tensor_grid(t, 2)
    err = float(np.max(np.abs(evaluate_batch(net, pts)[:, 0] - pts[:, 0] * pts[:, 1])))
    axis = np.concatenate([np.column_stack([t, 0 * t]), np.column_stack([0 * t, t])])
    zero = bool(np.all(evaluate_batch(net, axis) == 0.0))
    return err <= 1e-3 and zero, f"grid error {err:.2e}, exact zeros {zero}"


def _pou(seed: int) -> tuple[bool, str]:
    rng = np.random.default_rng(seed)
    worst = 0.0
    for d in (1, 2, 3):
        for n in (2, 5):
            x = rng.uniform(0.0, 1.0, (200, d))
            total = sum(phi(idx, x) for idx in grid_indices(n, d))
            worst = max(worst, float(np.max(np.abs(total - 1.0))))
            idx = PoUIndex(tuple([1] * d), n)
            prod = np.prod(evaluate_batch(pou_network(idx), x), axis=1)
            worst = max(worst, float(np.max(np.abs(prod - phi(idx, x)))))
    return worst <= 1e-12, f"max deviation {worst:.2e}"


def _sobolev(seed: int) -> tuple[bool, str]:
    f = target_oracle("sin")
    ns = [2, 4, 8, 16, 32]
    errs = [lp_error(global_approx(f, n, 2), f.value, math.inf, 4001) for n in ns]
    slope = loglog_slope(ns, errs)
    return abs(slope + 2.0) <= 0.4, f"log-log slope {slope:.3f}"


def _spline(seed: int) -> tuple[bool, str]:
    rng = np.random.default_rng(seed)
    xs = np.linspace(0.0, 1.0, 20_001)
    worst = 0.0
    for width, n in ((8, 5), (8, 50), (14, 50)):
        spline = random_spline(n, rng)
        res = theorem1(spline, width, seed=seed)
        worst = max(worst, float(np.max(np.abs(evaluate_scalar(res.network, xs) - eval_spline(spline, xs)))))
    return worst <= 1e-10, f"sup gap {worst:.2e}"


def _takagi(seed: int) -> tuple[bool, str]:
    fit = rate_fit(takagi_errors(2.0, range(2, 11)))
    return 1.9 <= fit.base <= 2.1, f"fitted base {fit.base:.4f}"


def _gradients(seed: int) -> tuple[bool, str]:
    rng = np.random.default_rng(seed)
    worst = 0.0
    for r in range(10):
        sizes = [int(rng.integers(1, 5)) for _ in range(int(rng.integers(2, 5)))]
        ce = r % 2 == 1
        if ce:
            sizes[-1] = max(2, sizes[-1])
        st = init_state(sizes, seed=seed + r, output="softmax" if ce else "identity")
        x = rng.normal(size=(4, sizes[0]))
        if ce:
            y = np.eye(sizes[-1])[rng.integers(0, sizes[-1], 4)]
        else:
            y = rng.normal(size=(4, sizes[-1]))
        worst = max(worst, grad_check(st, x, y, "cross_entropy" if ce else "quadratic").max_relative)
    return worst <= 1e-5, f"max relative discrepancy {worst:.2e}"


def _algebra(seed: int) -> tuple[bool, str]:
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(10):
        a = random_network(rng, 1, 1, int(rng.integers(1, 4)))
        b = random_network(rng, 1, 1, int(rng.integers(1, 4)))
        x = rng.uniform(-2.0, 2.0, 200)
        inner = evaluate_scalar(b, x)
        comp = evaluate_scalar(compose(a, b), x)
        worst = max(worst, float(np.max(np.abs(comp - evaluate_scalar(a, inner)) / (1.0 + np.abs(comp)))))
        both = evaluate_batch(concat(a, b), x)
        worst = max(worst, float(np.max(np.abs(both - np.column_stack([evaluate_scalar(a, x), inner])))))
        std = connected_to_standard(compose(a, b))
        worst = max(worst, float(np.max(np.abs(evaluate_scalar(std, x) - comp))))
    special = takagi_network(TakagiSpec.geometric(2.0, 4))
    std, _ = special_to_standard(special)
    xs = np.linspace(0.0, 1.0, 10_001)
    worst = max(worst, float(np.max(np.abs(evaluate_scalar(std, xs) - evaluate_scalar(special, xs)))))
    return worst <= 1e-12, f"max deviation {worst:.2e}"


CHECKS: dict[str, Callable[[int], tuple[bool, str]]] = {
    "squarer": _squarer,
    "sawtooth": _sawtooth,
    "multiplier": _multiplier,
    "partition_of_unity": _pou,
    "sobolev_rate": _sobolev,
    "spline_embedding": _spline,
    "takagi_rate": _takagi,
    "gradients": _gradients,
    "algebra": _algebra,
}


def run_checks(seed: int = 42, only: list[str] | None = None) -> list[CheckResult]:
    out = []
    for name, fn in CHECKS.items():
        if only and name not in only:
            continue
        start = time.perf_counter()
        try:
            passed, detail = fn(seed)
        except Exception as exc:  # a crashing check is a failed check
            passed, detail = False, f"{type(exc).__name__}: {exc}"
        out.append(CheckResult(name, bool(passed), detail, time.perf_counter() - start))
    return out
