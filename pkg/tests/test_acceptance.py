"""One test per acceptance criterion; each prints a single PASS/FAIL line."""

import math
import time

import numpy as np
import pytest

from relu_forge.algebra import (
    compose,
    compose_merge,
    concat,
    connected_to_standard,
    lift_with_channels,
    special_add,
    special_to_standard,
)
from relu_forge.constructions import (
    MultiplierSpec,
    approximate_sobolev,
    multiplier_network,
    pou_network,
    pou_scalar_network,
    sawtooth_network,
    squarer_network,
)
from relu_forge.experiments import target_oracle
from relu_forge.network import complexity, evaluate_batch, evaluate_scalar, relu_network
from relu_forge.pwl import count_teeth, slopes
from relu_forge.selfsimilar import TakagiSpec, rate_fit, takagi_errors, takagi_network, tent, weighted_composition_sum
from relu_forge.sobolev import PoUIndex, global_approx, grid_indices, loglog_slope, lp_error, phi, tensor_grid
from relu_forge.splines import _q, eval_spline, random_spline, theorem1, theorem1_depth
from relu_forge.training import gradient, grad_check, init_state


@pytest.fixture
def report(capsys):
    def emit(number, title, ok, detail):
        with capsys.disabled():
            print(f"\n[{'PASS' if ok else 'FAIL'}] criterion {number} ({title}): {detail}")
        assert ok, detail

    return emit


def test_criterion_1_squarer_exact_rate(report):
    start = time.perf_counter()
    x = np.linspace(0.0, 1.0, 10**5 + 1)
    worst = aligned = 0.0
    per_level = []
    counts_ok = True
    for m in range(1, 9):
        net = squarer_network(m)
        err = float(np.max(np.abs(evaluate_scalar(net, x) - x * x)))
        # same check on a grid that contains every dyadic midpoint, for diagnosis only
        xd = np.linspace(0.0, 1.0, 2 ** (m + 3) + 1)
        err_d = float(np.max(np.abs(evaluate_scalar(net, xd) - xd * xd)))
        aligned = max(aligned, abs(err_d - 2.0 ** (-2 * (m + 1))))
        gap = abs(err - 2.0 ** (-2 * (m + 1)))
        per_level.append(f"m={m}:{gap:.1e}")
        worst = max(worst, gap)
        rep = complexity(net)
        counts_ok &= (rep.total_layers, rep.total_neurons, rep.param_slots) == (m + 1, 4 * m + 2, 20 * m - 7)
    elapsed = time.perf_counter() - start
    ok = worst <= 1e-11 and counts_ok and elapsed < 5.0
    detail = f"max |err - 2^-2(m+1)| = {worst:.2e} [{' '.join(per_level)}], counts {counts_ok}, {elapsed:.2f}s; dyadic grid gap {aligned:.1e}"
    report(1, "squarer", ok, detail)


def test_criterion_2_sawtooth(report):
    start = time.perf_counter()
    x = np.linspace(0.0, 1.0, 10**5 + 1)
    ref = x
    worst = 0.0
    teeth_ok = True
    for s in range(1, 11):
        ref = tent(ref)
        vals = evaluate_scalar(sawtooth_network(s), x)
        worst = max(worst, float(np.max(np.abs(vals - ref))))
        teeth_ok &= count_teeth(x, vals) == 2 ** (s - 1)
    elapsed = time.perf_counter() - start
    ok = worst <= 1e-12 and teeth_ok and elapsed < 2.0
    report(2, "sawtooth", ok, f"sup gap {worst:.2e}, teeth 2^(s-1) {teeth_ok}, {elapsed:.2f}s")


def test_criterion_3_multiplier(report):
    start = time.perf_counter()
    net = multiplier_network(MultiplierSpec(D=2.0, eps=1e-3))
    t = np.linspace(-2.0, 2.0, 500)
    pts = tensor_grid(t, 2)
    err = float(np.max(np.abs(evaluate_batch(net, pts)[:, 0] - pts[:, 0] * pts[:, 1])))
    zeros = np.zeros_like(t)
    on_axes = evaluate_batch(net, np.concatenate([np.column_stack([t, zeros]), np.column_stack([zeros, t])]))
    exact = bool(np.all(on_axes == 0.0))
    elapsed = time.perf_counter() - start
    ok = err <= 1e-3 and exact and elapsed < 10.0
    report(3, "multiplier", ok, f"grid error {err:.2e}, zero on axes {exact}, {elapsed:.2f}s")


def test_criterion_4_partition_of_unity(report):
    rng = np.random.default_rng(4)
    sum_gap = prod_gap = 0.0
    slope_ok = True
    for d in (1, 2, 3):
        for n in (2, 5, 8):
            x = rng.uniform(0.0, 1.0, (1000, d))
            indices = grid_indices(n, d)
            total = np.zeros(1000)
            for idx in indices:
                value = phi(idx, x)
                total += value
                got = np.prod(evaluate_batch(pou_network(idx), x), axis=1)
                prod_gap = max(prod_gap, float(np.max(np.abs(got - value))))
            sum_gap = max(sum_gap, float(np.max(np.abs(total - 1.0))))
            line = np.linspace(0.0, 1.0, 20_001)
            for m in range(n + 1):
                vals = evaluate_scalar(pou_scalar_network(0, PoUIndex((m,), n)), line)
                slope_ok &= float(np.max(np.abs(slopes(line, vals)))) <= 3 * n + 1e-6
    ok = sum_gap <= 1e-12 and prod_gap <= 1e-12 and slope_ok
    report(4, "partition of unity", ok, f"|sum - 1| {sum_gap:.2e}, network vs phi {prod_gap:.2e}, slope <= 3n {slope_ok}")


def test_criterion_5_sobolev_rate(report):
    start = time.perf_counter()
    ns = [2, 4, 8, 16, 32]
    fitted = {}
    for name in ("sin", "sincos"):
        f = target_oracle(name)
        grid = 10_001 if f.dim == 1 else 257
        errs = [lp_error(global_approx(f, n, 2), f.value, math.inf, grid, f.dim) for n in ns]
        fitted[name] = loglog_slope(ns, errs)
    res = approximate_sobolev(target_oracle("sin"), 2, eps=0.05)
    elapsed = time.perf_counter() - start
    slopes_ok = all(abs(s + 2.0) <= 0.4 for s in fitted.values())
    ok = slopes_ok and res.measured_error <= 2 * 0.05 and elapsed < 60.0
    detail = (
        f"slope d=1 {fitted['sin']:.3f}, d=2 {fitted['sincos']:.3f}; "
        f"end-to-end d=1 error {res.measured_error:.4f} (n={res.n}), {elapsed:.2f}s"
    )
    report(5, "sobolev rate", ok, detail)


def test_criterion_6_spline_embedding(report):
    start = time.perf_counter()
    rng = np.random.default_rng(6)
    x = np.linspace(0.0, 1.0, 10**5 + 1)
    combos = [(w, n) for w in (8, 14) for n in (5, 50, 500)]
    worst = 0.0
    counts_ok = depth_ok = True
    for i in range(50):
        width, n = combos[i % len(combos)]
        spline = random_spline(n, rng)
        res = theorem1(spline, width)
        worst = max(worst, float(np.max(np.abs(evaluate_scalar(res.network, x) - eval_spline(spline, x)))))
        params = res.report.param_slots
        if n >= _q(width) * (width - 2):
            counts_ok &= params <= 61 * n
        else:
            counts_ok &= params == width**2 + 4 * width + 1
        depth_ok &= res.report.hidden_layers == theorem1_depth(n, width) and res.report.width == width
    elapsed = time.perf_counter() - start
    ok = worst <= 1e-10 and counts_ok and depth_ok and elapsed < 30.0
    report(6, "spline embedding", ok, f"sup gap {worst:.2e}, counts {counts_ok}, depth {depth_ok}, {elapsed:.2f}s")


def test_criterion_7_takagi(report):
    start = time.perf_counter()
    base2 = rate_fit(takagi_errors(2.0, range(2, 11))).base
    x = np.linspace(0.0, 1.0, 2**14 + 1)
    parabola = x * (1.0 - x)
    samples = []
    for L in range(2, 11):
        net = takagi_network(TakagiSpec.geometric(4.0, L))
        samples.append((L, float(np.max(np.abs(evaluate_scalar(net, x) - parabola)))))
    base4 = rate_fit(samples).base
    depths = np.arange(1, 21)
    params = np.array([complexity(takagi_network(TakagiSpec.geometric(2.0, int(L)))).nonzero_params for L in depths])
    coef = np.polyfit(depths, params, 1)
    resid = float(np.max(np.abs(params - np.polyval(coef, depths)) / params))
    elapsed = time.perf_counter() - start
    ok = 1.9 <= base2 <= 2.1 and 3.8 <= base4 <= 4.2 and resid <= 0.02 and elapsed < 10.0
    detail = f"base a=2 {base2:.4f}, a=4 {base4:.4f}, affine residual {resid:.1e}, {elapsed:.2f}s"
    report(7, "takagi", ok, detail)


def test_criterion_8_gradients(report):
    start = time.perf_counter()
    rng = np.random.default_rng(8)
    worst = 0.0
    linearity = 0.0
    flagged = 0
    for r in range(100):
        depth = int(rng.integers(1, 5))
        sizes = [int(rng.integers(1, 9)) for _ in range(depth + 1)]
        ce = r % 2 == 1
        if ce:
            sizes[-1] = max(2, sizes[-1])
        state = init_state(sizes, seed=r, output="softmax" if ce else "identity")
        for b in state.biases:
            b[:] = rng.normal(0.0, 0.5, b.shape)
        kind = "cross_entropy" if ce else "quadratic"
        x = rng.normal(size=(4, sizes[0]))
        y = np.eye(sizes[-1])[rng.integers(0, sizes[-1], 4)] if ce else rng.normal(size=(4, sizes[-1]))
        res = grad_check(state, x, y, kind)
        worst = max(worst, res.max_relative)
        flagged += res.flagged
        full = gradient(state, x, y, kind).flat()
        mean = np.mean([gradient(state, x[i : i + 1], y[i : i + 1], kind).flat() for i in range(4)], axis=0)
        linearity = max(linearity, float(np.max(np.abs(full - mean))))
    elapsed = time.perf_counter() - start
    ok = worst <= 1e-5 and linearity <= 1e-14 and elapsed < 20.0
    detail = f"max rel discrepancy {worst:.2e} ({flagged} kink-flagged), batch linearity {linearity:.1e}, {elapsed:.2f}s"
    report(8, "gradients", ok, detail)


def _uniform_net(rng, width, hidden):
    weights = [rng.normal(size=(width, 1))]
    weights += [rng.normal(size=(width, width)) / np.sqrt(width) for _ in range(hidden - 1)]
    weights.append(rng.normal(size=(1, width)) / np.sqrt(width))
    biases = [rng.normal(0.0, 0.5, w.shape[0]) for w in weights]
    return relu_network(weights, biases)


def _rel(a, b):
    return float(np.max(np.abs(a - b) / np.maximum(1.0, np.abs(b))))


def test_criterion_9_algebra_laws(report):
    rng = np.random.default_rng(9)
    law = conversion = 0.0
    inequalities = True
    x = rng.uniform(-2.0, 2.0, 400)
    unit = np.linspace(0.0, 1.0, 2001)
    for _ in range(200):
        width = int(rng.integers(2, 9))
        a = _uniform_net(rng, width, int(rng.integers(1, 4)))
        b = _uniform_net(rng, width, int(rng.integers(1, 4)))
        ra, rb = complexity(a), complexity(b)
        fa, fb = evaluate_scalar(a, x), evaluate_scalar(b, x)

        comp = compose(a, b)
        rc = complexity(comp)
        direct = evaluate_scalar(a, fb)
        law = max(law, _rel(evaluate_scalar(comp, x), direct))
        law = max(law, _rel(evaluate_scalar(compose_merge(a, b), x), direct))
        inequalities &= rc.total_layers == ra.total_layers + rb.total_layers
        inequalities &= rc.total_neurons <= 2 * (ra.total_neurons + rb.total_neurons)
        inequalities &= rc.nonzero_params <= 2 * (ra.nonzero_params + rb.nonzero_params)

        pair = concat(a, b)
        rp = complexity(pair)
        both = evaluate_batch(pair, x)
        law = max(law, float(np.max(np.abs(both - np.column_stack([fa, fb])))))
        inequalities &= rp.nonzero_params == ra.nonzero_params + rb.nonzero_params
        inequalities &= rp.total_neurons == ra.total_neurons + rb.total_neurons - 1
        inequalities &= pair.hidden_layers == max(a.hidden_layers, b.hidden_layers)

        std = connected_to_standard(comp)
        conversion = max(conversion, _rel(evaluate_scalar(std, x), evaluate_scalar(comp, x)))
        inequalities &= std.hidden_layers == comp.hidden_layers

        special = special_add(lift_with_channels(a), lift_with_channels(b))
        inequalities &= special.hidden_layers == a.hidden_layers + b.hidden_layers
        inequalities &= special.hidden_widths[0] == width + 2
        ref = evaluate_scalar(special, unit)
        law = max(law, _rel(ref, evaluate_scalar(a, unit) + evaluate_scalar(b, unit)))
        converted, _ = special_to_standard(special)
        conversion = max(conversion, _rel(evaluate_scalar(converted, unit), ref))

        coeffs = rng.normal(size=2)
        wsum = weighted_composition_sum(a, coeffs)
        inequalities &= wsum.hidden_layers == 2 * a.hidden_layers and wsum.hidden_widths[0] == width + 2
        fa_unit = evaluate_scalar(a, unit)
        law = max(law, _rel(evaluate_scalar(wsum, unit), coeffs[0] * fa_unit + coeffs[1] * evaluate_scalar(a, fa_unit)))
    ok = law <= 1e-12 and conversion <= 1e-12 and inequalities
    detail = f"law deviation {law:.2e}, conversion deviation {conversion:.2e}, complexity relations {inequalities}"
    report(9, "algebra laws", ok, detail)
