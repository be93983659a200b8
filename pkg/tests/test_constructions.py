import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from relu_forge.constructions import (
    MultiplierSpec,
    SquarerSpec,
    approximate_sobolev,
    grid_resolution,
    hat_network,
    monomial_selector,
    multiplier_network,
    network_error_bound,
    pou_network,
    pou_scalar_network,
    product_network,
    sawtooth_network,
    sobolev_network,
    squarer_network,
)
from relu_forge.errors import EmptyIndexSet, FactorOutOfRange
from relu_forge.experiments import target_oracle
from relu_forge.network import complexity, evaluate, evaluate_batch, evaluate_scalar, random_network
from relu_forge.pwl import count_teeth, slopes
from relu_forge.selfsimilar import tent
from relu_forge.sobolev import PoUIndex, global_approx, grid_indices, local_polynomials, lp_error, phi, tensor_grid


class TestSawtooth:
    @pytest.mark.parametrize("s", range(1, 11))
    def test_matches_iterated_hat(self, s):
        x = np.linspace(0, 1, 2**12 + 1)
        ref = x
        for _ in range(s):
            ref = tent(ref)
        vals = evaluate_scalar(sawtooth_network(s), x)
        assert np.max(np.abs(vals - ref)) <= 1e-12
        assert count_teeth(x, vals) == 2 ** (s - 1)

    def test_hat_counts(self):
        rep = complexity(hat_network())
        assert rep.param_slots == 10 and rep.nonzero_params == 8

    @pytest.mark.parametrize("s", [2, 5, 9])
    def test_counts(self, s):
        rep = complexity(sawtooth_network(s))
        assert rep.param_slots == 12 * s - 2
        assert rep.nonzero_params == 11 * s - 3

    def test_vanishes_outside(self):
        np.testing.assert_array_equal(evaluate_scalar(hat_network(), [-1.0, 2.0]), [0.0, 0.0])


class TestSquarer:
    @pytest.mark.parametrize("m", range(1, 9))
    def test_error_law(self, m):
        x = np.linspace(0, 1, 2 ** (m + 3) + 1)
        err = np.max(np.abs(evaluate_scalar(squarer_network(m), x) - x * x))
        assert err == pytest.approx(4.0 ** -(m + 1), abs=1e-15)

    @pytest.mark.parametrize("m", range(1, 9))
    def test_counts(self, m):
        rep = complexity(squarer_network(m))
        assert rep.total_layers == m + 1
        assert rep.total_neurons == 4 * m + 2
        assert rep.param_slots == 20 * m - 7
        assert rep.nonzero_params == 15 * m - 5

    def test_exact_on_dyadics(self):
        m = 4
        x = np.arange(2**m + 1) / 2**m
        np.testing.assert_array_equal(evaluate_scalar(squarer_network(m), x), x * x)

    def test_from_eps(self):
        assert SquarerSpec.from_eps(2.0**-10).level == 5
        net = squarer_network(SquarerSpec.from_eps(1e-3))
        x = np.linspace(0, 1, 4097)
        assert np.max(np.abs(evaluate_scalar(net, x) - x * x)) <= 1e-3

    @settings(max_examples=40, deadline=None)
    @given(st.floats(0.0, 1.0), st.integers(1, 8))
    def test_overestimates_between_nodes(self, x, m):
        val = evaluate_scalar(squarer_network(m), np.array([x]))[0]
        assert x * x - 1e-15 <= val <= x * x + 4.0 ** -(m + 1) + 1e-15


class TestMultiplier:
    def test_accuracy(self):
        net = multiplier_network(MultiplierSpec(D=2.0, eps=1e-3))
        t = np.linspace(-2, 2, 500)
        pts = tensor_grid(t, 2)
        assert np.max(np.abs(evaluate_batch(net, pts)[:, 0] - pts[:, 0] * pts[:, 1])) <= 1e-3

    def test_zero_factor_exact(self, rng):
        net = multiplier_network(MultiplierSpec(D=2.0, eps=1e-3))
        t = rng.uniform(-2, 2, 300)
        zeros = np.zeros_like(t)
        assert np.all(evaluate_batch(net, np.column_stack([t, zeros])) == 0.0)
        assert np.all(evaluate_batch(net, np.column_stack([zeros, t])) == 0.0)

    def test_counts_against_squarer(self):
        net = multiplier_network(MultiplierSpec(D=1.0, eps=1e-2))
        sq = complexity(squarer_network(net.info["m"]))
        rep = complexity(net)
        assert rep.nonzero_params == 3 * sq.nonzero_params + 23
        assert rep.total_neurons == 3 * sq.total_neurons + 6

    def test_cached(self):
        spec = MultiplierSpec(D=1.0, eps=1e-2)
        assert multiplier_network(spec) is multiplier_network(spec)

    def test_invalid(self):
        with pytest.raises(ValueError):
            MultiplierSpec(D=0.5, eps=1e-2)


class TestProduct:
    def test_three_factors(self, rng):
        base = pou_network(PoUIndex((1, 1, 1), 2))
        eps = 1e-3
        net = product_network(base, eps)
        x = rng.uniform(0, 1, (400, 3))
        want = np.prod(evaluate_batch(base, x), axis=1)
        assert np.max(np.abs(evaluate_batch(net, x)[:, 0] - want)) <= 3 * eps

    def test_zero_factor_gives_zero(self, rng):
        # left of the support every ReLU of the first factor is off
        base = pou_network(PoUIndex((3, 0), 3))
        net = product_network(base, 1e-2)
        x = np.column_stack([rng.uniform(0.0, 0.4, 100), rng.uniform(0, 1, 100)])
        assert np.all(evaluate_batch(base, x)[:, 0] == 0.0)
        assert np.all(evaluate_batch(net, x)[:, 0] == 0.0)

    def test_out_of_range(self):
        from relu_forge.algebra import affine_network

        with pytest.raises(FactorOutOfRange):
            product_network(affine_network([[2.0], [1.0]]), 1e-2)


class TestPartitionOfUnity:
    @pytest.mark.parametrize("d", [1, 2, 3])
    @pytest.mark.parametrize("n", [2, 5, 8])
    def test_sums_to_one(self, d, n, rng):
        x = rng.uniform(0, 1, (1000, d))
        total = sum(phi(idx, x) for idx in grid_indices(n, d))
        assert np.max(np.abs(total - 1.0)) <= 1e-12

    @pytest.mark.parametrize("d", [1, 2, 3])
    def test_network_product_is_phi(self, d, rng):
        n = 5
        x = rng.uniform(0, 1, (1000, d))
        for idx in grid_indices(n, d)[:: max(1, (n + 1) ** d // 7)]:
            got = np.prod(evaluate_batch(pou_network(idx), x), axis=1)
            assert np.max(np.abs(got - phi(idx, x))) <= 1e-12

    @pytest.mark.parametrize("n", [2, 5, 8])
    def test_slope_bound(self, n):
        x = np.linspace(0, 1, 20_001)
        vals = evaluate_scalar(pou_scalar_network(0, PoUIndex((1,), n)), x)
        assert np.max(np.abs(slopes(x, vals))) <= 3 * n + 1e-6

    def test_support(self):
        idx = PoUIndex((2,), 4)
        x = np.linspace(0, 1, 1001)
        vals = phi(idx, x[:, None])
        assert np.all(vals[np.abs(x - 0.5) >= 1 / 4] == 0.0)
        assert np.max(vals) == 1.0

    def test_counts(self):
        rep = complexity(pou_scalar_network(0, PoUIndex((1,), 3)))
        assert rep.nonzero_params == 12


class TestMonomials:
    def test_selector_product(self, rng):
        x = rng.uniform(0, 1, (50, 3))
        out = evaluate_batch(monomial_selector((2, 0, 1), 3), x)
        np.testing.assert_allclose(np.prod(out, axis=1), x[:, 0] ** 2 * x[:, 2])

    def test_constant(self):
        np.testing.assert_array_equal(evaluate(monomial_selector((0, 0), 2), [0.3, 0.4]), [1.0])


class TestSobolevNetwork:
    def test_close_to_global_approximant(self):
        f = target_oracle("sin")
        n, eps = 4, 1e-3
        polys = local_polynomials(f, n, 2)
        net = sobolev_network(polys, n, eps)
        x = np.linspace(0, 1, 2001)
        gap = np.max(np.abs(evaluate_scalar(net, x) - global_approx(f, n, 2)(x[:, None])))
        assert gap <= network_error_bound(polys, n, eps)

    def test_empty(self):
        with pytest.raises(EmptyIndexSet):
            sobolev_network({}, 3, 1e-2)

    def test_grid_resolution_monotone(self):
        assert grid_resolution(0.01, 2, 1, 40.0) > grid_resolution(0.1, 2, 1, 40.0)

    def test_end_to_end(self):
        res = approximate_sobolev(target_oracle("sin"), 2, eps=0.05)
        assert res.within_slack
        assert res.network.kind.value == "standard"
