import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from relu_forge.constructions import hat_network
from relu_forge.errors import EmptyDataset, NonPositiveProbability, StaleCache
from relu_forge.network import evaluate_batch
from relu_forge.training import (
    Dataset,
    TrainConfig,
    TrainState,
    backprop,
    batch_slices,
    forward_cached,
    grad_check,
    gradient,
    init_state,
    load_dataset,
    loss,
    save_dataset,
    sgd_train,
)


def random_state(rng, hidden="relu", ce=False):
    sizes = [int(rng.integers(1, 9)) for _ in range(int(rng.integers(2, 6)))]
    if ce:
        sizes[-1] = max(2, sizes[-1])
    st_ = init_state(sizes, seed=int(rng.integers(1 << 30)), hidden=hidden, output="softmax" if ce else "identity")
    for b in st_.biases:
        b[:] = rng.normal(0, 0.5, b.shape)
    return st_


def targets(rng, st_, n, ce):
    k = st_.output_dim
    if ce:
        return np.eye(k)[rng.integers(0, k, n)]
    return rng.normal(size=(n, k))


class TestForward:
    def test_zero_weights_give_bias(self):
        st_ = TrainState([np.zeros((3, 2)), np.zeros((2, 3))], [np.ones(3), np.array([0.5, -1.0])], ["relu", "identity"])
        np.testing.assert_array_equal(forward_cached(st_, [[1.0, 2.0]]), [[0.5, -1.0]])

    def test_hat_caches(self):
        st_ = TrainState.from_network(hat_network())
        out = forward_cached(st_, [0.25])
        assert out[0, 0] == 0.5
        np.testing.assert_array_equal(st_.zs[0], [[0.25, -0.25, -0.75]])
        np.testing.assert_array_equal(st_.activations[1], [[0.25, 0.0, 0.0]])

    def test_softmax_head(self, rng):
        st_ = init_state([3, 5, 4], output="softmax")
        out = forward_cached(st_, rng.normal(size=(10, 3)))
        np.testing.assert_allclose(out.sum(axis=1), 1.0, atol=1e-15)

    def test_network_round_trip(self, rng):
        st_ = random_state(rng)
        x = rng.normal(size=(20, st_.input_dim))
        np.testing.assert_allclose(evaluate_batch(st_.to_network(), x), forward_cached(st_, x), atol=1e-14)


class TestLoss:
    def test_quadratic_zero(self):
        assert loss("quadratic", [[1.0, 2.0]], [[1.0, 2.0]]) == 0.0

    def test_quadratic_value(self):
        assert loss("quadratic", [[1.0, 0.0]], [[0.5, 0.5]]) == pytest.approx(0.25)

    def test_cross_entropy_certain(self):
        assert loss("cross_entropy", [[0.0, 1.0]], [[0.0, 1.0]]) == 0.0

    def test_cross_entropy_needs_probability(self):
        with pytest.raises(NonPositiveProbability):
            loss("cross_entropy", [[1.0, 0.0]], [[0.0, 1.0]])


class TestBackprop:
    def test_linear_closed_form(self, rng):
        w, b = rng.normal(size=(2, 3)), rng.normal(size=2)
        st_ = TrainState([w], [b], ["identity"])
        x, y = rng.normal(size=(1, 3)), rng.normal(size=(1, 2))
        g = gradient(st_, x, y, "quadratic")
        a = x @ w.T + b
        np.testing.assert_allclose(g.weights[0], (a - y).T @ x, atol=1e-14)
        np.testing.assert_allclose(g.biases[0], (a - y)[0], atol=1e-14)

    def test_dead_layer_blocks_gradient(self):
        st_ = TrainState([np.ones((2, 1)), np.ones((1, 2))], [np.array([-5.0, -5.0]), np.zeros(1)], ["relu", "identity"])
        g = gradient(st_, [[1.0]], [[3.0]], "quadratic")
        assert np.all(g.weights[0] == 0.0) and np.all(g.biases[0] == 0.0)

    def test_stale_cache(self, rng):
        st_ = random_state(rng)
        x = rng.normal(size=(3, st_.input_dim))
        with pytest.raises(StaleCache):
            backprop(st_, x, targets(rng, st_, 3, False), "quadratic")
        forward_cached(st_, x)
        st_.touch()
        with pytest.raises(StaleCache):
            backprop(st_, x, targets(rng, st_, 3, False), "quadratic")

    def test_softmax_cross_entropy_delta(self, rng):
        st_ = random_state(rng, ce=True)
        x = rng.normal(size=(1, st_.input_dim))
        y = targets(rng, st_, 1, True)
        a = forward_cached(st_, x)
        backprop(st_, x, y, "cross_entropy")
        np.testing.assert_allclose(st_.deltas[-1], a - y, atol=1e-12)

    def test_softmax_quadratic_checked(self, rng):
        st_ = random_state(rng, hidden="tanh")
        st_.activation_fns[-1] = st_.activation_fns[-1].__class__("softmax")
        x = rng.normal(size=(3, st_.input_dim))
        assert grad_check(st_, x, rng.normal(size=(3, st_.output_dim)), "quadratic").max_relative <= 1e-6

    def test_batch_is_mean_of_samples(self, rng):
        st_ = random_state(rng)
        x = rng.normal(size=(6, st_.input_dim))
        y = targets(rng, st_, 6, False)
        full = gradient(st_, x, y, "quadratic").flat()
        parts = np.mean([gradient(st_, x[i : i + 1], y[i : i + 1], "quadratic").flat() for i in range(6)], axis=0)
        np.testing.assert_allclose(full, parts, atol=1e-14, rtol=0)


class TestGradCheck:
    def test_linear(self, rng):
        st_ = TrainState([rng.normal(size=(2, 3))], [rng.normal(size=2)], ["identity"])
        # the cost is quadratic in the parameters, so central differences are exact
        # up to rounding, which a larger step keeps small
        res = grad_check(st_, rng.normal(size=(4, 3)), rng.normal(size=(4, 2)), "quadratic", h=1e-4)
        assert res.max_relative <= 1e-10

    def test_kink_is_flagged(self):
        # the first hidden unit sits exactly at z = 0
        st_ = TrainState([np.array([[1.0], [1.0]]), np.array([[1.0, 1.0]])], [np.array([-1.0, 0.5]), np.zeros(1)], ["relu", "identity"])
        res = grad_check(st_, [[1.0]], [[0.0]], "quadratic")
        assert res.flagged >= 2

    @settings(max_examples=30, deadline=None)
    @given(st.integers(0, 100_000), st.booleans(), st.sampled_from(["relu", "leaky_relu", "tanh", "sigmoid", "relu6"]))
    def test_random_nets(self, seed, ce, hidden):
        rng = np.random.default_rng(seed)
        st_ = random_state(rng, hidden, ce)
        x = rng.normal(size=(3, st_.input_dim))
        res = grad_check(st_, x, targets(rng, st_, 3, ce), "cross_entropy" if ce else "quadratic")
        assert res.max_relative <= 1e-5

    def test_h_range(self, rng):
        st_ = random_state(rng)
        with pytest.raises(ValueError):
            grad_check(st_, np.zeros((1, st_.input_dim)), np.zeros((1, st_.output_dim)), "quadratic", h=0.1)


class TestSGD:
    def regression(self, n=200, seed=3):
        x = np.random.default_rng(seed).uniform(-1, 1, n)
        return Dataset(x[:, None], 3 * x + 1)

    def test_linear_regression(self):
        data = self.regression()
        res = sgd_train(init_state([1, 1], seed=1), data, TrainConfig(learning_rate=0.1, batch_size=10, epochs=50))
        slope_ls = np.polyfit(data.inputs[:, 0], data.targets[:, 0], 1)[0]
        assert abs(res.state.weights[0][0, 0] - slope_ls) <= 0.05

    def test_zero_learning_rate(self):
        start = init_state([1, 4, 1], seed=2)
        res = sgd_train(start, self.regression(), TrainConfig(learning_rate=0.0, epochs=3, regularizer="l2", lam=0.1))
        for a, b in zip(start.weights + start.biases, res.state.weights + res.state.biases):
            assert np.array_equal(a, b)

    def test_l2_shrinks_monotonically(self):
        data = Dataset(np.random.default_rng(0).normal(size=(40, 2)), np.zeros((40, 1)))
        cfg = TrainConfig(learning_rate=1e-4, batch_size=8, epochs=10, regularizer="l2", lam=1e3)
        res = sgd_train(init_state([2, 5, 1], seed=4), data, cfg)
        assert all(b < a for a, b in zip(res.weight_norms, res.weight_norms[1:]))

    @pytest.mark.parametrize("reg", ["l1", "l2"])
    def test_regularizer_split(self, reg):
        data = self.regression(32)
        start = init_state([1, 3, 1], seed=5)
        eta, lam = 0.05, 0.3
        base = sgd_train(start, data, TrainConfig(learning_rate=eta, batch_size=32, epochs=1))
        regd = sgd_train(start, data, TrainConfig(learning_rate=eta, batch_size=32, epochs=1, regularizer=reg, lam=lam))
        for w0, a, b in zip(start.weights, base.state.weights, regd.state.weights):
            expected = -eta * lam * (np.sign(w0) if reg == "l1" else w0)
            np.testing.assert_allclose(b - a, expected, atol=1e-15)
        for a, b in zip(base.state.biases, regd.state.biases):
            np.testing.assert_array_equal(a, b)

    def test_reproducible(self):
        cfg = TrainConfig(learning_rate=0.05, batch_size=7, epochs=5, seed=11)
        a = sgd_train(init_state([1, 6, 1]), self.regression(), cfg)
        b = sgd_train(init_state([1, 6, 1]), self.regression(), cfg)
        assert a.losses == b.losses

    def test_early_stopping(self):
        cfg = TrainConfig(learning_rate=2.5, batch_size=4, epochs=200, patience=3, validation_split=0.25)
        res = sgd_train(init_state([1, 8, 1], seed=9), self.regression(60), cfg)
        assert res.stopped_early and res.epochs_run < 200
        assert res.epochs_run - res.best_epoch == 3

    def test_batches(self):
        assert [s.stop - s.start for s in batch_slices(10, 4)] == [4, 4, 2]

    def test_empty(self):
        with pytest.raises(EmptyDataset):
            sgd_train(init_state([1, 1]), Dataset(np.zeros((0, 1)), np.zeros((0, 1))), TrainConfig())

    def test_classification(self):
        rng = np.random.default_rng(0)
        x = rng.normal(size=(300, 2))
        data = Dataset.from_labels(x, (x[:, 0] + x[:, 1] > 0).astype(int))
        cfg = TrainConfig(learning_rate=0.5, batch_size=16, epochs=30, loss="cross_entropy")
        res = sgd_train(init_state([2, 8, 2], output="softmax"), data, cfg)
        pred = np.argmax(evaluate_batch(res.network, x), axis=1)
        assert np.mean(pred == np.argmax(data.targets, axis=1)) >= 0.95
        assert res.losses[-1] < res.losses[0]


def test_dataset_csv(tmp_path):
    data = Dataset(np.arange(6.0).reshape(3, 2), np.array([[1.0], [0.0], [2.0]]))
    save_dataset(data, tmp_path / "d.csv")
    back = load_dataset(tmp_path / "d.csv", 2)
    np.testing.assert_array_equal(back.inputs, data.inputs)
    labels = load_dataset(tmp_path / "d.csv", 2, labels=True)
    np.testing.assert_array_equal(labels.targets, np.eye(3)[[1, 0, 2]])
