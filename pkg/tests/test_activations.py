import numpy as np
import pytest
from hypothesis import given, strategies as st

from relu_forge.activations import ACTIVATION_NAMES, Activation, get_activation


class TestValues:
    def test_relu(self):
        np.testing.assert_array_equal(Activation("relu")([-2.0, 0.0, 3.0]), [0.0, 0.0, 3.0])

    def test_leaky_default_alpha(self):
        act = get_activation("leaky_relu")
        assert act.alpha == 0.01
        np.testing.assert_allclose(act([-1.0, 2.0]), [-0.01, 2.0])

    def test_relu6_clips(self):
        np.testing.assert_array_equal(Activation("relu6")([-1.0, 3.0, 9.0]), [0.0, 3.0, 6.0])

    def test_softmax_rows_sum_to_one(self, rng):
        z = rng.normal(size=(5, 4)) * 30
        np.testing.assert_allclose(Activation("softmax")(z, axis=1).sum(axis=1), 1.0, atol=1e-15)

    def test_unknown_name(self):
        with pytest.raises(ValueError):
            Activation("swish")


class TestDerivatives:
    @pytest.mark.parametrize("name", ["sigmoid", "tanh", "identity"])
    def test_smooth_matches_central_difference(self, name):
        act = get_activation(name)
        z = np.linspace(-3, 3, 41)
        h = 1e-6
        fd = (act(z + h) - act(z - h)) / (2 * h)
        np.testing.assert_allclose(act.derivative(z), fd, atol=1e-8)

    def test_relu_convention_at_zero(self):
        assert Activation("relu").derivative(0.0) == 1.0

    def test_relu6_flat_above_six(self):
        np.testing.assert_array_equal(Activation("relu6").derivative([5.0, 6.0, 7.0]), [1.0, 0.0, 0.0])

    def test_softmax_has_no_elementwise_derivative(self):
        with pytest.raises(ValueError):
            Activation("softmax").derivative([0.0])

    def test_kinks(self):
        assert Activation("relu6").kinks() == (0.0, 6.0)
        assert Activation("tanh").kinks() == ()


@given(st.floats(-50, 50), st.floats(-50, 50))
def test_piecewise_linear_activations_are_monotone(a, b):
    lo, hi = min(a, b), max(a, b)
    for name in ("relu", "leaky_relu", "parametric_relu", "relu6"):
        act = get_activation(name)
        assert act(lo) <= act(hi)


def test_json_round_trip():
    for name in ACTIVATION_NAMES:
        act = get_activation(name)
        data = act.to_json()
        assert get_activation(data["activation"], data.get("alpha")) == act
