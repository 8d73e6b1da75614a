"""Tests for layer operations and their gradients."""

import numpy as np
import pytest

from packages.autodiff.src.gradcheck import check_gradient, relative_error
from packages.autodiff.src.layers import (
    conv_output_size,
    diff_concat_rows,
    diff_conv,
    diff_dense,
    diff_mse,
    diff_relu,
    diff_reshape,
    diff_scale,
    diff_sum,
    diff_tanh,
)
from packages.autodiff.src.node import GraphError, backward, constant, leaf


@pytest.fixture
def rng():
    return np.random.default_rng(42)


def _dot(node, weights):
    """Scalar Σ weights·node, so every output element gets a distinct cotangent."""
    flat = diff_reshape(node, (node.value.size,))
    return diff_sum(diff_dense(flat, constant(weights.reshape(1, -1)), constant(np.zeros(1))))


class TestConvForward:
    """Test convolution values and shapes."""

    def test_identity_kernel(self, rng):
        image = rng.normal(size=(1, 5, 7))
        kernel = np.zeros((1, 1, 3, 3))
        kernel[0, 0, 1, 1] = 1.0
        out = diff_conv(constant(image), constant(kernel), constant(np.zeros(1)))
        assert np.allclose(out.value, image)

    def test_box_kernel_interior(self):
        """All-ones kernel on a constant c image gives 9c away from the border."""
        image = constant(np.full((1, 6, 6), 2.0))
        out = diff_conv(image, constant(np.ones((1, 1, 3, 3))), constant(np.zeros(1)))
        assert np.allclose(out.value[0, 1:-1, 1:-1], 18.0)
        assert np.isclose(out.value[0, 0, 0], 8.0)

    def test_bias_per_channel(self):
        out = diff_conv(
            constant(np.zeros((2, 4, 4))),
            constant(np.zeros((3, 2, 3, 3))),
            constant(np.array([1.0, -2.0, 0.5])),
        )
        assert out.shape == (3, 4, 4)
        assert np.allclose(out.value[1], -2.0)

    @pytest.mark.parametrize("n, stride, expected", [(8, 2, 4), (7, 2, 4), (5, 1, 5), (1, 2, 1)])
    def test_output_size(self, n, stride, expected):
        assert conv_output_size(n, stride) == expected

    def test_strided_picks_every_other(self, rng):
        image = rng.normal(size=(1, 7, 6))
        kernel = np.zeros((1, 1, 3, 3))
        kernel[0, 0, 1, 1] = 1.0
        out = diff_conv(constant(image), constant(kernel), constant(np.zeros(1)), stride=2)
        assert out.shape == (1, 4, 3)
        assert np.allclose(out.value[0], image[0, ::2, ::2])

    def test_3d(self, rng):
        volume = rng.normal(size=(2, 4, 5, 3))
        out = diff_conv(
            constant(volume), constant(rng.normal(size=(3, 2, 3, 3, 3))), constant(np.zeros(3)), 2
        )
        assert out.shape == (3, 2, 3, 2)

    def test_channel_mismatch(self, rng):
        with pytest.raises(GraphError):
            image = constant(np.zeros((2, 4, 4)))
            diff_conv(image, constant(np.zeros((1, 3, 3, 3))), constant(np.zeros(1)))

    def test_bad_stride(self):
        with pytest.raises(GraphError):
            diff_conv(
                constant(np.zeros((1, 4, 4))),
                constant(np.zeros((1, 1, 3, 3))),
                constant(np.zeros(1)),
                stride=3,
            )


class TestConvGradient:
    """Analytic conv gradients against central differences."""

    @pytest.mark.parametrize("stride", [1, 2])
    def test_input_kernel_bias_2d(self, rng, stride):
        image = rng.normal(size=(2, 5, 6))
        kernel = rng.normal(size=(3, 2, 3, 3))
        bias = rng.normal(size=3)
        out_size = 3 * conv_output_size(5, stride) * conv_output_size(6, stride)
        weights = rng.normal(size=out_size)

        def via(which):
            def build(node):
                args = {"x": constant(image), "k": constant(kernel), "b": constant(bias)}
                args[which] = node
                return _dot(diff_conv(args["x"], args["k"], args["b"], stride), weights)

            return build

        for which, value in (("x", image), ("k", kernel), ("b", bias)):
            analytic, numeric = check_gradient(via(which), value)
            assert relative_error(analytic, numeric) <= 1e-6, which

    def test_input_3d_strided(self, rng):
        kernel = rng.normal(size=(2, 1, 3, 3, 3))
        weights = rng.normal(size=2 * 2 * 2 * 3)

        def build(node):
            return _dot(diff_conv(node, constant(kernel), constant(np.zeros(2)), 2), weights)

        analytic, numeric = check_gradient(build, rng.normal(size=(1, 3, 4, 5)))
        assert relative_error(analytic, numeric) <= 1e-6


class TestDense:
    """Test W·x + b."""

    def test_identity(self, rng):
        x = rng.normal(size=4)
        out = diff_dense(constant(x), constant(np.eye(4)), constant(np.zeros(4)))
        assert np.allclose(out.value, x)

    def test_zero_weights_give_bias(self, rng):
        b = rng.normal(size=3)
        out = diff_dense(constant(rng.normal(size=5)), constant(np.zeros((3, 5))), constant(b))
        assert np.array_equal(out.value, b)

    def test_shape_mismatch(self):
        with pytest.raises(GraphError):
            diff_dense(constant(np.zeros(3)), constant(np.zeros((2, 4))), constant(np.zeros(2)))

    def test_gradients(self, rng):
        x, W, b = rng.normal(size=5), rng.normal(size=(3, 5)), rng.normal(size=3)
        weights = rng.normal(size=3)
        cases = {
            "x": (x, lambda n: _dot(diff_dense(n, constant(W), constant(b)), weights)),
            "W": (W, lambda n: _dot(diff_dense(constant(x), n, constant(b)), weights)),
            "b": (b, lambda n: _dot(diff_dense(constant(x), constant(W), n), weights)),
        }
        for name, (value, build) in cases.items():
            analytic, numeric = check_gradient(build, value)
            assert relative_error(analytic, numeric) <= 1e-6, name


class TestActivations:
    """Test relu and tanh."""

    def test_relu_values(self):
        out = diff_relu(constant(np.array([-1.0, 0.0, 2.0])))
        assert np.array_equal(out.value, [0.0, 0.0, 2.0])

    def test_relu_subgradient_at_zero(self):
        x = leaf(np.array([0.0]))
        backward(diff_sum(diff_relu(x)))
        assert x.grad[0] == 0.0

    def test_tanh_values(self):
        out = diff_tanh(constant(np.array([0.0, 50.0, -3.0])))
        assert out.value[0] == 0.0
        assert np.all(np.abs(out.value) <= 1.0)
        assert abs(out.value[2]) < 1.0

    def test_gradients_away_from_kink(self, rng):
        x = rng.normal(size=12)
        x[np.abs(x) < 1e-3] = 0.5
        weights = rng.normal(size=12)
        for op in (diff_relu, diff_tanh):
            analytic, numeric = check_gradient(lambda n: _dot(op(n), weights), x)
            assert relative_error(analytic, numeric) <= 1e-6, op.__name__


class TestStructuralOps:
    """Test reshape, concatenation, scaling and MSE."""

    def test_concat_splits_gradient(self, rng):
        top = leaf(rng.normal(size=(3, 2)))
        bottom = constant(np.ones((2, 2)))
        joined = diff_concat_rows(top, bottom)
        assert joined.shape == (5, 2)
        backward(diff_sum(diff_scale(joined, 2.0)))
        assert np.array_equal(top.grad, np.full((3, 2), 2.0))

    def test_concat_width_mismatch(self):
        with pytest.raises(GraphError):
            diff_concat_rows(constant(np.zeros((2, 2))), constant(np.zeros((1, 3))))

    def test_mse_value_and_gradient(self, rng):
        target = rng.normal(size=(4, 3))
        x = rng.normal(size=(4, 3))
        assert np.isclose(diff_mse(constant(x), target).value, np.mean((x - target) ** 2))
        analytic, numeric = check_gradient(lambda n: diff_mse(n, target), x)
        assert relative_error(analytic, numeric) <= 1e-6

    def test_mse_shape_mismatch(self):
        with pytest.raises(GraphError):
            diff_mse(constant(np.zeros(3)), np.zeros(4))
