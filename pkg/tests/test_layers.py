import unittest
import numpy as np
from autodiff.layers import (
    SELU_ALPHA,
    SELU_LAMBDA,
    LayerKind,
    LayerSpec,
    MaskedDense,
    Parameter,
    backward,
    build_layer,
    forward,
    site_degrees,
    triangular_mask,
)
from autodiff.network import Sequential, set_all, zero_grad
from utils.exceptions import CpvaeError, ValidationError


def layer(kind, **fields):
    return build_layer(LayerSpec(kind=kind, name=kind.value, **fields), np.random.default_rng(0))


class TestForward(unittest.TestCase):
    def test_relu(self):
        y, _ = forward(layer(LayerKind.RELU), np.array([[-1.0, 0.0, 2.0]]))
        np.testing.assert_array_equal(y, [[0.0, 0.0, 2.0]])

    def test_selu_constants(self):
        y, _ = forward(layer(LayerKind.SELU), np.array([[1.0, -1.0]]))
        np.testing.assert_allclose(y, [[SELU_LAMBDA, SELU_LAMBDA * SELU_ALPHA * (np.exp(-1.0) - 1.0)]])
        self.assertAlmostEqual(SELU_LAMBDA, 1.0507, places=4)
        self.assertAlmostEqual(SELU_ALPHA, 1.67326, places=5)

    def test_identity_kernel_with_circular_padding(self):
        conv = layer(LayerKind.CIRCULAR_CONV1D, kernel_size=3, in_channels=1, out_channels=1)
        conv.weight.assign(np.array([0.0, 1.0, 0.0]).reshape(3, 1, 1))
        y, _ = forward(conv, np.array([1.0, 2.0, 3.0, 4.0]).reshape(1, 4, 1))
        np.testing.assert_array_equal(y.reshape(-1), [1.0, 2.0, 3.0, 4.0])

    def test_circular_wrap(self):
        conv = layer(LayerKind.CIRCULAR_CONV1D, kernel_size=3, in_channels=1, out_channels=1)
        conv.weight.assign(np.array([1.0, 0.0, 0.0]).reshape(3, 1, 1))
        y, _ = forward(conv, np.array([1.0, 2.0, 3.0, 4.0]).reshape(1, 4, 1))
        np.testing.assert_array_equal(y.reshape(-1), [4.0, 1.0, 2.0, 3.0])

    def test_masked_dense_strictly_lower(self):
        masked = layer(LayerKind.MASKED_DENSE, in_features=3, out_features=3, n_sites=3)
        masked.weight.assign(np.ones((3, 3)))
        y, _ = forward(masked, np.array([[2.0, 3.0, 5.0]]))
        np.testing.assert_array_equal(y, [[0.0, 2.0, 5.0]])

    def test_unmasked_variant_uses_all_inputs(self):
        dense = layer(LayerKind.MASKED_DENSE, in_features=3, out_features=3, n_sites=3, masked=False)
        dense.weight.assign(np.ones((3, 3)))
        y, _ = forward(dense, np.array([[2.0, 3.0, 5.0]]))
        np.testing.assert_array_equal(y, [[10.0, 10.0, 10.0]])

    def test_global_average_pool(self):
        y, _ = forward(layer(LayerKind.GLOBAL_AVERAGE_POOL), np.arange(6.0).reshape(1, 3, 2))
        np.testing.assert_array_equal(y, [[2.0, 3.0]])

    def test_exponential_scale(self):
        y, _ = forward(layer(LayerKind.EXPONENTIAL, scale=0.5), np.array([[np.log(4.0)]]))
        self.assertAlmostEqual(y[0, 0], 2.0)

    def test_shape_mismatch(self):
        dense = layer(LayerKind.DENSE, in_features=3, out_features=2)
        with self.assertRaises(ValidationError) as ctx:
            forward(dense, np.ones((2, 4)))
        self.assertIsInstance(ctx.exception, CpvaeError)
        self.assertEqual(ctx.exception.exit_code, 1)

    def test_deterministic_initialization(self):
        spec = LayerSpec(kind=LayerKind.DENSE, name="d", in_features=4, out_features=3)
        a = build_layer(spec, np.random.default_rng(11))
        b = build_layer(spec, np.random.default_rng(11))
        np.testing.assert_array_equal(a.weight.value, b.weight.value)
        np.testing.assert_array_equal(a.bias.value, np.zeros(3))


class TestBackward(unittest.TestCase):
    def test_relu_passes_positive(self):
        relu = layer(LayerKind.RELU)
        _, tape = forward(relu, np.array([[2.0]]))
        np.testing.assert_array_equal(backward(relu, tape, np.array([[1.0]])), [[1.0]])

    def test_cotangent_shape_checked(self):
        relu = layer(LayerKind.RELU)
        _, tape = forward(relu, np.ones((2, 3)))
        with self.assertRaises(ValidationError):
            backward(relu, tape, np.ones((3, 2)))

    def test_masked_jacobian_zero_above_diagonal(self):
        masked = layer(LayerKind.MASKED_DENSE, in_features=5, out_features=5, n_sites=5)
        x = np.random.default_rng(1).standard_normal((1, 5))
        _, tape = forward(masked, x)
        for i in range(5):
            cotangent = np.zeros((1, 5))
            cotangent[0, i] = 1.0
            dx = backward(masked, tape, cotangent)
            np.testing.assert_array_equal(dx[0, i:], np.zeros(5 - i))

    def test_parameter_gradients_accumulate(self):
        dense = layer(LayerKind.DENSE, in_features=3, out_features=2)
        x = np.ones((4, 3))
        _, tape = forward(dense, x)
        backward(dense, tape, np.ones((4, 2)))
        once = dense.weight.grad.copy()
        backward(dense, tape, np.ones((4, 2)))
        np.testing.assert_allclose(dense.weight.grad, 2 * once)
        zero_grad(dense.parameters())
        self.assertTrue(np.all(dense.weight.grad == 0))

    def test_linear_in_cotangent(self):
        rng = np.random.default_rng(2)
        conv = layer(LayerKind.CIRCULAR_CONV1D, kernel_size=3, in_channels=2, out_channels=4)
        _, tape = forward(conv, rng.standard_normal((3, 6, 2)))
        c1, c2 = rng.standard_normal((2, 3, 6, 4))
        combined = backward(conv, tape, 0.3 * c1 - 1.7 * c2)
        separate = 0.3 * backward(conv, tape, c1) - 1.7 * backward(conv, tape, c2)
        np.testing.assert_allclose(combined, separate, atol=1e-12)

    def test_dense_matches_finite_differences(self):
        for seed in range(3):
            rng = np.random.default_rng(seed)
            dense = build_layer(
                LayerSpec(kind=LayerKind.DENSE, name="d", in_features=4, out_features=3), rng
            )
            x = rng.standard_normal((5, 4))
            weights = rng.standard_normal((5, 3))
            _, tape = forward(dense, x)
            dense.weight.grad[...] = 0.0
            backward(dense, tape, weights)
            flat = dense.weight.value.reshape(-1)
            for position in range(flat.size):
                original = flat[position]
                flat[position] = original + 1e-5
                upper = np.sum(forward(dense, x)[0] * weights)
                flat[position] = original - 1e-5
                lower = np.sum(forward(dense, x)[0] * weights)
                flat[position] = original
                numeric = (upper - lower) / 2e-5
                analytic = dense.weight.grad.reshape(-1)[position]
                self.assertLessEqual(abs(analytic - numeric) / max(abs(numeric), 1e-4), 1e-4)


class TestMasksAndParameters(unittest.TestCase):
    def test_site_degrees(self):
        np.testing.assert_array_equal(site_degrees(6, 3), [0, 0, 1, 1, 2, 2])

    def test_context_rows_visible(self):
        mask = triangular_mask(3, 3, 3, context_features=2, exclusive=False)
        self.assertEqual(mask.shape, (5, 3))
        np.testing.assert_array_equal(mask[:2], np.ones((2, 3)))
        np.testing.assert_array_equal(mask[2:], np.triu(np.ones((3, 3))))

    def test_parameter_assign_checks_shape(self):
        parameter = Parameter("p", np.zeros((2, 2)))
        with self.assertRaises(ValidationError):
            parameter.assign(np.zeros(3))
        self.assertEqual(parameter.grad.shape, parameter.shape)

    def test_sequential_zero_network_dead_units(self):
        specs = [
            LayerSpec(kind=LayerKind.DENSE, name="a", in_features=3, out_features=4),
            LayerSpec(kind=LayerKind.RELU),
            LayerSpec(kind=LayerKind.DENSE, name="b", in_features=4, out_features=1),
        ]
        network = Sequential.from_specs(specs, np.random.default_rng(0))
        set_all(network.parameters(), 0.0)
        y, tapes = network.forward(np.ones((2, 3)))
        network.backward(tapes, np.ones_like(y))
        first = network.layers[0]
        np.testing.assert_array_equal(first.weight.grad, np.zeros((3, 4)))
        np.testing.assert_array_equal(first.bias.grad, np.zeros(4))
        self.assertEqual([s.kind for s in network.specs()], [LayerKind.DENSE, LayerKind.RELU, LayerKind.DENSE])
        self.assertIsInstance(network.layers[0], type(network.layers[2]))
        self.assertNotIsInstance(network.layers[0], MaskedDense)


if __name__ == "__main__":
    unittest.main()
