import numpy as np
from django.test import SimpleTestCase, override_settings

from van_lka.exceptions import NumericalError, ParameterError, ShapeError
from van_lka.tensor import (
    Tensor, elementwise_add, elementwise_mul, resolve_precision, scale_channels,
    tensor_filled, tensor_random_normal,
)


class TensorTestCase(SimpleTestCase):
    def test_construction_copies_and_freezes(self):
        source = np.arange(6, dtype=np.float64).reshape(2, 3)
        tensor = Tensor(source)
        source[0, 0] = 99.0

        self.assertEqual(tensor.shape, (2, 3))
        self.assertEqual(tensor.precision, 'float64')
        self.assertEqual(tensor.data[0, 0], 0.0)
        with self.assertRaises(ValueError):
            tensor.data[0, 0] = 1.0

    def test_numpy_returns_writable_copy(self):
        tensor = tensor_filled((2, 2), 1.5, 'float32')
        copy = tensor.numpy()
        copy[0, 0] = 0.0
        self.assertEqual(tensor.data[0, 0], 1.5)

    def test_integer_input_uses_default_precision(self):
        self.assertEqual(Tensor([1, 2, 3]).precision, 'float32')

    @override_settings(VAN_LKA={'DEFAULT_PRECISION': 'float64'})
    def test_default_precision_setting(self):
        self.assertEqual(tensor_filled((1,), 0.0).precision, 'float64')

    def test_rejects_empty_extents(self):
        with self.assertRaises(ShapeError):
            tensor_filled((2, 0), 1.0)
        with self.assertRaises(ShapeError):
            Tensor(np.float64(1.0))

    def test_rejects_non_finite(self):
        with self.assertRaises(NumericalError):
            Tensor([1.0, np.nan])
        with self.assertRaises(NumericalError):
            Tensor([np.inf])

    def test_unknown_precision(self):
        with self.assertRaises(ParameterError):
            resolve_precision('float16')
        with self.assertRaises(ParameterError):
            resolve_precision('bfloat16')

    def test_equals_is_bitwise(self):
        a = tensor_filled((3,), 1.0, 'float64')
        self.assertTrue(a.equals(tensor_filled((3,), 1.0, 'float64')))
        self.assertFalse(a.equals(tensor_filled((3,), 1.0, 'float32')))
        self.assertFalse(a.equals(tensor_filled((3,), 1.0 + 1e-15, 'float64')))


class RandomNormalTestCase(SimpleTestCase):
    def test_same_seed_same_samples(self):
        a = tensor_random_normal((4, 5), 0.0, 1.0, seed=7, precision='float64')
        b = tensor_random_normal((4, 5), 0.0, 1.0, seed=7, precision='float64')
        self.assertTrue(a.equals(b))

    def test_different_seed_differs(self):
        a = tensor_random_normal((4, 5), seed=1, precision='float64')
        b = tensor_random_normal((4, 5), seed=2, precision='float64')
        self.assertFalse(a.equals(b))

    def test_matches_pcg64_standard_normal(self):
        expected = np.random.Generator(np.random.PCG64(3)).standard_normal((2, 3)) * 0.5 + 1.0
        sampled = tensor_random_normal((2, 3), 1.0, 0.5, seed=3, precision='float64')
        np.testing.assert_array_equal(sampled.data, expected)

    def test_zero_std_gives_mean(self):
        sampled = tensor_random_normal((3, 3), 2.5, 0.0, seed=0, precision='float32')
        np.testing.assert_array_equal(sampled.data, np.full((3, 3), 2.5, dtype=np.float32))

    def test_negative_std(self):
        with self.assertRaises(ParameterError):
            tensor_random_normal((2,), 0.0, -1.0)

    def test_sample_moments(self):
        sampled = tensor_random_normal((200, 200), 0.0, 1.0, seed=0, precision='float64').data
        self.assertAlmostEqual(sampled.mean(), 0.0, delta=0.02)
        self.assertAlmostEqual(sampled.std(), 1.0, delta=0.02)


class ElementwiseTestCase(SimpleTestCase):
    def test_mul_and_add(self):
        a = Tensor([[1.0, 2.0], [3.0, 4.0]], 'float64')
        b = Tensor([[2.0, 0.5], [-1.0, 0.0]], 'float64')
        np.testing.assert_array_equal(elementwise_mul(a, b).data, [[2.0, 1.0], [-3.0, 0.0]])
        np.testing.assert_array_equal(elementwise_add(a, b).data, [[3.0, 2.5], [2.0, 4.0]])

    def test_matches_scalar_loop(self):
        rng = np.random.Generator(np.random.PCG64(21))
        for case in range(100):
            precision = ('float64', 'float32')[case % 2]
            shape = tuple(int(v) for v in rng.integers(1, 5, size=int(rng.integers(1, 5))))
            a = tensor_random_normal(shape, seed=2 * case, precision=precision)
            b = tensor_random_normal(shape, seed=2 * case + 1, precision=precision)
            product, total = elementwise_mul(a, b).data, elementwise_add(a, b).data
            with self.subTest(case=case, shape=shape, precision=precision):
                for index in np.ndindex(*shape):
                    self.assertEqual(product[index], a.data[index] * b.data[index])
                    self.assertEqual(total[index], a.data[index] + b.data[index])

    def test_shape_mismatch(self):
        with self.assertRaises(ShapeError):
            elementwise_mul(tensor_filled((2, 3), 1.0), tensor_filled((3, 2), 1.0))

    def test_precision_mismatch(self):
        with self.assertRaises(ShapeError):
            elementwise_add(tensor_filled((2,), 1.0, 'float32'), tensor_filled((2,), 1.0, 'float64'))

    def test_scale_channels(self):
        x = tensor_filled((2, 3, 2, 2), 2.0, 'float64')
        scaled = scale_channels(x, [1.0, 0.0, -0.5])
        np.testing.assert_array_equal(scaled.data[:, 0], 2.0)
        np.testing.assert_array_equal(scaled.data[:, 1], 0.0)
        np.testing.assert_array_equal(scaled.data[:, 2], -1.0)

    def test_scale_channels_length_mismatch(self):
        with self.assertRaises(ShapeError):
            scale_channels(tensor_filled((1, 3, 2, 2), 1.0), [1.0, 2.0])
