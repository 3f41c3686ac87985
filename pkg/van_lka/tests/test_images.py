import os
import tempfile

import numpy as np
from django.test import SimpleTestCase, override_settings

from van_lka.exceptions import GeometryError, ImageError
from van_lka.images import (
    center_crop, decode_ppm, encode_ppm, encode_raw, infer_image, load_image,
)
from van_lka.tensor import Tensor
from van_lka.van import PRESETS, build_van, model_forward


class TempFileMixin:
    def setUp(self):
        self.tmp = tempfile.TemporaryDirectory()

    def tearDown(self):
        self.tmp.cleanup()

    def write(self, name, payload):
        path = os.path.join(self.tmp.name, name)
        with open(path, 'wb') as handle:
            handle.write(payload)
        return path


class ImageFileTestCase(TempFileMixin, SimpleTestCase):
    def test_ppm_is_normalised(self):
        pixels = np.zeros((2, 3, 3), dtype=np.uint8)
        pixels[..., 0] = 255
        image = load_image(self.write('red.ppm', encode_ppm(pixels)), 'float64')
        self.assertEqual(image.shape, (1, 3, 2, 3))
        np.testing.assert_allclose(image.data[0, 0], (1.0 - 0.485) / 0.229)
        np.testing.assert_allclose(image.data[0, 1], (0.0 - 0.456) / 0.224)

    @override_settings(VAN_LKA={'IMAGE_MEAN': (0.0, 0.0, 0.0), 'IMAGE_STD': (1.0, 1.0, 1.0)})
    def test_normalisation_settings(self):
        pixels = np.full((1, 1, 3), 51, dtype=np.uint8)
        image = load_image(self.write('grey.ppm', encode_ppm(pixels)), 'float64')
        np.testing.assert_allclose(image.data.reshape(-1), [0.2, 0.2, 0.2])

    def test_ppm_header_comments(self):
        payload = b'P6\n# made by hand\n1 1\n255\n' + bytes([10, 20, 30])
        pixels, maxval = decode_ppm(payload)
        self.assertEqual(maxval, 255)
        self.assertEqual(pixels.tolist(), [[[10, 20, 30]]])

    def test_ppm_errors(self):
        with self.assertRaises(ImageError):
            decode_ppm(b'P3\n1 1\n255\n0 0 0')
        with self.assertRaises(ImageError):
            decode_ppm(b'P6\n2 2\n255\n' + bytes(5))
        with self.assertRaises(ImageError):
            decode_ppm(b'P6\n1 1\n65535\n' + bytes(6))

    def test_raw_tensor(self):
        array = np.arange(2 * 3 * 4 * 4, dtype=np.float32).reshape(2, 3, 4, 4)
        image = load_image(self.write('x.raw', encode_raw(array)), 'float32')
        np.testing.assert_array_equal(image.data, array)

    def test_raw_tensor_size_mismatch(self):
        payload = encode_raw(np.zeros((1, 3, 4, 4), dtype=np.float32))
        with self.assertRaises(ImageError):
            load_image(self.write('short.raw', payload[:-4]))

    def test_center_crop(self):
        array = np.arange(35 * 35, dtype=np.float64).reshape(1, 1, 35, 35)
        cropped = center_crop(array, 32)
        self.assertEqual(cropped.shape, (1, 1, 32, 32))
        self.assertEqual(cropped[0, 0, 0, 0], array[0, 0, 1, 1])
        with self.assertRaises(GeometryError):
            center_crop(np.zeros((1, 1, 20, 40)), 32)


class InferImageTestCase(TempFileMixin, SimpleTestCase):
    def setUp(self):
        super().setUp()
        self.model = build_van(PRESETS['micro'], seed=0)

    def test_zero_image_is_deterministic(self):
        path = self.write('zero.raw', encode_raw(np.zeros((1, 3, 32, 32))))
        first_class, first = infer_image(path, self.model)
        second_class, second = infer_image(path, self.model)
        np.testing.assert_array_equal(first, second)
        self.assertEqual(first_class.tolist(), second_class.tolist())

    def test_matches_model_forward(self):
        array = np.random.Generator(np.random.PCG64(1)).standard_normal((1, 3, 64, 32)).astype(np.float32)
        path = self.write('noise.raw', encode_raw(array))
        _, logits = infer_image(path, self.model)
        expected, _ = model_forward(Tensor(array, 'float32'), self.model)
        np.testing.assert_array_equal(logits, expected.data)

    def test_indivisible_image(self):
        path = self.write('odd.raw', encode_raw(np.zeros((1, 3, 33, 33))))
        with self.assertRaises(GeometryError):
            infer_image(path, self.model)
        _, logits = infer_image(path, self.model, crop=True)
        self.assertEqual(logits.shape, (1, 2))
