import os
import struct
import tempfile

from django.test import SimpleTestCase, override_settings

from van_lka.checkpoint import (
    MAGIC, decode_entries, encode_checkpoint, load_checkpoint, read_entries, save_checkpoint,
)
from van_lka.exceptions import CorruptionError, FormatError, IntegrityError, VersionError
from van_lka.tensor import tensor_random_normal
from van_lka.van import PRESETS, StageConfig, build_van, model_forward
from van_lka.weights import named_tensors, trees_equal


class CheckpointTestCase(SimpleTestCase):
    def setUp(self):
        self.tmp = tempfile.TemporaryDirectory()
        self.path = os.path.join(self.tmp.name, 'micro.vanw')

    def tearDown(self):
        self.tmp.cleanup()

    def test_round_trip_is_bitwise(self):
        for precision in ('float32', 'float64'):
            with self.subTest(precision=precision):
                model = build_van(PRESETS['micro'], seed=5, precision=precision)
                save_checkpoint(model, self.path)
                loaded = load_checkpoint(self.path, PRESETS['micro'])
                self.assertTrue(trees_equal(model, loaded))

                images = tensor_random_normal((1, 3, 32, 32), seed=1, precision=precision)
                before, _ = model_forward(images, model)
                after, _ = model_forward(images, loaded)
                self.assertTrue(before.equals(after))

    def test_entries_follow_traversal_order(self):
        model = build_van(PRESETS['micro'])
        save_checkpoint(model, self.path)
        entries = read_entries(self.path)
        self.assertEqual(list(entries), [name for name, _, _ in named_tensors(model)])
        self.assertIn('stages.3.norm.running_var', entries)

    def test_header_layout(self):
        payload = encode_checkpoint(build_van(PRESETS['micro']))
        self.assertEqual(payload[:4], MAGIC)
        version, count = struct.unpack_from('<HI', payload, 4)
        self.assertEqual(version, 1)
        self.assertEqual(count, len(list(named_tensors(build_van(PRESETS['micro'])))))
        (length,) = struct.unpack_from('<I', payload, 10)
        self.assertEqual(payload[14:14 + length], b'stages.0.downsample.weight')

    def test_bad_magic(self):
        payload = encode_checkpoint(build_van(PRESETS['micro']))
        with self.assertRaises(FormatError):
            decode_entries(b'XXXX' + payload[4:])

    def test_version_mismatch(self):
        payload = encode_checkpoint(build_van(PRESETS['micro']), version=7)
        with self.assertRaises(VersionError):
            decode_entries(payload)

    @override_settings(VAN_LKA={'CHECKPOINT_VERSION': 2})
    def test_version_setting(self):
        payload = encode_checkpoint(build_van(PRESETS['micro']))
        self.assertEqual(struct.unpack_from('<H', payload, 4)[0], 2)
        self.assertEqual(len(decode_entries(payload)), len(list(named_tensors(build_van(PRESETS['micro'])))))

    def test_truncated_payload(self):
        payload = encode_checkpoint(build_van(PRESETS['micro']))
        for cut in (8, 20, len(payload) - 1):
            with self.subTest(cut=cut):
                with self.assertRaises(CorruptionError):
                    decode_entries(payload[:cut])

    def test_trailing_bytes(self):
        payload = encode_checkpoint(build_van(PRESETS['micro']))
        with self.assertRaises(CorruptionError):
            decode_entries(payload + b'\0')

    def test_wrong_variant_names_first_mismatch(self):
        save_checkpoint(build_van(PRESETS['B0']), self.path)
        with self.assertRaises(IntegrityError) as ctx:
            load_checkpoint(self.path, PRESETS['B1'])
        self.assertEqual(ctx.exception.tensor_name, 'stages.0.downsample.weight')

    def test_missing_tensors(self):
        model = build_van(PRESETS['micro'])
        deeper = PRESETS['micro'].with_changes(stages=(
            StageConfig(8, 2, 4, 7, 4, 3),
        ) + PRESETS['micro'].stages[1:])
        save_checkpoint(model, self.path)
        with self.assertRaises(IntegrityError) as ctx:
            load_checkpoint(self.path, deeper)
        self.assertEqual(ctx.exception.tensor_name, 'stages.0.blocks.1.norm1.gamma')
