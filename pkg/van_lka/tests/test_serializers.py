import json
import os
import tempfile

from django.test import SimpleTestCase

from van_lka.exceptions import ConfigError
from van_lka.lka import LkaVariant
from van_lka.serializers import (
    VanVariantSerializer, load_variant_file, resolve_variant, save_variant_file,
    variant_from_dict, variant_to_dict,
)
from van_lka.van import PRESETS


def micro_config(**changes):
    config = {
        'name': 'tiny',
        'stages': [
            {'channels': 8, 'depth': 1, 'expansion_ratio': 4,
             'downsample_kernel': 7, 'downsample_stride': 4, 'downsample_padding': 3},
            {'channels': 16, 'depth': 1, 'expansion_ratio': 4},
            {'channels': 32, 'depth': 2, 'expansion_ratio': 4},
            {'channels': 64, 'depth': 1, 'expansion_ratio': 4},
        ],
        'num_classes': 2,
    }
    config.update(changes)
    return config


class VariantSerializerTestCase(SimpleTestCase):
    def test_presets_round_trip(self):
        for name, variant in PRESETS.items():
            with self.subTest(variant=name):
                self.assertEqual(variant_from_dict(variant_to_dict(variant)), variant)

    def test_dict_is_json_ready(self):
        data = variant_to_dict(PRESETS['B0'])
        text = json.dumps(data)
        self.assertEqual(json.loads(text)['lka_variant'], 'full')
        self.assertEqual(json.loads(text)['stages'][2]['depth'], 5)

    def test_defaults(self):
        variant = variant_from_dict(micro_config())
        self.assertEqual(variant.lka_nominal_kernel, 21)
        self.assertEqual(variant.lka_dilation, 3)
        self.assertEqual(variant.layerscale_init, 0.01)
        self.assertEqual(variant.lka_variant, LkaVariant.FULL)
        self.assertEqual(variant.stages[1].downsample_kernel, 3)
        self.assertEqual(variant.stages, PRESETS['micro'].stages)

    def test_unknown_keys_rejected(self):
        with self.assertRaises(ConfigError) as ctx:
            variant_from_dict(micro_config(drop_path=0.1))
        self.assertIn('drop_path', ctx.exception.errors)

    def test_unknown_stage_keys_rejected(self):
        config = micro_config()
        config['stages'][0]['mlp_ratio'] = 4
        serializer = VanVariantSerializer(data=config)
        self.assertFalse(serializer.is_valid())
        self.assertIn('stages', serializer.errors)

    def test_stage_count(self):
        config = micro_config()
        config['stages'] = config['stages'][:3]
        with self.assertRaises(ConfigError) as ctx:
            variant_from_dict(config)
        self.assertIn('stages', ctx.exception.errors)

    def test_field_validation(self):
        for changes in ({'num_classes': 0}, {'lka_variant': 'softmax'}, {'layerscale_mode': 'x'},
                        {'lka_dilation': 30}):
            with self.subTest(changes=changes):
                with self.assertRaises(ConfigError):
                    variant_from_dict(micro_config(**changes))

    def test_indivisible_downsample(self):
        config = micro_config()
        config['stages'][1]['downsample_padding'] = 0
        with self.assertRaises(ConfigError):
            variant_from_dict(config)

    def test_asymmetric_lka_padding(self):
        with self.assertRaises(ConfigError):
            variant_from_dict(micro_config(lka_nominal_kernel=12, lka_dilation=3))

    def test_ablation_variant(self):
        variant = variant_from_dict(micro_config(lka_variant='sigmoid_attention', layerscale_mode='classic'))
        self.assertEqual(variant.lka_variant, LkaVariant.SIGMOID_ATTENTION)
        self.assertEqual(variant.layerscale_mode, 'classic')


class VariantFileTestCase(SimpleTestCase):
    def setUp(self):
        self.tmp = tempfile.TemporaryDirectory()

    def tearDown(self):
        self.tmp.cleanup()

    def test_save_and_load(self):
        path = os.path.join(self.tmp.name, 'b2.json')
        save_variant_file(PRESETS['B2'], path)
        self.assertEqual(load_variant_file(path), PRESETS['B2'])
        self.assertEqual(resolve_variant(path), PRESETS['B2'])

    def test_invalid_json(self):
        path = os.path.join(self.tmp.name, 'broken.json')
        with open(path, 'w') as handle:
            handle.write('{"name": ')
        with self.assertRaises(ConfigError):
            load_variant_file(path)

    def test_resolve_preset(self):
        self.assertIs(resolve_variant('B3'), PRESETS['B3'])
        with self.assertRaises(ConfigError):
            resolve_variant('B42')

    def test_missing_file(self):
        with self.assertRaises(OSError):
            resolve_variant(os.path.join(self.tmp.name, 'absent.json'))
