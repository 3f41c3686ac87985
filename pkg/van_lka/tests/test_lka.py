from dataclasses import replace

import numpy as np
from django.test import SimpleTestCase

from van_lka.exceptions import ConfigError, ShapeError
from van_lka.lka import (
    LkaConfig, LkaVariant, attention_map, constant_lka_weights, identity_lka_weights,
    lka_forward, lka_variant_forward, lka_vjp, measure_span, random_lka_weights, receptive_span,
)
from van_lka.ops import sigmoid_array
from van_lka.tensor import Tensor, tensor_random_normal
from van_lka.tests.test_ops import reference_conv

DEFAULT_PAIRS = {(7, 2): 9, (14, 3): 17, (21, 3): 23, (28, 4): 31}


class LkaConfigTestCase(SimpleTestCase):
    def test_default_decomposition(self):
        cfg = LkaConfig(32)
        self.assertEqual(cfg.dw_kernel, 5)
        self.assertEqual(cfg.dwd_kernel, 7)
        self.assertEqual(cfg.dwd_spec.dilation, 3)
        self.assertEqual(cfg.dwd_spec.padding, 9)
        self.assertEqual(cfg.dw_spec.padding, 2)
        self.assertEqual([name for name, _ in cfg.stages()], ['dw', 'dwd', 'pw'])

    def test_even_dilated_kernel_with_even_dilation(self):
        cfg = LkaConfig(4, 7, 2)
        self.assertEqual(cfg.dwd_kernel, 4)
        self.assertEqual(cfg.dwd_spec.padding, 3)

    def test_asymmetric_padding_rejected(self):
        with self.assertRaises(ConfigError):
            LkaConfig(4, 12, 3)

    def test_dilation_bounds(self):
        with self.assertRaises(ConfigError):
            LkaConfig(4, 3, 5)
        with self.assertRaises(ConfigError):
            LkaConfig(4, 21, 0)

    def test_unknown_variant(self):
        with self.assertRaises(ConfigError):
            LkaConfig(4, variant='softmax_attention')

    def test_variant_stages(self):
        self.assertEqual([n for n, _ in LkaConfig(4, variant='no_dw').stages()], ['dwd', 'pw'])
        self.assertEqual([n for n, _ in LkaConfig(4, variant='no_dwd').stages()], ['dw', 'pw'])
        self.assertEqual([n for n, _ in LkaConfig(4, variant='no_pw').stages()], ['dw', 'dwd'])


class ReceptiveSpanTestCase(SimpleTestCase):
    def test_formula_for_default_pairs(self):
        for (kernel, dilation), span in DEFAULT_PAIRS.items():
            with self.subTest(kernel=kernel, dilation=dilation):
                self.assertEqual(receptive_span(LkaConfig(1, kernel, dilation)), span)

    def test_impulse_probe_matches_formula(self):
        for (kernel, dilation), span in DEFAULT_PAIRS.items():
            with self.subTest(kernel=kernel, dilation=dilation):
                self.assertEqual(measure_span(LkaConfig(3, kernel, dilation)), (span, span))

    def test_span_covers_nominal_kernel(self):
        for kernel, dilation in DEFAULT_PAIRS:
            self.assertGreaterEqual(receptive_span(LkaConfig(1, kernel, dilation)), kernel)

    def test_ablated_chains(self):
        self.assertEqual(measure_span(LkaConfig(1, variant='no_dw')), (19, 19))
        self.assertEqual(measure_span(LkaConfig(1, variant='no_dwd')), (5, 5))


class LkaForwardTestCase(SimpleTestCase):
    def setUp(self):
        self.cfg = LkaConfig(3)
        self.F = tensor_random_normal((2, 3, 10, 10), seed=4, precision='float64')

    def test_identity_weights_square_the_input(self):
        out = lka_forward(self.F, identity_lka_weights(self.cfg), self.cfg)
        np.testing.assert_allclose(out.data, self.F.data * self.F.data, rtol=0, atol=1e-12)

    def test_add_attention_with_zero_weights(self):
        cfg = LkaConfig(3, variant=LkaVariant.ADD_ATTENTION)
        out = lka_variant_forward(self.F, constant_lka_weights(cfg, 0.0), cfg)
        np.testing.assert_array_equal(out.data, self.F.data)

    def test_sigmoid_gate_is_open_interval(self):
        cfg = LkaConfig(3, variant=LkaVariant.SIGMOID_ATTENTION)
        weights = random_lka_weights(cfg, seed=1, std=1.0)
        gate = sigmoid_array(attention_map(self.F, weights, cfg).data)
        self.assertTrue(((gate > 0) & (gate < 1)).all())
        out = lka_variant_forward(self.F, weights, cfg)
        np.testing.assert_allclose(out.data, gate * self.F.data)

    def test_saturated_float32_gate_stays_open(self):
        cfg = LkaConfig(3, variant=LkaVariant.SIGMOID_ATTENTION)
        weights = random_lka_weights(cfg, seed=1, std=1.0, precision='float32')
        F = self.F.astype('float32')
        gate = sigmoid_array(attention_map(F, weights, cfg).data)
        self.assertEqual(gate.dtype, np.float32)
        self.assertTrue(((gate > 0) & (gate < 1)).all())
        out = lka_variant_forward(F, weights, cfg)
        np.testing.assert_array_equal(out.data, gate * F.data)

    def test_depthwise_stages_keep_channels_apart(self):
        weights = replace(random_lka_weights(self.cfg, seed=6), pw=identity_lka_weights(self.cfg).pw)
        base = attention_map(self.F, weights, self.cfg).data
        for channel in range(3):
            with self.subTest(channel=channel):
                perturbed = self.F.data.copy()
                perturbed[:, channel] += 1.0
                out = attention_map(Tensor(perturbed, 'float64'), weights, self.cfg).data
                changed = np.nonzero(np.abs(out - base).sum(axis=(0, 2, 3)))[0]
                self.assertEqual(changed.tolist(), [channel])

    def test_attention_map_matches_sequential_reference(self):
        cfg = LkaConfig(2, bias=True)
        weights = random_lka_weights(cfg, seed=9, std=0.5)
        rng = np.random.Generator(np.random.PCG64(10))
        weights = replace(weights, **{
            name: replace(getattr(weights, name), bias=Tensor(rng.standard_normal(2), 'float64'))
            for name, _ in cfg.stages()
        })
        F = tensor_random_normal((1, 2, 12, 12), seed=7, precision='float64')
        expected = F.data
        for name, spec in cfg.stages():
            stage = getattr(weights, name)
            expected = reference_conv(expected, stage.weight.data, stage.bias.data, spec)
        np.testing.assert_allclose(attention_map(F, weights, cfg).data, expected, rtol=0, atol=1e-10)

    def test_non_attention_returns_map(self):
        cfg = LkaConfig(3, variant=LkaVariant.NON_ATTENTION)
        weights = random_lka_weights(cfg, seed=2)
        out = lka_variant_forward(self.F, weights, cfg)
        np.testing.assert_array_equal(out.data, attention_map(self.F, weights, cfg).data)

    def test_preserves_shape(self):
        out = lka_forward(self.F, random_lka_weights(self.cfg, seed=3), self.cfg)
        self.assertEqual(out.shape, self.F.shape)

    def test_full_forward_rejects_ablation(self):
        cfg = LkaConfig(3, variant=LkaVariant.NO_PW)
        with self.assertRaises(ConfigError):
            lka_forward(self.F, random_lka_weights(cfg), cfg)

    def test_channel_mismatch(self):
        cfg = LkaConfig(4)
        with self.assertRaises(ShapeError):
            lka_forward(self.F, random_lka_weights(cfg), cfg)

    def test_missing_stage_weights(self):
        weights = random_lka_weights(LkaConfig(3, variant=LkaVariant.NO_DW))
        with self.assertRaises(ShapeError):
            lka_forward(self.F, weights, self.cfg)


class LkaVjpTestCase(SimpleTestCase):
    def test_skipped_stages_have_no_gradient(self):
        cfg = LkaConfig(2, variant=LkaVariant.NO_DWD, bias=True)
        F = tensor_random_normal((1, 2, 6, 6), seed=0, precision='float64')
        grad_F, grads = lka_vjp(F, random_lka_weights(cfg), cfg, np.ones(F.shape))
        self.assertEqual(grad_F.shape, F.shape)
        self.assertIsNone(grads.dwd)
        self.assertEqual(grads.dw.weight.shape, cfg.dw_spec.weight_shape)
        self.assertEqual(grads.pw.bias.shape, (2,))

    def test_identity_weights_gradient(self):
        cfg = LkaConfig(2)
        F = tensor_random_normal((1, 2, 6, 6), seed=1, precision='float64')
        grad_F, _ = lka_vjp(F, identity_lka_weights(cfg), cfg, np.ones(F.shape))
        np.testing.assert_allclose(grad_F.data, 2.0 * F.data, rtol=0, atol=1e-12)

    def test_upstream_shape_checked(self):
        cfg = LkaConfig(2)
        F = tensor_random_normal((1, 2, 6, 6), seed=1, precision='float64')
        with self.assertRaises(ShapeError):
            lka_vjp(F, identity_lka_weights(cfg), cfg, np.ones((1, 2, 5, 5)))
