"""
Central finite-difference checks of every vector-Jacobian product.

A check draws a random upstream gradient u, takes the scalar objective
sum(u * op(inputs)) and compares the analytic vjp against central
differences with step h = step * (1 + |x|). Relative error uses the
denominator max(1, |analytic|, |numeric|). Failures are reported, not
raised.
"""

import logging
from dataclasses import dataclass, field
from typing import Callable, Dict, Optional, Tuple

import numpy as np

from . import ops
from .conf import get_setting
from .lka import LkaConfig, LkaVariant, lka_array, lka_vjp_array, random_lka_weights
from .ops import ConvSpec
from .tensor import Tensor
from .van import (
    PRESETS, block_forward, block_vjp, build_van, model_forward, model_vjp,
)
from .weights import map_tensors, named_tensors

logger = logging.getLogger(__name__)

DEFAULT_STEP = 1e-4
CONV_TOLERANCE = 1e-4
POINTWISE_TOLERANCE = 1e-6
MODEL_TOLERANCE = 1e-3


@dataclass(frozen=True)
class OpHandle:
    """A differentiable op over a dict of named float64 arrays."""

    name: str
    forward: Callable[[Dict[str, np.ndarray]], np.ndarray]
    vjp: Callable[[Dict[str, np.ndarray], np.ndarray], Dict[str, np.ndarray]]


@dataclass
class GradCheckReport:
    name: str
    max_relative_error: float
    passed: bool
    tolerance: float
    checked: int = 0
    worst: Optional[Tuple[str, int]] = None
    per_input: Dict[str, float] = field(default_factory=dict)


@dataclass(frozen=True)
class GradCase:
    op: OpHandle
    inputs: Dict[str, np.ndarray]
    tolerance: float
    max_entries: Optional[int] = None


def finite_diff_check(op, inputs, step=DEFAULT_STEP, tolerance=POINTWISE_TOLERANCE,
                      seed=0, max_entries=None):
    """Compare ``op.vjp`` against central differences for every input."""
    if max_entries is None:
        max_entries = get_setting('GRADCHECK_MAX_ENTRIES')
    rng = np.random.Generator(np.random.PCG64(seed))
    inputs = {name: np.array(value, dtype=np.float64) for name, value in inputs.items()}
    upstream = rng.standard_normal(np.shape(op.forward(inputs)))
    analytic = op.vjp(inputs, upstream)

    def objective():
        return float(np.sum(upstream * op.forward(inputs)))

    report = GradCheckReport(op.name, 0.0, True, tolerance)
    for name, value in inputs.items():
        flat = value.reshape(-1)
        if flat.size > max_entries:
            indices = np.sort(rng.choice(flat.size, size=max_entries, replace=False))
        else:
            indices = np.arange(flat.size)
        expected = np.asarray(analytic[name], dtype=np.float64).reshape(-1)
        worst_here = 0.0
        for index in indices:
            original = flat[index]
            h = step * (1.0 + abs(original))
            flat[index] = original + h
            plus = objective()
            flat[index] = original - h
            minus = objective()
            flat[index] = original
            numeric = (plus - minus) / (2.0 * h)
            exact = expected[index]
            error = abs(exact - numeric) / max(1.0, abs(exact), abs(numeric))
            worst_here = max(worst_here, error)
            if error > report.max_relative_error:
                report.max_relative_error = error
                report.worst = (name, int(index))
            report.checked += 1
        report.per_input[name] = worst_here
    report.passed = report.max_relative_error <= tolerance
    logger.debug(
        f"gradcheck {op.name}: max rel err {report.max_relative_error:.3e} "
        f"over {report.checked} entries ({'pass' if report.passed else 'FAIL'})"
    )
    return report


def with_zeroed_gradient(op, input_name):
    """Negative control: the same op with one gradient forced to zero."""
    def vjp(inputs, upstream):
        grads = dict(op.vjp(inputs, upstream))
        grads[input_name] = np.zeros_like(np.asarray(grads[input_name]))
        return grads
    return OpHandle(f'{op.name}[zeroed {input_name}]', op.forward, vjp)


# Op handles

def _rng(seed):
    return np.random.Generator(np.random.PCG64(seed))


def conv_case(name, x_shape, spec, seed):
    rng = _rng(seed)
    inputs = {
        'x': rng.standard_normal(x_shape),
        'weight': rng.standard_normal(spec.weight_shape) * 0.5,
    }
    if spec.has_bias:
        inputs['bias'] = rng.standard_normal(spec.out_channels)

    def forward(values):
        return ops.conv2d_array(values['x'], values['weight'], values.get('bias'), spec)

    def vjp(values, upstream):
        grad_x, grad_w, grad_b = ops.conv2d_vjp_array(
            values['x'], values['weight'], spec, upstream, spec.has_bias
        )
        grads = {'x': grad_x, 'weight': grad_w}
        if grad_b is not None:
            grads['bias'] = grad_b
        return grads

    return GradCase(OpHandle(name, forward, vjp), inputs, CONV_TOLERANCE)


def _unary_case(name, forward_array, vjp_array, seed):
    inputs = {'x': _rng(seed).standard_normal((2, 3, 4, 4)) * 2.0}
    return GradCase(
        OpHandle(name, lambda v: forward_array(v['x']), lambda v, u: {'x': vjp_array(v['x'], u)}),
        inputs, POINTWISE_TOLERANCE,
    )


def batch_norm_case(seed):
    rng = _rng(seed)
    mean = rng.standard_normal(3)
    var = rng.uniform(0.5, 2.0, 3)
    eps = 1e-5
    inputs = {
        'x': rng.standard_normal((2, 3, 4, 4)),
        'gamma': rng.standard_normal(3),
        'beta': rng.standard_normal(3),
    }

    def forward(v):
        return ops.batch_norm_array(v['x'], v['gamma'], v['beta'], mean, var, eps)

    def vjp(v, upstream):
        grad_x, grad_gamma, grad_beta = ops.batch_norm_vjp_array(v['x'], v['gamma'], mean, var, eps, upstream)
        return {'x': grad_x, 'gamma': grad_gamma, 'beta': grad_beta}

    return GradCase(OpHandle('batch_norm', forward, vjp), inputs, POINTWISE_TOLERANCE)


def pool_case(seed):
    inputs = {'x': _rng(seed).standard_normal((2, 3, 4, 5))}
    return GradCase(
        OpHandle('global_avg_pool',
                 lambda v: v['x'].mean(axis=(2, 3)),
                 lambda v, u: {'x': ops.global_avg_pool_vjp_array(v['x'].shape, u)}),
        inputs, POINTWISE_TOLERANCE,
    )


def linear_case(seed):
    rng = _rng(seed)
    inputs = {
        'x': rng.standard_normal((2, 3)),
        'weight': rng.standard_normal((4, 3)),
        'bias': rng.standard_normal(4),
    }

    def forward(v):
        return ops.linear(Tensor(v['x']), Tensor(v['weight']), Tensor(v['bias'])).data

    def vjp(v, upstream):
        grad_x, grad_w, grad_b = ops.linear_vjp(Tensor(v['x']), Tensor(v['weight']), Tensor(v['bias']), upstream)
        return {'x': grad_x.data, 'weight': grad_w.data, 'bias': grad_b.data}

    return GradCase(OpHandle('linear', forward, vjp), inputs, POINTWISE_TOLERANCE)


def cross_entropy_case(seed):
    rng = _rng(seed)
    labels = np.array([0, 3, 1, 4])
    inputs = {'logits': rng.standard_normal((4, 5)) * 2.0}

    def forward(v):
        return np.array([ops.softmax_cross_entropy(Tensor(v['logits']), labels)])

    def vjp(v, upstream):
        grad = ops.softmax_cross_entropy_vjp(Tensor(v['logits']), labels, float(upstream[0]))
        return {'logits': grad.data}

    return GradCase(OpHandle('softmax_cross_entropy', forward, vjp), inputs, POINTWISE_TOLERANCE)


def lka_case(variant, seed, kernel=21, dilation=3):
    cfg = LkaConfig(2, kernel, dilation, variant, bias=True)
    template = random_lka_weights(cfg, seed=seed, std=0.3)
    inputs = {'x': _rng(seed).standard_normal((1, 2, 8, 8))}
    inputs.update({name: tensor.data for name, tensor, _ in named_tensors(template)})

    def weights(v):
        return map_tensors(template, lambda name, tensor, _: Tensor(v[name]))

    def forward(v):
        out, _ = lka_array(v['x'], weights(v), cfg)
        return out

    def vjp(v, upstream):
        grad_x, grads = lka_vjp_array(v['x'], weights(v), cfg, upstream)
        result = {'x': grad_x}
        for stage, (grad_w, grad_b) in grads.items():
            result[f'{stage}.weight'] = grad_w
            if grad_b is not None:
                result[f'{stage}.bias'] = grad_b
        return result

    name = 'lka' if variant == LkaVariant.FULL else f'lka_{LkaVariant(variant).value}'
    return GradCase(OpHandle(name, forward, vjp), inputs, CONV_TOLERANCE)


def _checked_tree(template, prefix_inputs):
    """Inputs dict for every trainable tensor of ``template`` plus a rebuild function."""
    inputs = dict(prefix_inputs)
    for name, tensor, is_buffer in named_tensors(template):
        if not is_buffer:
            inputs[name] = tensor.data

    def rebuild(v):
        return map_tensors(template, lambda name, tensor, buffer: tensor if buffer else Tensor(v[name]))

    return inputs, rebuild


def block_case(seed):
    variant = PRESETS['micro']
    cfg = variant.block_config(0)
    model = build_van(variant, seed=seed, precision='float64')
    block = model.stages[0].blocks[0]
    # Larger LayerScale so both residual branches carry visible gradient.
    block = map_tensors(block, lambda name, tensor, _: Tensor(np.full(tensor.shape, 0.5))
                        if name.startswith('layer_scale') else tensor)
    inputs, rebuild = _checked_tree(block, {'x': _rng(seed).standard_normal((1, cfg.channels, 8, 8))})

    def forward(v):
        return block_forward(Tensor(v['x']), rebuild(v), cfg).data

    def vjp(v, upstream):
        grad_x, grads = block_vjp(Tensor(v['x']), rebuild(v), cfg, upstream)
        result = {name: grad.data for name, grad in grads.items()}
        result['x'] = grad_x.data
        return result

    return GradCase(OpHandle('van_block', forward, vjp), inputs, CONV_TOLERANCE)


def model_case(seed, size=32):
    variant = PRESETS['micro']
    model = build_van(variant, seed=seed, precision='float64')
    images = _rng(seed).standard_normal((1, variant.in_channels, size, size))
    inputs, rebuild = _checked_tree(model, {'images': images})

    def forward(v):
        logits, _ = model_forward(Tensor(v['images']), rebuild(v))
        return logits.data

    def vjp(v, upstream):
        grad_images, grads = model_vjp(Tensor(v['images']), rebuild(v), upstream)
        result = {name: grad.data for name, grad in grads.items()}
        result['images'] = grad_images.data
        return result

    return GradCase(OpHandle('van_micro', forward, vjp), inputs, MODEL_TOLERANCE, max_entries=4)


CHECKS = {
    'conv2d': lambda seed: conv_case(
        'conv2d', (1, 3, 6, 6), ConvSpec(3, 4, 3, 3, padding=1, has_bias=True), seed),
    'conv2d_depthwise_dilated': lambda seed: conv_case(
        'conv2d_depthwise_dilated', (1, 3, 9, 9), ConvSpec.depthwise(3, 3, dilation=2, has_bias=True), seed),
    'conv2d_grouped_strided': lambda seed: conv_case(
        'conv2d_grouped_strided', (2, 4, 8, 8),
        ConvSpec(4, 6, 3, 3, stride=2, padding=1, groups=2, has_bias=True), seed),
    'gelu': lambda seed: _unary_case('gelu', ops.gelu_array, ops.gelu_vjp_array, seed),
    'sigmoid': lambda seed: _unary_case('sigmoid', ops.sigmoid_array, ops.sigmoid_vjp_array, seed),
    'batch_norm': batch_norm_case,
    'global_avg_pool': pool_case,
    'linear': linear_case,
    'softmax_cross_entropy': cross_entropy_case,
}
for _variant in LkaVariant:
    CHECKS['lka' if _variant == LkaVariant.FULL else f'lka_{_variant.value}'] = (
        lambda seed, variant=_variant: lka_case(variant, seed)
    )
CHECKS['van_block'] = block_case
CHECKS['van_micro'] = model_case


def build_checks(names=None, seed=0):
    names = list(CHECKS) if names is None else names
    return [CHECKS[name](seed) for name in names]


def run_case(case, seed=0):
    return finite_diff_check(case.op, case.inputs, tolerance=case.tolerance, seed=seed,
                             max_entries=case.max_entries)


def run_checks(names=None, seeds=(0, 1, 2)):
    """Run the named checks (all by default) once per seed."""
    reports = []
    for seed in seeds:
        for case in build_checks(names, seed):
            reports.append(run_case(case, seed))
    return reports
