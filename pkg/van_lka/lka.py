"""
Large Kernel Attention.

A K x K convolution is decomposed into a (2d-1) x (2d-1) depthwise
convolution, a ceil(K/d) x ceil(K/d) depthwise convolution with dilation d
and a 1x1 convolution. The chain output is used as an unnormalised
attention map that gates the input element-wise:

    Attention = PW(DW-D(DW(F)))
    Output    = Attention * F

Ablation variants drop one stage of the chain or change how the map is
applied to F.
"""

import logging
import math
from dataclasses import dataclass
from enum import Enum
from typing import Optional

import numpy as np

from .exceptions import ConfigError, ShapeError
from .ops import (
    ConvSpec, ConvWeights, conv2d_array, conv2d_vjp_array, sigmoid_array,
)
from .tensor import Tensor, as_array, resolve_precision

logger = logging.getLogger(__name__)


class LkaVariant(str, Enum):
    FULL = 'full'
    NO_DW = 'no_dw'
    NO_DWD = 'no_dwd'
    NO_PW = 'no_pw'
    NON_ATTENTION = 'non_attention'
    ADD_ATTENTION = 'add_attention'
    SIGMOID_ATTENTION = 'sigmoid_attention'


@dataclass(frozen=True)
class LkaConfig:
    channels: int
    nominal_kernel: int = 21
    dilation: int = 3
    variant: LkaVariant = LkaVariant.FULL
    bias: bool = False

    def __post_init__(self):
        try:
            object.__setattr__(self, 'variant', LkaVariant(self.variant))
        except ValueError:
            choices = ', '.join(v.value for v in LkaVariant)
            raise ConfigError(f"Unknown LKA variant '{self.variant}' (expected one of {choices})")
        if self.channels < 1:
            raise ConfigError(f"LKA needs at least one channel, got {self.channels}")
        if self.dilation < 1 or self.nominal_kernel < self.dilation:
            raise ConfigError(
                f"LKA needs K >= d >= 1, got K={self.nominal_kernel}, d={self.dilation}"
            )
        if (self.dwd_kernel - 1) * self.dilation % 2:
            raise ConfigError(
                f"K={self.nominal_kernel}, d={self.dilation} gives a {self.dwd_kernel}x{self.dwd_kernel} "
                f"dilated kernel that cannot be padded symmetrically"
            )

    @property
    def dw_kernel(self):
        return 2 * self.dilation - 1

    @property
    def dwd_kernel(self):
        return math.ceil(self.nominal_kernel / self.dilation)

    @property
    def uses_dw(self):
        return self.variant != LkaVariant.NO_DW

    @property
    def uses_dwd(self):
        return self.variant != LkaVariant.NO_DWD

    @property
    def uses_pw(self):
        return self.variant != LkaVariant.NO_PW

    @property
    def dw_spec(self):
        return ConvSpec.depthwise(self.channels, self.dw_kernel, has_bias=self.bias)

    @property
    def dwd_spec(self):
        return ConvSpec.depthwise(self.channels, self.dwd_kernel, self.dilation, has_bias=self.bias)

    @property
    def pw_spec(self):
        return ConvSpec.pointwise(self.channels, self.channels, has_bias=self.bias)

    def stages(self):
        """(name, spec) for every convolution this variant applies, in order."""
        stages = []
        if self.uses_dw:
            stages.append(('dw', self.dw_spec))
        if self.uses_dwd:
            stages.append(('dwd', self.dwd_spec))
        if self.uses_pw:
            stages.append(('pw', self.pw_spec))
        return stages


@dataclass(frozen=True)
class LkaWeights:
    dw: Optional[ConvWeights]
    dwd: Optional[ConvWeights]
    pw: Optional[ConvWeights]

    def check(self, cfg):
        for name, spec in cfg.stages():
            weights = getattr(self, name)
            if weights is None:
                raise ShapeError(f"LKA weights are missing the '{name}' convolution")
            weights.check(spec)


def receptive_span(cfg):
    """Side length of the composed impulse-response support of the conv chain."""
    span = 1
    if cfg.uses_dw:
        span += cfg.dw_kernel - 1
    if cfg.uses_dwd:
        span += cfg.dilation * (cfg.dwd_kernel - 1)
    return span


def _bias_array(weights):
    return weights.bias.data if weights.bias is not None else None


def _check_feature(F, cfg):
    if F.ndim != 4 or F.shape[1] != cfg.channels:
        raise ShapeError(
            f"LKA over {cfg.channels} channels cannot take input of shape {list(F.shape)}"
        )


def attention_chain(x, weights, cfg):
    """Run the conv chain on an array; returns the map and each stage input."""
    inputs = []
    for name, spec in cfg.stages():
        conv = getattr(weights, name)
        inputs.append(x)
        x = conv2d_array(x, conv.weight.data, _bias_array(conv), spec)
    return x, inputs


def lka_array(F, weights, cfg):
    attention, inputs = attention_chain(F, weights, cfg)
    return _apply(F, attention, cfg.variant), (attention, inputs)


def _apply(F, attention, variant):
    if variant == LkaVariant.NON_ATTENTION:
        return attention
    if variant == LkaVariant.ADD_ATTENTION:
        return attention + F
    if variant == LkaVariant.SIGMOID_ATTENTION:
        return sigmoid_array(attention).astype(F.dtype, copy=False) * F
    return attention * F


def lka_vjp_array(F, weights, cfg, upstream, cache=None):
    """Backward pass through the whole block; returns (dF, {stage: (dweight, dbias)})."""
    if cache is None:
        _, cache = lka_array(F, weights, cfg)
    attention, inputs = cache
    variant = cfg.variant
    if variant == LkaVariant.NON_ATTENTION:
        grad_attention, grad_F = upstream, np.zeros_like(F)
    elif variant == LkaVariant.ADD_ATTENTION:
        grad_attention, grad_F = upstream, upstream.copy()
    elif variant == LkaVariant.SIGMOID_ATTENTION:
        gate = sigmoid_array(attention)
        grad_attention = upstream * F * gate * (1.0 - gate)
        grad_F = upstream * gate
    else:
        grad_attention, grad_F = upstream * F, upstream * attention

    grads = {}
    grad = grad_attention
    for (name, spec), stage_input in reversed(list(zip(cfg.stages(), inputs))):
        conv = getattr(weights, name)
        grad, grad_w, grad_b = conv2d_vjp_array(
            stage_input, conv.weight.data, spec, grad, conv.bias is not None
        )
        grads[name] = (grad_w, grad_b)
    return grad_F + grad, grads


def attention_map(F, w, cfg):
    """Attention = PW(DW-D(DW(F))) with same-resolution padding, unnormalised."""
    _check_feature(F, cfg)
    w.check(cfg)
    attention, _ = attention_chain(F.data, w, cfg)
    return Tensor.wrap(attention)


def lka_forward(F, w, cfg):
    """Output = Attention * F for the full LKA block."""
    if cfg.variant != LkaVariant.FULL:
        raise ConfigError(
            f"lka_forward runs the full block; use lka_variant_forward for '{cfg.variant.value}'"
        )
    return lka_variant_forward(F, w, cfg)


def lka_variant_forward(F, w, cfg):
    _check_feature(F, cfg)
    w.check(cfg)
    out, _ = lka_array(F.data, w, cfg)
    return Tensor.wrap(out)


def lka_vjp(F, w, cfg, upstream):
    """Gradients of sum(upstream * lka_variant_forward(F)) w.r.t. F and every LKA weight."""
    _check_feature(F, cfg)
    w.check(cfg)
    upstream = as_array(upstream)
    if upstream.shape != F.shape:
        raise ShapeError(f"Upstream gradient {list(upstream.shape)} != {list(F.shape)}")
    grad_F, grads = lka_vjp_array(F.data, w, cfg, upstream)

    def pack(name):
        if name not in grads:
            return None
        grad_w, grad_b = grads[name]
        return ConvWeights(Tensor.wrap(grad_w), Tensor.wrap(grad_b) if grad_b is not None else None)

    return Tensor.wrap(grad_F), LkaWeights(pack('dw'), pack('dwd'), pack('pw'))


# Weight constructors used for initialisation and analytic probes.

def _conv_weights(spec, weight, precision):
    bias = Tensor.wrap(np.zeros(spec.out_channels, dtype=precision)) if spec.has_bias else None
    return ConvWeights(Tensor.wrap(weight.astype(precision)), bias)


def _build(cfg, precision, make):
    dtype = resolve_precision(precision)
    built = {name: _conv_weights(spec, make(name, spec), dtype) for name, spec in cfg.stages()}
    return LkaWeights(built.get('dw'), built.get('dwd'), built.get('pw'))


def identity_lka_weights(cfg, precision='float64'):
    """Centre-delta depthwise kernels and a channel-identity 1x1 conv."""
    def make(name, spec):
        if name == 'pw':
            return np.eye(cfg.channels).reshape(spec.weight_shape)
        weight = np.zeros(spec.weight_shape)
        weight[:, :, spec.kernel_h // 2, spec.kernel_w // 2] = 1.0
        return weight
    return _build(cfg, precision, make)


def constant_lka_weights(cfg, value=1.0, pw_identity=True, precision='float64'):
    def make(name, spec):
        if name == 'pw' and pw_identity:
            return np.eye(cfg.channels).reshape(spec.weight_shape) * value
        return np.full(spec.weight_shape, value)
    return _build(cfg, precision, make)


def random_lka_weights(cfg, seed=0, std=0.2, precision='float64'):
    generator = np.random.Generator(np.random.PCG64(seed))
    return _build(cfg, precision, lambda name, spec: generator.standard_normal(spec.weight_shape) * std)


def measure_span(cfg):
    """
    Measure the impulse-response support of the conv chain.

    A single-channel copy of ``cfg`` with all-ones depthwise kernels is fed a
    centred unit impulse; returns the (rows, columns) extent of the nonzero
    output region.
    """
    probe = LkaConfig(1, cfg.nominal_kernel, cfg.dilation, cfg.variant)
    span = receptive_span(probe)
    size = 2 * span + 1
    impulse = np.zeros((1, 1, size, size))
    impulse[0, 0, size // 2, size // 2] = 1.0
    response, _ = attention_chain(impulse, constant_lka_weights(probe), probe)
    rows, cols = np.nonzero(response[0, 0])
    measured = (int(rows.max() - rows.min() + 1), int(cols.max() - cols.min() + 1))
    logger.debug(f"Measured span {measured} for K={cfg.nominal_kernel}, d={cfg.dilation}")
    return measured
