"""
Visual Attention Network backbone.

Four stages with output strides 4, 8, 16 and 32. Each stage downsamples
with a strided convolution plus batch norm, stacks L blocks and closes with
a batch norm. A block is two pre-norm residual sub-blocks using the
LayerScale variant x + diag(lambda) (f(x) + x):

    attention: BN -> 1x1 conv -> GELU -> LKA -> 1x1 conv
    ffn:       BN -> 1x1 conv (C -> eC) -> 3x3 depthwise conv -> GELU -> 1x1 conv (eC -> C)

The classifier head is global average pooling followed by a linear layer
on the (normalised) last stage output.
"""

import dataclasses
import logging
import math
from dataclasses import dataclass, field
from typing import Optional, Tuple

import numpy as np

from .conf import get_setting
from .exceptions import ConfigError, GeometryError, ParameterError, ShapeError
from .lka import LkaConfig, LkaVariant, LkaWeights, lka_array, lka_vjp_array
from .ops import (
    ConvSpec, ConvWeights, batch_norm_array, batch_norm_vjp_array, conv2d_array,
    conv2d_vjp_array, gelu_array, gelu_vjp_array, global_avg_pool_vjp_array,
    softmax_cross_entropy, softmax_cross_entropy_vjp,
)
from .tensor import Tensor, resolve_precision, tensor_filled, tensor_random_normal
from .weights import BUFFER, STATIC, map_tensors, parameter_count

logger = logging.getLogger(__name__)

LAYERSCALE_MODES = ('residual', 'classic')


@dataclass(frozen=True)
class StageConfig:
    channels: int
    depth: int
    expansion_ratio: int
    downsample_kernel: int = 3
    downsample_stride: int = 2
    downsample_padding: int = 1

    def __post_init__(self):
        counts = (self.channels, self.depth, self.expansion_ratio,
                  self.downsample_kernel, self.downsample_stride)
        if min(counts) < 1 or self.downsample_padding < 0:
            raise ConfigError(f"Stage counts must be >= 1 and padding >= 0 in {self}")
        kernel, stride, padding = self.downsample_kernel, self.downsample_stride, self.downsample_padding
        # floor((H + 2p - k) / s) + 1 == H / s for every H divisible by s
        if not kernel - stride <= 2 * padding < kernel:
            raise ConfigError(
                f"Downsample {kernel}x{kernel}/stride {stride}/padding {padding} "
                f"does not divide the resolution exactly by its stride"
            )

    @property
    def hidden_channels(self):
        return self.channels * self.expansion_ratio


@dataclass(frozen=True)
class BlockConfig:
    channels: int
    expansion_ratio: int
    lka: LkaConfig
    eps: float = 1e-5
    layerscale_mode: str = 'residual'
    ffn_depthwise: bool = True

    @property
    def hidden_channels(self):
        return self.channels * self.expansion_ratio

    @property
    def proj_in_spec(self):
        return ConvSpec.pointwise(self.channels, self.channels, has_bias=True)

    @property
    def proj_out_spec(self):
        return ConvSpec.pointwise(self.channels, self.channels, has_bias=True)

    @property
    def fc1_spec(self):
        return ConvSpec.pointwise(self.channels, self.hidden_channels, has_bias=True)

    @property
    def dwconv_spec(self):
        return ConvSpec.depthwise(self.hidden_channels, 3, has_bias=True)

    @property
    def fc2_spec(self):
        return ConvSpec.pointwise(self.hidden_channels, self.channels, has_bias=True)


@dataclass(frozen=True)
class VanVariant:
    name: str
    stages: Tuple[StageConfig, ...]
    lka_nominal_kernel: int = 21
    lka_dilation: int = 3
    num_classes: int = 1000
    layerscale_init: float = 0.01
    lka_variant: LkaVariant = LkaVariant.FULL
    layerscale_mode: str = 'residual'
    ffn_depthwise: bool = True
    in_channels: int = 3

    def __post_init__(self):
        object.__setattr__(self, 'stages', tuple(self.stages))
        if len(self.stages) != 4:
            raise ConfigError(f"VAN has exactly 4 stages, got {len(self.stages)}")
        if self.num_classes < 1 or self.in_channels < 1:
            raise ConfigError("num_classes and in_channels must be >= 1")
        if self.layerscale_mode not in LAYERSCALE_MODES:
            raise ConfigError(
                f"Unknown layerscale_mode '{self.layerscale_mode}' "
                f"(expected one of {', '.join(LAYERSCALE_MODES)})"
            )
        for index in range(4):
            self.lka_config(index)

    def lka_config(self, stage_index):
        return LkaConfig(self.stages[stage_index].channels, self.lka_nominal_kernel,
                         self.lka_dilation, self.lka_variant, bias=True)

    def block_config(self, stage_index):
        stage = self.stages[stage_index]
        return BlockConfig(stage.channels, stage.expansion_ratio, self.lka_config(stage_index),
                           get_setting('BN_EPS'), self.layerscale_mode, self.ffn_depthwise)

    def stage_in_channels(self, stage_index):
        return self.in_channels if stage_index == 0 else self.stages[stage_index - 1].channels

    def downsample_spec(self, stage_index):
        stage = self.stages[stage_index]
        return ConvSpec(self.stage_in_channels(stage_index), stage.channels,
                        stage.downsample_kernel, stage.downsample_kernel,
                        stride=stage.downsample_stride, padding=stage.downsample_padding,
                        has_bias=True)

    @property
    def total_stride(self):
        return math.prod(stage.downsample_stride for stage in self.stages)

    def stage_resolutions(self, height, width):
        """Spatial extents after every stage; rejects inputs not divisible by the total stride."""
        stride = self.total_stride
        if height % stride or width % stride:
            raise GeometryError(
                f"Input {height}x{width} is not divisible by {stride} for VAN-{self.name}"
            )
        sizes = []
        for index in range(4):
            height, width = self.downsample_spec(index).output_size(height, width)
            sizes.append((height, width))
        return sizes

    def with_changes(self, **changes):
        return dataclasses.replace(self, **changes)


def _preset(name, widths, depths, ratios=(8, 8, 4, 4), **kwargs):
    stages = [StageConfig(widths[0], depths[0], ratios[0], 7, 4, 3)]
    stages += [StageConfig(w, d, r, 3, 2, 1) for w, d, r in zip(widths[1:], depths[1:], ratios[1:])]
    return VanVariant(name, tuple(stages), **kwargs)


PRESETS = {
    'B0': _preset('B0', (32, 64, 160, 256), (3, 3, 5, 2)),
    'B1': _preset('B1', (64, 128, 320, 512), (2, 2, 4, 2)),
    'B2': _preset('B2', (64, 128, 320, 512), (3, 3, 12, 3)),
    'B3': _preset('B3', (64, 128, 320, 512), (3, 5, 27, 3)),
    'B4': _preset('B4', (64, 128, 320, 512), (3, 6, 40, 3)),
    'B5': _preset('B5', (96, 192, 480, 768), (3, 3, 24, 3)),
    'B6': _preset('B6', (96, 192, 384, 768), (6, 6, 90, 6)),
    'micro': _preset('micro', (8, 16, 32, 64), (1, 1, 2, 1), (4, 4, 4, 4), num_classes=2),
}


def get_variant(name):
    try:
        return PRESETS[name]
    except KeyError:
        raise ConfigError(f"Unknown VAN preset '{name}' (expected one of {', '.join(PRESETS)})")


# Weight containers

@dataclass(frozen=True)
class BatchNormWeights:
    gamma: Tensor
    beta: Tensor
    running_mean: Tensor = field(metadata=BUFFER)
    running_var: Tensor = field(metadata=BUFFER)


@dataclass(frozen=True)
class AttentionWeights:
    proj_in: ConvWeights
    lka: LkaWeights
    proj_out: ConvWeights


@dataclass(frozen=True)
class FfnWeights:
    fc1: ConvWeights
    dwconv: Optional[ConvWeights]
    fc2: ConvWeights


@dataclass(frozen=True)
class BlockWeights:
    norm1: BatchNormWeights
    attn: AttentionWeights
    layer_scale_1: Tensor
    norm2: BatchNormWeights
    ffn: FfnWeights
    layer_scale_2: Tensor


@dataclass(frozen=True)
class StageWeights:
    downsample: ConvWeights
    downsample_norm: BatchNormWeights
    blocks: Tuple[BlockWeights, ...]
    norm: BatchNormWeights


@dataclass(frozen=True)
class HeadWeights:
    weight: Tensor
    bias: Tensor


@dataclass(frozen=True)
class ModelWeights:
    variant: VanVariant = field(metadata=STATIC)
    stages: Tuple[StageWeights, ...] = ()
    head: Optional[HeadWeights] = None

    @property
    def precision(self):
        return self.head.weight.precision

    def parameter_count(self):
        return parameter_count(self)


@dataclass(frozen=True)
class LayoutEntry:
    name: str
    shape: Tuple[int, ...]
    init: str
    fan_out: int = 0

    @property
    def size(self):
        return math.prod(self.shape)


def model_layout(variant):
    """Every tensor of a variant in traversal order, with its initialiser."""
    entries = []

    def conv(prefix, spec):
        fan_out = spec.kernel_h * spec.kernel_w * spec.out_channels // spec.groups
        entries.append(LayoutEntry(f'{prefix}.weight', spec.weight_shape, 'conv', fan_out))
        if spec.has_bias:
            entries.append(LayoutEntry(f'{prefix}.bias', (spec.out_channels,), 'zeros'))

    def norm(prefix, channels):
        entries.append(LayoutEntry(f'{prefix}.gamma', (channels,), 'ones'))
        entries.append(LayoutEntry(f'{prefix}.beta', (channels,), 'zeros'))
        entries.append(LayoutEntry(f'{prefix}.running_mean', (channels,), 'zeros'))
        entries.append(LayoutEntry(f'{prefix}.running_var', (channels,), 'ones'))

    for index, stage in enumerate(variant.stages):
        prefix = f'stages.{index}'
        cfg = variant.block_config(index)
        conv(f'{prefix}.downsample', variant.downsample_spec(index))
        norm(f'{prefix}.downsample_norm', stage.channels)
        for block in range(stage.depth):
            path = f'{prefix}.blocks.{block}'
            norm(f'{path}.norm1', stage.channels)
            conv(f'{path}.attn.proj_in', cfg.proj_in_spec)
            for name, spec in cfg.lka.stages():
                conv(f'{path}.attn.lka.{name}', spec)
            conv(f'{path}.attn.proj_out', cfg.proj_out_spec)
            entries.append(LayoutEntry(f'{path}.layer_scale_1', (stage.channels,), 'layer_scale'))
            norm(f'{path}.norm2', stage.channels)
            conv(f'{path}.ffn.fc1', cfg.fc1_spec)
            if cfg.ffn_depthwise:
                conv(f'{path}.ffn.dwconv', cfg.dwconv_spec)
            conv(f'{path}.ffn.fc2', cfg.fc2_spec)
            entries.append(LayoutEntry(f'{path}.layer_scale_2', (stage.channels,), 'layer_scale'))
        norm(f'{prefix}.norm', stage.channels)
    last = variant.stages[-1].channels
    entries.append(LayoutEntry('head.weight', (variant.num_classes, last), 'linear'))
    entries.append(LayoutEntry('head.bias', (variant.num_classes,), 'zeros'))
    return entries


def assemble(variant, tensors):
    """Build a ModelWeights tree from a flat name -> Tensor mapping."""
    for entry in model_layout(variant):
        tensor = tensors.get(entry.name)
        if tensor is None:
            raise ShapeError(f"Missing tensor '{entry.name}' for VAN-{variant.name}")
        if tuple(tensor.shape) != entry.shape:
            raise ShapeError(
                f"Tensor '{entry.name}' has shape {list(tensor.shape)}, expected {list(entry.shape)}"
            )

    def conv(prefix):
        return ConvWeights(tensors[f'{prefix}.weight'], tensors.get(f'{prefix}.bias'))

    def norm(prefix):
        return BatchNormWeights(*(tensors[f'{prefix}.{key}']
                                  for key in ('gamma', 'beta', 'running_mean', 'running_var')))

    stages = []
    for index, stage in enumerate(variant.stages):
        prefix = f'stages.{index}'
        cfg = variant.block_config(index)
        blocks = []
        for block in range(stage.depth):
            path = f'{prefix}.blocks.{block}'
            lka = LkaWeights(
                conv(f'{path}.attn.lka.dw') if cfg.lka.uses_dw else None,
                conv(f'{path}.attn.lka.dwd') if cfg.lka.uses_dwd else None,
                conv(f'{path}.attn.lka.pw') if cfg.lka.uses_pw else None,
            )
            blocks.append(BlockWeights(
                norm1=norm(f'{path}.norm1'),
                attn=AttentionWeights(conv(f'{path}.attn.proj_in'), lka, conv(f'{path}.attn.proj_out')),
                layer_scale_1=tensors[f'{path}.layer_scale_1'],
                norm2=norm(f'{path}.norm2'),
                ffn=FfnWeights(
                    conv(f'{path}.ffn.fc1'),
                    conv(f'{path}.ffn.dwconv') if cfg.ffn_depthwise else None,
                    conv(f'{path}.ffn.fc2'),
                ),
                layer_scale_2=tensors[f'{path}.layer_scale_2'],
            ))
        stages.append(StageWeights(conv(f'{prefix}.downsample'), norm(f'{prefix}.downsample_norm'),
                                   tuple(blocks), norm(f'{prefix}.norm')))
    head = HeadWeights(tensors['head.weight'], tensors['head.bias'])
    return ModelWeights(variant, tuple(stages), head)


def _entry_seed(seed, index):
    return int(np.random.SeedSequence([seed, index]).generate_state(1)[0])


def build_van(variant, seed=0, precision=None):
    """
    Deterministically initialise every tensor of ``variant``.

    Convolutions draw from N(0, 2 / fan_out), the classifier from N(0, 0.02^2);
    biases and batch-norm shifts start at zero, batch-norm scales and
    running variances at one, LayerScale vectors at ``layerscale_init``.
    """
    dtype = resolve_precision(precision)
    tensors = {}
    for index, entry in enumerate(model_layout(variant)):
        if entry.init == 'conv':
            tensor = tensor_random_normal(entry.shape, 0.0, math.sqrt(2.0 / entry.fan_out),
                                          _entry_seed(seed, index), dtype)
        elif entry.init == 'linear':
            tensor = tensor_random_normal(entry.shape, 0.0, 0.02, _entry_seed(seed, index), dtype)
        elif entry.init == 'ones':
            tensor = tensor_filled(entry.shape, 1.0, dtype)
        elif entry.init == 'layer_scale':
            tensor = tensor_filled(entry.shape, variant.layerscale_init, dtype)
        else:
            tensor = tensor_filled(entry.shape, 0.0, dtype)
        tensors[entry.name] = tensor
    model = assemble(variant, tensors)
    logger.info(f"Built VAN-{variant.name} with {model.parameter_count():,} parameters (seed {seed})")
    return model


# Forward and backward passes on raw arrays

def _channel(vector):
    return vector.reshape(1, -1, 1, 1)


def _bias(conv):
    return conv.bias.data if conv.bias is not None else None


def _conv(x, conv, spec):
    return conv2d_array(x, conv.weight.data, _bias(conv), spec)


def _conv_vjp(x, conv, spec, upstream, grads, prefix):
    grad_x, grad_w, grad_b = conv2d_vjp_array(x, conv.weight.data, spec, upstream, conv.bias is not None)
    grads[f'{prefix}.weight'] = grad_w
    if grad_b is not None:
        grads[f'{prefix}.bias'] = grad_b
    return grad_x


def _norm(x, norm, eps):
    return batch_norm_array(x, norm.gamma.data, norm.beta.data,
                            norm.running_mean.data, norm.running_var.data, eps)


def _norm_vjp(x, norm, eps, upstream, grads, prefix):
    grad_x, grad_gamma, grad_beta = batch_norm_vjp_array(
        x, norm.gamma.data, norm.running_mean.data, norm.running_var.data, eps, upstream
    )
    grads[f'{prefix}.gamma'] = grad_gamma
    grads[f'{prefix}.beta'] = grad_beta
    return grad_x


def _block_forward(x, w, cfg):
    residual = cfg.layerscale_mode == 'residual'
    n1 = _norm(x, w.norm1, cfg.eps)
    a = _conv(n1, w.attn.proj_in, cfg.proj_in_spec)
    g = gelu_array(a)
    l, lka_cache = lka_array(g, w.attn.lka, cfg.lka)
    f1 = _conv(l, w.attn.proj_out, cfg.proj_out_spec)
    r1 = f1 + x if residual else f1
    x1 = x + _channel(w.layer_scale_1.data) * r1

    n2 = _norm(x1, w.norm2, cfg.eps)
    h1 = _conv(n2, w.ffn.fc1, cfg.fc1_spec)
    h2 = _conv(h1, w.ffn.dwconv, cfg.dwconv_spec) if w.ffn.dwconv is not None else h1
    h3 = gelu_array(h2)
    f2 = _conv(h3, w.ffn.fc2, cfg.fc2_spec)
    r2 = f2 + x1 if residual else f2
    out = x1 + _channel(w.layer_scale_2.data) * r2
    cache = dict(x=x, n1=n1, a=a, g=g, l=l, lka=lka_cache, r1=r1,
                 x1=x1, n2=n2, h1=h1, h2=h2, h3=h3, r2=r2)
    return out, cache


def _block_vjp(w, cfg, cache, upstream):
    grads = {}
    residual = cfg.layerscale_mode == 'residual'

    scale = _channel(w.layer_scale_2.data)
    grads['layer_scale_2'] = (upstream * cache['r2']).sum(axis=(0, 2, 3))
    grad_f2 = upstream * scale
    grad_x1 = upstream + grad_f2 if residual else upstream
    grad = _conv_vjp(cache['h3'], w.ffn.fc2, cfg.fc2_spec, grad_f2, grads, 'ffn.fc2')
    grad = gelu_vjp_array(cache['h2'], grad)
    if w.ffn.dwconv is not None:
        grad = _conv_vjp(cache['h1'], w.ffn.dwconv, cfg.dwconv_spec, grad, grads, 'ffn.dwconv')
    grad = _conv_vjp(cache['n2'], w.ffn.fc1, cfg.fc1_spec, grad, grads, 'ffn.fc1')
    grad_x1 = grad_x1 + _norm_vjp(cache['x1'], w.norm2, cfg.eps, grad, grads, 'norm2')

    scale = _channel(w.layer_scale_1.data)
    grads['layer_scale_1'] = (grad_x1 * cache['r1']).sum(axis=(0, 2, 3))
    grad_f1 = grad_x1 * scale
    grad_x = grad_x1 + grad_f1 if residual else grad_x1
    grad = _conv_vjp(cache['l'], w.attn.proj_out, cfg.proj_out_spec, grad_f1, grads, 'attn.proj_out')
    grad, lka_grads = lka_vjp_array(cache['g'], w.attn.lka, cfg.lka, grad, cache['lka'])
    for name, (grad_w, grad_b) in lka_grads.items():
        grads[f'attn.lka.{name}.weight'] = grad_w
        if grad_b is not None:
            grads[f'attn.lka.{name}.bias'] = grad_b
    grad = gelu_vjp_array(cache['a'], grad)
    grad = _conv_vjp(cache['n1'], w.attn.proj_in, cfg.proj_in_spec, grad, grads, 'attn.proj_in')
    grad_x = grad_x + _norm_vjp(cache['x'], w.norm1, cfg.eps, grad, grads, 'norm1')
    return grad_x, grads


def _stage_forward(x, w, variant, index):
    cfg = variant.block_config(index)
    down = _conv(x, w.downsample, variant.downsample_spec(index))
    h = _norm(down, w.downsample_norm, cfg.eps)
    caches = []
    for block in w.blocks:
        h, cache = _block_forward(h, block, cfg)
        caches.append(cache)
    out = _norm(h, w.norm, cfg.eps)
    return out, dict(x=x, down=down, blocks=caches, pre_norm=h)


def _stage_vjp(w, variant, index, cache, upstream):
    cfg = variant.block_config(index)
    grads = {}
    grad = _norm_vjp(cache['pre_norm'], w.norm, cfg.eps, upstream, grads, 'norm')
    for position in reversed(range(len(w.blocks))):
        grad, block_grads = _block_vjp(w.blocks[position], cfg, cache['blocks'][position], grad)
        grads.update({f'blocks.{position}.{name}': value for name, value in block_grads.items()})
    grad = _norm_vjp(cache['down'], w.downsample_norm, cfg.eps, grad, grads, 'downsample_norm')
    grad = _conv_vjp(cache['x'], w.downsample, variant.downsample_spec(index), grad, grads, 'downsample')
    return grad, grads


def _check_images(images, model):
    variant = model.variant
    if images.ndim != 4 or images.shape[1] != variant.in_channels:
        raise ShapeError(
            f"VAN-{variant.name} expects (N, {variant.in_channels}, H, W) images, got {list(images.shape)}"
        )
    return variant.stage_resolutions(images.shape[2], images.shape[3])


def _model_forward(images, model):
    expected = _check_images(images, model)
    x = images.data.astype(model.head.weight.data.dtype, copy=False)
    features, caches = [], []
    for index, stage in enumerate(model.stages):
        x, cache = _stage_forward(x, stage, model.variant, index)
        if x.shape[2:] != expected[index] or x.shape[1] != model.variant.stages[index].channels:
            raise GeometryError(f"Stage {index + 1} produced {list(x.shape)}, expected {expected[index]}")
        features.append(x)
        caches.append(cache)
    pooled = x.mean(axis=(2, 3))
    logits = pooled @ model.head.weight.data.T + model.head.bias.data
    return logits, features, (caches, pooled, x.shape)


def _model_backward(model, cache, grad_logits):
    caches, pooled, last_shape = cache
    grads = {
        'head.weight': grad_logits.T @ pooled,
        'head.bias': grad_logits.sum(axis=0),
    }
    grad = global_avg_pool_vjp_array(last_shape, grad_logits @ model.head.weight.data)
    for index in reversed(range(len(model.stages))):
        grad, stage_grads = _stage_vjp(model.stages[index], model.variant, index, caches[index], grad)
        grads.update({f'stages.{index}.{name}': value for name, value in stage_grads.items()})
    return grad, grads


def _tensor_grads(grads):
    return {name: Tensor.wrap(value) for name, value in grads.items()}


# Public API

def block_forward(x, weights, cfg):
    if x.ndim != 4 or x.shape[1] != cfg.channels:
        raise ShapeError(f"Block of width {cfg.channels} cannot take input {list(x.shape)}")
    out, _ = _block_forward(x.data, weights, cfg)
    return Tensor.wrap(out)


def block_vjp(x, weights, cfg, upstream):
    """Return (dx, {relative tensor name: gradient})."""
    if x.ndim != 4 or x.shape[1] != cfg.channels:
        raise ShapeError(f"Block of width {cfg.channels} cannot take input {list(x.shape)}")
    upstream = upstream.data if isinstance(upstream, Tensor) else np.asarray(upstream)
    if upstream.shape != x.shape:
        raise ShapeError(f"Upstream gradient {list(upstream.shape)} != {list(x.shape)}")
    _, cache = _block_forward(x.data, weights, cfg)
    grad_x, grads = _block_vjp(weights, cfg, cache, upstream)
    return Tensor.wrap(grad_x), _tensor_grads(grads)


def stage_forward(x, weights, variant, index):
    stride = variant.stages[index].downsample_stride
    if x.ndim != 4 or x.shape[1] != variant.stage_in_channels(index):
        raise ShapeError(
            f"Stage {index + 1} expects {variant.stage_in_channels(index)} channels, got {list(x.shape)}"
        )
    if x.shape[2] % stride or x.shape[3] % stride:
        raise GeometryError(
            f"Stage {index + 1} input {x.shape[2]}x{x.shape[3]} is not divisible by stride {stride}"
        )
    out, _ = _stage_forward(x.data, weights, variant, index)
    return Tensor.wrap(out)


def model_forward(images, model):
    """Return (logits, [stage-1..4 feature maps])."""
    logits, features, _ = _model_forward(images, model)
    return Tensor.wrap(logits), [Tensor.wrap(feature) for feature in features]


def model_vjp(images, model, upstream):
    """Gradients of sum(upstream * logits) w.r.t. the images and every parameter."""
    logits, _, cache = _model_forward(images, model)
    upstream = upstream.data if isinstance(upstream, Tensor) else np.asarray(upstream)
    if upstream.shape != logits.shape:
        raise ShapeError(f"Upstream gradient {list(upstream.shape)} != {list(logits.shape)}")
    grad_images, grads = _model_backward(model, cache, upstream)
    return Tensor.wrap(grad_images), _tensor_grads(grads)


def loss_and_grads(model, images, labels):
    logits, _, cache = _model_forward(images, model)
    logits = Tensor.wrap(logits)
    loss = softmax_cross_entropy(logits, labels)
    _, grads = _model_backward(model, cache, softmax_cross_entropy_vjp(logits, labels).data)
    return loss, grads


def apply_gradients(model, grads, lr):
    def update(name, tensor, is_buffer):
        if is_buffer:
            return tensor
        return Tensor.wrap(tensor.data - lr * grads[name].astype(tensor.data.dtype, copy=False))
    return map_tensors(model, update)


def train_micro_step(model, images, labels, lr):
    """One plain gradient-descent step; returns (updated weights, loss before the step)."""
    if lr < 0:
        raise ParameterError(f"Learning rate must be >= 0, got {lr}")
    loss, grads = loss_and_grads(model, images, labels)
    return apply_gradients(model, grads, lr), loss


def synthetic_batch(count=8, size=32, num_classes=2, seed=0, precision='float64'):
    """
    Labelled toy images: class c shifts every pixel by an offset spread
    evenly over [-1, 1], on top of N(0, 0.1^2) noise.
    """
    labels = np.arange(count) % num_classes
    noise = tensor_random_normal((count, 3, size, size), 0.0, 0.1, seed, precision).numpy()
    offsets = np.linspace(-1.0, 1.0, num_classes) if num_classes > 1 else np.zeros(1)
    images = noise + offsets[labels].reshape(-1, 1, 1, 1)
    return Tensor(images, precision), labels


def train_demo(steps=50, seed=0, lr=None, variant=None):
    """Train VAN-micro on a fixed synthetic batch; returns the model and per-step losses."""
    if lr is None:
        lr = get_setting('TRAIN_DEMO_LR')
    variant = variant or PRESETS['micro']
    precision = get_setting('CHECK_PRECISION')
    model = build_van(variant, seed=seed, precision=precision)
    images, labels = synthetic_batch(num_classes=variant.num_classes, seed=seed, precision=precision)
    losses = []
    for step in range(steps):
        model, loss = train_micro_step(model, images, labels, lr)
        losses.append(loss)
        logger.debug(f"train-demo step {step}: loss {loss:.6f}")
    logger.info(f"train-demo finished {steps} steps: {losses[0]:.6f} -> {losses[-1]:.6f}")
    return model, losses
