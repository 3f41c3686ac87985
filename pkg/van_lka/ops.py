"""
Convolution, normalisation, activation, pooling and loss primitives.

Every differentiable primitive comes with a ``*_vjp`` companion that
contracts an upstream gradient against the operation's Jacobian. All
functions are pure: they never mutate their inputs.
"""

import logging
import math
from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy import special

from .exceptions import ConfigError, GeometryError, ParameterError, ShapeError
from .tensor import Tensor, as_array

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class ConvSpec:
    """Full 2-D convolution geometry with symmetric zero padding."""

    in_channels: int
    out_channels: int
    kernel_h: int
    kernel_w: int
    stride: int = 1
    dilation: int = 1
    padding: int = 0
    groups: int = 1
    has_bias: bool = False

    def __post_init__(self):
        if min(self.in_channels, self.out_channels, self.groups) < 1:
            raise ConfigError(f"Channel and group counts must be >= 1 in {self}")
        if self.in_channels % self.groups or self.out_channels % self.groups:
            raise ConfigError(
                f"Channels ({self.in_channels}->{self.out_channels}) are not divisible by groups={self.groups}"
            )
        if self.kernel_h < 1 or self.kernel_w < 1:
            raise ConfigError(f"Kernel extents must be >= 1, got {self.kernel_h}x{self.kernel_w}")
        if self.stride < 1 or self.dilation < 1 or self.padding < 0:
            raise ConfigError(
                f"Invalid stride/dilation/padding {self.stride}/{self.dilation}/{self.padding}"
            )

    @classmethod
    def same(cls, in_channels, out_channels, kernel, dilation=1, groups=1, has_bias=False):
        """Stride-1 convolution whose output keeps the input resolution."""
        span = dilation * (kernel - 1)
        if span % 2:
            raise ConfigError(
                f"A {kernel}x{kernel} kernel with dilation {dilation} needs asymmetric padding"
            )
        return cls(in_channels, out_channels, kernel, kernel, stride=1,
                   dilation=dilation, padding=span // 2, groups=groups, has_bias=has_bias)

    @classmethod
    def depthwise(cls, channels, kernel, dilation=1, has_bias=False):
        return cls.same(channels, channels, kernel, dilation, groups=channels, has_bias=has_bias)

    @classmethod
    def pointwise(cls, in_channels, out_channels, has_bias=False):
        return cls(in_channels, out_channels, 1, 1, has_bias=has_bias)

    @property
    def is_depthwise(self):
        return self.groups == self.in_channels == self.out_channels

    @property
    def weight_shape(self):
        return (self.out_channels, self.in_channels // self.groups, self.kernel_h, self.kernel_w)

    @property
    def weight_count(self):
        return math.prod(self.weight_shape)

    def param_count(self, bias=None):
        bias = self.has_bias if bias is None else bias
        return self.weight_count + (self.out_channels if bias else 0)

    def output_extent(self, extent, kernel):
        return (extent + 2 * self.padding - self.dilation * (kernel - 1) - 1) // self.stride + 1

    def output_size(self, height, width):
        out_h = self.output_extent(height, self.kernel_h)
        out_w = self.output_extent(width, self.kernel_w)
        if out_h < 1 or out_w < 1:
            raise GeometryError(
                f"{height}x{width} input leaves no valid output for "
                f"{self.kernel_h}x{self.kernel_w} kernel (stride {self.stride}, "
                f"dilation {self.dilation}, padding {self.padding})"
            )
        return out_h, out_w


@dataclass(frozen=True)
class ConvWeights:
    weight: Tensor
    bias: Optional[Tensor] = None

    def check(self, spec):
        if tuple(self.weight.shape) != spec.weight_shape:
            raise ShapeError(
                f"Weight shape {list(self.weight.shape)} does not match {list(spec.weight_shape)}"
            )
        if spec.has_bias != (self.bias is not None):
            raise ShapeError(
                f"Bias {'missing' if spec.has_bias else 'unexpected'} for convolution {spec}"
            )
        if self.bias is not None and tuple(self.bias.shape) != (spec.out_channels,):
            raise ShapeError(f"Bias shape {list(self.bias.shape)} != [{spec.out_channels}]")


def _taps(spec, out_h, out_w):
    """Yield (i, j, row slice, column slice) for every kernel tap over the padded input."""
    span_h = spec.stride * (out_h - 1) + 1
    span_w = spec.stride * (out_w - 1) + 1
    for i in range(spec.kernel_h):
        rows = slice(i * spec.dilation, i * spec.dilation + span_h, spec.stride)
        for j in range(spec.kernel_w):
            cols = slice(j * spec.dilation, j * spec.dilation + span_w, spec.stride)
            yield i, j, rows, cols


def _grouped(x, spec):
    n, _, h, w = x.shape
    pad = spec.padding
    if pad:
        x = np.pad(x, ((0, 0), (0, 0), (pad, pad), (pad, pad)))
    return x.reshape(n, spec.groups, spec.in_channels // spec.groups, h + 2 * pad, w + 2 * pad)


def _check_conv_input(x, spec):
    if x.ndim != 4:
        raise ShapeError(f"conv2d expects NCHW input, got rank {x.ndim}")
    if x.shape[1] != spec.in_channels:
        raise ShapeError(
            f"Input has {x.shape[1]} channels, convolution expects {spec.in_channels}"
        )


def _tap_forward(kernel, window):
    """(g, o, c) kernel tap against (n, g, c, h, w) window -> (n, g, o, h, w)."""
    groups, outs, ins = kernel.shape
    if groups == 1:
        return np.tensordot(window[:, 0], kernel[0], axes=([1], [1])).transpose(0, 3, 1, 2)[:, None]
    if outs == 1 and ins == 1:
        return window * kernel.reshape(1, groups, 1, 1, 1)
    return np.einsum('goc,ngchw->ngohw', kernel, window)


def _tap_kernel_grad(grad_out, window):
    groups, outs, ins = grad_out.shape[1], grad_out.shape[2], window.shape[2]
    if groups == 1:
        return np.tensordot(grad_out[:, 0], window[:, 0], axes=([0, 2, 3], [0, 2, 3]))[None]
    if outs == 1 and ins == 1:
        return (grad_out * window).sum(axis=(0, 3, 4)).reshape(groups, 1, 1)
    return np.einsum('ngohw,ngchw->goc', grad_out, window)


def _tap_input_grad(kernel, grad_out):
    groups, outs, ins = kernel.shape
    if groups == 1:
        return np.tensordot(grad_out[:, 0], kernel[0], axes=([1], [0])).transpose(0, 3, 1, 2)[:, None]
    if outs == 1 and ins == 1:
        return grad_out * kernel.reshape(1, groups, 1, 1, 1)
    return np.einsum('goc,ngohw->ngchw', kernel, grad_out)


def conv2d_array(x, weight, bias, spec):
    """Direct-summation convolution on raw arrays (taps summed in (kh, kw) order)."""
    _check_conv_input(x, spec)
    n, _, h, w = x.shape
    out_h, out_w = spec.output_size(h, w)
    groups = spec.groups
    kernels = weight.reshape(groups, spec.out_channels // groups, spec.in_channels // groups,
                             spec.kernel_h, spec.kernel_w)
    padded = _grouped(x, spec)
    out = np.zeros((n, groups, spec.out_channels // groups, out_h, out_w),
                   dtype=np.result_type(x, weight))
    for i, j, rows, cols in _taps(spec, out_h, out_w):
        window = padded[:, :, :, rows, cols]
        out += _tap_forward(kernels[..., i, j], window)
    out = out.reshape(n, spec.out_channels, out_h, out_w)
    if bias is not None:
        out += bias.reshape(1, -1, 1, 1)
    return out


def conv2d_vjp_array(x, weight, spec, upstream, with_bias):
    n, _, h, w = x.shape
    out_h, out_w = spec.output_size(h, w)
    if upstream.shape != (n, spec.out_channels, out_h, out_w):
        raise ShapeError(
            f"Upstream gradient {list(upstream.shape)} does not match conv output "
            f"{[n, spec.out_channels, out_h, out_w]}"
        )
    groups = spec.groups
    cout_g = spec.out_channels // groups
    kernels = weight.reshape(groups, cout_g, spec.in_channels // groups, spec.kernel_h, spec.kernel_w)
    padded = _grouped(x, spec)
    grad_padded = np.zeros_like(padded, dtype=np.result_type(x, upstream))
    grad_kernels = np.zeros(kernels.shape, dtype=np.result_type(weight, upstream))
    grad_out = upstream.reshape(n, groups, cout_g, out_h, out_w)
    for i, j, rows, cols in _taps(spec, out_h, out_w):
        window = padded[:, :, :, rows, cols]
        grad_kernels[..., i, j] = _tap_kernel_grad(grad_out, window)
        grad_padded[:, :, :, rows, cols] += _tap_input_grad(kernels[..., i, j], grad_out)
    pad = spec.padding
    grad_x = grad_padded.reshape(n, spec.in_channels, h + 2 * pad, w + 2 * pad)
    grad_x = grad_x[:, :, pad:pad + h, pad:pad + w]
    grad_bias = upstream.sum(axis=(0, 2, 3)) if with_bias else None
    return grad_x, grad_kernels.reshape(weight.shape), grad_bias


def conv2d(x, w, spec):
    w.check(spec)
    bias = w.bias.data if w.bias is not None else None
    return Tensor.wrap(conv2d_array(x.data, w.weight.data, bias, spec))


def conv2d_vjp(x, w, spec, upstream):
    """Gradients of sum(upstream * conv2d(x, w)) w.r.t. x, weight and bias."""
    w.check(spec)
    _check_conv_input(x.data, spec)
    grad_x, grad_w, grad_b = conv2d_vjp_array(
        x.data, w.weight.data, spec, as_array(upstream), w.bias is not None
    )
    grads = ConvWeights(Tensor.wrap(grad_w), Tensor.wrap(grad_b) if grad_b is not None else None)
    return Tensor.wrap(grad_x), grads


# Activations

_INV_SQRT_2PI = 1.0 / math.sqrt(2.0 * math.pi)


def gelu_array(x):
    return x * special.ndtr(x)


def gelu_vjp_array(x, upstream):
    pdf = np.exp(-0.5 * x * x) * _INV_SQRT_2PI
    return upstream * (special.ndtr(x) + x * pdf)


def gelu(x):
    """Exact GELU: x * Phi(x) with the standard normal CDF."""
    return Tensor.wrap(gelu_array(x.data).astype(x.data.dtype, copy=False))


def gelu_vjp(x, upstream):
    _check_upstream(x, upstream)
    return Tensor.wrap(gelu_vjp_array(x.data, as_array(upstream)).astype(x.data.dtype, copy=False))


def sigmoid_array(x):
    """Logistic function kept strictly inside (0, 1) for the array's precision."""
    s = special.expit(x)
    return np.clip(s, np.nextafter(0, 1, dtype=s.dtype), np.nextafter(1, 0, dtype=s.dtype))


def sigmoid_vjp_array(x, upstream):
    s = sigmoid_array(x)
    return upstream * s * (1.0 - s)


def sigmoid(x):
    return Tensor.wrap(sigmoid_array(x.data))


def sigmoid_vjp(x, upstream):
    _check_upstream(x, upstream)
    return Tensor.wrap(sigmoid_vjp_array(x.data, as_array(upstream)))


def _check_upstream(x, upstream):
    if tuple(as_array(upstream).shape) != tuple(x.shape):
        raise ShapeError(
            f"Upstream gradient {list(as_array(upstream).shape)} does not match {list(x.shape)}"
        )


# Batch normalisation (inference mode)

def _bn_vectors(x, gamma, beta, mean, var, eps):
    vectors = [as_array(v).reshape(-1) for v in (gamma, beta, mean, var)]
    channels = x.shape[1]
    for vector in vectors:
        if vector.shape[0] != channels:
            raise ShapeError(
                f"Normalisation vector of length {vector.shape[0]} does not match {channels} channels"
            )
    if (vectors[3] < 0).any():
        raise ParameterError("Running variance must be non-negative")
    if eps < 0:
        raise ParameterError(f"eps must be >= 0, got {eps}")
    if ((vectors[3] + eps) <= 0).any():
        raise ParameterError("var + eps must be strictly positive")
    return vectors


def batch_norm_array(x, gamma, beta, mean, var, eps):
    shape = (1, -1) + (1,) * (x.ndim - 2)
    inv_std = 1.0 / np.sqrt(var + eps)
    return (gamma * inv_std).reshape(shape) * (x - mean.reshape(shape)) + beta.reshape(shape)


def batch_norm_vjp_array(x, gamma, mean, var, eps, upstream):
    shape = (1, -1) + (1,) * (x.ndim - 2)
    axes = (0,) + tuple(range(2, x.ndim))
    inv_std = 1.0 / np.sqrt(var + eps)
    normalised = (x - mean.reshape(shape)) * inv_std.reshape(shape)
    grad_x = upstream * (gamma * inv_std).reshape(shape)
    grad_gamma = (upstream * normalised).sum(axis=axes)
    grad_beta = upstream.sum(axis=axes)
    return grad_x, grad_gamma, grad_beta


def batch_norm_infer(x, gamma, beta, mean, var, eps):
    """out = gamma * (x - mean) / sqrt(var + eps) + beta, per channel."""
    gamma, beta, mean, var = _bn_vectors(x, gamma, beta, mean, var, eps)
    out = batch_norm_array(x.data, gamma, beta, mean, var, eps)
    return Tensor.wrap(out.astype(x.data.dtype, copy=False))


def batch_norm_vjp(x, gamma, beta, mean, var, eps, upstream):
    """Return (dx, dgamma, dbeta)."""
    gamma, beta, mean, var = _bn_vectors(x, gamma, beta, mean, var, eps)
    _check_upstream(x, upstream)
    grad_x, grad_gamma, grad_beta = batch_norm_vjp_array(
        x.data, gamma, mean, var, eps, as_array(upstream)
    )
    return Tensor.wrap(grad_x), Tensor.wrap(grad_gamma), Tensor.wrap(grad_beta)


# Pooling and classifier head

def global_avg_pool(x):
    if x.ndim != 4:
        raise ShapeError(f"global_avg_pool expects NCHW input, got rank {x.ndim}")
    return Tensor.wrap(x.data.mean(axis=(2, 3)))


def global_avg_pool_vjp_array(input_shape, upstream):
    _, _, h, w = input_shape
    return np.broadcast_to(upstream[:, :, None, None] / (h * w), input_shape).copy()


def global_avg_pool_vjp(x, upstream):
    upstream = as_array(upstream)
    if upstream.shape != x.shape[:2]:
        raise ShapeError(f"Upstream gradient {list(upstream.shape)} != {list(x.shape[:2])}")
    return Tensor.wrap(global_avg_pool_vjp_array(x.shape, upstream))


def _check_linear(x, w, b):
    if x.ndim != 2 or w.ndim != 2:
        raise ShapeError("linear expects (batch, in) input and (out, in) weights")
    if x.shape[1] != w.shape[1]:
        raise ShapeError(f"Input width {x.shape[1]} does not match weight width {w.shape[1]}")
    if b is not None and tuple(b.shape) != (w.shape[0],):
        raise ShapeError(f"Bias shape {list(b.shape)} != [{w.shape[0]}]")


def linear(x, w, b=None):
    """out[n, o] = b[o] + sum_i w[o, i] * x[n, i]."""
    _check_linear(x, w, b)
    out = x.data @ w.data.T
    if b is not None:
        out = out + b.data
    return Tensor.wrap(out)


def linear_vjp(x, w, b, upstream):
    """Return (dx, dw, db)."""
    _check_linear(x, w, b)
    upstream = as_array(upstream)
    if upstream.shape != (x.shape[0], w.shape[0]):
        raise ShapeError(f"Upstream gradient {list(upstream.shape)} != {[x.shape[0], w.shape[0]]}")
    grad_b = Tensor.wrap(upstream.sum(axis=0)) if b is not None else None
    return Tensor.wrap(upstream @ w.data), Tensor.wrap(upstream.T @ x.data), grad_b


def _check_labels(logits, labels):
    labels = np.asarray(labels, dtype=np.int64).reshape(-1)
    if logits.ndim != 2 or labels.shape[0] != logits.shape[0]:
        raise ShapeError(
            f"Expected one label per row of {list(logits.shape)} logits, got {labels.shape[0]}"
        )
    if (labels < 0).any() or (labels >= logits.shape[1]).any():
        raise ParameterError(f"Labels must lie in [0, {logits.shape[1]})")
    return labels


def _log_softmax(logits):
    shifted = logits - logits.max(axis=1, keepdims=True)
    return shifted - np.log(np.exp(shifted).sum(axis=1, keepdims=True))


def softmax_cross_entropy(logits, labels):
    """Mean negative log-likelihood of ``labels`` under softmax(logits)."""
    labels = _check_labels(logits, labels)
    log_probs = _log_softmax(logits.data.astype(np.float64))
    return float(-log_probs[np.arange(labels.shape[0]), labels].mean())


def softmax_cross_entropy_vjp(logits, labels, upstream=1.0):
    labels = _check_labels(logits, labels)
    probs = np.exp(_log_softmax(logits.data))
    probs[np.arange(labels.shape[0]), labels] -= 1.0
    return Tensor.wrap(probs * (float(upstream) / labels.shape[0]))
