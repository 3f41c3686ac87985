"""
Exact parameter and multiply-accumulate accounting.

All counts are Python integers. A convolution's MACs are its weight count
(bias excluded) times the number of output positions; normalisation and
activation cost no MACs. Batch-norm layers contribute 2C trainable
parameters (the running statistics are buffers), LayerScale vectors C.
"""

import logging
import math
from dataclasses import dataclass, field
from typing import List, NamedTuple, Tuple

from .exceptions import ParameterError

logger = logging.getLogger(__name__)

DEFAULT_CHANNELS = (32, 64, 128, 256, 512)


class CostRow(NamedTuple):
    name: str
    params: int
    macs: int


@dataclass
class CostReport:
    bias_included: bool
    rows: List[CostRow] = field(default_factory=list)
    input_size: Tuple[int, int] = (0, 0)

    def add(self, name, params, macs=0):
        self.rows.append(CostRow(name, int(params), int(macs)))

    @property
    def total_params(self):
        return sum(row.params for row in self.rows)

    @property
    def total_macs(self):
        return sum(row.macs for row in self.rows)

    @property
    def total_flops(self):
        """Two floating-point operations per multiply-accumulate."""
        return 2 * self.total_macs


def _require_counts(**counts):
    for name, value in counts.items():
        if int(value) != value or value < 1:
            raise ParameterError(f"{name} must be a positive integer, got {value}")


def standard_conv_params(kernel, channels):
    """Dense K x K convolution from C to C channels, no bias."""
    _require_counts(kernel=kernel, channels=channels)
    return kernel * kernel * channels * channels


def mobilenet_decomp_params(kernel, channels):
    """K x K depthwise plus 1x1 pointwise."""
    _require_counts(kernel=kernel, channels=channels)
    return channels * kernel * kernel + channels * channels


def lka_kernel_terms(kernel, dilation):
    return math.ceil(kernel / dilation) ** 2 + (2 * dilation - 1) ** 2


def lka_decomp_params(kernel, dilation, channels):
    """
    (2d-1) x (2d-1) depthwise, ceil(K/d) x ceil(K/d) dilated depthwise and a
    1x1 convolution: C * (ceil(K/d)^2 + (2d-1)^2) + C^2.
    """
    _require_counts(kernel=kernel, dilation=dilation, channels=channels)
    if dilation > kernel:
        raise ParameterError(f"Dilation {dilation} exceeds the nominal kernel {kernel}")
    return channels * lka_kernel_terms(kernel, dilation) + channels * channels


def lka_decomp_macs(kernel, dilation, channels, height, width):
    _require_counts(height=height, width=width)
    return lka_decomp_params(kernel, dilation, channels) * height * width


def optimal_dilation(kernel, max_dilation=None):
    """Dilation in [1, min(max_dilation, K)] with the fewest LKA weights; ties go to the smaller d."""
    max_dilation = kernel if max_dilation is None else max_dilation
    _require_counts(kernel=kernel, max_dilation=max_dilation)
    candidates = range(1, min(max_dilation, kernel) + 1)
    return min(candidates, key=lambda d: (lka_kernel_terms(kernel, d), d))


class ParamsRow(NamedTuple):
    channels: int
    standard: int
    mobilenet: int
    lka: int


def params_comparison_table(kernel, channels=DEFAULT_CHANNELS, max_dilation=None):
    """Returns (dilation, rows) comparing the three decompositions per channel count."""
    channels = list(channels)
    if not channels:
        raise ParameterError("The channel list must not be empty")
    dilation = optimal_dilation(kernel, max_dilation)
    rows = [
        ParamsRow(c, standard_conv_params(kernel, c), mobilenet_decomp_params(kernel, c),
                  lka_decomp_params(kernel, dilation, c))
        for c in channels
    ]
    return dilation, rows


def _add_conv(report, name, spec, out_h, out_w, bias):
    report.add(name, spec.param_count(bias), spec.weight_count * out_h * out_w)


def model_cost(variant, height=224, width=224, bias=True):
    """Walk every layer of ``variant`` at the given input size."""
    _require_counts(height=height, width=width)
    resolutions = variant.stage_resolutions(height, width)
    report = CostReport(bias, input_size=(height, width))
    for index, stage in enumerate(variant.stages):
        prefix = f'stages.{index}'
        out_h, out_w = resolutions[index]
        cfg = variant.block_config(index)
        channels = stage.channels
        _add_conv(report, f'{prefix}.downsample', variant.downsample_spec(index), out_h, out_w, bias)
        report.add(f'{prefix}.downsample_norm', 2 * channels)
        for block in range(stage.depth):
            path = f'{prefix}.blocks.{block}'
            report.add(f'{path}.norm1', 2 * channels)
            _add_conv(report, f'{path}.attn.proj_in', cfg.proj_in_spec, out_h, out_w, bias)
            for name, spec in cfg.lka.stages():
                _add_conv(report, f'{path}.attn.lka.{name}', spec, out_h, out_w, bias)
            _add_conv(report, f'{path}.attn.proj_out', cfg.proj_out_spec, out_h, out_w, bias)
            report.add(f'{path}.layer_scale_1', channels)
            report.add(f'{path}.norm2', 2 * channels)
            _add_conv(report, f'{path}.ffn.fc1', cfg.fc1_spec, out_h, out_w, bias)
            if cfg.ffn_depthwise:
                _add_conv(report, f'{path}.ffn.dwconv', cfg.dwconv_spec, out_h, out_w, bias)
            _add_conv(report, f'{path}.ffn.fc2', cfg.fc2_spec, out_h, out_w, bias)
            report.add(f'{path}.layer_scale_2', channels)
        report.add(f'{prefix}.norm', 2 * channels)
    last = variant.stages[-1].channels
    head_weights = last * variant.num_classes
    report.add('head', head_weights + (variant.num_classes if bias else 0), head_weights)
    for row in report.rows:
        logger.debug(f"{row.name}: {row.params} params, {row.macs} MACs")
    logger.info(
        f"VAN-{variant.name} at {height}x{width}: {report.total_params:,} params, "
        f"{report.total_macs:,} MACs"
    )
    return report


class KernelAblationRow(NamedTuple):
    kernel: int
    dilation: int
    report: CostReport


def kernel_ablation(variant, kernels=(7, 14, 21, 28), height=224, width=224, bias=True):
    """Cost ``variant`` once per nominal kernel, each at its optimal dilation."""
    rows = []
    for kernel in kernels:
        dilation = optimal_dilation(kernel)
        changed = variant.with_changes(lka_nominal_kernel=kernel, lka_dilation=dilation)
        rows.append(KernelAblationRow(kernel, dilation, model_cost(changed, height, width, bias)))
    return rows


@dataclass(frozen=True)
class ComplexityProfile:
    channels: int
    kernel: int
    dilation: int
    rows: Tuple[Tuple[int, int], ...]

    @property
    def per_position(self):
        return lka_decomp_params(self.kernel, self.dilation, self.channels)

    @property
    def linear(self):
        """True when every MAC count is exactly per_position * n."""
        return all(macs == self.per_position * positions for positions, macs in self.rows)


def complexity_profile(channels, kernel=21, sizes=(7, 14, 28, 56), dilation=None):
    """LKA MACs over square inputs of each side length, keyed by position count n = side^2."""
    dilation = optimal_dilation(kernel) if dilation is None else dilation
    rows = tuple(
        (size * size, lka_decomp_macs(kernel, dilation, channels, size, size)) for size in sizes
    )
    return ComplexityProfile(channels, kernel, dilation, rows)
