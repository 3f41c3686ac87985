"""
Print the architecture row of a VAN variant and its cost at 224x224.
"""

from van_lka.costs import model_cost
from van_lka.lka import receptive_span
from van_lka.management.base import VanCommand
from van_lka.serializers import resolve_variant


class Command(VanCommand):
    help = 'Summarize a VAN variant: stages, LKA decomposition, parameters and MACs'

    def add_arguments(self, parser):
        self.add_variant_argument(parser)

    def handle(self, *args, **options):
        variant = resolve_variant(options['variant'])
        lka = variant.lka_config(0)

        self.stdout.write(f"VAN-{variant.name}")
        self.stdout.write(f"{'stage':<6} {'stride':>6} {'channels':>8} {'depth':>6} {'e.r.':>5}  downsample")
        stride = 1
        for index, stage in enumerate(variant.stages, 1):
            stride *= stage.downsample_stride
            kernel = stage.downsample_kernel
            self.stdout.write(
                f"{index:<6} {stride:>6} {stage.channels:>8} {stage.depth:>6} {stage.expansion_ratio:>5}  "
                f"{kernel}x{kernel}/s{stage.downsample_stride}/p{stage.downsample_padding}"
            )

        self.stdout.write(
            f"LKA: K={lka.nominal_kernel} d={lka.dilation} variant={lka.variant.value} "
            f"(dw {lka.dw_kernel}x{lka.dw_kernel}, dwd {lka.dwd_kernel}x{lka.dwd_kernel} "
            f"dilation {lka.dilation}, span {receptive_span(lka)})"
        )
        self.stdout.write(f"LayerScale: {variant.layerscale_mode} (init {variant.layerscale_init})")
        self.stdout.write(f"Classes: {variant.num_classes}")

        report = model_cost(variant, 224, 224, bias=True)
        self.stdout.write(f"Parameters: {report.total_params}")
        self.stdout.write(f"MACs @224x224: {report.total_macs}")
        self.stdout.write(f"FLOPs @224x224: {report.total_flops}")
