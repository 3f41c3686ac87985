"""
Decompose a K x K convolution into the LKA chain.

Lists the per-channel weight count for every candidate dilation, picks
the cheapest one and measures the receptive span of the resulting chain
with an impulse probe.
"""

from van_lka.costs import lka_kernel_terms, optimal_dilation
from van_lka.exceptions import ConfigError
from van_lka.lka import LkaConfig, measure_span, receptive_span
from van_lka.management.base import VanCommand


class Command(VanCommand):
    help = 'Decompose a large kernel into depthwise, dilated depthwise and 1x1 convolutions'

    def add_arguments(self, parser):
        parser.add_argument('--kernel', type=int, default=21, help='Nominal kernel size K (default: 21)')
        parser.add_argument('--dmax', type=int, default=None, help='Largest dilation considered (default: K)')

    def handle(self, *args, **options):
        kernel = options['kernel']
        dilation = optimal_dilation(kernel, options['dmax'])
        limit = min(options['dmax'] or kernel, kernel)

        self.stdout.write(f"{'d':>3} {'dw':>7} {'dwd':>7} {'weights/C':>10}")
        for candidate in range(1, limit + 1):
            dw = 2 * candidate - 1
            dwd = -(-kernel // candidate)
            marker = '  <' if candidate == dilation else ''
            self.stdout.write(
                f"{candidate:>3} {f'{dw}x{dw}':>7} {f'{dwd}x{dwd}':>7} "
                f"{lka_kernel_terms(kernel, candidate):>10}{marker}"
            )

        self.stdout.write(f"kernel     {kernel}")
        self.stdout.write(f"dilation   {dilation}")
        try:
            cfg = LkaConfig(1, kernel, dilation)
        except ConfigError as exc:
            self.stdout.write(self.style.WARNING(f"No same-padding chain: {exc}"))
            return

        self.stdout.write(f"dw         {cfg.dw_kernel}x{cfg.dw_kernel}")
        self.stdout.write(f"dwd        {cfg.dwd_kernel}x{cfg.dwd_kernel} dilation {dilation}")
        self.stdout.write("pw         1x1")
        span = receptive_span(cfg)
        rows, cols = measure_span(cfg)
        self.stdout.write(f"span       {span}")
        self.stdout.write(f"measured   {rows}x{cols}")
        if span < kernel:
            self.stdout.write(self.style.WARNING(f"Span {span} does not cover the nominal {kernel}x{kernel} kernel"))
        if (rows, cols) != (span, span):
            self.stdout.write(self.style.ERROR(f"Measured span {rows}x{cols} differs from {span}"))
