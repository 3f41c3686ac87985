"""
Exact parameter and MAC report for a VAN variant.

Rows are grouped per stage unless --layers is given. The footer checks
that LKA cost grows exactly linearly with the number of positions.
"""

from collections import OrderedDict

from van_lka.costs import complexity_profile, model_cost
from van_lka.management.base import VanCommand
from van_lka.serializers import resolve_variant


class Command(VanCommand):
    help = 'Report exact parameter and MAC counts of a VAN variant'

    def add_arguments(self, parser):
        self.add_variant_argument(parser)
        self.add_input_argument(parser)
        parser.add_argument(
            '--bias',
            action='store_true',
            help='Count convolution and classifier biases'
        )
        parser.add_argument(
            '--layers',
            action='store_true',
            help='List every layer instead of per-stage totals'
        )

    def handle(self, *args, **options):
        variant = resolve_variant(options['variant'])
        height, width = options['input']
        report = model_cost(variant, height, width, bias=options['bias'])

        if options['layers']:
            rows = [(row.name, row.params, row.macs) for row in report.rows]
        else:
            groups = OrderedDict()
            for row in report.rows:
                key = '.'.join(row.name.split('.')[:2]) if row.name.startswith('stages.') else row.name
                params, macs = groups.get(key, (0, 0))
                groups[key] = (params + row.params, macs + row.macs)
            rows = [(name, params, macs) for name, (params, macs) in groups.items()]

        bias = 'on' if options['bias'] else 'off'
        self.stdout.write(f"VAN-{variant.name} @ {height}x{width} (bias {bias})")
        self.stdout.write(f"{'layer':<40} {'params':>12} {'MACs':>16}")
        for name, params, macs in rows:
            self.stdout.write(f"{name:<40} {params:>12} {macs:>16}")
        self.stdout.write(f"{'total':<40} {report.total_params:>12} {report.total_macs:>16}")
        self.stdout.write(f"{'FLOPs (2 x MACs)':<40} {'':>12} {report.total_flops:>16}")

        lka = variant.lka_config(0)
        profile = complexity_profile(variant.stages[0].channels, lka.nominal_kernel,
                                     dilation=lka.dilation)
        counts = ', '.join(f"n={positions}: {macs}" for positions, macs in profile.rows)
        verdict = 'linear in n' if profile.linear else 'NOT linear in n'
        self.stdout.write(f"LKA MACs (C={profile.channels}): {counts} -> {verdict}")
