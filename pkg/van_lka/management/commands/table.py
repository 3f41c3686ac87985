from django.core.management.base import CommandError

from van_lka.costs import DEFAULT_CHANNELS, params_comparison_table
from van_lka.management.base import VanCommand


def channel_list(value):
    try:
        channels = [int(item) for item in value.split(',') if item.strip()]
    except ValueError:
        raise CommandError(f"--channels expects a comma-separated list of integers, got '{value}'")
    if not channels:
        raise CommandError("--channels must name at least one channel count")
    return channels


class Command(VanCommand):
    help = 'Compare parameters of standard, MobileNet-style and LKA decompositions'

    def add_arguments(self, parser):
        parser.add_argument('--kernel', type=int, default=21, help='Nominal kernel size K (default: 21)')
        parser.add_argument(
            '--channels',
            default=','.join(str(c) for c in DEFAULT_CHANNELS),
            help='Comma-separated channel counts (default: 32,64,128,256,512)'
        )
        parser.add_argument('--dmax', type=int, default=None, help='Largest dilation considered (default: K)')

    def handle(self, *args, **options):
        kernel = options['kernel']
        dilation, rows = params_comparison_table(kernel, channel_list(options['channels']), options['dmax'])

        self.stdout.write(f"K={kernel} d={dilation} (bias off)")
        self.stdout.write(f"{'C':>6} {'standard':>14} {'mobilenet':>12} {'ours':>10} {'ratio':>8}")
        for row in rows:
            self.stdout.write(
                f"{row.channels:>6} {row.standard:>14} {row.mobilenet:>12} {row.lka:>10} "
                f"{row.standard // row.lka:>8}"
            )
