from django.core.management.base import BaseCommand, CommandError

from van_lka.exceptions import VanLkaError


class VanCommand(BaseCommand):
    """BaseCommand that reports library and file errors as CommandError (exit 1)."""

    def execute(self, *args, **options):
        try:
            return super().execute(*args, **options)
        except VanLkaError as exc:
            raise CommandError(f"{type(exc).__name__}: {exc}")
        except OSError as exc:
            raise CommandError(str(exc))

    def add_variant_argument(self, parser):
        parser.add_argument(
            'variant',
            help='Preset name (B0-B6, micro) or path of a JSON variant config'
        )

    def add_input_argument(self, parser, default=(224, 224)):
        parser.add_argument(
            '--input',
            nargs=2,
            type=int,
            metavar=('H', 'W'),
            default=list(default),
            help=f'Input height and width (default: {default[0]} {default[1]})'
        )
