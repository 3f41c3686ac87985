"""
The ``van-lka`` console script.

Sub-commands are the app's management commands; ``train-demo`` maps to
``train_demo``. Django is configured in-process when the host has no
settings module.
"""

import sys

from django.core.management import call_command
from django.core.management.base import CommandError

from .conf import configure_standalone

SUBCOMMANDS = {
    'summarize': 'summarize',
    'costs': 'costs',
    'table': 'table',
    'decompose': 'decompose',
    'shapes': 'shapes',
    'infer': 'infer',
    'gradcheck': 'gradcheck',
    'train-demo': 'train_demo',
}

USAGE = "usage: van-lka {%s} [options]" % ','.join(SUBCOMMANDS)


def cli_run(argv, stdout=None, stderr=None):
    """Run one sub-command and return its exit status."""
    stdout = stdout or sys.stdout
    stderr = stderr or sys.stderr
    if not argv:
        stderr.write(USAGE + '\n')
        return 1
    if argv[0] in ('-h', '--help'):
        stdout.write(USAGE + '\n')
        return 0
    if argv[0] not in SUBCOMMANDS:
        stderr.write(f"{USAGE}\nvan-lka: unknown command '{argv[0]}'\n")
        return 1

    configure_standalone()
    try:
        call_command(SUBCOMMANDS[argv[0]], *argv[1:], stdout=stdout, stderr=stderr)
    except CommandError as exc:
        stderr.write(f"van-lka {argv[0]}: {exc}\n")
        return exc.returncode
    except SystemExit as exc:
        # argparse exits after printing --help
        return exc.code if isinstance(exc.code, int) else 1
    return 0


def main():
    sys.exit(cli_run(sys.argv[1:]))


if __name__ == '__main__':
    main()
