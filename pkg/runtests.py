#!/usr/bin/env python
"""Run the van_lka test suite without a host project."""

import sys

from django.conf import settings
from django.test.utils import get_runner

from van_lka.conf import configure_standalone


def main(labels):
    configure_standalone()
    runner = get_runner(settings)(verbosity=2)
    failures = runner.run_tests(labels or ['van_lka.tests'])
    sys.exit(bool(failures))


if __name__ == '__main__':
    main(sys.argv[1:])
