"""
Finite-difference checks of every analytic gradient.

Exits with status 2 when any check fails. --zero-grad replaces one
input's analytic gradient with zeros, a negative control that must fail.
"""

from django.core.management.base import CommandError

from van_lka.gradcheck import CHECKS, GradCase, build_checks, run_case, with_zeroed_gradient
from van_lka.management.base import VanCommand


class Command(VanCommand):
    help = 'Check analytic vector-Jacobian products against central differences'

    def add_arguments(self, parser):
        group = parser.add_mutually_exclusive_group()
        group.add_argument('--op', choices=sorted(CHECKS), help='Check a single operation')
        group.add_argument('--all', action='store_true', help='Check every operation (default)')
        parser.add_argument('--seeds', type=int, default=3, help='Number of seeds per check (default: 3)')
        parser.add_argument('--zero-grad', metavar='INPUT', help='Zero the analytic gradient of INPUT')

    def handle(self, *args, **options):
        names = [options['op']] if options['op'] else None
        if options['seeds'] < 1:
            raise CommandError("--seeds must be >= 1")

        self.stdout.write(f"{'check':<28} {'seed':>4} {'max rel err':>12} {'tol':>8}  result")
        failures = 0
        for seed in range(options['seeds']):
            for case in build_checks(names, seed):
                if options['zero_grad']:
                    if options['zero_grad'] not in case.inputs:
                        raise CommandError(f"'{case.op.name}' has no input named '{options['zero_grad']}'")
                    case = GradCase(with_zeroed_gradient(case.op, options['zero_grad']),
                                    case.inputs, case.tolerance, case.max_entries)
                report = run_case(case, seed)
                verdict = self.style.SUCCESS('PASS') if report.passed else self.style.ERROR('FAIL')
                self.stdout.write(
                    f"{case.op.name:<28} {seed:>4} {report.max_relative_error:>12.3e} "
                    f"{report.tolerance:>8.0e}  {verdict}"
                )
                failures += not report.passed

        if failures:
            raise CommandError(f"{failures} gradient check(s) failed", returncode=2)
        self.stdout.write(self.style.SUCCESS("All gradient checks passed"))
