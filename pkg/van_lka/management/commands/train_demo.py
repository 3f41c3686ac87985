"""
Train VAN-micro on a fixed synthetic two-class batch.

Plain gradient descent in 64-bit; prints the loss before every step.
"""

from django.core.management.base import CommandError

from van_lka.management.base import VanCommand
from van_lka.van import train_demo


class Command(VanCommand):
    help = 'Run a few gradient-descent steps of VAN-micro on synthetic data'

    def add_arguments(self, parser):
        parser.add_argument('--steps', type=int, default=50, help='Number of steps (default: 50)')
        parser.add_argument('--seed', type=int, default=0, help='Seed for weights and data (default: 0)')
        parser.add_argument('--lr', type=float, default=None, help='Learning rate (default: TRAIN_DEMO_LR)')

    def handle(self, *args, **options):
        if options['steps'] < 1:
            raise CommandError("--steps must be >= 1")

        _, losses = train_demo(steps=options['steps'], seed=options['seed'], lr=options['lr'])

        self.stdout.write(f"{'step':>5} {'loss':>12}")
        for step, loss in enumerate(losses):
            self.stdout.write(f"{step:>5} {loss:>12.6f}")

        ratio = losses[-1] / losses[0]
        message = f"Loss {losses[0]:.6f} -> {losses[-1]:.6f} ({ratio:.1%} of initial)"
        if ratio < 0.1:
            self.stdout.write(self.style.SUCCESS(message))
        else:
            self.stdout.write(self.style.WARNING(message))
