"""
Classify an image file with a VAN checkpoint.

Without --weights the model is freshly initialised from --seed, which is
handy for checking the input pipeline.
"""

from django.core.management.base import CommandError

from van_lka.checkpoint import load_checkpoint
from van_lka.images import infer_image
from van_lka.management.base import VanCommand
from van_lka.serializers import resolve_variant
from van_lka.van import build_van


class Command(VanCommand):
    help = 'Run a VAN forward pass on a PPM (P6) or raw tensor image'

    def add_arguments(self, parser):
        self.add_variant_argument(parser)
        parser.add_argument('--weights', help='Checkpoint file written by save_checkpoint')
        parser.add_argument('--image', required=True, help='PPM (P6) or raw f32 tensor file')
        parser.add_argument(
            '--center-crop',
            action='store_true',
            help='Center-crop the image to a multiple of the total stride'
        )
        parser.add_argument('--seed', type=int, default=0, help='Initialisation seed when --weights is omitted')

    def handle(self, *args, **options):
        variant = resolve_variant(options['variant'])
        if options['weights']:
            model = load_checkpoint(options['weights'], variant)
        else:
            model = build_van(variant, seed=options['seed'])

        classes, logits = infer_image(options['image'], model, crop=options['center_crop'])
        if logits.shape[0] != 1:
            raise CommandError(f"Expected a single image, the file holds {logits.shape[0]}")

        self.stdout.write(f"class  {int(classes[0])}")
        self.stdout.write("logits " + ' '.join(f"{value:.6f}" for value in logits[0]))
