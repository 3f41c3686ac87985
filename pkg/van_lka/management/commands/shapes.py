from van_lka.management.base import VanCommand
from van_lka.serializers import resolve_variant
from van_lka.tensor import tensor_filled
from van_lka.van import build_van, model_forward


class Command(VanCommand):
    help = 'Print the feature-map shape after every stage'

    def add_arguments(self, parser):
        self.add_variant_argument(parser)
        self.add_input_argument(parser)
        parser.add_argument(
            '--forward',
            action='store_true',
            help='Run a forward pass on a zero image and report the measured shapes'
        )

    def handle(self, *args, **options):
        variant = resolve_variant(options['variant'])
        height, width = options['input']
        resolutions = variant.stage_resolutions(height, width)

        if options['forward']:
            model = build_van(variant, seed=0)
            images = tensor_filled((1, variant.in_channels, height, width), 0.0, model.precision)
            logits, features = model_forward(images, model)
            shapes = [tuple(feature.shape) for feature in features]
        else:
            shapes = [(1, stage.channels) + size for stage, size in zip(variant.stages, resolutions)]

        self.stdout.write(f"VAN-{variant.name} input 1x{variant.in_channels}x{height}x{width}")
        stride = 1
        for index, (stage, shape) in enumerate(zip(variant.stages, shapes), 1):
            stride *= stage.downsample_stride
            self.stdout.write(f"stage {index}  stride {stride:>2}  {'x'.join(str(e) for e in shape)}")
        self.stdout.write(f"logits   1x{variant.num_classes}")
