import json
import logging
import os

from rest_framework import serializers

from .exceptions import ConfigError
from .lka import LkaVariant
from .van import LAYERSCALE_MODES, PRESETS, StageConfig, VanVariant

logger = logging.getLogger(__name__)


class StrictSerializer(serializers.Serializer):
    """Serializer that rejects keys it does not declare."""

    def to_internal_value(self, data):
        if isinstance(data, dict):
            unknown = sorted(set(data) - set(self.fields))
            if unknown:
                raise serializers.ValidationError({key: ['Unknown field.'] for key in unknown})
        return super().to_internal_value(data)


class StageConfigSerializer(StrictSerializer):
    """Validates one stage entry of a variant config."""
    channels = serializers.IntegerField(min_value=1)
    depth = serializers.IntegerField(min_value=1)
    expansion_ratio = serializers.IntegerField(min_value=1)
    downsample_kernel = serializers.IntegerField(min_value=1, required=False, default=3)
    downsample_stride = serializers.IntegerField(min_value=1, required=False, default=2)
    downsample_padding = serializers.IntegerField(min_value=0, required=False, default=1)

    def validate(self, attrs):
        kernel = attrs['downsample_kernel']
        stride = attrs['downsample_stride']
        padding = attrs['downsample_padding']
        if not kernel - stride <= 2 * padding < kernel:
            raise serializers.ValidationError(
                f"Downsample {kernel}/{stride}/{padding} does not divide the resolution by its stride"
            )
        return attrs


class VanVariantSerializer(StrictSerializer):
    """Validates a JSON variant config file."""
    name = serializers.CharField(max_length=64)
    stages = StageConfigSerializer(many=True)
    lka_nominal_kernel = serializers.IntegerField(min_value=1, required=False, default=21)
    lka_dilation = serializers.IntegerField(min_value=1, required=False, default=3)
    num_classes = serializers.IntegerField(min_value=1, required=False, default=1000)
    layerscale_init = serializers.FloatField(required=False, default=0.01)
    lka_variant = serializers.ChoiceField(
        choices=[variant.value for variant in LkaVariant], required=False, default=LkaVariant.FULL.value
    )
    layerscale_mode = serializers.ChoiceField(choices=LAYERSCALE_MODES, required=False, default='residual')
    ffn_depthwise = serializers.BooleanField(required=False, default=True)
    in_channels = serializers.IntegerField(min_value=1, required=False, default=3)

    def validate_stages(self, value):
        if len(value) != 4:
            raise serializers.ValidationError(f"Exactly 4 stages are required, got {len(value)}.")
        return value

    def validate(self, attrs):
        if attrs['lka_dilation'] > attrs['lka_nominal_kernel']:
            raise serializers.ValidationError(
                {'lka_dilation': ['Dilation cannot exceed the nominal kernel.']}
            )
        return attrs

    def to_representation(self, instance):
        data = super().to_representation(instance)
        data['lka_variant'] = LkaVariant(instance.lka_variant).value
        return data


def variant_from_dict(data):
    serializer = VanVariantSerializer(data=data)
    if not serializer.is_valid():
        raise ConfigError(f"Invalid variant config: {json.dumps(serializer.errors)}",
                          errors=serializer.errors)
    values = dict(serializer.validated_data)
    stages = tuple(StageConfig(**dict(stage)) for stage in values.pop('stages'))
    values['lka_variant'] = LkaVariant(values['lka_variant'])
    return VanVariant(stages=stages, **values)


def variant_to_dict(variant):
    return dict(VanVariantSerializer(variant).data)


def load_variant_file(path):
    with open(path, encoding='utf-8') as handle:
        try:
            data = json.load(handle)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path} is not valid JSON: {exc}")
    variant = variant_from_dict(data)
    logger.info(f"Loaded variant '{variant.name}' from {path}")
    return variant


def save_variant_file(variant, path):
    with open(path, 'w', encoding='utf-8') as handle:
        json.dump(variant_to_dict(variant), handle, indent=2)
        handle.write('\n')


def resolve_variant(value):
    """A preset name (``B0`` ... ``B6``, ``micro``) or the path of a JSON config file."""
    if value in PRESETS:
        return PRESETS[value]
    if value.endswith('.json') or os.path.exists(value):
        return load_variant_file(value)
    raise ConfigError(f"Unknown VAN preset '{value}' (expected one of {', '.join(PRESETS)} or a .json file)")
