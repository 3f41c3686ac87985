"""
Settings access for van_lka.

Host projects override any default through a ``VAN_LKA`` dict in their
Django settings; the console script and the test package fall back to
``configure_standalone()``.
"""

from django.conf import settings

DEFAULTS = {
    'DEFAULT_PRECISION': 'float32',
    'CHECK_PRECISION': 'float64',
    'BN_EPS': 1e-5,
    'IMAGE_MEAN': (0.485, 0.456, 0.406),
    'IMAGE_STD': (0.229, 0.224, 0.225),
    'CHECKPOINT_VERSION': 1,
    'GRADCHECK_MAX_ENTRIES': 24,
    'TRAIN_DEMO_LR': 0.01,
}


def van_settings():
    """Return the effective VAN_LKA configuration (defaults + overrides)."""
    config = dict(DEFAULTS)
    if settings.configured:
        config.update(getattr(settings, 'VAN_LKA', {}))
    return config


def get_setting(key):
    return van_settings()[key]


def configure_standalone(**overrides):
    """Configure a minimal Django environment if no host settings exist."""
    import django

    if not settings.configured:
        settings.configure(
            DEBUG=False,
            INSTALLED_APPS=['rest_framework', 'van_lka'],
            DATABASES={},
            USE_TZ=True,
            VAN_LKA=overrides,
        )
        django.setup()
