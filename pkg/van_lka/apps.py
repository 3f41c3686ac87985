from django.apps import AppConfig


class VanLkaConfig(AppConfig):
    default_auto_field = 'django.db.models.BigAutoField'
    name = 'van_lka'
    verbose_name = 'VAN Large Kernel Attention'
