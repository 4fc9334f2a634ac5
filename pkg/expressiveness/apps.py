from django.apps import AppConfig


class ExpressivenessConfig(AppConfig):
    name = 'expressiveness'
    verbose_name = 'WL expressiveness'
