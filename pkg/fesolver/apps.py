from django.apps import AppConfig


class FesolverConfig(AppConfig):
    default_auto_field = 'django.db.models.BigAutoField'
    name = 'fesolver'
