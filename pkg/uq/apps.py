from django.apps import AppConfig


class UqConfig(AppConfig):
    default_auto_field = 'django.db.models.BigAutoField'
    name = 'uq'
