from django.apps import AppConfig


class RandomfieldsConfig(AppConfig):
    default_auto_field = 'django.db.models.BigAutoField'
    name = 'randomfields'
