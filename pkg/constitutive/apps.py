from django.apps import AppConfig


class ConstitutiveConfig(AppConfig):
    default_auto_field = 'django.db.models.BigAutoField'
    name = 'constitutive'
