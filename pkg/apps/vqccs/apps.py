"""
VQC-CS app configuration.
"""
from django.apps import AppConfig


class VqccsConfig(AppConfig):
    default_auto_field = 'django.db.models.BigAutoField'
    name = 'apps.vqccs'
    verbose_name = 'Variational quantum compressed sensing'
