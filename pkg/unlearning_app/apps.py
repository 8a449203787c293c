from django.apps import AppConfig


class UnlearningAppConfig(AppConfig):
    default_auto_field = 'django.db.models.BigAutoField'
    name = 'unlearning_app'
    verbose_name = 'Certified unlearning experiments'
