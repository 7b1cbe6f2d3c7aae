from django.apps import AppConfig


class TopicSignalsConfig(AppConfig):
    default_auto_field = "django.db.models.BigAutoField"
    name = "app"
    verbose_name = "Topic signals"
