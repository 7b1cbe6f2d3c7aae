"""
Basic tests to verify the project wiring.
"""

from django.core.management import get_commands

PIPELINE_COMMANDS = {
    "synth",
    "ingest",
    "select_k",
    "fit",
    "signals",
    "changepoint",
    "anomaly",
    "report",
}


def test_pytest_working():
    """Verify pytest is working."""
    assert True


def test_django_settings_loaded():
    """Settings load without a database."""
    from django.conf import settings

    assert settings.DATABASES == {}
    assert "app" in settings.INSTALLED_APPS
    assert settings.TOPIC_SIGNALS["resample_minutes"] == 5


def test_pipeline_commands_registered():
    """Every stage is a management command of the app."""
    commands = get_commands()
    assert PIPELINE_COMMANDS <= set(commands)
    assert all(commands[name] == "app" for name in PIPELINE_COMMANDS)
