"""
Shared plumbing for the pipeline management commands.
"""

import logging

from django.core.management.base import BaseCommand, CommandError

from app.exceptions import TopicSignalError
from app.models import PipelineConfig
from app.services.artifact_service import ArtifactService
from app.services.config_service import ConfigService

logger = logging.getLogger(__name__)


def comma_list(value: str) -> list[str]:
    return [item.strip() for item in value.split(",") if item.strip()]


class PipelineCommand(BaseCommand):
    """
    Base for commands that run one pipeline stage.

    Subclasses declare ``config_options`` (option dest -> config key) and
    ``seed_key`` (the named seed ``--seed`` overrides), and implement
    ``run(config, artifacts, **options)``. Pipeline errors leave through
    CommandError with the error's exit code.
    """

    config_options: dict[str, str] = {}
    seed_key: str | None = None
    echo_config = True

    def add_arguments(self, parser):
        """Add the common arguments, then the command's own."""
        parser.add_argument(
            "--config",
            default=None,
            help="KEY=value pipeline config file",
        )
        parser.add_argument(
            "--workdir",
            default=None,
            help="Artifact directory (default: settings TOPIC_SIGNALS workdir)",
        )
        parser.add_argument(
            "--seed",
            type=int,
            default=None,
            help="Override this command's named seed",
        )
        self.add_command_arguments(parser)

    def add_command_arguments(self, parser):
        pass

    def config_overrides(self, options: dict) -> dict:
        overrides = {
            key: options.get(dest) for dest, key in self.config_options.items()
        }
        overrides["workdir"] = options.get("workdir")
        if self.seed_key:
            overrides[self.seed_key] = options.get("seed")
        return overrides

    def handle(self, *args, **options):
        """Execute the command."""
        config_service = ConfigService()
        try:
            config = config_service.build(
                options.get("config"), self.config_overrides(options)
            )
            artifacts = ArtifactService(config.workdir)
            if self.echo_config:
                artifacts.write_json(
                    artifacts.path("effective_config.json"),
                    config_service.effective(config),
                )
            self.run(config, artifacts, **options)
        except TopicSignalError as e:
            logger.error(f"{self.__module__.rsplit('.', 1)[-1]} failed: {e}")
            raise CommandError(str(e), returncode=e.exit_code) from e

    def run(self, config: PipelineConfig, artifacts: ArtifactService, **options):
        raise NotImplementedError

    def success(self, message: str):
        self.stdout.write(self.style.SUCCESS(f"✓ {message}"))
