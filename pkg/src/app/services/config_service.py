"""
ConfigService: merges and validates pipeline configuration.

Precedence, lowest first:
1. ``settings.TOPIC_SIGNALS`` (environment-backed defaults)
2. A dotenv-style ``KEY=value`` config file
3. Command-line overrides (``None`` means "not given")

The merged mapping is validated by PipelineConfigSerializer and returned
as a PipelineConfig.
"""

import copy
import logging
from dataclasses import asdict
from pathlib import Path

from django.conf import settings
from dotenv import dotenv_values

from app.exceptions import InputDataError
from app.models import PipelineConfig
from app.serializers import PipelineConfigSerializer

logger = logging.getLogger(__name__)

LIST_KEYS = {
    "exclusions",
    "label_sources",
    "k_grid",
    "storm_kinds",
    "k_list",
    "sigma_scales",
    "lambda_grid",
    "anomaly_kinds",
}
NULLABLE_KEYS = {"alpha", "penalty", "reference_start"}


class ConfigService:
    """Service for building the effective PipelineConfig."""

    def defaults(self) -> dict:
        return copy.deepcopy(settings.TOPIC_SIGNALS)

    def read_config_file(self, path: str | Path) -> dict:
        """
        Read a ``KEY=value`` config file.

        Keys are case-insensitive; list keys take comma-separated values and
        ``none``/empty clears a nullable key.

        Raises:
            InputDataError: file missing or naming an unknown key
        """
        path = Path(path)
        if not path.exists():
            raise InputDataError(f"Config file not found: {path}")
        raw = dotenv_values(path)
        known = set(settings.TOPIC_SIGNALS)
        values = {}
        for key, value in raw.items():
            name = key.strip().lower()
            if name not in known:
                raise InputDataError(f"Unknown config key '{key}' in {path}")
            values[name] = self._coerce(name, value)
        logger.debug(f"Read {len(values)} config keys from {path}")
        return values

    def _coerce(self, name: str, value: str | None):
        text = (value or "").strip()
        if name in NULLABLE_KEYS and text.lower() in ("", "none", "null"):
            return None
        if name in LIST_KEYS:
            return [item.strip() for item in text.split(",") if item.strip()]
        return text

    def build(
        self, config_path: str | Path | None = None, overrides: dict | None = None
    ) -> PipelineConfig:
        """
        Merge defaults, config file and overrides, then validate.

        Args:
            config_path: Optional dotenv-style config file
            overrides: Command-line values; ``None`` entries are ignored

        Returns:
            Validated PipelineConfig

        Raises:
            InputDataError: invalid values
        """
        merged = self.defaults()
        if config_path:
            merged.update(self.read_config_file(config_path))
        for key, value in (overrides or {}).items():
            if value is None:
                continue
            if key not in merged:
                raise InputDataError(f"Unknown config key '{key}'")
            merged[key] = self._coerce(key, value) if isinstance(value, str) else value

        serializer = PipelineConfigSerializer(data=merged)
        if not serializer.is_valid():
            raise InputDataError(f"Invalid configuration: {serializer.errors}")
        return PipelineConfig(**serializer.validated_data)

    def effective(self, config: PipelineConfig) -> dict:
        """
        JSON-ready echo of a config, with derived defaults spelled out.

        ``alpha_effective`` is 50/K when alpha is unset; ``penalty_rule``
        records whether the change-point penalty is derived per signal.
        """
        data = dict(PipelineConfigSerializer(asdict(config)).data)
        data["alpha_effective"] = config.alpha_effective
        data["penalty_rule"] = "l2_norm/20" if config.penalty is None else "fixed"
        data["resample_interval_seconds"] = config.resample_interval.total_seconds()
        return data
