"""
Tests for ConfigService: defaults, config files and overrides.
"""

from datetime import date, timedelta

import pytest

from app.exceptions import InputDataError
from app.services.config_service import ConfigService


@pytest.fixture
def config_service():
    return ConfigService()


@pytest.fixture
def config_file(tmp_path):
    def _write(text):
        path = tmp_path / "pipeline.env"
        path.write_text(text, encoding="utf-8")
        return path

    return _write


class TestDefaults:
    """The built-in defaults."""

    def test_documented_defaults(self, config_service):
        config = config_service.build()

        assert config.cutoff == 1e-4
        assert config.resample_interval == timedelta(minutes=5)
        assert config.alpha is None
        assert config.alpha_effective == pytest.approx(50 / config.topics)
        assert config.beta == 0.1
        assert config.penalty is None
        assert config.merge_window_hours == 24.0
        assert config.tolerance_hours == 12.0
        assert config.gamma == 1e-3
        assert config.k_list == [1, 2, 4, 8]
        assert config.idf_counts == "per_camera"
        assert config.perplexity_method == "plugin"

    def test_effective_spells_out_derived_values(self, config_service):
        effective = config_service.effective(config_service.build(overrides={"topics": 10}))

        assert effective["alpha_effective"] == 5.0
        assert effective["penalty_rule"] == "l2_norm/20"
        assert effective["resample_interval_seconds"] == 300.0

    def test_fixed_penalty_rule(self, config_service):
        effective = config_service.effective(config_service.build(overrides={"penalty": 2.5}))
        assert effective["penalty_rule"] == "fixed"


class TestPrecedence:
    """Config file over defaults, overrides over both."""

    def test_file_then_overrides(self, config_service, config_file):
        path = config_file("CUTOFF=0.01\nTOPICS=5\nK_LIST=1,3\n")

        config = config_service.build(path, overrides={"cutoff": 0.2, "topics": None})

        assert config.cutoff == 0.2
        assert config.topics == 5
        assert config.k_list == [1, 3]

    def test_nullable_keys(self, config_service, config_file):
        path = config_file("alpha=none\nreference_start=2021-01-04\n")
        config = config_service.build(path)
        assert config.alpha is None
        assert config.reference_start == date(2021, 1, 4)

    def test_unknown_key_in_file(self, config_service, config_file):
        with pytest.raises(InputDataError, match="Unknown config key"):
            config_service.build(config_file("TOPICZ=5\n"))

    def test_unknown_override(self, config_service):
        with pytest.raises(InputDataError, match="Unknown config key"):
            config_service.build(overrides={"nope": 1})

    def test_missing_file(self, config_service, tmp_path):
        with pytest.raises(InputDataError, match="not found"):
            config_service.build(tmp_path / "missing.env")

    @pytest.mark.parametrize(
        "overrides",
        [
            {"align": "sideways"},
            {"cutoff": 1.5},
            {"timezone": "Mars/Olympus"},
            {"storm_kinds": ["meteor"]},
            {"resample_minutes": 0},
            {"perplexity_method": "exact"},
        ],
    )
    def test_invalid_values(self, config_service, overrides):
        with pytest.raises(InputDataError, match="Invalid configuration"):
            config_service.build(overrides=overrides)
