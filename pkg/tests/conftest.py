"""
Pytest configuration and shared fixtures for topic-signals tests.
"""

import json
from datetime import UTC, datetime

import numpy as np
import pytest

pytest_plugins = ["pytest_django"]

START = datetime(2021, 1, 4, tzinfo=UTC)


@pytest.fixture
def rng():
    """Seeded generator for test data."""
    return np.random.default_rng(12345)


@pytest.fixture
def start():
    """A Monday midnight (UTC) that synthetic streams start from."""
    return START


@pytest.fixture
def write_jsonl(tmp_path):
    """Write annotation dicts (or raw strings) as a .jsonl file."""

    def _write(lines, name="annotations.jsonl"):
        path = tmp_path / name
        path.write_text(
            "\n".join(line if isinstance(line, str) else json.dumps(line) for line in lines)
            + "\n",
            encoding="utf-8",
        )
        return path

    return _write


@pytest.fixture
def small_spec_data():
    """
    Generator spec for a short two-camera stream with one injected event.

    Two block topics of four labels each; the first camera switches from
    topic 0 to topic 1 halfway through the second day.
    """
    return {
        "start": "2021-01-04T00:00:00Z",
        "duration_hours": 72,
        "cameras": ["cam-a", "cam-b"],
        "frame_interval_minutes": 15,
        "labels_per_image": 4,
        "topics": 2,
        "labels_per_topic": 4,
        "keyframes": [{"offset_hours": 0, "mixture": [0.9, 0.1]}],
        "events": [
            {
                "camera": "cam-a",
                "start": "2021-01-05T12:00:00Z",
                "end": "2021-01-06T00:00:00Z",
                "kind": "snow",
                "mixture": [0.0, 1.0],
            }
        ],
        "seed": 7,
    }


@pytest.fixture
def spec_file(tmp_path, small_spec_data):
    path = tmp_path / "spec.json"
    path.write_text(json.dumps(small_spec_data), encoding="utf-8")
    return path
