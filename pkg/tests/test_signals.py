"""
Tests for SignalService: signal construction, resampling and windowing.
"""

from datetime import UTC, datetime, timedelta

import numpy as np
import pytest

from app.exceptions import InputDataError
from app.models import (
    BagVector,
    DocTopicAssignment,
    ImageLabelMatrix,
    IrregularSeries,
    RegularSeries,
)
from app.services.signal_service import SignalService

T0 = datetime(2021, 1, 4, tzinfo=UTC)


def irregular(minutes, values, kind="topic:0"):
    return IrregularSeries(
        camera_id="cam",
        kind=kind,
        times=tuple(T0 + timedelta(minutes=m) for m in minutes),
        values=np.asarray(values, dtype=float),
    )


def regular(values, interval=timedelta(minutes=5), start=T0):
    return RegularSeries(start=start, interval=interval, values=np.asarray(values, dtype=float))


@pytest.fixture
def signal_service():
    return SignalService()


class TestBuildSignals:
    """Tests for label_signal, topic_signal and combine_signals."""

    def test_label_signal_reads_column(self, signal_service):
        matrix = ImageLabelMatrix(
            camera_id="cam",
            timestamps=(T0, T0 + timedelta(minutes=3)),
            rows=(BagVector(dims={1: 0.7}), BagVector(dims={0: 1.0})),
            M=2,
        )
        series = signal_service.label_signal(matrix, 1)
        assert series.values.tolist() == [0.7, 0.0]
        assert series.times == matrix.timestamps

    def test_label_signal_rejects_bad_dimension(self, signal_service):
        matrix = ImageLabelMatrix(camera_id="cam", timestamps=(), rows=(), M=2)
        with pytest.raises(InputDataError):
            signal_service.label_signal(matrix, 2)

    def test_topic_signal(self, signal_service):
        assignments = [
            (T0, DocTopicAssignment(theta=np.array([0.2, 0.8]))),
            (T0 + timedelta(minutes=3), DocTopicAssignment(theta=np.array([0.6, 0.4]))),
        ]
        series = signal_service.topic_signal(assignments, 1, "cam")
        assert series.values.tolist() == [0.8, 0.4]
        assert series.kind == "topic:1"

    def test_topic_out_of_range(self, signal_service):
        assignments = [(T0, DocTopicAssignment(theta=np.array([0.5, 0.5])))]
        with pytest.raises(InputDataError):
            signal_service.topic_signal(assignments, 2, "cam")

    def test_combine_or_and_sum(self, signal_service):
        a, b = regular([0.0, 1.0, 0.5]), regular([0.2, 0.0, 0.5])
        assert signal_service.combine_signals([a, b], "or").values.tolist() == [0.2, 1.0, 0.5]
        assert signal_service.combine_signals([a, b], "sum").values.tolist() == [0.2, 1.0, 1.0]

    def test_combine_requires_shared_grid(self, signal_service):
        with pytest.raises(InputDataError):
            signal_service.combine_signals([regular([0, 1]), regular([0, 1, 2])])


class TestResample:
    """Tests for resample_linear and downsample_mean."""

    def test_linear_interpolation(self, signal_service):
        """Values between frames are linear; the grid starts at the first frame."""
        series = signal_service.resample_linear(irregular([0, 3, 10], [0.0, 0.6, 0.6]))

        assert series.start == T0
        assert series.interval == timedelta(minutes=5)
        assert series.values == pytest.approx([0.0, 0.6, 0.6])

    def test_constant_input_stays_constant(self, signal_service):
        series = signal_service.resample_linear(irregular([0, 2, 7, 13, 21], [0.3] * 5))
        assert np.allclose(series.values, 0.3)

    def test_no_extrapolation(self, signal_service):
        """The grid never passes the last timestamp."""
        series = signal_service.resample_linear(irregular([0, 12], [0.0, 1.2]))
        assert len(series) == 3
        assert series.times[-1] <= T0 + timedelta(minutes=12)

    def test_clock_alignment(self, signal_service):
        series = signal_service.resample_linear(irregular([2, 12], [0.0, 1.0]), align="clock")
        assert series.start == T0 + timedelta(minutes=5)
        assert series.values[0] == pytest.approx(0.3)

    def test_gap_warning(self, signal_service, caplog):
        signal_service.resample_linear(irregular([0, 45], [0.0, 1.0]))
        assert "Gap of 45 min" in caplog.text

    def test_needs_two_points(self, signal_service):
        with pytest.raises(InputDataError):
            signal_service.resample_linear(irregular([0], [1.0]))

    def test_downsample_mean(self, signal_service):
        """Blocks are averaged, the partial tail too."""
        series = signal_service.downsample_mean(regular([1, 2, 3, 4, 5, 6, 7]), 3)
        assert series.values.tolist() == [2.0, 5.0, 7.0]
        assert series.interval == timedelta(minutes=15)


class TestSubsequences:
    """Tests for subsequences, window_partition and trim_to_midnight."""

    def test_windows_of_length_k(self, signal_service):
        """N - k windows; the last possible window is left out."""
        subs = signal_service.subsequences(regular([0, 1, 2, 3, 4]), 2)
        assert subs.vectors.tolist() == [[0, 1], [1, 2], [2, 3]]

    def test_k_one(self, signal_service):
        subs = signal_service.subsequences(regular([5, 6, 7]), 1)
        assert subs.vectors.tolist() == [[5], [6]]

    def test_multichannel_flattening(self, signal_service):
        """Each window stacks k consecutive m-channel points."""
        values = np.array([[0, 10], [1, 11], [2, 12], [3, 13]])
        subs = signal_service.subsequences(regular(values), 2)
        assert subs.vectors.shape == (2, 4)
        assert subs.vectors[0].tolist() == [0, 10, 1, 11]

    def test_series_not_longer_than_k(self, signal_service):
        with pytest.raises(InputDataError):
            signal_service.subsequences(regular([0, 1]), 2)

    def test_window_partition_drops_partial_tail(self, signal_service):
        windows = signal_service.window_partition(
            regular(np.arange(10)), timedelta(minutes=15)
        )
        assert len(windows) == 3
        assert windows[1].start == T0 + timedelta(minutes=15)
        assert windows[2].values.tolist() == [6, 7, 8]

    def test_window_must_be_multiple(self, signal_service):
        with pytest.raises(InputDataError):
            signal_service.window_partition(regular(np.arange(10)), timedelta(minutes=7))

    def test_trim_to_midnight(self, signal_service):
        series = regular(np.arange(6), interval=timedelta(hours=1), start=T0 - timedelta(hours=2))
        trimmed = signal_service.trim_to_midnight(series)
        assert trimmed.start == T0
        assert trimmed.values.tolist() == [2, 3, 4, 5]

    def test_trim_off_grid_start(self, signal_service):
        series = regular(
            np.arange(6), interval=timedelta(hours=1), start=T0 - timedelta(minutes=90)
        )
        trimmed = signal_service.trim_to_midnight(series)
        assert trimmed.start == T0 + timedelta(minutes=30)
        assert trimmed.values.tolist() == [2, 3, 4, 5]

    def test_trim_without_midnight(self, signal_service):
        series = regular(np.arange(3), start=T0 + timedelta(minutes=1))
        with pytest.raises(InputDataError, match="midnight"):
            signal_service.trim_to_midnight(series)
