"""
SignalService: label and topic signals, resampling and windowing.

A label signal is one column of a camera's image-label matrix over time; a
topic signal is one component of the per-image topic proportions. Both are
irregular (frames arrive roughly every few minutes) and are put on a regular
grid by linear interpolation before any detection runs.
"""

import logging
import zoneinfo
from datetime import UTC, datetime, time, timedelta

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from app.exceptions import InputDataError
from app.models import (
    DocTopicAssignment,
    ImageLabelMatrix,
    IrregularSeries,
    RegularSeries,
    SubsequenceSet,
)

logger = logging.getLogger(__name__)

GAP_WARNING = timedelta(minutes=30)
EPOCH = datetime(1970, 1, 1, tzinfo=UTC)


def _seconds(times) -> np.ndarray:
    return np.array([(t - EPOCH).total_seconds() for t in times])


class SignalService:
    """Service for building and reshaping signals."""

    def label_signal(
        self, matrix: ImageLabelMatrix, j: int, kind: str | None = None
    ) -> IrregularSeries:
        """Weight of label ``j`` in every row of a camera's matrix."""
        if not 0 <= j < matrix.M:
            raise InputDataError(f"Label dimension {j} outside 0..{matrix.M - 1}")
        values = np.array([row.dims.get(j, 0.0) for row in matrix.rows])
        return IrregularSeries(
            camera_id=matrix.camera_id,
            kind=kind or f"label:{j}",
            times=matrix.timestamps,
            values=values,
        )

    def topic_signal(
        self,
        assignments: list[tuple[datetime, DocTopicAssignment]],
        z: int,
        camera: str,
    ) -> IrregularSeries:
        """
        Share of topic ``z`` in every image of one camera.

        Raises:
            InputDataError: z outside the model's topics
        """
        if not assignments:
            raise InputDataError(f"No topic assignments for camera {camera}")
        K = assignments[0][1].theta.shape[0]
        if not 0 <= z < K:
            raise InputDataError(f"Topic {z} outside 0..{K - 1}")
        return IrregularSeries(
            camera_id=camera,
            kind=f"topic:{z}",
            times=tuple(t for t, _ in assignments),
            values=np.array([float(a.theta[z]) for _, a in assignments]),
        )

    def combine_signals(
        self, series: list[RegularSeries], mode: str = "or"
    ) -> RegularSeries:
        """
        Pointwise combination of signals sharing one grid.

        ``or`` takes the maximum (presence of any), ``sum`` adds.
        """
        if not series:
            raise InputDataError("Nothing to combine")
        first = series[0]
        for other in series[1:]:
            if (
                other.start != first.start
                or other.interval != first.interval
                or len(other) != len(first)
            ):
                raise InputDataError("Combined signals must share a sampling grid")
        stacked = np.stack([s.values for s in series])
        if mode == "or":
            values = stacked.max(axis=0)
        elif mode == "sum":
            values = stacked.sum(axis=0)
        else:
            raise InputDataError(f"Unknown combination mode '{mode}'")
        joiner = " OR " if mode == "or" else " + "
        return RegularSeries(
            start=first.start,
            interval=first.interval,
            values=values,
            camera_id=first.camera_id,
            kind=joiner.join(s.kind for s in series),
        )

    def resample_linear(
        self,
        series: IrregularSeries,
        interval: timedelta = timedelta(minutes=5),
        align: str = "first",
    ) -> RegularSeries:
        """
        Linear interpolation onto a regular grid.

        The grid runs from the first timestamp (``align="first"``) or from
        the first wall-clock multiple of ``interval`` at or after it
        (``align="clock"``) up to the last timestamp. Nothing is
        extrapolated. Gaps longer than 30 minutes are interpolated across
        with a warning.

        Raises:
            InputDataError: fewer than two points, or no grid point in range
        """
        if len(series) < 2:
            raise InputDataError(
                f"Cannot interpolate {series.camera_id}/{series.kind}: "
                f"{len(series)} point(s)"
            )
        step = interval.total_seconds()
        if step <= 0:
            raise InputDataError("Resampling interval must be positive")

        seconds = _seconds(series.times)
        if np.any(np.diff(seconds) <= 0):
            raise InputDataError("Series timestamps must be strictly increasing")
        gaps = np.flatnonzero(np.diff(seconds) > GAP_WARNING.total_seconds())
        for g in gaps:
            logger.warning(
                f"Gap of {(seconds[g + 1] - seconds[g]) / 60:.0f} min in "
                f"{series.camera_id}/{series.kind} after {series.times[g].isoformat()}"
            )

        origin = seconds[0]
        if align == "clock":
            origin = np.ceil(origin / step) * step
        if origin > seconds[-1]:
            raise InputDataError("No grid point falls inside the series span")
        n = int(np.floor((seconds[-1] - origin) / step)) + 1
        grid = origin + step * np.arange(n)
        values = np.interp(grid, seconds, series.values)
        return RegularSeries(
            start=EPOCH + timedelta(seconds=float(origin)),
            interval=interval,
            values=values,
            camera_id=series.camera_id,
            kind=series.kind,
        )

    def downsample_mean(self, series: RegularSeries, factor: int) -> RegularSeries:
        """Average consecutive blocks of ``factor`` points; the tail block too."""
        if factor < 1 or int(factor) != factor:
            raise InputDataError(f"Downsampling factor must be a positive integer, got {factor}")
        N = len(series)
        blocks = [
            series.values[i : i + factor].mean(axis=0) for i in range(0, N, factor)
        ]
        return RegularSeries(
            start=series.start,
            interval=series.interval * factor,
            values=np.array(blocks),
            camera_id=series.camera_id,
            kind=series.kind,
        )

    def subsequences(self, series: RegularSeries, k: int) -> SubsequenceSet:
        """
        Sliding windows of length ``k`` with stride 1.

        Yields N - k vectors chi_i = [x_i, ..., x_{i+k-1}]; the last
        possible window is not included.

        Raises:
            InputDataError: N <= k
        """
        N = len(series)
        if k < 1 or N <= k:
            raise InputDataError(f"Need more than k={k} points, series has {N}")
        values = series.values
        if values.ndim == 1:
            windows = sliding_window_view(values, k)
        else:
            windows = sliding_window_view(values, k, axis=0).transpose(0, 2, 1)
        vectors = windows[: N - k].reshape(N - k, -1).copy()
        return SubsequenceSet(k=k, vectors=vectors)

    def window_partition(
        self, series: RegularSeries, window: timedelta
    ) -> list[RegularSeries]:
        """
        Consecutive non-overlapping windows; a trailing partial one is dropped.

        Raises:
            InputDataError: window not a multiple of the interval, or longer
                than the series
        """
        ratio = window / series.interval
        points = int(round(ratio))
        if points < 1 or abs(ratio - points) > 1e-9:
            raise InputDataError(
                f"Window {window} is not a positive multiple of {series.interval}"
            )
        count = len(series) // points
        if count == 0:
            raise InputDataError(f"Series of {len(series)} points is shorter than one window")
        return [
            RegularSeries(
                start=series.start + s * window,
                interval=series.interval,
                values=series.values[s * points : (s + 1) * points],
                camera_id=series.camera_id,
                kind=series.kind,
            )
            for s in range(count)
        ]

    def trim_to_midnight(self, series: RegularSeries, timezone: str = "UTC") -> RegularSeries:
        """
        Drop leading points before the first local midnight.

        The kept series starts at the first grid point at or after that
        midnight, so grids that are not clock-aligned still split into days.

        Raises:
            InputDataError: the series ends before the first local midnight
        """
        zone = zoneinfo.ZoneInfo(timezone)
        local = series.start.astimezone(zone)
        midnight = datetime.combine(local.date(), time(), tzinfo=zone)
        if midnight < local:
            midnight = datetime.combine(local.date() + timedelta(days=1), time(), tzinfo=zone)
        i = -((series.start - midnight) // series.interval)
        if i >= len(series):
            raise InputDataError(
                f"Series ends before the first local midnight {midnight.isoformat()}"
            )
        if i:
            logger.info(f"Dropped {i} points before local midnight {midnight.isoformat()}")
        return RegularSeries(
            start=series.start + i * series.interval,
            interval=series.interval,
            values=series.values[i:],
            camera_id=series.camera_id,
            kind=series.kind,
        )
