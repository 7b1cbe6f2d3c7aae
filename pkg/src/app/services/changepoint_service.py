"""
ChangepointService: penalized mean-change segmentation and event scoring.

The objective is sum_r C(segment_r) + R * B over all segmentations, where
C is the L2 norm (not squared) of a segment's deviations from its mean and
R the number of change points. It is solved exactly by optimal partitioning
in O(N^2) with prefix sums.

Change points are then paired into events (start, end), ranked by the size
of the mean shift at their start, and matched against a date calendar with
a tolerance around each truth day.
"""

import logging
import math
import zoneinfo
from datetime import datetime, time, timedelta

import numpy as np

from app.exceptions import InputDataError
from app.models import (
    ChangePointResult,
    DetectionEvent,
    EventCalendar,
    MatchCounts,
    Metrics,
    RegularSeries,
)

logger = logging.getLogger(__name__)


class ChangepointService:
    """Service for change-point segmentation and event validation."""

    def _as_matrix(self, values: np.ndarray) -> np.ndarray:
        values = np.asarray(values, dtype=float)
        if values.ndim == 1:
            values = values[:, np.newaxis]
        return values - values.mean(axis=0)

    def segment_cost(self, values: np.ndarray) -> float:
        """L2 norm of deviations from the segment mean."""
        x = np.asarray(values, dtype=float)
        return float(np.sqrt(np.sum((x - x.mean(axis=0)) ** 2)))

    def default_penalty(self, series: RegularSeries, centered: bool = False) -> float:
        """
        B = ||X||_2 / 20.

        ``centered`` subtracts the mean first, which makes B (and so the
        segmentation) invariant under shifting and scaling the signal.
        """
        values = np.asarray(series.values, dtype=float)
        if centered:
            values = values - values.mean(axis=0)
        return float(np.linalg.norm(values)) / 20.0

    def detect_changepoints(
        self, series: RegularSeries, B: float, pruning: bool = False
    ) -> ChangePointResult:
        """
        Globally optimal segmentation by dynamic programming.

        F[0] = -B and F[t] = min_s F[s] + C(s, t) + B, so F[N] is the
        objective with R change points. Ties go to the earliest s.

        Args:
            series: Regular (possibly multichannel) series, N >= 2
            B: Penalty per change point
            pruning: Drop candidates s with F[s] + C(s, t) > F[t]. Faster,
                but not guaranteed exact for the unsquared cost.

        Returns:
            ChangePointResult

        Raises:
            InputDataError: N < 2 or B < 0
        """
        X = self._as_matrix(series.values)
        N = X.shape[0]
        if N < 2:
            raise InputDataError(f"Segmentation needs at least 2 points, got {N}")
        if B < 0:
            raise InputDataError(f"Penalty must be non-negative, got {B}")

        S1 = np.vstack([np.zeros(X.shape[1]), np.cumsum(X, axis=0)])
        S2 = np.concatenate([[0.0], np.cumsum(np.sum(X**2, axis=1))])

        F = np.empty(N + 1)
        F[0] = -B
        last = np.zeros(N + 1, dtype=np.int64)
        candidates = np.array([0], dtype=np.int64)
        for t in range(1, N + 1):
            s = candidates
            length = (t - s)[:, np.newaxis]
            sums = S1[t] - S1[s]
            sse = (S2[t] - S2[s]) - np.sum(sums**2 / length, axis=1)
            cost = np.sqrt(np.maximum(sse, 0.0))
            total = F[s] + cost + B
            best = int(np.argmin(total))
            F[t] = total[best]
            last[t] = s[best]
            if pruning:
                candidates = s[F[s] + cost <= F[t]]
            candidates = np.append(candidates, t)

        rho = []
        t = N
        while t > 0:
            s = int(last[t])
            if s > 0:
                rho.append(s)
            t = s
        rho.reverse()

        bounds = [0, *rho, N]
        raw = np.asarray(series.values, dtype=float)
        means = [
            np.atleast_1d(raw[a:b].mean(axis=0))
            for a, b in zip(bounds, bounds[1:], strict=False)
        ]
        total_cost = sum(
            self.segment_cost(raw[a:b]) for a, b in zip(bounds, bounds[1:], strict=False)
        ) + len(rho) * B
        logger.debug(f"Segmentation of {N} points: {len(rho)} change points at B={B:.6g}")
        return ChangePointResult(
            rho=rho, B=float(B), total_cost=float(total_cost), segment_means=means
        )

    def objective(self, series: RegularSeries, rho: list[int], B: float) -> float:
        """Objective value of an arbitrary set of change points."""
        raw = np.asarray(series.values, dtype=float)
        bounds = [0, *sorted(rho), len(raw)]
        return sum(
            self.segment_cost(raw[a:b]) for a, b in zip(bounds, bounds[1:], strict=False)
        ) + len(rho) * B

    def pair_events(
        self,
        result: ChangePointResult,
        series: RegularSeries,
        merge_window: timedelta = timedelta(hours=24),
        top_n: int = 8,
    ) -> list[DetectionEvent]:
        """
        Pair change points into events.

        Each event starts at an unused change point and ends at the next
        one; further change points within ``merge_window`` of the start are
        absorbed and move the end. A final unpaired start gives an open
        event. The ``top_n`` events with the largest mean shift at their
        start are kept, returned in time order. The shift is the L2 norm of
        the change in per-channel means.
        """
        times = [series.start + r * series.interval for r in result.rho]
        events = []
        i = 0
        while i < len(times):
            start = times[i]
            before, after = result.segment_means[i], result.segment_means[i + 1]
            magnitude = float(np.linalg.norm(np.atleast_1d(after) - np.atleast_1d(before)))
            if i + 1 >= len(times):
                events.append(DetectionEvent(start=start, end=None, magnitude=magnitude))
                break
            j = i + 1
            while j + 1 < len(times) and times[j + 1] <= start + merge_window:
                j += 1
            events.append(DetectionEvent(start=start, end=times[j], magnitude=magnitude))
            i = j + 1

        ranked = sorted(events, key=lambda e: (-e.magnitude, e.start))[:top_n]
        return sorted(ranked, key=lambda e: e.start)

    def match_events(
        self,
        detected: list[DetectionEvent],
        truth: EventCalendar,
        tolerance: timedelta = timedelta(hours=12),
        kinds=None,
        timezone: str = "UTC",
    ) -> MatchCounts:
        """
        Count hits against a calendar of truth days.

        A truth day covers [midnight - tolerance, next midnight + tolerance)
        in ``timezone``. Detections are taken in time order and each claims
        the earliest unclaimed truth day containing its start.
        """
        zone = zoneinfo.ZoneInfo(timezone)
        days = truth.days(kinds)
        spans = []
        for day in days:
            midnight = datetime.combine(day, time(0), tzinfo=zone)
            spans.append((midnight - tolerance, midnight + timedelta(days=1) + tolerance))

        claimed = [False] * len(spans)
        tp = 0
        for event in sorted(detected, key=lambda e: e.start):
            for d, (lo, hi) in enumerate(spans):
                if not claimed[d] and lo <= event.start < hi:
                    claimed[d] = True
                    tp += 1
                    break
        return MatchCounts(tp=tp, fp=len(detected) - tp, fn=len(spans) - tp)

    def precision_recall_f1(self, counts: MatchCounts) -> Metrics:
        """Precision, recall and F1 = 2PR/(P+R); undefined ratios are 0."""
        prec = counts.tp / (counts.tp + counts.fp) if counts.tp + counts.fp else 0.0
        rec = counts.tp / (counts.tp + counts.fn) if counts.tp + counts.fn else 0.0
        f1 = 2 * prec * rec / (prec + rec) if prec + rec else 0.0
        return Metrics(prec=prec, rec=rec, f1=f1)

    def resolve_penalty(self, series: RegularSeries, penalty: float | None) -> float:
        B = self.default_penalty(series) if penalty is None else penalty
        if not math.isfinite(B):
            raise InputDataError(f"Penalty is not finite: {B}")
        return B
