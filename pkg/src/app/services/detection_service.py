"""
DetectionService: RPDAS anomaly scoring and threshold evaluation.

Flow:
1. A regular signal is trimmed to the first local midnight and cut into
   24-hour windows.
2. Reference windows (nominal days) are chosen; every other window is a
   test window.
3. Each window becomes a set of length-k subsequences; a test window's
   score is its mean symmetrized RP divergence to every reference window.
4. A threshold sweep over the scores gives precision/recall against the
   truth calendar, the PR AUC and the best-F1 threshold.
"""

import logging
import math
import zoneinfo
from datetime import date, datetime, timedelta

import numpy as np
from scipy.integrate import trapezoid

from app.exceptions import InputDataError
from app.models import (
    AnomalyScoreSeries,
    AnomalyWindow,
    DetectionReport,
    EventCalendar,
    MatchCounts,
    PRCurve,
    PRPoint,
    RegularSeries,
    SubsequenceSet,
)
from app.services.ratio_service import RatioService
from app.services.signal_service import SignalService

logger = logging.getLogger(__name__)

DAY = timedelta(days=1)


class DetectionService:
    """Service for anomaly scoring and PR evaluation."""

    def __init__(
        self,
        ratio_service: RatioService | None = None,
        timezone: str = "UTC",
    ):
        """
        Args:
            ratio_service: Configured RatioService (gamma, CV grids, seed)
            timezone: IANA zone that defines calendar days
        """
        self.ratio_service = ratio_service or RatioService()
        self.signal_service = SignalService()
        self.timezone = timezone
        self.zone = zoneinfo.ZoneInfo(timezone)

    def day_of(self, instant: datetime) -> date:
        return instant.astimezone(self.zone).date()

    # ------------------------------------------------------------------
    # scoring
    # ------------------------------------------------------------------

    def rpdas_series(
        self,
        test_windows: list[tuple[datetime, SubsequenceSet]],
        reference_windows: list[SubsequenceSet],
        gamma: float | None = None,
    ) -> AnomalyScoreSeries:
        """
        Mean symmetrized RP divergence of each test window to the references.

        Args:
            test_windows: (window start, subsequences) pairs
            reference_windows: Nominal subsequence sets, at least one
            gamma: Relative-density mixture weight

        Returns:
            AnomalyScoreSeries; empty test windows are skipped with a warning

        Raises:
            InputDataError: no references, or mismatched dimensions
        """
        gamma = self.ratio_service.gamma if gamma is None else gamma
        references = [ref for ref in reference_windows if len(ref)]
        if not references:
            raise InputDataError("At least one nonempty reference window is required")
        dims = {ref.vectors.shape[1] for ref in references}
        dims |= {subs.vectors.shape[1] for _, subs in test_windows if len(subs)}
        if len(dims) != 1:
            raise InputDataError(f"Windows differ in subsequence dimension: {sorted(dims)}")
        k = references[0].k

        windows = []
        for start, subs in test_windows:
            if len(subs) == 0:
                logger.warning(f"Skipping empty window starting {start.isoformat()}")
                continue
            divergences = [
                self.ratio_service.symmetrized_rp(subs.vectors, ref.vectors, gamma=gamma)
                for ref in references
            ]
            score = math.fsum(divergences) / len(divergences)
            windows.append(AnomalyWindow(start=start, size=len(subs), score=score))
            logger.debug(f"RPDAS k={k} {start.date()}: {score:.4f}")
        return AnomalyScoreSeries(k=k, gamma=gamma, windows=tuple(windows))

    def day_windows(self, series: RegularSeries) -> list[RegularSeries]:
        trimmed = self.signal_service.trim_to_midnight(series, self.timezone)
        return self.signal_service.window_partition(trimmed, DAY)

    def split_reference(
        self,
        windows: list[RegularSeries],
        reference_start: date | None = None,
        reference_days: int = 7,
    ) -> tuple[list[RegularSeries], list[RegularSeries]]:
        """
        Separate nominal reference days from test days.

        References are ``reference_days`` consecutive windows starting at
        ``reference_start`` (default: the first window).

        Raises:
            InputDataError: reference range missing from the signal, or no
                test windows left
        """
        days = [self.day_of(w.start) for w in windows]
        first = days.index(reference_start) if reference_start in days else None
        if reference_start is None:
            first = 0
        if first is None:
            raise InputDataError(f"Reference start {reference_start} is not a day of the signal")
        if first + reference_days > len(windows):
            raise InputDataError(
                f"Signal has {len(windows)} days; cannot take {reference_days} "
                f"reference days from {days[first]}"
            )
        chosen = set(range(first, first + reference_days))
        references = [w for i, w in enumerate(windows) if i in chosen]
        tests = [w for i, w in enumerate(windows) if i not in chosen]
        if not tests:
            raise InputDataError("No test days remain after choosing references")
        return references, tests

    def score_signal(
        self,
        series: RegularSeries,
        k: int,
        reference_start: date | None = None,
        reference_days: int = 7,
    ) -> AnomalyScoreSeries:
        """Score every non-reference day of a signal for subsequence length k."""
        references, tests = self.split_reference(
            self.day_windows(series), reference_start, reference_days
        )
        reference_sets = [self.signal_service.subsequences(w, k) for w in references]
        test_sets = [(w.start, self.signal_service.subsequences(w, k)) for w in tests]
        logger.info(
            f"Scoring {len(test_sets)} days of {series.camera_id}/{series.kind} "
            f"against {len(reference_sets)} references, k={k}"
        )
        return self.rpdas_series(test_sets, reference_sets)

    # ------------------------------------------------------------------
    # evaluation
    # ------------------------------------------------------------------

    def detect_days(self, scores: AnomalyScoreSeries, tau: float) -> list[date]:
        """Days whose score is strictly above ``tau``, sorted."""
        return sorted(self.day_of(w.start) for w in scores.windows if w.score > tau)

    def truth_days(
        self, scores: AnomalyScoreSeries, truth: EventCalendar, kinds=None
    ) -> list[date]:
        scored = {self.day_of(w.start) for w in scores.windows}
        return [day for day in truth.days(kinds) if day in scored]

    def null_precision(self, truth_days: list[date], scored_days: list[date]) -> float:
        """Precision of flagging every day: the event prevalence."""
        if not scored_days:
            return 0.0
        return len(set(truth_days) & set(scored_days)) / len(set(scored_days))

    def tau_grid(self, scores: AnomalyScoreSeries, size: int = 200) -> list[float]:
        """Even grid over [0, 1/gamma] plus 0 and every observed score."""
        observed = [w.score for w in scores.windows]
        upper = 1.0 / scores.gamma if scores.gamma > 0 else max(observed, default=1.0)
        grid = set(np.linspace(0.0, upper, size).tolist()) | {0.0} | set(observed)
        return sorted(grid)

    def _counts(self, flagged: list[date], truth: set[date]) -> MatchCounts:
        tp = len(truth.intersection(flagged))
        return MatchCounts(tp=tp, fp=len(flagged) - tp, fn=len(truth) - tp)

    def sweep_thresholds(
        self,
        scores: AnomalyScoreSeries,
        truth: EventCalendar,
        taus: list[float] | None = None,
        kinds=None,
        tau_grid_size: int = 200,
    ) -> PRCurve:
        """
        Precision and recall at every threshold, with PR AUC and best F1.

        Points with identical (precision, recall) keep the smallest tau.
        Thresholds flagging nothing get precision 0. The AUC integrates
        precision over recall with the trapezoid rule on points with
        recall > 0, anchored at recall 0 with the precision of the
        lowest-recall point and closed at (1, prevalence) when recall 1 is
        never reached.

        Raises:
            InputDataError: no truth day falls on a scored day
        """
        truth_set = set(self.truth_days(scores, truth, kinds))
        if not truth_set:
            raise InputDataError("No truth events fall on scored days; recall is undefined")
        scored_days = [self.day_of(w.start) for w in scores.windows]
        prevalence = self.null_precision(sorted(truth_set), scored_days)

        thresholds = sorted(set(taus if taus is not None else self.tau_grid(scores, tau_grid_size)))
        points = []
        seen = set()
        for tau in thresholds:
            counts = self._counts(self.detect_days(scores, tau), truth_set)
            flagged = counts.tp + counts.fp
            precision = counts.tp / flagged if flagged else 0.0
            recall = counts.tp / len(truth_set)
            if (precision, recall) in seen:
                continue
            seen.add((precision, recall))
            points.append(PRPoint(tau=float(tau), precision=precision, recall=recall))

        best_tau, best_f1 = points[0].tau, -1.0
        for point in points:
            total = point.precision + point.recall
            f1 = 2 * point.precision * point.recall / total if total else 0.0
            if f1 > best_f1:
                best_tau, best_f1 = point.tau, f1

        return PRCurve(
            points=tuple(points),
            auc=self.pr_auc(points, prevalence),
            best_tau=best_tau,
            best_f1=best_f1,
            prevalence=prevalence,
        )

    def pr_auc(self, points: list[PRPoint], prevalence: float) -> float:
        ranked = sorted(
            ((p.recall, p.precision) for p in points if p.recall > 0),
            key=lambda rp: (rp[0], -rp[1]),
        )
        if not ranked:
            return 0.0
        curve = [(0.0, ranked[0][1]), *ranked]
        if ranked[-1][0] < 1.0:
            curve.append((1.0, prevalence))
        recall = np.array([r for r, _ in curve])
        precision = np.array([p for _, p in curve])
        return float(np.clip(trapezoid(precision, recall), 0.0, 1.0))

    def evaluate(
        self,
        scores: AnomalyScoreSeries,
        truth: EventCalendar,
        kinds=None,
        tau_grid_size: int = 200,
    ) -> DetectionReport:
        """Sweep, then summarize the detections at the best threshold."""
        curve = self.sweep_thresholds(
            scores, truth, kinds=kinds, tau_grid_size=tau_grid_size
        )
        truth_set = set(self.truth_days(scores, truth, kinds))
        detected = self.detect_days(scores, curve.best_tau)
        return DetectionReport(
            k=scores.k,
            curve=curve,
            detected_days=detected,
            matched_days=sorted(truth_set.intersection(detected)),
            counts=self._counts(detected, truth_set),
            null_precision=curve.prevalence,
        )
