"""
Tests for ChangepointService.

This module tests:
- Exactness of the dynamic program against brute force
- Step recovery and penalty behaviour
- Event pairing, calendar matching and metrics
"""

import itertools
from datetime import UTC, date, datetime, timedelta

import numpy as np
import pytest

from app.exceptions import InputDataError
from app.models import (
    CalendarEvent,
    ChangePointResult,
    DetectionEvent,
    EventCalendar,
    MatchCounts,
    RegularSeries,
)
from app.services.changepoint_service import ChangepointService

T0 = datetime(2021, 1, 4, tzinfo=UTC)
HOUR = timedelta(hours=1)


def series(values, interval=timedelta(minutes=5)):
    return RegularSeries(start=T0, interval=interval, values=np.asarray(values, dtype=float))


@pytest.fixture
def changepoint_service():
    return ChangepointService()


class TestDetectChangepoints:
    """Tests for detect_changepoints."""

    def brute_force(self, changepoint_service, s, B):
        N = len(s)
        return min(
            changepoint_service.objective(s, list(rho), B)
            for r in range(N)
            for rho in itertools.combinations(range(1, N), r)
        )

    def test_matches_brute_force(self, changepoint_service, rng):
        """The optimum equals exhaustive enumeration on short series."""
        for _ in range(50):
            N = int(rng.integers(2, 13))
            values = np.repeat(rng.normal(0, 2, size=3), -(-N // 3))[:N] + rng.normal(0, 0.5, N)
            s = series(values)
            B = float(rng.uniform(0.1, 3.0))

            result = changepoint_service.detect_changepoints(s, B)

            assert result.total_cost == pytest.approx(
                self.brute_force(changepoint_service, s, B), abs=1e-9
            )
            assert result.total_cost == pytest.approx(
                changepoint_service.objective(s, result.rho, B), abs=1e-12
            )

    def test_recovers_single_step(self, changepoint_service):
        """[0]*50 + [10]*50 with the default penalty splits at 50."""
        s = series([0.0] * 50 + [10.0] * 50)
        B = changepoint_service.default_penalty(s)

        result = changepoint_service.detect_changepoints(s, B)

        assert B == pytest.approx(np.sqrt(50 * 100) / 20)
        assert result.rho == [50]
        assert [m.tolist() for m in result.segment_means] == [[0.0], [10.0]]

    def test_constant_series_has_no_change_points(self, changepoint_service):
        result = changepoint_service.detect_changepoints(series([3.0] * 20), 0.01)
        assert result.rho == []
        assert result.total_cost == pytest.approx(0.0)

    def test_zero_penalty_can_split_everywhere(self, changepoint_service):
        """With B = 0 every segment can be constant, so the cost is zero."""
        result = changepoint_service.detect_changepoints(series([0.0, 1.0, 0.0, 1.0]), 0.0)
        assert result.total_cost == pytest.approx(0.0)
        assert all(0 < r < 4 for r in result.rho)

    def test_infinite_penalty_means_no_split(self, changepoint_service):
        result = changepoint_service.detect_changepoints(series([0.0] * 5 + [9.0] * 5), 1e12)
        assert result.rho == []

    def test_change_points_are_interior_and_increasing(self, changepoint_service, rng):
        s = series(np.concatenate([rng.normal(m, 0.1, 30) for m in (0, 2, -1, 3)]))
        result = changepoint_service.detect_changepoints(s, changepoint_service.default_penalty(s))
        assert result.rho == sorted(set(result.rho))
        assert all(0 < r < len(s) for r in result.rho)

    def test_multichannel(self, changepoint_service):
        values = np.zeros((40, 2))
        values[20:, 1] = 5.0
        result = changepoint_service.detect_changepoints(series(values), 1.0)
        assert result.rho == [20]

    def test_pruning_agrees_on_clear_steps(self, changepoint_service):
        s = series([0.0] * 30 + [4.0] * 30 + [1.0] * 30)
        B = changepoint_service.default_penalty(s)
        exact = changepoint_service.detect_changepoints(s, B)
        pruned = changepoint_service.detect_changepoints(s, B, pruning=True)
        assert pruned.rho == exact.rho

    def test_rejects_short_series_and_negative_penalty(self, changepoint_service):
        with pytest.raises(InputDataError):
            changepoint_service.detect_changepoints(series([1.0]), 1.0)
        with pytest.raises(InputDataError):
            changepoint_service.detect_changepoints(series([1.0, 2.0]), -1.0)

    def test_centered_penalty_is_shift_invariant(self, changepoint_service):
        a = series([0.0] * 10 + [1.0] * 10)
        b = series([100.0] * 10 + [101.0] * 10)
        assert changepoint_service.default_penalty(a, centered=True) == pytest.approx(
            changepoint_service.default_penalty(b, centered=True)
        )


class TestPairEvents:
    """Tests for pair_events."""

    def result(self, rho, means):
        return ChangePointResult(rho=rho, B=1.0, total_cost=0.0, segment_means=means)

    def test_pairs_consecutive_change_points(self, changepoint_service):
        s = series(np.zeros(100), interval=HOUR)
        events = changepoint_service.pair_events(
            self.result([10, 40, 70, 90], [0, 1, 0, 2, 0]), s
        )
        assert [(e.start, e.end) for e in events] == [
            (T0 + 10 * HOUR, T0 + 40 * HOUR),
            (T0 + 70 * HOUR, T0 + 90 * HOUR),
        ]
        assert [e.magnitude for e in events] == [1, 2]

    def test_merges_within_window(self, changepoint_service):
        """Change points within 24 h of the start extend the same event."""
        s = series(np.zeros(100), interval=HOUR)
        events = changepoint_service.pair_events(
            self.result([10, 15, 20, 60], [0, 1, 2, 1, 0]), s
        )
        assert events[0].start == T0 + 10 * HOUR
        assert events[0].end == T0 + 20 * HOUR
        assert events[0].magnitude == 1
        assert events[1].start == T0 + 60 * HOUR
        assert events[1].end is None

    def test_lone_final_change_point_is_open(self, changepoint_service):
        s = series(np.zeros(100), interval=HOUR)
        events = changepoint_service.pair_events(self.result([10, 40, 80], [0, 1, 0, 3]), s)
        assert events[-1].start == T0 + 80 * HOUR
        assert events[-1].end is None

    def test_multichannel_magnitude_is_shift_norm(self, changepoint_service):
        values = np.zeros((60, 2))
        values[30:] = [3.0, 4.0]
        s = series(values, interval=HOUR)

        result = changepoint_service.detect_changepoints(s, 1.0)
        events = changepoint_service.pair_events(result, s)

        assert result.rho == [30]
        assert result.segment_means[1].tolist() == [3.0, 4.0]
        assert events[0].magnitude == pytest.approx(5.0)

    def test_keeps_top_n_by_magnitude_in_time_order(self, changepoint_service):
        s = series(np.zeros(400), interval=HOUR)
        rho = [10, 40, 100, 130, 200, 230]
        means = [0, 1, 0, 5, 0, 3, 0]
        events = changepoint_service.pair_events(self.result(rho, means), s, top_n=2)
        assert [e.start for e in events] == [T0 + 100 * HOUR, T0 + 200 * HOUR]


class TestMatchEvents:
    """Tests for match_events and precision_recall_f1."""

    @pytest.fixture
    def calendar(self):
        return EventCalendar(
            events=(
                CalendarEvent(date=date(2021, 1, 5), kind="snow"),
                CalendarEvent(date=date(2021, 1, 9), kind="rain"),
                CalendarEvent(date=date(2021, 1, 9), kind="holiday"),
            )
        )

    def event(self, hours):
        return DetectionEvent(start=T0 + hours * HOUR, end=None, magnitude=1.0)

    def test_tolerance_extends_the_day(self, changepoint_service, calendar):
        """A start 11 h before the truth day still matches; 13 h does not."""
        hit = changepoint_service.match_events([self.event(24 - 11)], calendar, kinds=["snow"])
        miss = changepoint_service.match_events([self.event(24 - 13)], calendar, kinds=["snow"])
        assert hit == MatchCounts(tp=1, fp=0, fn=0)
        assert miss == MatchCounts(tp=0, fp=1, fn=1)

    def test_each_day_matches_once(self, changepoint_service, calendar):
        counts = changepoint_service.match_events(
            [self.event(30), self.event(34)], calendar, kinds=["snow", "rain"]
        )
        assert counts == MatchCounts(tp=1, fp=1, fn=1)

    def test_kinds_filter(self, changepoint_service, calendar):
        counts = changepoint_service.match_events([], calendar, kinds=["holiday"])
        assert counts.fn == 1

    def test_metrics(self, changepoint_service):
        metrics = changepoint_service.precision_recall_f1(MatchCounts(tp=3, fp=1, fn=2))
        assert metrics.prec == pytest.approx(0.75)
        assert metrics.rec == pytest.approx(0.6)
        assert metrics.f1 == pytest.approx(2 * 0.75 * 0.6 / 1.35)

    def test_metrics_without_events(self, changepoint_service):
        metrics = changepoint_service.precision_recall_f1(MatchCounts(tp=0, fp=0, fn=0))
        assert (metrics.prec, metrics.rec, metrics.f1) == (0.0, 0.0, 0.0)


class TestStormRecovery:
    """Change-point events on a synthetic storm-topic signal."""

    def test_recovers_storms(self, changepoint_service, rng):
        """Six 12-hour storms over 20 days are all found within the tolerance."""
        interval = timedelta(minutes=5)
        per_day = 288
        values = 0.02 + rng.normal(0, 0.01, 20 * per_day)
        storm_days = [2, 5, 8, 11, 14, 17]
        for day in storm_days:
            begin = day * per_day + 6 * 12
            values[begin : begin + 144] += 0.6
        s = series(values, interval=interval)
        calendar = EventCalendar(
            events=tuple(
                CalendarEvent(date=(T0 + timedelta(days=d)).date(), kind="snow")
                for d in storm_days
            )
        )

        result = changepoint_service.detect_changepoints(s, changepoint_service.default_penalty(s))
        events = changepoint_service.pair_events(result, s)
        metrics = changepoint_service.precision_recall_f1(
            changepoint_service.match_events(events, calendar, kinds=["snow"])
        )

        assert metrics.rec == 1.0
        assert metrics.f1 >= 0.85
