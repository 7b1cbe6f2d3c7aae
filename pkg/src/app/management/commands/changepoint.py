"""
Django management command to segment a signal and score its events.
"""

from datetime import timedelta

from app.management.base import PipelineCommand, comma_list
from app.services.changepoint_service import ChangepointService


class Command(PipelineCommand):
    """Command to detect change-point events and match them to a calendar."""

    help = "Penalized change-point segmentation; writes events.csv and metrics.json"

    config_options = {
        "penalty": "penalty",
        "merge_window_hours": "merge_window_hours",
        "top_n": "top_n",
        "tolerance_hours": "tolerance_hours",
        "storm_kinds": "storm_kinds",
    }

    def add_command_arguments(self, parser):
        parser.add_argument("signal", help="Signal CSV, or a name under signals/")
        parser.add_argument(
            "--calendar",
            default=None,
            help="Truth calendar JSON; enables precision/recall/F1",
        )
        parser.add_argument(
            "--baseline",
            action="append",
            default=[],
            help="Label-signal CSV evaluated the same way; repeatable",
        )
        parser.add_argument(
            "--penalty",
            type=float,
            default=None,
            help="Penalty per change point (default: ||X||_2 / 20 per signal)",
        )
        parser.add_argument("--merge-window-hours", type=float, default=None)
        parser.add_argument("--top-n", type=int, default=None)
        parser.add_argument("--tolerance-hours", type=float, default=None)
        parser.add_argument("--storm-kinds", type=comma_list, default=None)

    def evaluate_signal(self, config, artifacts, path, calendar):
        changepoint_service = ChangepointService()
        series = artifacts.read_series(path)
        B = changepoint_service.resolve_penalty(series, config.penalty)
        result = changepoint_service.detect_changepoints(series, B)
        events = changepoint_service.pair_events(
            result,
            series,
            merge_window=timedelta(hours=config.merge_window_hours),
            top_n=config.top_n,
        )
        folder = artifacts.path("changepoint", path.stem)
        artifacts.write_events(folder, events)

        metrics = {
            "signal": path.stem,
            "N": len(series),
            "B": B,
            "penalty_rule": "l2_norm/20" if config.penalty is None else "fixed",
            "change_points": len(result.rho),
            "total_cost": result.total_cost,
            "events": len(events),
        }
        if calendar is not None:
            counts = changepoint_service.match_events(
                events,
                calendar,
                tolerance=timedelta(hours=config.tolerance_hours),
                kinds=config.storm_kinds,
                timezone=config.timezone,
            )
            scores = changepoint_service.precision_recall_f1(counts)
            metrics.update(
                tp=counts.tp,
                fp=counts.fp,
                fn=counts.fn,
                prec=scores.prec,
                rec=scores.rec,
                f1=scores.f1,
                kinds=config.storm_kinds,
                tolerance_hours=config.tolerance_hours,
            )
        return folder, metrics

    def run(self, config, artifacts, **options):
        calendar = (
            artifacts.read_calendar(options["calendar"]) if options.get("calendar") else None
        )
        path = artifacts.signal_path(options["signal"])
        folder, metrics = self.evaluate_signal(config, artifacts, path, calendar)

        baselines = {}
        for ref in options["baseline"]:
            baseline_path = artifacts.signal_path(ref)
            baseline_folder, baseline = self.evaluate_signal(
                config, artifacts, baseline_path, calendar
            )
            artifacts.write_json(baseline_folder / "metrics.json", baseline)
            baselines[baseline_path.stem] = {
                key: baseline[key] for key in ("prec", "rec", "f1", "events") if key in baseline
            }
        if baselines:
            metrics["baselines"] = baselines

        artifacts.write_json(folder / "metrics.json", metrics)
        message = f"{metrics['events']} events from {metrics['change_points']} change points"
        if calendar is not None:
            message += (
                f"; prec={metrics['prec']:.3f} rec={metrics['rec']:.3f} F1={metrics['f1']:.3f}"
            )
        self.success(message)
        for name, scores in baselines.items():
            if "f1" in scores:
                self.stdout.write(f"  baseline {name}: F1={scores['f1']:.3f}")
