"""
Django management command to score days with RPDAS and sweep thresholds.
"""

from app.management.base import PipelineCommand, comma_list
from app.services.detection_service import DetectionService
from app.services.ratio_service import RatioService


def best_row(rows: list[dict]) -> dict | None:
    """Highest F1, then highest AUC, then smallest k."""
    if not rows:
        return None
    return min(rows, key=lambda row: (-row["f1_star"], -row["auc"], row["k"]))


class Command(PipelineCommand):
    """Command to score a signal's days against nominal reference days."""

    help = "RPDAS anomaly scores per day and k; writes scores.csv, pr_k<k>.csv, summary.json"

    config_options = {
        "k": "k_list",
        "gamma": "gamma",
        "reference_start": "reference_start",
        "reference_days": "reference_days",
        "tau_grid_size": "tau_grid_size",
        "anomaly_kinds": "anomaly_kinds",
    }
    seed_key = "ratio_seed"

    def add_command_arguments(self, parser):
        parser.add_argument("signal", help="Signal CSV, or a name under signals/")
        parser.add_argument(
            "--calendar",
            default=None,
            help="Truth calendar JSON; enables the PR sweep",
        )
        parser.add_argument(
            "--k",
            type=int,
            action="append",
            default=None,
            help="Subsequence length; repeat for a sweep (default: 1,2,4,8)",
        )
        parser.add_argument(
            "--baseline",
            action="append",
            default=[],
            help="Label-signal CSV run through the same k sweep; repeatable",
        )
        parser.add_argument("--gamma", type=float, default=None, help="Default: 1e-3")
        parser.add_argument(
            "--reference-start",
            default=None,
            help="First nominal day YYYY-MM-DD (default: first day of the signal)",
        )
        parser.add_argument("--reference-days", type=int, default=None, help="Default: 7")
        parser.add_argument("--tau-grid-size", type=int, default=None)
        parser.add_argument("--anomaly-kinds", type=comma_list, default=None)

    def score_signal(self, config, artifacts, path, calendar) -> dict:
        detection_service = DetectionService(
            ratio_service=RatioService(
                gamma=config.gamma,
                sigma_scales=config.sigma_scales,
                lambda_grid=config.lambda_grid,
                folds=config.folds,
                n_centers=config.n_centers,
                seed=config.ratio_seed,
            ),
            timezone=config.timezone,
        )
        series = artifacts.read_series(path)
        folder = artifacts.path("anomaly", path.stem)

        all_scores = []
        rows = []
        for k in config.k_list:
            self.stdout.write(f"Scoring {path.stem} with k={k}...")
            scores = detection_service.score_signal(
                series, k, config.reference_start, config.reference_days
            )
            all_scores.append(scores)
            if calendar is None:
                continue
            report = detection_service.evaluate(
                scores, calendar, kinds=config.anomaly_kinds, tau_grid_size=config.tau_grid_size
            )
            artifacts.write_pr_curve(folder / f"pr_k{k}.csv", report.curve)
            rows.append(
                {
                    "k": k,
                    "tau_star": report.curve.best_tau,
                    "auc": report.curve.auc,
                    "f1_star": report.curve.best_f1,
                    "tp": report.counts.tp,
                    "fp": report.counts.fp,
                    "fn": report.counts.fn,
                    "detected_days": [d.isoformat() for d in report.detected_days],
                    "matched_days": [d.isoformat() for d in report.matched_days],
                    "null_precision": report.null_precision,
                }
            )
        artifacts.write_scores(folder, all_scores, detection_service.day_of)

        summary = {
            "signal": path.stem,
            "gamma": config.gamma,
            "k_list": config.k_list,
            "ratio_seed": config.ratio_seed,
            "reference_start": (
                config.reference_start.isoformat() if config.reference_start else None
            ),
            "reference_days": config.reference_days,
            "scored_days": len(all_scores[0].windows) if all_scores else 0,
        }
        if calendar is not None:
            summary.update(
                kinds=config.anomaly_kinds,
                per_k=rows,
                best=best_row(rows),
                null_precision=rows[0]["null_precision"] if rows else 0.0,
            )
        return summary

    def run(self, config, artifacts, **options):
        calendar = (
            artifacts.read_calendar(options["calendar"]) if options.get("calendar") else None
        )
        path = artifacts.signal_path(options["signal"])
        summary = self.score_signal(config, artifacts, path, calendar)

        baselines = {}
        for ref in options["baseline"]:
            baseline_path = artifacts.signal_path(ref)
            baseline = self.score_signal(config, artifacts, baseline_path, calendar)
            artifacts.write_json(
                artifacts.path("anomaly", baseline_path.stem, "summary.json"), baseline
            )
            baselines[baseline_path.stem] = baseline.get("best")
        if baselines:
            summary["baselines"] = baselines

        artifacts.write_json(artifacts.path("anomaly", path.stem, "summary.json"), summary)
        if calendar is None:
            self.success(f"Scored {summary['scored_days']} days of {path.stem}")
            return

        self.stdout.write("k\ttau*\tAUC\tF1*")
        for row in summary["per_k"]:
            self.stdout.write(
                f"{row['k']}\t{row['tau_star']:.4g}\t{row['auc']:.3f}\t{row['f1_star']:.3f}"
            )
        best = summary["best"]
        self.success(
            f"Best k={best['k']}: tau*={best['tau_star']:.4g} AUC={best['auc']:.3f} "
            f"F1*={best['f1_star']:.3f} (null precision {summary['null_precision']:.3f})"
        )
        for name, row in baselines.items():
            if row:
                self.stdout.write(
                    f"  baseline {name}: k={row['k']} AUC={row['auc']:.3f} F1*={row['f1_star']:.3f}"
                )
