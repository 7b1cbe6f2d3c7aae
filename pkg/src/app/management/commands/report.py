"""
Django management command to bundle every stage's results.
"""

from app.management.base import PipelineCommand

STAGES = {
    "ingest": ("vocabulary.json", "stats.json"),
    "select_k": ("selection_curve.csv", "selection.json"),
    "fit": ("topic_model.json",),
}


class Command(PipelineCommand):
    """
    Command to aggregate artifacts into report.json and report_pr.csv.

    Nothing is recomputed. Stages without artifacts are listed under
    ``missing``.
    """

    help = "Aggregate workdir artifacts into report.json and report_pr.csv"

    echo_config = False

    def run(self, config, artifacts, **options):
        report = {"workdir": str(artifacts.workdir), "missing": []}

        for stage, files in STAGES.items():
            if not all(artifacts.path(name).exists() for name in files):
                report["missing"].append(stage)

        if artifacts.path("effective_config.json").exists():
            report["config"] = artifacts.read_json(artifacts.path("effective_config.json"))

        if "ingest" not in report["missing"]:
            stats = artifacts.read_json(artifacts.path("stats.json"))
            report["corpus"] = {
                key: stats.get(key)
                for key in ("N", "M", "M_before_filter", "per_camera_counts", "per_source_counts")
            }

        if "select_k" not in report["missing"]:
            report["selection"] = artifacts.read_json(artifacts.path("selection.json"))
            report["selection"]["curve"] = artifacts.read_csv(
                artifacts.path("selection_curve.csv")
            )

        if "fit" not in report["missing"]:
            model = artifacts.read_json(artifacts.path("topic_model.json"))
            report["topics"] = {
                "K": model["K"],
                "alpha": model["alpha"],
                "beta": model["beta"],
                "vocab_hash": model["vocab_hash"],
                "top_labels": model.get("top_labels", []),
            }

        signals = sorted(p.stem for p in artifacts.path("signals").glob("*.csv"))
        report["signals"] = signals
        if not signals:
            report["missing"].append("signals")

        report["changepoint"] = {
            p.parent.name: artifacts.read_json(p)
            for p in sorted(artifacts.path("changepoint").glob("*/metrics.json"))
        }
        if not report["changepoint"]:
            report["missing"].append("changepoint")

        report["anomaly"] = {
            p.parent.name: artifacts.read_json(p)
            for p in sorted(artifacts.path("anomaly").glob("*/summary.json"))
        }
        if not report["anomaly"]:
            report["missing"].append("anomaly")

        pr_rows = []
        for p in sorted(artifacts.path("anomaly").glob("*/pr_k*.csv")):
            k = p.stem.removeprefix("pr_k")
            pr_rows.extend(
                (p.parent.name, k, row["tau"], row["precision"], row["recall"])
                for row in artifacts.read_csv(p)
            )
        artifacts.write_csv(
            artifacts.path("report_pr.csv"),
            ["signal", "k", "tau", "precision", "recall"],
            pr_rows,
        )
        artifacts.write_json(artifacts.path("report.json"), report)

        self.success(f"Wrote {artifacts.path('report.json')}")
        if report["missing"]:
            self.stdout.write(
                self.style.WARNING(f"Missing stages: {', '.join(report['missing'])}")
            )
