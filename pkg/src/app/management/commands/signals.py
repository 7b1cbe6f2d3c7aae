"""
Django management command to build regular topic and label signals.
"""

from app.exceptions import InputDataError
from app.management.base import PipelineCommand
from app.models import DocTopicAssignment
from app.services.artifact_service import signal_name
from app.services.ingest_service import IngestService
from app.services.signal_service import SignalService


class Command(PipelineCommand):
    """Command to write per-camera signals on a regular grid."""

    help = (
        "Write topic signals (--topic Z) or a label signal (--label TEXT, "
        "repeatable, combined) for every camera"
    )

    config_options = {
        "resample_minutes": "resample_minutes",
        "align": "align",
        "downsample": "downsample",
    }

    def add_command_arguments(self, parser):
        parser.add_argument(
            "--topic",
            type=int,
            action="append",
            default=[],
            help="Topic index; repeat for several signals",
        )
        parser.add_argument(
            "--label",
            action="append",
            default=[],
            help="Label, prefixed ('LS2: Snow') or bare ('snow' = every source)",
        )
        parser.add_argument(
            "--combine",
            choices=["or", "sum"],
            default="or",
            help="How label dimensions are combined (default: or = pointwise max)",
        )
        parser.add_argument(
            "--camera",
            action="append",
            default=[],
            help="Camera id; repeat for several (default: all)",
        )
        parser.add_argument("--resample-minutes", type=float, default=None)
        parser.add_argument("--align", choices=["first", "clock"], default=None)
        parser.add_argument(
            "--downsample",
            type=int,
            default=None,
            help="Mean-downsampling factor for the plots/ copy (default: 3)",
        )

    def run(self, config, artifacts, **options):
        topics, labels = options["topic"], options["label"]
        if not topics and not labels:
            raise InputDataError("Give at least one --topic or --label selector")

        signal_service = SignalService()
        vocab = artifacts.read_vocabulary()
        cameras = options["camera"] or artifacts.cameras()

        dims = []
        if labels:
            ingest_service = IngestService()
            for text in labels:
                dims.extend(j for j in ingest_service.resolve_label(vocab, text) if j not in dims)
        label_selector = "label-" + "+".join(labels)
        if options["combine"] == "sum":
            label_selector += "-sum"

        model = artifacts.read_topic_model(vocab) if topics else None
        written = 0
        for camera in cameras:
            built = []
            if topics:
                times, thetas = artifacts.read_theta(camera)
                assignments = [
                    (t, DocTopicAssignment(theta=row)) for t, row in zip(times, thetas, strict=True)
                ]
                for z in topics:
                    if z >= model.K:
                        raise InputDataError(f"Topic {z} outside 0..{model.K - 1}")
                    series = signal_service.resample_linear(
                        signal_service.topic_signal(assignments, z, camera),
                        config.resample_interval,
                        config.align,
                    )
                    built.append((signal_name(camera, f"topic-{z}"), series))
            if dims:
                matrix = artifacts.read_matrix(camera)
                parts = [
                    signal_service.resample_linear(
                        signal_service.label_signal(matrix, j, kind=vocab.entries[j]),
                        config.resample_interval,
                        config.align,
                    )
                    for j in dims
                ]
                series = signal_service.combine_signals(parts, options["combine"])
                built.append((signal_name(camera, label_selector), series))

            for name, series in built:
                path = artifacts.write_series(series, name)
                if config.downsample > 1:
                    artifacts.write_series(
                        signal_service.downsample_mean(series, config.downsample),
                        name,
                        folder="plots",
                    )
                self.success(f"Wrote {path} ({len(series)} points)")
                written += 1
        self.success(f"Wrote {written} signals")
