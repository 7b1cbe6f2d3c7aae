"""
Django management command to generate a synthetic annotation stream.
"""

from dataclasses import replace
from pathlib import Path

from app.management.base import PipelineCommand
from app.services.ingest_service import IngestService
from app.services.synth_service import SynthService


class Command(PipelineCommand):
    """Command to generate annotations plus their ground truth."""

    help = "Generate annotations.jsonl, truth.json and calendar.json from a generator spec"

    echo_config = False

    def add_command_arguments(self, parser):
        parser.add_argument("spec", help="Generator spec JSON")
        parser.add_argument(
            "--out",
            default=None,
            help="Output directory (default: the workdir)",
        )

    def run(self, config, artifacts, **options):
        synth_service = SynthService()
        spec, events = synth_service.load_spec(options["spec"])
        if options.get("seed") is not None:
            spec = replace(spec, seed=options["seed"])

        out = Path(options["out"]) if options.get("out") else artifacts.workdir
        self.stdout.write(
            f"Generating {len(spec.cameras)} cameras over {spec.duration} "
            f"with {len(events)} injected events..."
        )
        records, truth = synth_service.run(spec, events)

        IngestService().write_annotations(records, out / "annotations.jsonl")
        artifacts.write_truth(out / "truth.json", truth)
        artifacts.write_json(out / "calendar.json", artifacts.calendar_data(truth.calendar))
        self.success(
            f"Wrote {len(records)} frames and {len(truth.calendar.events)} calendar "
            f"entries to {out}"
        )
