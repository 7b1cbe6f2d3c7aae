"""
Django management command to build the vocabulary and tf-idf matrices.
"""

from app.exceptions import InputDataError
from app.management.base import PipelineCommand, comma_list
from app.services.corpus_service import CorpusService
from app.services.ingest_service import IngestService


class Command(PipelineCommand):
    """Command to ingest annotations into vocabulary, stats and matrices."""

    help = "Parse annotations, filter the vocabulary and write per-camera tf-idf matrices"

    config_options = {
        "annotations": "annotations",
        "cutoff": "cutoff",
        "idf_counts": "idf_counts",
        "exclusions": "exclusions",
        "label_sources": "label_sources",
    }

    def add_command_arguments(self, parser):
        parser.add_argument(
            "annotations",
            nargs="?",
            default=None,
            help="Annotation .jsonl file (default: config annotations)",
        )
        parser.add_argument(
            "--cutoff",
            type=float,
            default=None,
            help="Document-frequency cutoff (default: 1e-4)",
        )
        parser.add_argument(
            "--idf-counts",
            choices=["per_camera", "global"],
            default=None,
            help="Label counts used in the idf denominator",
        )
        parser.add_argument(
            "--exclusions",
            type=comma_list,
            default=None,
            help="Comma-separated prefixed labels to drop (replaces the defaults)",
        )
        parser.add_argument(
            "--label-sources",
            type=comma_list,
            default=None,
            help="Comma-separated accepted label source ids",
        )

    def run(self, config, artifacts, **options):
        if not config.annotations:
            raise InputDataError("No annotations file given; pass a path or set annotations")
        ingest_service = IngestService(label_sources=config.label_sources)
        corpus_service = CorpusService()

        self.stdout.write(f"Reading {config.annotations}...")
        records = ingest_service.deduplicate(
            ingest_service.parse_annotations(config.annotations)
        )
        self.success(f"Read {len(records)} annotated frames")

        full = ingest_service.build_vocabulary(records, config.exclusions)
        full_stats = ingest_service.compute_stats(records, full)
        vocab = ingest_service.frequency_filter(full, full_stats, config.cutoff)
        stats = ingest_service.restrict_stats(full_stats, full, vocab)
        self.success(f"Vocabulary: {vocab.M} of {full.M} labels at cutoff {config.cutoff:g}")

        matrices = corpus_service.tfidf_matrices(
            corpus_service.build_matrices(records, vocab),
            vocab,
            stats,
            counts=config.idf_counts,
        )

        artifacts.write_vocabulary(vocab)
        artifacts.write_stats(
            stats,
            extra={
                "M": vocab.M,
                "M_before_filter": full.M,
                "vocab_hash": vocab.vocab_hash,
                "per_source_counts": {
                    str(source): count
                    for source, count in ingest_service.vocabulary_summary(vocab).items()
                },
                "per_source_counts_before_filter": {
                    str(source): count
                    for source, count in ingest_service.vocabulary_summary(full).items()
                },
            },
        )
        for matrix in matrices.values():
            artifacts.write_matrix(matrix)
        self.success(f"Wrote matrices for {len(matrices)} cameras to {artifacts.workdir}")
