"""
IngestService: annotation parsing, vocabulary construction and filtering.

Flow:
1. parse_annotations reads a ``.jsonl`` file line by line; each line is
   validated by AnnotationLineSerializer.
2. build_vocabulary takes the union of source-prefixed labels minus the
   exclusion list, sorted lexicographically.
3. compute_stats counts images and label document frequencies.
4. frequency_filter keeps labels whose document frequency reaches the cutoff.
"""

import json
import logging
from collections import Counter
from collections.abc import Iterable
from pathlib import Path

import numpy as np
from django.conf import settings

from app.exceptions import InputDataError
from app.models import AnnotationRecord, CorpusStats, Vocabulary
from app.serializers import AnnotationLineSerializer

logger = logging.getLogger(__name__)


class IngestService:
    """Service for turning annotation files into a vocabulary and stats."""

    def __init__(self, label_sources: Iterable[int] | None = None):
        """
        Args:
            label_sources: Accepted source ids (default: settings.LABEL_SOURCES)
        """
        self.label_sources = list(
            label_sources if label_sources is not None else settings.LABEL_SOURCES
        )

    def parse_line(self, data: dict, line: int | None = None) -> AnnotationRecord:
        """
        Validate one decoded annotation object.

        Raises:
            InputDataError: missing keys, bad timestamp, unknown source
        """
        serializer = AnnotationLineSerializer(
            data=data, context={"label_sources": self.label_sources}
        )
        if not serializer.is_valid():
            raise InputDataError(f"Invalid annotation: {serializer.errors}", line=line)
        attrs = serializer.validated_data
        labels = frozenset((item["source"], item["text"]) for item in attrs["labels"])
        return AnnotationRecord(
            camera_id=attrs["camera_id"],
            timestamp=attrs["timestamp"],
            labels=labels,
        )

    def parse_annotations(self, path: str | Path) -> list[AnnotationRecord]:
        """
        Parse a line-delimited JSON annotation file.

        Blank lines are skipped. Records come back in file order.

        Args:
            path: ``.jsonl`` file, one record per line

        Returns:
            List of AnnotationRecord

        Raises:
            InputDataError: file missing, or malformed line (with line number)
        """
        path = Path(path)
        if not path.exists():
            raise InputDataError(f"Annotation file not found: {path}")

        records = []
        with path.open(encoding="utf-8") as handle:
            for number, raw in enumerate(handle, start=1):
                if not raw.strip():
                    continue
                try:
                    data = json.loads(raw)
                except json.JSONDecodeError as e:
                    raise InputDataError(f"Malformed JSON: {e.msg}", line=number) from e
                if not isinstance(data, dict):
                    raise InputDataError("Expected a JSON object", line=number)
                records.append(self.parse_line(data, line=number))

        logger.info(f"Parsed {len(records)} annotation records from {path}")
        return records

    def serialize_record(self, record: AnnotationRecord) -> str:
        """Inverse of parse_line: one JSON line, labels in sorted order."""
        return json.dumps(
            {
                "camera_id": record.camera_id,
                "timestamp": record.timestamp.strftime("%Y-%m-%dT%H:%M:%SZ"),
                "labels": [
                    {"source": source, "text": text}
                    for source, text in sorted(record.labels)
                ],
            },
            ensure_ascii=False,
        )

    def write_annotations(
        self, records: Iterable[AnnotationRecord], path: str | Path
    ) -> None:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        with path.open("w", encoding="utf-8", newline="\n") as handle:
            for record in records:
                handle.write(self.serialize_record(record) + "\n")

    def build_vocabulary(
        self, records: list[AnnotationRecord], exclusions: Iterable[str] = ()
    ) -> Vocabulary:
        """
        Union of prefixed labels minus exclusions, lexicographically ordered.

        Raises:
            InputDataError: no records, or every label excluded
        """
        if not records:
            raise InputDataError("Cannot build a vocabulary from zero records")
        labels = {label for record in records for label in record.prefixed_labels}
        labels -= set(exclusions)
        if not labels:
            raise InputDataError("Vocabulary is empty after exclusions")
        return Vocabulary(entries=tuple(sorted(labels)))

    def deduplicate(self, records: list[AnnotationRecord]) -> list[AnnotationRecord]:
        """Drop repeated (camera, timestamp) pairs, keeping the first record."""
        seen = set()
        kept = []
        for record in records:
            key = (record.camera_id, record.timestamp)
            if key in seen:
                logger.warning(
                    f"Duplicate timestamp {record.timestamp.isoformat()} for camera "
                    f"{record.camera_id}; keeping the first record"
                )
                continue
            seen.add(key)
            kept.append(record)
        return kept

    def compute_stats(
        self, records: list[AnnotationRecord], vocab: Vocabulary
    ) -> CorpusStats:
        """
        Image counts and per-label document counts over ``vocab``.

        Records should already be deduplicated.
        """
        per_camera_counts = Counter(record.camera_id for record in records)
        doc_count = np.zeros(vocab.M, dtype=np.int64)
        per_camera = {
            camera: np.zeros(vocab.M, dtype=np.int64) for camera in per_camera_counts
        }
        for record in records:
            dims = [
                vocab.index[label]
                for label in record.prefixed_labels
                if label in vocab.index
            ]
            doc_count[dims] += 1
            per_camera[record.camera_id][dims] += 1

        return CorpusStats(
            N=len(records),
            per_camera_counts=dict(sorted(per_camera_counts.items())),
            doc_count=doc_count,
            per_camera_doc_count=dict(sorted(per_camera.items())),
        )

    def frequency_filter(
        self, vocab: Vocabulary, stats: CorpusStats, cutoff: float
    ) -> Vocabulary:
        """
        Keep label j iff its document frequency f^j >= cutoff.

        Args:
            vocab: Vocabulary the stats were computed over
            stats: CorpusStats for ``vocab``
            cutoff: Document-frequency threshold

        Returns:
            Re-indexed Vocabulary (possibly empty, with a warning)

        Raises:
            InputDataError: stats dimensioned for a different vocabulary
        """
        if stats.doc_count.shape[0] != vocab.M:
            raise InputDataError(
                f"Stats cover {stats.doc_count.shape[0]} labels, vocabulary has {vocab.M}"
            )
        freq = stats.doc_freq
        kept = tuple(
            label for label, f in zip(vocab.entries, freq, strict=True) if f >= cutoff
        )
        if not kept:
            logger.warning(f"Vocabulary is empty after frequency filter at {cutoff}")
        else:
            logger.info(
                f"Frequency filter at {cutoff}: kept {len(kept)} of {vocab.M} labels"
            )
        return Vocabulary(entries=kept)

    def restrict_stats(self, stats: CorpusStats, old: Vocabulary, new: Vocabulary):
        """Project stats computed on ``old`` onto a sub-vocabulary ``new``."""
        dims = [old.index[label] for label in new.entries]
        return CorpusStats(
            N=stats.N,
            per_camera_counts=stats.per_camera_counts,
            doc_count=stats.doc_count[dims],
            per_camera_doc_count={
                camera: counts[dims]
                for camera, counts in stats.per_camera_doc_count.items()
            },
        )

    def vocabulary_summary(self, vocab: Vocabulary) -> dict[int, int]:
        """Number of vocabulary entries per label source."""
        summary = Counter()
        for label in vocab.entries:
            source = int(label.split(":", 1)[0].removeprefix("LS"))
            summary[source] += 1
        return dict(sorted(summary.items()))

    def resolve_label(self, vocab: Vocabulary, text: str) -> list[int]:
        """
        Dimensions matching a label reference.

        A prefixed reference ("LS1: snow") matches exactly. Unprefixed text
        matches every source's variant, case-insensitively.

        Raises:
            InputDataError: no match
        """
        text = text.strip()
        if text in vocab.index:
            return [vocab.index[text]]
        wanted = text.lower()
        dims = [
            j
            for j, label in enumerate(vocab.entries)
            if label.split(": ", 1)[-1].lower() == wanted
        ]
        if not dims:
            raise InputDataError(f"Label '{text}' is not in the vocabulary")
        return dims
