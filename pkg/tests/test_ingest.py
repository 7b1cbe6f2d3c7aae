"""
Tests for IngestService.

This module tests:
- Annotation parsing: validation, line numbers, duplicates
- Vocabulary: prefixing, exclusions, ordering
- Frequency filter and stats
"""

import json
from datetime import UTC, datetime

import numpy as np
import pytest

from app.exceptions import InputDataError
from app.models import AnnotationRecord, Vocabulary
from app.services.ingest_service import IngestService
from tests.factories import AnnotationRecordFactory


def line(camera="1137-1", timestamp="2018-01-04T16:57:52Z", labels=((1, "snow"),)):
    return {
        "camera_id": camera,
        "timestamp": timestamp,
        "labels": [{"source": s, "text": t} for s, t in labels],
    }


class TestParseAnnotations:
    """Tests for parse_annotations and parse_line."""

    @pytest.fixture
    def ingest_service(self):
        return IngestService(label_sources=[1, 2])

    def test_parses_valid_lines(self, ingest_service, write_jsonl):
        """Records keep file order, trimmed text and case."""
        path = write_jsonl(
            [
                line(labels=((1, " snow "), (2, "Snow"))),
                line(camera="1508-1", timestamp="2018-01-04T17:00:00+00:00"),
            ]
        )

        records = ingest_service.parse_annotations(path)

        assert len(records) == 2
        assert records[0].labels == frozenset({(1, "snow"), (2, "Snow")})
        assert records[0].timestamp == datetime(2018, 1, 4, 16, 57, 52, tzinfo=UTC)
        assert records[1].camera_id == "1508-1"

    def test_skips_blank_lines(self, ingest_service, write_jsonl):
        """Blank lines are not records."""
        path = write_jsonl([line(), "", line(timestamp="2018-01-04T17:00:00Z")])
        assert len(ingest_service.parse_annotations(path)) == 2

    def test_malformed_json_reports_line(self, ingest_service, write_jsonl):
        """A broken line is reported with its number."""
        path = write_jsonl([line(), "{not json"])

        with pytest.raises(InputDataError) as exc:
            ingest_service.parse_annotations(path)

        assert exc.value.line == 2
        assert str(exc.value).startswith("line 2:")

    def test_missing_key_is_rejected(self, ingest_service, write_jsonl):
        """camera_id is required."""
        data = line()
        del data["camera_id"]
        with pytest.raises(InputDataError) as exc:
            ingest_service.parse_annotations(write_jsonl([data]))
        assert exc.value.line == 1

    def test_unknown_source_is_rejected(self, ingest_service, write_jsonl):
        """Sources outside the configured set fail the line."""
        path = write_jsonl([line(labels=((3, "car"),))])
        with pytest.raises(InputDataError, match="Unknown label source"):
            ingest_service.parse_annotations(path)

    @pytest.mark.parametrize(
        "timestamp",
        ["2018-01-04 16:57:52", "2018-01-04T16:57:52+01:00", "2018-01-04T16:57:52.5Z"],
    )
    def test_non_utc_timestamps_are_rejected(self, ingest_service, timestamp):
        """Only second-precision UTC instants are accepted."""
        with pytest.raises(InputDataError):
            ingest_service.parse_line(line(timestamp=timestamp))

    def test_missing_file(self, ingest_service, tmp_path):
        with pytest.raises(InputDataError, match="not found"):
            ingest_service.parse_annotations(tmp_path / "absent.jsonl")

    def test_serialize_record_round_trips(self, ingest_service):
        """A serialized record parses back to itself."""
        record = AnnotationRecordFactory()
        parsed = ingest_service.parse_line(json.loads(ingest_service.serialize_record(record)))
        assert parsed == record

    def test_deduplicate_keeps_first(self, ingest_service, caplog):
        """Repeated (camera, timestamp) keeps the first record with a warning."""
        first = AnnotationRecordFactory(labels=frozenset({(1, "a")}))
        second = AnnotationRecordFactory(timestamp=first.timestamp, labels=frozenset({(1, "b")}))

        kept = ingest_service.deduplicate([first, second])

        assert kept == [first]
        assert "Duplicate timestamp" in caplog.text


class TestVocabulary:
    """Tests for build_vocabulary, compute_stats and frequency_filter."""

    @pytest.fixture
    def ingest_service(self):
        return IngestService(label_sources=[1, 2])

    @pytest.fixture
    def records(self):
        labels = [
            {(1, "snow"), (2, "Snow"), (2, "MassDOT")},
            {(1, "snow"), (1, "road")},
            {(1, "road")},
            {(2, "Snow"), (1, "rare")},
        ]
        return [
            AnnotationRecordFactory(camera_id=camera, labels=frozenset(items))
            for camera, items in zip(["a", "a", "b", "b"], labels, strict=True)
        ]

    def test_prefixes_and_sorts(self, ingest_service, records):
        """Entries are source-prefixed and lexicographically ordered."""
        vocab = ingest_service.build_vocabulary(records)

        assert list(vocab.entries) == sorted(vocab.entries)
        assert "LS1: snow" in vocab
        assert "LS2: Snow" in vocab
        assert vocab.index["LS1: rare"] == 0

    def test_same_text_different_sources_are_distinct(self, ingest_service):
        """'LS1: snow' and 'LS2: snow' are two dimensions."""
        record = AnnotationRecordFactory(labels=frozenset({(1, "snow"), (2, "snow")}))
        assert ingest_service.build_vocabulary([record]).M == 2

    def test_exclusions_remove_watermarks(self, ingest_service, records):
        vocab = ingest_service.build_vocabulary(records, exclusions=["LS2: MassDOT"])
        assert "LS2: MassDOT" not in vocab

    def test_everything_excluded(self, ingest_service):
        record = AnnotationRecordFactory(labels=frozenset({(2, "MassDOT")}))
        with pytest.raises(InputDataError, match="empty"):
            ingest_service.build_vocabulary([record], exclusions=["LS2: MassDOT"])

    def test_no_records(self, ingest_service):
        with pytest.raises(InputDataError):
            ingest_service.build_vocabulary([])

    def test_stats_count_documents(self, ingest_service, records):
        """Document counts per label, overall and per camera."""
        vocab = ingest_service.build_vocabulary(records)
        stats = ingest_service.compute_stats(records, vocab)

        road = vocab.index["LS1: road"]
        assert stats.N == 4
        assert stats.per_camera_counts == {"a": 2, "b": 2}
        assert stats.doc_count[road] == 2
        assert stats.per_camera_doc_count["a"][road] == 1
        assert stats.doc_freq[road] == pytest.approx(0.5)

    def test_cutoff_zero_keeps_everything(self, ingest_service, records):
        vocab = ingest_service.build_vocabulary(records)
        stats = ingest_service.compute_stats(records, vocab)
        assert ingest_service.frequency_filter(vocab, stats, 0.0) == vocab

    def test_cutoff_keeps_labels_at_threshold(self, ingest_service, records):
        """f >= cutoff survives; the rest are dropped and re-indexed."""
        vocab = ingest_service.build_vocabulary(records)
        stats = ingest_service.compute_stats(records, vocab)

        filtered = ingest_service.frequency_filter(vocab, stats, 0.5)

        assert set(filtered.entries) == {"LS1: road", "LS1: snow", "LS2: Snow"}
        assert filtered.index["LS1: road"] == 0

    def test_filter_emptying_vocabulary_warns(self, ingest_service, records, caplog):
        vocab = ingest_service.build_vocabulary(records)
        stats = ingest_service.compute_stats(records, vocab)

        filtered = ingest_service.frequency_filter(vocab, stats, 0.9)

        assert filtered.M == 0
        assert "empty" in caplog.text

    def test_filter_rejects_mismatched_stats(self, ingest_service, records):
        vocab = ingest_service.build_vocabulary(records)
        stats = ingest_service.compute_stats(records, vocab)
        with pytest.raises(InputDataError):
            ingest_service.frequency_filter(Vocabulary(entries=("LS1: x",)), stats, 0.0)

    def test_restrict_stats(self, ingest_service, records):
        vocab = ingest_service.build_vocabulary(records)
        stats = ingest_service.compute_stats(records, vocab)
        filtered = ingest_service.frequency_filter(vocab, stats, 0.5)

        restricted = ingest_service.restrict_stats(stats, vocab, filtered)

        assert restricted.doc_count.tolist() == [2, 2, 2]
        assert np.array_equal(
            restricted.per_camera_doc_count["b"],
            [stats.per_camera_doc_count["b"][vocab.index[e]] for e in filtered.entries],
        )

    def test_vocabulary_summary_counts_sources(self, ingest_service, records):
        vocab = ingest_service.build_vocabulary(records)
        assert ingest_service.vocabulary_summary(vocab) == {1: 3, 2: 2}

    def test_resolve_label(self, ingest_service, records):
        """Bare text matches every source, case-insensitively."""
        vocab = ingest_service.build_vocabulary(records)

        assert ingest_service.resolve_label(vocab, "LS2: Snow") == [vocab.index["LS2: Snow"]]
        assert sorted(ingest_service.resolve_label(vocab, "snow")) == sorted(
            [vocab.index["LS1: snow"], vocab.index["LS2: Snow"]]
        )
        with pytest.raises(InputDataError):
            ingest_service.resolve_label(vocab, "fog")

    def test_vocab_hash_tracks_entries(self):
        a = Vocabulary(entries=("LS1: a", "LS1: b"))
        assert a.vocab_hash == Vocabulary(entries=("LS1: a", "LS1: b")).vocab_hash
        assert a.vocab_hash != Vocabulary(entries=("LS1: a",)).vocab_hash

    def test_record_prefixed_labels(self):
        record = AnnotationRecord(
            camera_id="c",
            timestamp=datetime(2021, 1, 1, tzinfo=UTC),
            labels=frozenset({(2, "Snow"), (1, "snow")}),
        )
        assert record.prefixed_labels == ["LS1: snow", "LS2: Snow"]
