"""
ArtifactService: reading and writing pipeline artifacts in a workdir.

Layout:
    effective_config.json
    vocabulary.json, stats.json
    matrices/<camera>.csv (+ .json sidecar)
    selection_curve.csv, selection.json
    topic_model.json, theta/<camera>.csv
    signals/<camera>__<selector>.csv, plots/<camera>__<selector>.csv
    changepoint/<signal>/events.csv, metrics.json
    anomaly/<signal>/scores.csv, pr_k<k>.csv, summary.json
    report.json, report_pr.csv

JSON is written with sorted keys and CSV with fixed column order, so
identical inputs give byte-identical files.
"""

import csv
import json
import logging
from datetime import UTC, datetime, timedelta
from pathlib import Path

import numpy as np

from app.exceptions import InputDataError
from app.models import (
    AnomalyScoreSeries,
    BagVector,
    CalendarEvent,
    CorpusStats,
    DetectionEvent,
    EventCalendar,
    GeneratorTruth,
    ImageLabelMatrix,
    PRCurve,
    RegularSeries,
    SelectionCurve,
    TopicModel,
    Vocabulary,
)
from app.serializers import EventCalendarSerializer, parse_utc_timestamp

logger = logging.getLogger(__name__)

TIME_FORMAT = "%Y-%m-%dT%H:%M:%SZ"
SIGNAL_SEPARATOR = "__"


def format_time(instant: datetime | None) -> str:
    return "" if instant is None else instant.astimezone(UTC).strftime(TIME_FORMAT)


def parse_time(text: str) -> datetime:
    try:
        return parse_utc_timestamp(text)
    except Exception as e:
        raise InputDataError(f"Bad timestamp '{text}'") from e


def format_float(value: float | None) -> str:
    return "" if value is None else repr(float(value))


def signal_name(camera: str, selector: str) -> str:
    safe = selector.replace(":", "-").replace(" ", "_").replace("/", "-")
    return f"{camera}{SIGNAL_SEPARATOR}{safe}"


class ArtifactService:
    """Service for persisting artifacts under one workdir."""

    def __init__(self, workdir: str | Path):
        self.workdir = Path(workdir)

    def path(self, *parts: str) -> Path:
        return self.workdir.joinpath(*parts)

    def require(self, *parts: str) -> Path:
        """
        Raises:
            InputDataError: artifact missing (names the stage that makes it)
        """
        path = self.path(*parts)
        if not path.exists():
            raise InputDataError(f"Missing artifact {path}; run the producing command first")
        return path

    # ------------------------------------------------------------------
    # generic
    # ------------------------------------------------------------------

    def write_json(self, path: Path, data) -> Path:
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(json.dumps(data, sort_keys=True, indent=2) + "\n", encoding="utf-8")
        return path

    def read_json(self, path: Path):
        try:
            return json.loads(Path(path).read_text(encoding="utf-8"))
        except FileNotFoundError as e:
            raise InputDataError(f"Missing file {path}") from e
        except json.JSONDecodeError as e:
            raise InputDataError(f"{path} is not valid JSON: {e.msg}", line=e.lineno) from e

    def write_csv(self, path: Path, header: list[str], rows) -> Path:
        path.parent.mkdir(parents=True, exist_ok=True)
        with path.open("w", encoding="utf-8", newline="") as handle:
            writer = csv.writer(handle, lineterminator="\n")
            writer.writerow(header)
            writer.writerows(rows)
        return path

    def read_csv(self, path: Path) -> list[dict]:
        if not Path(path).exists():
            raise InputDataError(f"Missing file {path}")
        with Path(path).open(encoding="utf-8", newline="") as handle:
            return list(csv.DictReader(handle))

    # ------------------------------------------------------------------
    # ingest / corpus
    # ------------------------------------------------------------------

    def write_vocabulary(self, vocab: Vocabulary) -> Path:
        return self.write_json(self.path("vocabulary.json"), list(vocab.entries))

    def read_vocabulary(self) -> Vocabulary:
        entries = self.read_json(self.require("vocabulary.json"))
        if not isinstance(entries, list) or entries != sorted(set(entries)):
            raise InputDataError("vocabulary.json must be a sorted list of unique labels")
        return Vocabulary(entries=tuple(entries))

    def write_stats(self, stats: CorpusStats, extra: dict | None = None) -> Path:
        data = {
            "N": stats.N,
            "per_camera_counts": stats.per_camera_counts,
            "doc_count": [int(n) for n in stats.doc_count],
            "per_camera_doc_count": {
                camera: [int(n) for n in counts]
                for camera, counts in stats.per_camera_doc_count.items()
            },
        }
        data.update(extra or {})
        return self.write_json(self.path("stats.json"), data)

    def write_matrix(self, matrix: ImageLabelMatrix) -> Path:
        rows = (
            (i, j, format_float(weight))
            for i, row in enumerate(matrix.rows)
            for j, weight in sorted(row.dims.items())
        )
        path = self.write_csv(
            self.path("matrices", f"{matrix.camera_id}.csv"), ["row_index", "dim", "weight"], rows
        )
        self.write_json(
            self.path("matrices", f"{matrix.camera_id}.json"),
            {
                "camera_id": matrix.camera_id,
                "timestamps": [format_time(t) for t in matrix.timestamps],
                "M": matrix.M,
            },
        )
        return path

    def read_matrix(self, camera: str) -> ImageLabelMatrix:
        sidecar = self.read_json(self.require("matrices", f"{camera}.json"))
        timestamps = tuple(parse_time(t) for t in sidecar["timestamps"])
        dims: list[dict[int, float]] = [{} for _ in timestamps]
        for row in self.read_csv(self.require("matrices", f"{camera}.csv")):
            i, j = int(row["row_index"]), int(row["dim"])
            if not 0 <= i < len(dims) or not 0 <= j < sidecar["M"]:
                raise InputDataError(f"Matrix entry ({i}, {j}) out of range for {camera}")
            dims[i][j] = float(row["weight"])
        return ImageLabelMatrix(
            camera_id=sidecar["camera_id"],
            timestamps=timestamps,
            rows=tuple(BagVector(dims=d) for d in dims),
            M=int(sidecar["M"]),
        )

    def cameras(self) -> list[str]:
        folder = self.path("matrices")
        if not folder.exists():
            raise InputDataError(f"No matrices under {folder}; run ingest first")
        return sorted(p.stem for p in folder.glob("*.json"))

    # ------------------------------------------------------------------
    # topics
    # ------------------------------------------------------------------

    def write_selection_curve(self, curve: SelectionCurve) -> Path:
        rows = (
            (K, format_float(p), format_float(r), format_float(s))
            for K, p, r, s in zip(curve.k_grid, curve.perp, curve.rpc, curve.rpc_std, strict=True)
        )
        return self.write_csv(
            self.path("selection_curve.csv"), ["K", "perp_mean", "rpc", "rpc_std"], rows
        )

    def write_topic_model(
        self, model: TopicModel, top_labels=None, extra: dict | None = None
    ) -> Path:
        data = {
            "K": model.K,
            "alpha": model.alpha,
            "beta": model.beta,
            "vocab_hash": model.vocab_hash,
            "phi": [[float(f"{v:.9g}") for v in row] for row in model.phi],
            "elbo_history": list(model.elbo_history),
        }
        if top_labels is not None:
            data["top_labels"] = [
                [{"label": label, "prob": float(f"{p:.9g}")} for label, p in topic]
                for topic in top_labels
            ]
        data.update(extra or {})
        return self.write_json(self.path("topic_model.json"), data)

    def read_topic_model(self, vocab: Vocabulary | None = None) -> TopicModel:
        """
        Raises:
            InputDataError: malformed model, or fit on a different vocabulary
        """
        data = self.read_json(self.require("topic_model.json"))
        phi = np.array(data["phi"], dtype=float)
        if phi.ndim != 2 or phi.shape[0] != data["K"] or np.any(phi < 0):
            raise InputDataError("topic_model.json has a malformed phi")
        phi /= phi.sum(axis=1, keepdims=True)
        model = TopicModel(
            K=int(data["K"]),
            phi=phi,
            alpha=float(data["alpha"]),
            beta=float(data["beta"]),
            vocab_hash=data["vocab_hash"],
            elbo_history=tuple(data.get("elbo_history", [])),
        )
        if vocab is not None and model.vocab_hash != vocab.vocab_hash:
            raise InputDataError(
                "topic_model.json was fit on a different vocabulary "
                f"({model.vocab_hash[:12]} vs {vocab.vocab_hash[:12]})"
            )
        return model

    def write_theta(self, camera: str, timestamps, thetas: np.ndarray) -> Path:
        K = thetas.shape[1]
        rows = (
            (format_time(t), *(format_float(v) for v in row))
            for t, row in zip(timestamps, thetas, strict=True)
        )
        return self.write_csv(
            self.path("theta", f"{camera}.csv"),
            ["timestamp_utc", *(f"theta_{z}" for z in range(K))],
            rows,
        )

    def read_theta(self, camera: str) -> tuple[list[datetime], np.ndarray]:
        rows = self.read_csv(self.require("theta", f"{camera}.csv"))
        if not rows:
            raise InputDataError(f"theta/{camera}.csv is empty")
        columns = [c for c in rows[0] if c.startswith("theta_")]
        times = [parse_time(r["timestamp_utc"]) for r in rows]
        values = np.array([[float(r[c]) for c in columns] for r in rows])
        return times, values

    # ------------------------------------------------------------------
    # signals
    # ------------------------------------------------------------------

    def write_series(
        self, series: RegularSeries, name: str, folder: str = "signals"
    ) -> Path:
        values = series.values if series.values.ndim == 2 else series.values[:, np.newaxis]
        header = ["timestamp_utc", "value", *(f"value_{c}" for c in range(1, values.shape[1]))]
        rows = (
            (format_time(t), *(format_float(v) for v in row))
            for t, row in zip(series.times, values, strict=True)
        )
        return self.write_csv(self.path(folder, f"{name}.csv"), header, rows)

    def signal_path(self, ref: str) -> Path:
        """A signal CSV path, or a bare signal name under ``signals/``."""
        path = Path(ref)
        if path.is_file():
            return path
        return self.require("signals", f"{ref.removesuffix('.csv')}.csv")

    def read_series(self, path: str | Path) -> RegularSeries:
        """
        Read a signal CSV; camera and selector come from ``<camera>__<selector>``.

        Raises:
            InputDataError: fewer than two rows or an uneven grid
        """
        path = Path(path)
        rows = self.read_csv(path)
        if len(rows) < 2:
            raise InputDataError(f"{path} needs at least two rows")
        times = [parse_time(r["timestamp_utc"]) for r in rows]
        interval = times[1] - times[0]
        if interval <= timedelta(0) or any(
            b - a != interval for a, b in zip(times, times[1:], strict=False)
        ):
            raise InputDataError(f"{path} is not evenly sampled")
        columns = [c for c in rows[0] if c.startswith("value")]
        values = np.array([[float(r[c]) for c in columns] for r in rows])
        if values.shape[1] == 1:
            values = values[:, 0]
        camera, _, kind = path.stem.partition(SIGNAL_SEPARATOR)
        return RegularSeries(
            start=times[0], interval=interval, values=values, camera_id=camera, kind=kind
        )

    # ------------------------------------------------------------------
    # detection
    # ------------------------------------------------------------------

    def read_calendar(self, path: str | Path) -> EventCalendar:
        data = self.read_json(Path(path))
        serializer = EventCalendarSerializer(data=data)
        if not serializer.is_valid():
            raise InputDataError(f"Invalid calendar {path}: {serializer.errors}")
        events = sorted(
            (
                CalendarEvent(date=e["date"], kind=e["kind"])
                for e in serializer.validated_data["events"]
            ),
            key=lambda e: (e.date, e.kind),
        )
        return EventCalendar(events=tuple(events))

    def calendar_data(self, calendar: EventCalendar) -> dict:
        return {
            "events": [
                {"date": e.date.isoformat(), "kind": e.kind} for e in calendar.events
            ]
        }

    def write_events(self, folder: Path, events: list[DetectionEvent]) -> Path:
        rows = (
            (format_time(e.start), format_time(e.end), format_float(e.magnitude))
            for e in events
        )
        return self.write_csv(folder / "events.csv", ["start_utc", "end_utc", "magnitude"], rows)

    def write_scores(self, folder: Path, all_scores: list[AnomalyScoreSeries], day_of) -> Path:
        rows = (
            (day_of(w.start).isoformat(), scores.k, format_float(w.score))
            for scores in all_scores
            for w in scores.windows
        )
        return self.write_csv(folder / "scores.csv", ["day", "k", "rpdas"], rows)

    def write_pr_curve(self, path: Path, curve: PRCurve) -> Path:
        rows = (
            (format_float(p.tau), format_float(p.precision), format_float(p.recall))
            for p in curve.points
        )
        return self.write_csv(path, ["tau", "precision", "recall"], rows)

    # ------------------------------------------------------------------
    # synth
    # ------------------------------------------------------------------

    def write_truth(self, path: Path, truth: GeneratorTruth) -> Path:
        return self.write_json(
            path,
            {
                "phi_true": truth.phi_true.tolist(),
                "calendar": self.calendar_data(truth.calendar),
                "frames": {
                    camera: {
                        "timestamps": [format_time(t) for t in truth.frame_times[camera]],
                        "theta": truth.theta_true[camera].tolist(),
                    }
                    for camera in sorted(truth.frame_times)
                },
                "injected": [
                    {
                        "camera": e.camera,
                        "start": format_time(e.start),
                        "end": format_time(e.end),
                        "kind": e.kind,
                        "mixture": None if e.mixture is None else np.asarray(e.mixture).tolist(),
                        "scale_topic": e.scale_topic,
                        "scale_factor": e.scale_factor,
                    }
                    for e in truth.injected
                ],
            },
        )
