"""
Domain types for the topic-signals pipeline.

Nothing here is stored in a database: every type is a plain dataclass that
services build, transform and hand to the artifact layer for persistence.
Instances are treated as immutable once constructed.
"""

import hashlib
from dataclasses import dataclass, field
from datetime import date, datetime, timedelta
from functools import cached_property

import numpy as np

LABEL_PREFIX = "LS{source}: {text}"


def prefixed_label(source: int, text: str) -> str:
    """Return the vocabulary form of a label, e.g. ``LS2: Snow``."""
    return LABEL_PREFIX.format(source=source, text=text)


# ---------------------------------------------------------------------------
# ingest
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class AnnotationRecord:
    """
    One annotated camera frame.

    Labels are (source_id, text) pairs; text is whitespace-trimmed with its
    case preserved, and the set carries no duplicate pairs.
    """

    camera_id: str
    timestamp: datetime
    labels: frozenset[tuple[int, str]]

    @property
    def prefixed_labels(self) -> list[str]:
        return sorted(prefixed_label(s, t) for s, t in self.labels)

    def __str__(self):
        return f"{self.camera_id} @ {self.timestamp.isoformat()}"


@dataclass(frozen=True)
class Vocabulary:
    """Lexicographically ordered prefixed labels; position is the dimension."""

    entries: tuple[str, ...]

    @cached_property
    def index(self) -> dict[str, int]:
        return {label: j for j, label in enumerate(self.entries)}

    @property
    def M(self) -> int:
        return len(self.entries)

    @cached_property
    def vocab_hash(self) -> str:
        """SHA-256 of the newline-joined entries."""
        return hashlib.sha256("\n".join(self.entries).encode("utf-8")).hexdigest()

    def __len__(self):
        return len(self.entries)

    def __contains__(self, label: str):
        return label in self.index


@dataclass(frozen=True)
class CorpusStats:
    """Image and document counts over one vocabulary."""

    N: int
    per_camera_counts: dict[str, int]
    doc_count: np.ndarray
    per_camera_doc_count: dict[str, np.ndarray]

    @property
    def doc_freq(self) -> np.ndarray:
        if self.N == 0:
            return np.zeros_like(self.doc_count, dtype=float)
        return self.doc_count / self.N


# ---------------------------------------------------------------------------
# corpus
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class BagVector:
    """Sparse bag of label words; ``weight_total`` is the L1 norm."""

    dims: dict[int, float] = field(default_factory=dict)

    @property
    def weight_total(self) -> float:
        return float(sum(abs(v) for v in self.dims.values()))

    def dense(self, M: int) -> np.ndarray:
        row = np.zeros(M)
        for j, v in self.dims.items():
            row[j] = v
        return row


@dataclass(frozen=True)
class ImageLabelMatrix:
    """Per-camera image-label matrix with rows in strictly increasing time."""

    camera_id: str
    timestamps: tuple[datetime, ...]
    rows: tuple[BagVector, ...]
    M: int

    @property
    def N_c(self) -> int:
        return len(self.rows)


# ---------------------------------------------------------------------------
# topics
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class TopicModel:
    """
    Fitted LDA topics.

    ``phi`` is K x M and row-stochastic. ``elbo_history`` holds the corpus
    bound after each full pass when monitoring was requested.
    """

    K: int
    phi: np.ndarray
    alpha: float
    beta: float
    vocab_hash: str
    elbo_history: tuple[float, ...] = ()

    @property
    def M(self) -> int:
        return int(self.phi.shape[1])


@dataclass(frozen=True)
class DocTopicAssignment:
    theta: np.ndarray


@dataclass(frozen=True)
class SelectionCurve:
    """Held-out perplexity and its rate of change across a K grid."""

    k_grid: list[int]
    delta_k: int
    perp: list[float]
    rpc: list[float | None]
    rpc_std: list[float | None]
    k_star: int | None
    seed: int = 0


# ---------------------------------------------------------------------------
# signals
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class IrregularSeries:
    """Unevenly sampled signal; ``kind`` names the label or topic."""

    camera_id: str
    kind: str
    times: tuple[datetime, ...]
    values: np.ndarray

    def __len__(self):
        return len(self.times)


@dataclass(frozen=True)
class RegularSeries:
    """
    Evenly sampled signal starting at ``start``.

    ``values`` has shape (N,) for one channel or (N, m) for m channels.
    """

    start: datetime
    interval: timedelta
    values: np.ndarray
    camera_id: str = ""
    kind: str = ""

    def __len__(self):
        return int(self.values.shape[0])

    @property
    def channels(self) -> int:
        return 1 if self.values.ndim == 1 else int(self.values.shape[1])

    @property
    def times(self) -> list[datetime]:
        return [self.start + i * self.interval for i in range(len(self))]


@dataclass(frozen=True)
class SubsequenceSet:
    """Sliding windows of length k, flattened to vectors in R^(m*k)."""

    k: int
    vectors: np.ndarray

    def __len__(self):
        return int(self.vectors.shape[0])


# ---------------------------------------------------------------------------
# changepoint
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ChangePointResult:
    """Optimal segmentation: change points, penalty and objective value."""

    rho: list[int]
    B: float
    total_cost: float
    # per-channel mean of each segment
    segment_means: list[np.ndarray]


@dataclass(frozen=True)
class DetectionEvent:
    start: datetime
    end: datetime | None
    magnitude: float


@dataclass(frozen=True)
class CalendarEvent:
    date: date
    kind: str


@dataclass(frozen=True)
class EventCalendar:
    """Date-quantized notable events; each date is unique per kind."""

    events: tuple[CalendarEvent, ...] = ()

    def days(self, kinds=None) -> list[date]:
        """Sorted distinct dates, optionally restricted to ``kinds``."""
        selected = {
            event.date
            for event in self.events
            if kinds is None or event.kind in kinds
        }
        return sorted(selected)

    def merged(self, other: "EventCalendar") -> "EventCalendar":
        seen = set(self.events)
        extra = tuple(e for e in other.events if e not in seen)
        return EventCalendar(
            events=tuple(sorted(self.events + extra, key=lambda e: (e.date, e.kind)))
        )


@dataclass(frozen=True)
class MatchCounts:
    tp: int
    fp: int
    fn: int


@dataclass(frozen=True)
class Metrics:
    prec: float
    rec: float
    f1: float


# ---------------------------------------------------------------------------
# ratio
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class DensityRatioModel:
    """
    RuLSIF fit of the gamma-relative density ratio.

    ``cv_scores`` maps (sigma, lambda) to the held-out least-squares score
    of that grid cell.
    """

    gamma: float
    centers: np.ndarray
    sigma: float
    lambda_reg: float
    coeffs: np.ndarray
    cv_scores: dict[tuple[float, float], float] = field(default_factory=dict)


@dataclass(frozen=True)
class DivergenceEstimate:
    value: float
    direction: tuple[str, str]
    gamma: float


# ---------------------------------------------------------------------------
# detect
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class AnomalyWindow:
    start: datetime
    size: int
    score: float


@dataclass(frozen=True)
class AnomalyScoreSeries:
    """RPDAS per test window for one subsequence length k."""

    k: int
    gamma: float
    windows: tuple[AnomalyWindow, ...]


@dataclass(frozen=True)
class PRPoint:
    tau: float
    precision: float
    recall: float


@dataclass(frozen=True)
class PRCurve:
    """Threshold sweep; ``best_tau``/``best_f1`` is the max-F1 point."""

    points: tuple[PRPoint, ...]
    auc: float
    best_tau: float
    best_f1: float
    prevalence: float


@dataclass(frozen=True)
class DetectionReport:
    """Evaluation of one scored signal at its best threshold."""

    k: int
    curve: PRCurve
    detected_days: list[date]
    matched_days: list[date]
    counts: MatchCounts
    null_precision: float


# ---------------------------------------------------------------------------
# synth
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class GeneratorSpec:
    """
    Ground-truth generator settings.

    ``schedules`` maps camera id to (offset, mixture) keyframes; the mixture
    between keyframes is linear in time and held flat outside them. With
    ``schedule_period`` set, offsets wrap modulo the period (daily cycles).
    """

    phi_true: np.ndarray
    label_names: tuple[str, ...]
    schedules: dict[str, list[tuple[timedelta, np.ndarray]]]
    start: datetime
    duration: timedelta
    cameras: tuple[str, ...]
    labels_per_image: float = 10.0
    frame_interval: timedelta = timedelta(minutes=3)
    concentration: float | None = None
    schedule_period: timedelta | None = None
    seed: int = 0

    @property
    def K_true(self) -> int:
        return int(self.phi_true.shape[0])


@dataclass(frozen=True)
class InjectedEvent:
    """
    Override of a camera's topic mixture over [start, end).

    Either ``mixture`` replaces the schedule outright, or ``scale_topic``
    has its weight multiplied by ``scale_factor`` before renormalizing.
    """

    camera: str
    start: datetime
    end: datetime
    kind: str
    mixture: np.ndarray | None = None
    scale_topic: int | None = None
    scale_factor: float = 0.0


@dataclass(frozen=True)
class GeneratorTruth:
    """What the generator knows: true topics, per-frame mixtures, calendar."""

    phi_true: np.ndarray
    frame_times: dict[str, list[datetime]]
    theta_true: dict[str, np.ndarray]
    calendar: EventCalendar
    injected: tuple[InjectedEvent, ...] = ()


# ---------------------------------------------------------------------------
# cli
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class PipelineConfig:
    """Validated pipeline configuration; see ``settings.TOPIC_SIGNALS``."""

    annotations: str
    workdir: str
    cutoff: float
    exclusions: list[str]
    label_sources: list[int]
    idf_counts: str
    resample_minutes: float
    align: str
    downsample: int
    timezone: str
    topics: int
    alpha: float | None
    beta: float
    kappa: float
    tau0: float
    batch_size: int
    passes: int
    max_iterations: int
    tolerance: float
    k_grid: list[int]
    delta_k: int
    resamples: int
    split: float
    perplexity_method: str
    penalty: float | None
    merge_window_hours: float
    top_n: int
    tolerance_hours: float
    storm_kinds: list[str]
    gamma: float
    k_list: list[int]
    tau_grid_size: int
    sigma_scales: list[float]
    lambda_grid: list[float]
    folds: int
    n_centers: int
    reference_start: date | None
    reference_days: int
    anomaly_kinds: list[str]
    fit_seed: int
    select_seed: int
    ratio_seed: int

    @property
    def alpha_effective(self) -> float:
        return self.alpha if self.alpha is not None else 50.0 / self.topics

    @property
    def resample_interval(self) -> timedelta:
        return timedelta(minutes=self.resample_minutes)
