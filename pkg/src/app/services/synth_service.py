"""
SynthService: ground-truth annotation streams for testing the pipeline.

Each camera emits one frame every ``frame_interval``. A frame's topic
mixture comes from the camera's keyframe schedule (optionally perturbed by
a Dirichlet draw); its bag size is Poisson(labels_per_image) redrawn until
it is at least 1; that many labels are drawn from sum_z theta_z phi_z and
collapsed to a set. Injected events regenerate the frames inside their span
under an overridden mixture and add their days to the truth calendar.
"""

import json
import logging
import re
from datetime import datetime, timedelta
from pathlib import Path

import numpy as np

from app.exceptions import InputDataError
from app.models import (
    AnnotationRecord,
    CalendarEvent,
    EventCalendar,
    GeneratorSpec,
    GeneratorTruth,
    InjectedEvent,
)
from app.serializers import GeneratorSpecSerializer

logger = logging.getLogger(__name__)

PREFIXED = re.compile(r"^LS(\d+): (.+)$")


def block_topics(K: int, labels_per_topic: int) -> tuple[np.ndarray, tuple[str, ...]]:
    """K topics, each uniform over its own disjoint block of labels."""
    M = K * labels_per_topic
    phi = np.zeros((K, M))
    for z in range(K):
        phi[z, z * labels_per_topic : (z + 1) * labels_per_topic] = 1.0 / labels_per_topic
    names = tuple(f"LS1: token{j:04d}" for j in range(M))
    return phi, names


def split_label(name: str) -> tuple[int, str]:
    match = PREFIXED.match(name)
    if match:
        return int(match.group(1)), match.group(2).strip()
    return 1, name.strip()


class SynthService:
    """Service for generating synthetic annotation streams."""

    # ------------------------------------------------------------------
    # spec files
    # ------------------------------------------------------------------

    def load_spec(self, path: str | Path) -> tuple[GeneratorSpec, list[InjectedEvent]]:
        """
        Read and validate a JSON generator spec.

        Raises:
            InputDataError: missing file, bad JSON or invalid spec
        """
        path = Path(path)
        if not path.exists():
            raise InputDataError(f"Generator spec not found: {path}")
        try:
            data = json.loads(path.read_text(encoding="utf-8"))
        except json.JSONDecodeError as e:
            raise InputDataError(f"Generator spec is not JSON: {e.msg}", line=e.lineno) from e
        return self.build_spec(data)

    def build_spec(self, data: dict) -> tuple[GeneratorSpec, list[InjectedEvent]]:
        serializer = GeneratorSpecSerializer(data=data)
        if not serializer.is_valid():
            raise InputDataError(f"Invalid generator spec: {serializer.errors}")
        attrs = serializer.validated_data

        if attrs.get("phi"):
            phi = np.array(attrs["phi"], dtype=float)
            phi /= phi.sum(axis=1, keepdims=True)
            names = attrs.get("label_names") or [
                f"LS1: token{j:04d}" for j in range(phi.shape[1])
            ]
            names = tuple(names)
        else:
            phi, names = block_topics(attrs["topics"], attrs["labels_per_topic"])

        def keyframes(frames):
            return [
                (timedelta(hours=f["offset_hours"]), np.array(f["mixture"], dtype=float))
                for f in frames
            ]

        schedules = {
            camera: keyframes(attrs["schedules"].get(camera, attrs["keyframes"]))
            for camera in attrs["cameras"]
        }
        period = attrs.get("period_hours")
        spec = GeneratorSpec(
            phi_true=phi,
            label_names=names,
            schedules=schedules,
            start=attrs["start"],
            duration=timedelta(hours=attrs["duration_hours"]),
            cameras=tuple(attrs["cameras"]),
            labels_per_image=attrs["labels_per_image"],
            frame_interval=timedelta(minutes=attrs["frame_interval_minutes"]),
            concentration=attrs.get("concentration"),
            schedule_period=timedelta(hours=period) if period else None,
            seed=attrs["seed"],
        )
        events = [
            InjectedEvent(
                camera=e["camera"],
                start=e["start"],
                end=e["end"],
                kind=e["kind"],
                mixture=None if e.get("mixture") is None else np.array(e["mixture"]),
                scale_topic=e.get("scale_topic"),
                scale_factor=e.get("scale_factor", 0.0),
            )
            for e in attrs["events"]
        ]
        return spec, events

    # ------------------------------------------------------------------
    # generation
    # ------------------------------------------------------------------

    def mixture_at(self, spec: GeneratorSpec, camera: str, instant: datetime) -> np.ndarray:
        """Scheduled topic mixture of ``camera`` at ``instant``."""
        frames = spec.schedules[camera]
        offset = (instant - spec.start).total_seconds()
        if spec.schedule_period:
            offset %= spec.schedule_period.total_seconds()
        xs = np.array([o.total_seconds() for o, _ in frames])
        ys = np.vstack([m for _, m in frames])
        order = np.argsort(xs, kind="stable")
        xs, ys = xs[order], ys[order]
        mixture = np.array([np.interp(offset, xs, ys[:, z]) for z in range(ys.shape[1])])
        return mixture / mixture.sum()

    def frame_times(self, spec: GeneratorSpec) -> list[datetime]:
        count = int(np.ceil(spec.duration / spec.frame_interval))
        return [spec.start + i * spec.frame_interval for i in range(count)]

    def _draw_frame(
        self, rng: np.random.Generator, spec: GeneratorSpec, mixture: np.ndarray
    ) -> tuple[np.ndarray, frozenset[tuple[int, str]]]:
        theta = mixture
        if spec.concentration:
            support = mixture > 0
            theta = np.zeros_like(mixture)
            theta[support] = rng.dirichlet(spec.concentration * mixture[support])
        weight = 0
        while weight < 1:
            weight = int(rng.poisson(spec.labels_per_image))
        p = theta @ spec.phi_true
        drawn = rng.choice(p.shape[0], size=weight, p=p / p.sum())
        labels = frozenset(split_label(spec.label_names[j]) for j in set(drawn.tolist()))
        return theta, labels

    def generate(self, spec: GeneratorSpec) -> tuple[list[AnnotationRecord], GeneratorTruth]:
        """
        Sample annotation records for every camera.

        Cameras draw from independent generators spawned from ``spec.seed``.
        Records are ordered by (timestamp, camera order in the spec).

        Returns:
            (records, truth) with an empty calendar
        """
        times = self.frame_times(spec)
        streams = np.random.SeedSequence(spec.seed).spawn(len(spec.cameras))
        per_camera: dict[str, list[AnnotationRecord]] = {}
        theta_true = {}
        for camera, stream in zip(spec.cameras, streams, strict=True):
            rng = np.random.default_rng(stream)
            thetas, records = [], []
            for instant in times:
                theta, labels = self._draw_frame(rng, spec, self.mixture_at(spec, camera, instant))
                thetas.append(theta)
                records.append(AnnotationRecord(camera_id=camera, timestamp=instant, labels=labels))
            per_camera[camera] = records
            theta_true[camera] = np.array(thetas).reshape(len(times), spec.K_true)

        records = [per_camera[camera][i] for i in range(len(times)) for camera in spec.cameras]
        truth = GeneratorTruth(
            phi_true=spec.phi_true,
            frame_times={camera: list(times) for camera in spec.cameras},
            theta_true=theta_true,
            calendar=EventCalendar(),
        )
        logger.info(
            f"Generated {len(records)} frames for {len(spec.cameras)} cameras, "
            f"K={spec.K_true}, M={spec.phi_true.shape[1]}"
        )
        return records, truth

    def _override(self, event: InjectedEvent, base: np.ndarray) -> np.ndarray:
        if event.mixture is not None:
            mixture = np.asarray(event.mixture, dtype=float)
        else:
            mixture = base.copy()
            mixture[event.scale_topic] *= event.scale_factor
        if mixture.sum() <= 0:
            raise InputDataError(f"Event on {event.camera} leaves a mixture with no mass")
        return mixture / mixture.sum()

    def inject(
        self,
        records: list[AnnotationRecord],
        truth: GeneratorTruth,
        event: InjectedEvent,
        spec: GeneratorSpec,
    ) -> tuple[list[AnnotationRecord], GeneratorTruth]:
        """
        Regenerate the camera's frames in [start, end) under the override.

        Frames are redrawn from the base schedule, so when events overlap
        the later injection wins. The event's days join the calendar; a
        zero-length span changes nothing.

        Raises:
            InputDataError: unknown camera or span outside the horizon
        """
        if event.camera not in truth.frame_times:
            raise InputDataError(f"Unknown camera '{event.camera}'")
        if event.start < spec.start or event.end > spec.start + spec.duration:
            raise InputDataError("Event span lies outside the generated horizon")
        if event.end <= event.start:
            return records, truth

        rng = np.random.default_rng(
            np.random.SeedSequence([spec.seed, 1 + len(truth.injected)])
        )
        times = truth.frame_times[event.camera]
        theta = truth.theta_true[event.camera].copy()
        replaced = {}
        for i, instant in enumerate(times):
            if event.start <= instant < event.end:
                base = self.mixture_at(spec, event.camera, instant)
                drawn, labels = self._draw_frame(rng, spec, self._override(event, base))
                theta[i] = drawn
                replaced[instant] = AnnotationRecord(
                    camera_id=event.camera, timestamp=instant, labels=labels
                )

        updated = [
            replaced.get(r.timestamp, r) if r.camera_id == event.camera else r
            for r in records
        ]
        last = event.end - timedelta(microseconds=1)
        days = []
        day = event.start.date()
        while day <= last.date():
            days.append(CalendarEvent(date=day, kind=event.kind))
            day += timedelta(days=1)

        theta_true = dict(truth.theta_true)
        theta_true[event.camera] = theta
        calendar = truth.calendar.merged(EventCalendar(events=tuple(days)))
        logger.info(
            f"Injected {event.kind} on {event.camera}: {len(replaced)} frames, "
            f"{len(days)} calendar day(s)"
        )
        return updated, GeneratorTruth(
            phi_true=truth.phi_true,
            frame_times=truth.frame_times,
            theta_true=theta_true,
            calendar=calendar,
            injected=(*truth.injected, event),
        )

    def run(
        self, spec: GeneratorSpec, events: list[InjectedEvent]
    ) -> tuple[list[AnnotationRecord], GeneratorTruth]:
        """Generate, then apply events in order."""
        records, truth = self.generate(spec)
        for event in events:
            records, truth = self.inject(records, truth, event, spec)
        return records, truth
