"""
Django REST Framework serializers for the topic-signals pipeline.

Every document the pipeline reads (annotation lines, configuration, event
calendars, generator specs) passes through one of these before a service
touches it. Services convert ``serializers.ValidationError`` into
``InputDataError`` at their boundary.
"""

import re
import zoneinfo
from datetime import UTC, datetime

from django.conf import settings
from rest_framework import serializers

CALENDAR_KINDS = ["rain", "snow", "holiday", "parking_ban"]
PERPLEXITY_METHODS = ["plugin", "bound"]

RFC3339_UTC = re.compile(r"^\d{4}-\d{2}-\d{2}T\d{2}:\d{2}:\d{2}(Z|\+00:00)$")


def parse_utc_timestamp(value: str) -> datetime:
    """Parse an RFC 3339 UTC instant with second precision."""
    if not isinstance(value, str) or not RFC3339_UTC.match(value):
        raise serializers.ValidationError(
            f"'{value}' is not an RFC 3339 UTC timestamp (YYYY-MM-DDTHH:MM:SSZ)."
        )
    try:
        parsed = datetime.fromisoformat(value.replace("Z", "+00:00"))
    except ValueError as e:
        raise serializers.ValidationError(str(e)) from e
    return parsed.astimezone(UTC)


class AnnotationLabelSerializer(serializers.Serializer):
    """One (source, text) label of an annotation line."""

    source = serializers.IntegerField()
    text = serializers.CharField(trim_whitespace=True, allow_blank=False)

    def validate_source(self, value):
        """Only configured label sources are accepted."""
        known = self.context.get("label_sources", settings.LABEL_SOURCES)
        if value not in known:
            raise serializers.ValidationError(
                f"Unknown label source {value}; expected one of {sorted(known)}."
            )
        return value


class AnnotationLineSerializer(serializers.Serializer):
    """
    Serializer for one line of a ``.jsonl`` annotation file.

    Example:
        {"camera_id": "1137-1", "timestamp": "2018-01-04T16:57:52Z",
         "labels": [{"source": 1, "text": "snow"}]}
    """

    camera_id = serializers.CharField(trim_whitespace=True)
    timestamp = serializers.CharField()
    labels = AnnotationLabelSerializer(many=True)

    def validate_timestamp(self, value):
        return parse_utc_timestamp(value)


class CalendarEventSerializer(serializers.Serializer):
    date = serializers.DateField()
    kind = serializers.ChoiceField(choices=CALENDAR_KINDS)


class EventCalendarSerializer(serializers.Serializer):
    """Calendar file: ``{"events": [{"date": "YYYY-MM-DD", "kind": "snow"}]}``."""

    events = CalendarEventSerializer(many=True)

    def validate_events(self, value):
        """Dates must be unique per kind."""
        seen = set()
        for event in value:
            key = (event["date"], event["kind"])
            if key in seen:
                raise serializers.ValidationError(
                    f"Duplicate calendar entry {event['date']} ({event['kind']})."
                )
            seen.add(key)
        return value


class PipelineConfigSerializer(serializers.Serializer):
    """
    Validates the merged pipeline configuration.

    Inputs come from ``settings.TOPIC_SIGNALS``, a dotenv-style config file
    and command-line flags; list values have already been split on commas.
    """

    annotations = serializers.CharField(allow_blank=True)
    workdir = serializers.CharField()

    cutoff = serializers.FloatField(min_value=0.0)
    exclusions = serializers.ListField(
        child=serializers.CharField(trim_whitespace=True), allow_empty=True
    )
    label_sources = serializers.ListField(
        child=serializers.IntegerField(min_value=0), allow_empty=False
    )
    idf_counts = serializers.ChoiceField(choices=["per_camera", "global"])

    resample_minutes = serializers.FloatField()
    align = serializers.ChoiceField(choices=["first", "clock"])
    downsample = serializers.IntegerField(min_value=1)
    timezone = serializers.CharField()

    topics = serializers.IntegerField(min_value=1)
    alpha = serializers.FloatField(allow_null=True, required=False)
    beta = serializers.FloatField()
    kappa = serializers.FloatField()
    tau0 = serializers.FloatField(min_value=0.0)
    batch_size = serializers.IntegerField(min_value=1)
    passes = serializers.IntegerField(min_value=1)
    max_iterations = serializers.IntegerField(min_value=1)
    tolerance = serializers.FloatField()

    k_grid = serializers.ListField(
        child=serializers.IntegerField(min_value=1), allow_empty=False
    )
    delta_k = serializers.IntegerField(min_value=1)
    resamples = serializers.IntegerField(min_value=1)
    split = serializers.FloatField()
    perplexity_method = serializers.ChoiceField(choices=PERPLEXITY_METHODS)

    penalty = serializers.FloatField(allow_null=True, required=False, min_value=0.0)
    merge_window_hours = serializers.FloatField(min_value=0.0)
    top_n = serializers.IntegerField(min_value=1)
    tolerance_hours = serializers.FloatField(min_value=0.0)
    storm_kinds = serializers.ListField(
        child=serializers.ChoiceField(choices=CALENDAR_KINDS), allow_empty=False
    )

    gamma = serializers.FloatField()
    k_list = serializers.ListField(
        child=serializers.IntegerField(min_value=1), allow_empty=False
    )
    tau_grid_size = serializers.IntegerField(min_value=2)
    sigma_scales = serializers.ListField(child=serializers.FloatField(), allow_empty=False)
    lambda_grid = serializers.ListField(child=serializers.FloatField(), allow_empty=False)
    folds = serializers.IntegerField(min_value=2)
    n_centers = serializers.IntegerField(min_value=1)
    reference_start = serializers.DateField(allow_null=True, required=False)
    reference_days = serializers.IntegerField(min_value=1)
    anomaly_kinds = serializers.ListField(
        child=serializers.ChoiceField(choices=CALENDAR_KINDS), allow_empty=False
    )

    fit_seed = serializers.IntegerField(min_value=0)
    select_seed = serializers.IntegerField(min_value=0)
    ratio_seed = serializers.IntegerField(min_value=0)

    def validate_cutoff(self, value):
        if not 0.0 <= value < 1.0:
            raise serializers.ValidationError("cutoff must satisfy 0 <= cutoff < 1.")
        return value

    def validate_resample_minutes(self, value):
        if value <= 0:
            raise serializers.ValidationError("resample_minutes must be positive.")
        return value

    def validate_timezone(self, value):
        try:
            zoneinfo.ZoneInfo(value)
        except (zoneinfo.ZoneInfoNotFoundError, ValueError) as e:
            raise serializers.ValidationError(
                f"'{value}' is not an IANA time zone."
            ) from e
        return value

    def validate_alpha(self, value):
        if value is not None and value <= 0:
            raise serializers.ValidationError("alpha must be positive.")
        return value

    def validate_beta(self, value):
        if value <= 0:
            raise serializers.ValidationError("beta must be positive.")
        return value

    def validate_kappa(self, value):
        if not 0.5 < value <= 1.0:
            raise serializers.ValidationError("kappa must satisfy 0.5 < kappa <= 1.")
        return value

    def validate_tolerance(self, value):
        if value <= 0:
            raise serializers.ValidationError("tolerance must be positive.")
        return value

    def validate_split(self, value):
        if not 0.0 < value < 1.0:
            raise serializers.ValidationError("split must satisfy 0 < split < 1.")
        return value

    def validate_gamma(self, value):
        if not 0.0 <= value < 1.0:
            raise serializers.ValidationError("gamma must satisfy 0 <= gamma < 1.")
        return value

    def validate_sigma_scales(self, value):
        if any(v <= 0 for v in value):
            raise serializers.ValidationError("sigma scales must be positive.")
        return value

    def validate_lambda_grid(self, value):
        if any(v < 0 for v in value):
            raise serializers.ValidationError("lambda values must be non-negative.")
        return value

    def validate(self, attrs):
        """The K grid must be increasing with spacing delta_k."""
        grid = attrs["k_grid"]
        steps = {b - a for a, b in zip(grid, grid[1:], strict=False)}
        if steps and steps != {attrs["delta_k"]}:
            raise serializers.ValidationError(
                {"k_grid": f"K grid must be increasing with spacing {attrs['delta_k']}."}
            )
        return attrs


class KeyframeSerializer(serializers.Serializer):
    offset_hours = serializers.FloatField(min_value=0.0)
    mixture = serializers.ListField(child=serializers.FloatField(min_value=0.0))


class InjectedEventSerializer(serializers.Serializer):
    """
    One injected event.

    Exactly one of ``mixture`` and ``scale_topic`` must be given.
    """

    camera = serializers.CharField()
    start = serializers.CharField()
    end = serializers.CharField()
    kind = serializers.ChoiceField(choices=CALENDAR_KINDS)
    mixture = serializers.ListField(
        child=serializers.FloatField(min_value=0.0), required=False, allow_null=True
    )
    scale_topic = serializers.IntegerField(min_value=0, required=False, allow_null=True)
    scale_factor = serializers.FloatField(min_value=0.0, default=0.0)

    def validate_start(self, value):
        return parse_utc_timestamp(value)

    def validate_end(self, value):
        return parse_utc_timestamp(value)

    def validate(self, attrs):
        if attrs["end"] < attrs["start"]:
            raise serializers.ValidationError({"end": "Event ends before it starts."})
        has_mixture = attrs.get("mixture") is not None
        has_scale = attrs.get("scale_topic") is not None
        if has_mixture == has_scale:
            raise serializers.ValidationError(
                "Give exactly one of 'mixture' or 'scale_topic'."
            )
        if has_mixture and sum(attrs["mixture"]) <= 0:
            raise serializers.ValidationError({"mixture": "Mixture has no mass."})
        return attrs


class GeneratorSpecSerializer(serializers.Serializer):
    """
    Serializer for a ``synth`` spec file.

    Topics are either given explicitly (``phi`` plus optional
    ``label_names``) or as disjoint uniform blocks (``topics`` x
    ``labels_per_topic``). ``keyframes`` apply to every camera unless
    ``schedules`` overrides them per camera.
    """

    start = serializers.CharField()
    duration_hours = serializers.FloatField(min_value=0.0)
    cameras = serializers.ListField(child=serializers.CharField(), allow_empty=False)
    frame_interval_minutes = serializers.FloatField(default=3.0)
    labels_per_image = serializers.FloatField(default=10.0)
    concentration = serializers.FloatField(required=False, allow_null=True)
    seed = serializers.IntegerField(min_value=0, default=0)

    phi = serializers.ListField(
        child=serializers.ListField(child=serializers.FloatField(min_value=0.0)),
        required=False,
        allow_null=True,
    )
    label_names = serializers.ListField(
        child=serializers.CharField(), required=False, allow_null=True
    )
    topics = serializers.IntegerField(min_value=1, required=False, allow_null=True)
    labels_per_topic = serializers.IntegerField(
        min_value=1, required=False, allow_null=True
    )

    keyframes = KeyframeSerializer(many=True)
    schedules = serializers.DictField(
        child=KeyframeSerializer(many=True), required=False, default=dict
    )
    period_hours = serializers.FloatField(required=False, allow_null=True)

    events = InjectedEventSerializer(many=True, required=False, default=list)

    def validate_start(self, value):
        return parse_utc_timestamp(value)

    def validate_frame_interval_minutes(self, value):
        if value <= 0:
            raise serializers.ValidationError("frame interval must be positive.")
        return value

    def validate_labels_per_image(self, value):
        if value <= 0:
            raise serializers.ValidationError("labels_per_image must be positive.")
        return value

    def validate_period_hours(self, value):
        if value is not None and value <= 0:
            raise serializers.ValidationError("period_hours must be positive.")
        return value

    def validate(self, attrs):
        """Resolve K and check every mixture and topic row against it."""
        phi = attrs.get("phi")
        if phi:
            K = len(phi)
            widths = {len(row) for row in phi}
            if len(widths) != 1:
                raise serializers.ValidationError({"phi": "Rows differ in length."})
            if any(sum(row) <= 0 for row in phi):
                raise serializers.ValidationError({"phi": "A topic row has no mass."})
            names = attrs.get("label_names")
            if names is not None and len(names) != widths.pop():
                raise serializers.ValidationError(
                    {"label_names": "One name per phi column is required."}
                )
        elif attrs.get("topics") and attrs.get("labels_per_topic"):
            K = attrs["topics"]
        else:
            raise serializers.ValidationError(
                "Give either 'phi' or both 'topics' and 'labels_per_topic'."
            )

        schedules = [attrs["keyframes"], *attrs["schedules"].values()]
        for keyframes in schedules:
            if not keyframes:
                raise serializers.ValidationError(
                    {"keyframes": "At least one keyframe is required."}
                )
            for frame in keyframes:
                if len(frame["mixture"]) != K or sum(frame["mixture"]) <= 0:
                    raise serializers.ValidationError(
                        {"keyframes": f"Every mixture needs {K} weights with mass."}
                    )
        unknown = set(attrs["schedules"]) - set(attrs["cameras"])
        if unknown:
            raise serializers.ValidationError(
                {"schedules": f"Unknown cameras: {sorted(unknown)}."}
            )
        for event in attrs["events"]:
            if event["camera"] not in attrs["cameras"]:
                raise serializers.ValidationError(
                    {"events": f"Unknown camera '{event['camera']}'."}
                )
            if event.get("mixture") is not None and len(event["mixture"]) != K:
                raise serializers.ValidationError(
                    {"events": f"Event mixtures need {K} weights."}
                )
            if event.get("scale_topic") is not None and event["scale_topic"] >= K:
                raise serializers.ValidationError(
                    {"events": f"scale_topic must be below {K}."}
                )
        attrs["K"] = K
        return attrs
