"""
Factory Boy factories for creating test data.
"""

from datetime import UTC, datetime, timedelta

import factory
import numpy as np
from faker import Faker

from app.models import AnnotationRecord, GeneratorSpec
from app.services.synth_service import block_topics

fake = Faker()

START = datetime(2021, 1, 4, tzinfo=UTC)


class AnnotationRecordFactory(factory.Factory):
    """Factory for AnnotationRecord: one camera frame every 3 minutes."""

    class Meta:
        model = AnnotationRecord

    camera_id = "cam-1"
    timestamp = factory.Sequence(lambda n: START + n * timedelta(minutes=3))
    labels = factory.LazyFunction(
        lambda: frozenset(
            (source, fake.word()) for source in (1, 2) for _ in range(fake.random_int(1, 4))
        )
    )


class GeneratorSpecFactory(factory.Factory):
    """Factory for GeneratorSpec with block topics and flat schedules."""

    class Meta:
        model = GeneratorSpec

    class Params:
        topics = 2
        labels_per_topic = 5

    phi_true = factory.LazyAttribute(lambda o: block_topics(o.topics, o.labels_per_topic)[0])
    label_names = factory.LazyAttribute(
        lambda o: block_topics(o.topics, o.labels_per_topic)[1]
    )
    cameras = ("cam-a",)
    schedules = factory.LazyAttribute(
        lambda o: {
            camera: [(timedelta(0), np.full(o.topics, 1.0 / o.topics))]
            for camera in o.cameras
        }
    )
    start = START
    duration = timedelta(days=1)
    labels_per_image = 6.0
    frame_interval = timedelta(minutes=3)
    seed = factory.Sequence(lambda n: n)
