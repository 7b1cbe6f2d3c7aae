"""
CorpusService: Bag-of-Label-Words vectors and per-camera tf-idf.

tf is binary presence. The per-camera idf of label j for camera c is
ln(N_c / n^j_c); labels never seen on a camera get a NaN sentinel, which
reweight treats as zero because their tf is zero too.
"""

import logging

import numpy as np

from app.exceptions import InputDataError
from app.models import (
    AnnotationRecord,
    BagVector,
    CorpusStats,
    ImageLabelMatrix,
    Vocabulary,
)

logger = logging.getLogger(__name__)

UNSEEN = np.nan


class CorpusService:
    """Service for building and reweighting image-label matrices."""

    def vectorize(self, record: AnnotationRecord, vocab: Vocabulary) -> BagVector:
        """Binary bag over ``vocab``; labels outside it are dropped."""
        dims = {
            vocab.index[label]: 1.0
            for label in record.prefixed_labels
            if label in vocab.index
        }
        return BagVector(dims=dict(sorted(dims.items())))

    def build_matrices(
        self, records: list[AnnotationRecord], vocab: Vocabulary
    ) -> dict[str, ImageLabelMatrix]:
        """
        One image-label matrix per camera, rows ordered by timestamp.

        Records must be deduplicated on (camera, timestamp); a stable sort
        keeps input order for anything else.
        """
        by_camera: dict[str, list[AnnotationRecord]] = {}
        for record in records:
            by_camera.setdefault(record.camera_id, []).append(record)

        matrices = {}
        for camera in sorted(by_camera):
            rows = sorted(by_camera[camera], key=lambda r: r.timestamp)
            times = [r.timestamp for r in rows]
            if any(b <= a for a, b in zip(times, times[1:], strict=False)):
                raise InputDataError(
                    f"Camera {camera} has repeated timestamps; deduplicate first"
                )
            matrices[camera] = ImageLabelMatrix(
                camera_id=camera,
                timestamps=tuple(times),
                rows=tuple(self.vectorize(r, vocab) for r in rows),
                M=vocab.M,
            )
        return matrices

    def per_camera_idf(
        self,
        vocab: Vocabulary,
        stats: CorpusStats,
        camera_id: str,
        counts: str = "per_camera",
    ) -> np.ndarray:
        """
        Per-camera inverse document frequency.

        Args:
            vocab: Vocabulary the stats cover
            stats: CorpusStats
            camera_id: Camera whose N_c is the numerator
            counts: ``per_camera`` uses n^j_c; ``global`` uses n^j

        Returns:
            Length-M vector; NaN marks labels with a zero count

        Raises:
            InputDataError: unknown camera or mismatched dimensions
        """
        if camera_id not in stats.per_camera_counts:
            raise InputDataError(f"Unknown camera '{camera_id}'")
        if stats.doc_count.shape[0] != vocab.M:
            raise InputDataError("Stats and vocabulary dimensions differ")

        N_c = stats.per_camera_counts[camera_id]
        if counts == "global":
            n = stats.doc_count.astype(float)
        else:
            n = stats.per_camera_doc_count[camera_id].astype(float)

        idf = np.full(vocab.M, UNSEEN)
        seen = n > 0
        idf[seen] = np.log(N_c / n[seen])
        if counts == "global" and np.any(idf[seen] < 0):
            logger.warning(
                f"Global counts give negative idf for {int(np.sum(idf[seen] < 0))} "
                f"labels on camera {camera_id}"
            )
        return idf

    def reweight(self, matrix: ImageLabelMatrix, idf: np.ndarray) -> ImageLabelMatrix:
        """
        Multiply every row by the camera's idf.

        Entries whose idf is zero (or the unseen sentinel) leave the row.

        Raises:
            InputDataError: idf length differs from the matrix dimension
        """
        if idf.shape != (matrix.M,):
            raise InputDataError(
                f"idf has length {idf.shape[0]}, matrix dimension is {matrix.M}"
            )
        rows = []
        for row in matrix.rows:
            dims = {}
            for j, tf in row.dims.items():
                weight = idf[j]
                if np.isnan(weight):
                    continue
                value = tf * float(weight)
                if value != 0.0:
                    dims[j] = value
            rows.append(BagVector(dims=dims))
        return ImageLabelMatrix(
            camera_id=matrix.camera_id,
            timestamps=matrix.timestamps,
            rows=tuple(rows),
            M=matrix.M,
        )

    def tfidf_matrices(
        self,
        matrices: dict[str, ImageLabelMatrix],
        vocab: Vocabulary,
        stats: CorpusStats,
        counts: str = "per_camera",
    ) -> dict[str, ImageLabelMatrix]:
        """Reweight every camera's matrix with its own idf."""
        return {
            camera: self.reweight(
                matrix, self.per_camera_idf(vocab, stats, camera, counts=counts)
            )
            for camera, matrix in matrices.items()
        }
