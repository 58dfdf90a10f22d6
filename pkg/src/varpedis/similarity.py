"""Centroid and cosine-similarity kernels.

All arithmetic runs in 64-bit floats regardless of the float32 storage
type: accumulating means and dot products at storage precision loses
digits long before the selection thresholds care.  Cosine results are
clamped to [-1, 1] to absorb round-off.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from varpedis.store import EmbeddingRecord

COSINE_SLACK = 1e-9


class ZeroNormError(ValueError):
    """Cosine similarity is undefined for a zero-length vector."""


@dataclass(frozen=True)
class ClassCentroid:
    label: str
    vector: np.ndarray = field(repr=False)  # float64
    count: int


@dataclass(frozen=True)
class ScoredRecord:
    record_index: int
    similarity: float


def centroid(records: Sequence[EmbeddingRecord]) -> ClassCentroid:
    """Component-wise arithmetic mean of a class, accumulated in float64."""
    if not records:
        raise ValueError("cannot take the centroid of an empty class")
    matrix = np.stack([r.vector for r in records]).astype(np.float64)
    mean = matrix.mean(axis=0)
    return ClassCentroid(label=records[0].label, vector=mean, count=len(records))


def cosine(x: np.ndarray, v: np.ndarray) -> float:
    """Cosine of the angle between two vectors, in [-1, 1]."""
    a = np.asarray(x, dtype=np.float64)
    b = np.asarray(v, dtype=np.float64)
    na = float(np.linalg.norm(a))
    nb = float(np.linalg.norm(b))
    if na == 0.0 or nb == 0.0:
        raise ZeroNormError("cosine similarity is undefined for a zero vector")
    raw = float(np.dot(a, b)) / (na * nb)
    if raw > 1.0 + COSINE_SLACK or raw < -1.0 - COSINE_SLACK:
        raise ValueError(f"cosine {raw} outside [-1, 1] beyond round-off slack")
    return min(1.0, max(-1.0, raw))


def score_class(records: Sequence[EmbeddingRecord], cent: ClassCentroid) -> list[ScoredRecord]:
    """Similarity of every record to the class centroid, in record order.

    Raises ZeroNormError naming the offending record (or the centroid) if
    any vector has zero length.
    """
    if not records:
        return []
    v = np.asarray(cent.vector, dtype=np.float64)
    vnorm = float(np.linalg.norm(v))
    if vnorm == 0.0:
        raise ZeroNormError(f"class {cent.label!r}: centroid has zero norm")
    matrix = np.stack([r.vector for r in records]).astype(np.float64)
    norms = np.linalg.norm(matrix, axis=1)
    zero = np.flatnonzero(norms == 0.0)
    if zero.size:
        bad = records[int(zero[0])]
        raise ZeroNormError(f"record {bad.id!r}: zero-norm vector")
    sims = (matrix @ v) / (norms * vnorm)
    np.clip(sims, -1.0, 1.0, out=sims)
    return [ScoredRecord(record_index=i, similarity=float(s)) for i, s in enumerate(sims)]
