"""Variance-preserving per-class instance selection.

The pipeline for one class with more than ``small_class_max`` records:

1. score every record by cosine similarity to the class centroid;
2. discard scores below ``theta`` (the boundary value is kept);
3. split the retained score range into ``k`` equal-width buckets and
   repair any bucket that is too thin (see bucketize);
4. draw up to ``n1`` records uniformly without replacement from each
   bucket.

Classes at or below ``small_class_max`` records pass through untouched.
If the whole retained set already fits the ``k * n1`` budget, it is taken
as-is and no sampling happens, since dropping records there would only
lose information.

Bucket semantics: each bucket covers the half-open interval [lo, hi),
except the highest bucket which closes at its upper end; a score landing
exactly on a boundary belongs to the higher bucket.

Determinism contract: the only randomness is the per-bucket draw.  Each
class uses its own PCG64 stream derived from (config.seed, label) as
documented in rng.py, consumed bucket by bucket in ascending bucket
order.  Buckets that fit entirely within ``n1`` are taken whole without
touching the stream.  Oversized buckets are drawn with a partial
Fisher-Yates shuffle: for i in 0..n1-1 swap position i with position
``stream.integers(i, m)`` of the member list (members listed in ascending
record order), then keep the first n1.  Results therefore depend only on
(seed, label, bucket contents), never on thread count or class order.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from varpedis import rng as _rng
from varpedis import similarity as _sim
from varpedis.store import (
    ALL_KEPT_SMALL_CLASS,
    DISCARDED_THRESHOLD,
    RETAINED_NOT_SAMPLED,
    SELECTED,
    Dataset,
    EmbeddingRecord,
    ManifestEntry,
    SelectionManifest,
)

SIMILARITY_DECIMALS = 9  # manifest similarities are rounded to this many places


@dataclass(frozen=True)
class SelectionConfig:
    """Tuning knobs for the selection pipeline.

    Defaults follow the reference configuration this tool was built
    around: theta 0.7, five buckets, 200 records per bucket, and a
    500-record small-class passthrough cutoff.
    """

    seed: int
    theta: float = 0.7
    k: int = 5
    n_min: int = 200
    n1: int = 200
    small_class_max: int = 500

    def __post_init__(self) -> None:
        if not 0 <= self.seed <= 2**64 - 1:
            raise ValueError(f"seed must fit in an unsigned 64-bit integer, got {self.seed}")
        if not 0.0 < self.theta <= 1.0:
            raise ValueError(f"theta must be in (0, 1], got {self.theta}")
        if self.k < 1:
            raise ValueError(f"k must be >= 1, got {self.k}")
        if self.n_min < 1:
            raise ValueError(f"n_min must be >= 1, got {self.n_min}")
        if self.n1 < 1:
            raise ValueError(f"n1 must be >= 1, got {self.n1}")
        if self.small_class_max < 0:
            raise ValueError(f"small_class_max must be >= 0, got {self.small_class_max}")


@dataclass(frozen=True)
class Bucket:
    """One similarity stratum: interval bounds plus member record indices."""

    index: int
    lo: float
    hi: float
    members: tuple[int, ...]


@dataclass
class ClassSelection:
    """Everything the pipeline decided about one class."""

    label: str
    passthrough: bool
    centroid: Optional[_sim.ClassCentroid]
    scored: list[_sim.ScoredRecord]
    discarded: list[int]
    buckets: list[Bucket]
    selected: list[int]
    sampled: bool = field(default=False)  # False when the whole retained set fit the budget


def threshold_filter(
    scored: Sequence[_sim.ScoredRecord], theta: float
) -> tuple[list[int], list[int]]:
    """Split scored records into (retained, discarded) index lists.

    A record is retained when its similarity is >= theta; the boundary
    value stays in.  Both lists preserve input order.
    """
    retained: list[int] = []
    discarded: list[int] = []
    for s in scored:
        if s.similarity >= theta:
            retained.append(s.record_index)
        else:
            discarded.append(s.record_index)
    return retained, discarded


def bucketize(similarities: Sequence[float], k: int, n_min: int) -> list[Bucket]:
    """Partition retained similarities into at most k equal-width buckets.

    Starts from an equal-width split of [min, max].  Buckets are then
    finalized from the highest-similarity end downward; whenever the
    current bucket holds fewer than n_min values, its lower edge is pushed
    down to absorb values in decreasing-similarity order until it reaches
    n_min (values tied with the new edge are absorbed too, keeping the
    boundary-goes-up rule intact), after which the range below is re-split
    equally among the buckets still to come.  If fewer values remain than
    buckets, the remainder collapses into one final bucket.  A degenerate
    input (min == max) yields a single bucket.

    Member indices refer to positions in the input sequence and are listed
    ascending.  Fewer than k buckets come back when the input runs out
    early; every bucket holds at least min(n_min, values remaining at its
    turn) members.
    """
    n = len(similarities)
    if n == 0:
        raise ValueError("bucketize needs at least one similarity")
    if k < 1 or n_min < 1:
        raise ValueError("k and n_min must be >= 1")
    sims = [float(s) for s in similarities]
    s_min = min(sims)
    s_max = max(sims)
    if s_min == s_max:
        return [Bucket(index=0, lo=s_min, hi=s_max, members=tuple(range(n)))]

    order = sorted(range(n), key=lambda i: -sims[i])
    edges = [s_min + i * (s_max - s_min) / k for i in range(k + 1)]
    edges[0], edges[k] = s_min, s_max
    pieces: list[tuple[float, float, list[int]]] = []  # built top-down
    hi = s_max
    b_rem = k
    pos = 0  # next unassigned slot in `order`
    while pos < n:
        remaining = n - pos
        if b_rem == 1 or remaining < b_rem:
            pieces.append((s_min, hi, order[pos:]))
            break
        cand_lo = edges[b_rem - 1]
        t = pos
        while t < n and sims[order[t]] >= cand_lo:
            t += 1
        if t - pos >= n_min:
            pieces.append((cand_lo, hi, order[pos:t]))
            pos = t
            hi = cand_lo
            b_rem -= 1
            edges = edges[:b_rem + 1]
        else:
            take = min(n_min, remaining)
            cut = sims[order[pos + take - 1]]
            t = pos + take
            while t < n and sims[order[t]] == cut:
                t += 1
            pieces.append((cut, hi, order[pos:t]))
            pos = t
            hi = cut
            b_rem -= 1
            if b_rem > 0 and pos < n:
                edges = [s_min + i * (cut - s_min) / b_rem for i in range(b_rem + 1)]
                edges[0], edges[b_rem] = s_min, cut

    pieces.reverse()
    return [
        Bucket(index=i, lo=lo, hi=hi_, members=tuple(sorted(members)))
        for i, (lo, hi_, members) in enumerate(pieces)
    ]


def sample_bucket(bucket: Bucket, n1: int, stream: np.random.Generator) -> list[int]:
    """Uniform draw without replacement of min(n1, len) members, ascending.

    Buckets that already fit are returned whole without consuming the
    stream; see the module docstring for the exact shuffle.
    """
    members = list(bucket.members)
    m = len(members)
    if m <= n1:
        return members
    for i in range(n1):
        j = int(stream.integers(i, m))
        members[i], members[j] = members[j], members[i]
    return sorted(members[:n1])


def select_class(records: Sequence[EmbeddingRecord], config: SelectionConfig) -> ClassSelection:
    """Run the full pipeline for one class."""
    if not records:
        raise ValueError("cannot select from an empty class")
    label = records[0].label
    if len(records) <= config.small_class_max:
        return ClassSelection(
            label=label,
            passthrough=True,
            centroid=None,
            scored=[],
            discarded=[],
            buckets=[],
            selected=list(range(len(records))),
        )

    cent = _sim.centroid(records)
    scored = _sim.score_class(records, cent)
    retained, discarded = threshold_filter(scored, config.theta)
    if not retained:
        return ClassSelection(
            label=label,
            passthrough=False,
            centroid=cent,
            scored=scored,
            discarded=discarded,
            buckets=[],
            selected=[],
        )

    raw = bucketize([scored[i].similarity for i in retained], config.k, config.n_min)
    buckets = [
        Bucket(
            index=b.index,
            lo=b.lo,
            hi=b.hi,
            members=tuple(retained[j] for j in b.members),
        )
        for b in raw
    ]

    if len(retained) <= config.k * config.n1:
        selected = sorted(retained)
        sampled = False
    else:
        stream = _rng.class_stream(config.seed, label)
        selected = []
        for bucket in buckets:
            selected.extend(sample_bucket(bucket, config.n1, stream))
        selected.sort()
        sampled = True

    return ClassSelection(
        label=label,
        passthrough=False,
        centroid=cent,
        scored=scored,
        discarded=discarded,
        buckets=buckets,
        selected=selected,
        sampled=sampled,
    )


def select_dataset(
    dataset: Dataset, config: SelectionConfig, max_workers: int = 1
) -> SelectionManifest:
    """Select every class and assemble the record-level manifest.

    Classes are independent, so they may be scored on a thread pool; the
    manifest is always assembled in input record order and is identical
    for any max_workers value.  Errors from a class are re-raised with the
    label attached.
    """
    if not dataset.records:
        raise ValueError("cannot select from an empty dataset")

    labels = list(dataset.classes)

    def run(label: str) -> ClassSelection:
        try:
            return select_class(dataset.classes[label], config)
        except (ValueError, _sim.ZeroNormError) as exc:
            raise type(exc)(f"class {label!r}: {exc}") from None

    if max_workers > 1 and len(labels) > 1:
        with ThreadPoolExecutor(max_workers=max_workers) as pool:
            results = dict(zip(labels, pool.map(run, labels)))
    else:
        results = {label: run(label) for label in labels}

    entries = _build_entries(dataset, results)
    return SelectionManifest(
        config=config,
        dim=dataset.dim,
        records=len(dataset.records),
        entries=entries,
    )


def _build_entries(
    dataset: Dataset, results: dict[str, ClassSelection]
) -> list[ManifestEntry]:
    per_class: dict[str, list[ManifestEntry]] = {}
    for label, sel in results.items():
        n = len(dataset.classes[label])
        status = [RETAINED_NOT_SAMPLED] * n
        sim: list[Optional[float]] = [None] * n
        bucket_of: list[Optional[int]] = [None] * n
        if sel.passthrough:
            status = [ALL_KEPT_SMALL_CLASS] * n
        else:
            for s in sel.scored:
                sim[s.record_index] = round(s.similarity, SIMILARITY_DECIMALS)
            for i in sel.discarded:
                status[i] = DISCARDED_THRESHOLD
            for b in sel.buckets:
                for i in b.members:
                    bucket_of[i] = b.index
            for i in sel.selected:
                status[i] = SELECTED
        recs = dataset.classes[label]
        per_class[label] = [
            ManifestEntry(
                id=recs[i].id,
                label=label,
                status=status[i],
                similarity=sim[i],
                bucket=bucket_of[i],
            )
            for i in range(n)
        ]

    cursor = {label: 0 for label in per_class}
    entries: list[ManifestEntry] = []
    for rec in dataset.records:
        idx = cursor[rec.label]
        cursor[rec.label] = idx + 1
        entries.append(per_class[rec.label][idx])
    return entries
