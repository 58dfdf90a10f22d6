"""Synthetic populations with known subgroup structure, and bias metrics.

The harness answers one question: when selection compresses a class, what
happens to its hidden subgroups?  You describe a population as Gaussian
subgroups with exact proportions, generate it, select on it, then compare
subgroup shares before and after.

Population spec (JSON)::

    {
      "dim": 16,
      "seed": 7,
      "classes": [
        {"label": "cohort", "size": 5000,
         "subgroups": [
            {"name": "majority", "proportion": 0.9,
             "center": [...dim floats...], "spread": 0.5},
            ...
         ]}
      ]
    }

Proportions within a class must sum to 1 (tolerance 1e-9) and are turned
into integer counts by largest-remainder rounding (ties broken by
subgroup order).  Records are drawn from isotropic Gaussians around each
center, then every component is shifted by a per-class constant,
max(|center component|) over the class's subgroups plus 4 times the
largest spread, so that components are (near-certainly) non-negative and
cosine scores land in [0, 1] the way post-activation network features do.

Report metrics per class:

* subgroup shares in the original vs. the selected set (selected means
  manifest status SELECTED or ALL_KEPT_SMALL_CLASS);
* bucket membership and per-bucket selected counts, plus
  ``occupancy_max_dev``: the largest |selected_b - n1| over full buckets
  (buckets holding at least n1 members), 0 when there are none;
* ``variance_retention``: trace of the selected set's covariance over
  trace of the original covariance (float64, population covariance);
  defined as 1.0 when the original trace is 0;
* ``minority_share_delta``: selected share minus original share of the
  class's smallest original subgroup (ties broken by name).

The harness measures these properties; it does not promise any of them.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from varpedis.rng import DOMAIN_POPULATION, class_stream
from varpedis.store import (
    ALL_KEPT_SMALL_CLASS,
    RETAINED_NOT_SAMPLED,
    SELECTED,
    Dataset,
    EmbeddingRecord,
    SelectionManifest,
)

PROPORTION_TOLERANCE = 1e-9


@dataclass(frozen=True)
class SubgroupSpec:
    name: str
    proportion: float
    center: tuple[float, ...]
    spread: float

    def __post_init__(self) -> None:
        if not self.name:
            raise ValueError("subgroup name must be non-empty")
        if not 0.0 <= self.proportion <= 1.0:
            raise ValueError(f"subgroup {self.name!r}: proportion must be in [0, 1]")
        if self.spread < 0.0:
            raise ValueError(f"subgroup {self.name!r}: spread must be >= 0")
        if not all(math.isfinite(c) for c in self.center):
            raise ValueError(f"subgroup {self.name!r}: center has non-finite components")


@dataclass(frozen=True)
class ClassSpec:
    label: str
    size: int
    subgroups: tuple[SubgroupSpec, ...]

    def __post_init__(self) -> None:
        if self.size < 1:
            raise ValueError(f"class {self.label!r}: size must be >= 1")
        if not self.subgroups:
            raise ValueError(f"class {self.label!r}: needs at least one subgroup")
        names = [g.name for g in self.subgroups]
        if len(set(names)) != len(names):
            raise ValueError(f"class {self.label!r}: duplicate subgroup names")
        total = sum(g.proportion for g in self.subgroups)
        if abs(total - 1.0) > PROPORTION_TOLERANCE:
            raise ValueError(
                f"class {self.label!r}: subgroup proportions sum to {total!r}, not 1"
            )


@dataclass(frozen=True)
class PopulationSpec:
    dim: int
    seed: int
    classes: tuple[ClassSpec, ...]

    def __post_init__(self) -> None:
        if self.dim < 1:
            raise ValueError("dim must be >= 1")
        if not self.classes:
            raise ValueError("population needs at least one class")
        labels = [c.label for c in self.classes]
        if len(set(labels)) != len(labels):
            raise ValueError("duplicate class labels in population spec")
        for cls in self.classes:
            for grp in cls.subgroups:
                if len(grp.center) != self.dim:
                    raise ValueError(
                        f"class {cls.label!r} subgroup {grp.name!r}: center has "
                        f"{len(grp.center)} components, expected {self.dim}"
                    )

    @classmethod
    def from_dict(cls, obj: dict) -> "PopulationSpec":
        classes = tuple(
            ClassSpec(
                label=c["label"],
                size=c["size"],
                subgroups=tuple(
                    SubgroupSpec(
                        name=g["name"],
                        proportion=g["proportion"],
                        center=tuple(float(x) for x in g["center"]),
                        spread=float(g["spread"]),
                    )
                    for g in c["subgroups"]
                ),
            )
            for c in obj["classes"]
        )
        return cls(dim=obj["dim"], seed=obj["seed"], classes=classes)


def load_population_spec(path: str) -> PopulationSpec:
    with open(path, "r", encoding="utf-8") as fh:
        try:
            obj = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ValueError(f"{path}: not valid JSON ({exc})") from None
    try:
        return PopulationSpec.from_dict(obj)
    except (KeyError, TypeError) as exc:
        raise ValueError(f"{path}: bad population spec ({exc})") from None


def subgroup_counts(size: int, proportions: Sequence[float]) -> list[int]:
    """Largest-remainder rounding of size * proportions to integers.

    Leftover units go to the largest fractional remainders; exact ties go
    to the earlier subgroup.
    """
    exact = [size * p for p in proportions]
    base = [int(math.floor(e)) for e in exact]
    leftover = size - sum(base)
    by_remainder = sorted(range(len(exact)), key=lambda i: (-(exact[i] - base[i]), i))
    for i in by_remainder[:leftover]:
        base[i] += 1
    return base


def generate_population(spec: PopulationSpec) -> tuple[Dataset, dict[str, list[str]]]:
    """Materialize a spec into a Dataset plus per-record subgroup tags.

    Tags come back as label -> list of subgroup names, parallel to the
    class's record order.  Generation is deterministic per (seed, label):
    regenerating with another seed changes every vector but never the
    subgroup counts.
    """
    records: list[EmbeddingRecord] = []
    tags: dict[str, list[str]] = {}
    for cls in spec.classes:
        counts = subgroup_counts(cls.size, [g.proportion for g in cls.subgroups])
        offset = max(
            max(abs(c) for c in grp.center) for grp in cls.subgroups
        ) + 4.0 * max(grp.spread for grp in cls.subgroups)
        stream = class_stream(spec.seed, cls.label, DOMAIN_POPULATION)
        class_tags: list[str] = []
        serial = 0
        for grp, count in zip(cls.subgroups, counts):
            if count == 0:
                continue
            center = np.asarray(grp.center, dtype=np.float64)
            block = center + grp.spread * stream.standard_normal((count, spec.dim))
            block += offset
            for row in block.astype(np.float32):
                records.append(
                    EmbeddingRecord(id=f"{cls.label}-{serial:06d}", label=cls.label, vector=row)
                )
                class_tags.append(grp.name)
                serial += 1
        tags[cls.label] = class_tags
    return Dataset(dim=spec.dim, records=tuple(records)), tags


@dataclass
class ClassBias:
    label: str
    records: int
    selected: int
    original_share: dict[str, float]
    selected_share: dict[str, float]
    minority: str
    minority_share_delta: float
    bucket_members: list[int]
    bucket_selected: list[int]
    occupancy_max_dev: int
    variance_retention: float


@dataclass
class BiasReport:
    classes: dict[str, ClassBias] = field(default_factory=dict)

    def to_dict(self) -> dict:
        out: dict = {"classes": {}}
        for label, cb in self.classes.items():
            out["classes"][label] = {
                "records": cb.records,
                "selected": cb.selected,
                "original_share": dict(cb.original_share),
                "selected_share": dict(cb.selected_share),
                "minority": cb.minority,
                "minority_share_delta": cb.minority_share_delta,
                "bucket_members": list(cb.bucket_members),
                "bucket_selected": list(cb.bucket_selected),
                "occupancy_max_dev": cb.occupancy_max_dev,
                "variance_retention": cb.variance_retention,
            }
        return out

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)


def evaluate_selection(
    manifest: SelectionManifest, dataset: Dataset, tags: dict[str, list[str]]
) -> BiasReport:
    """Compute the bias metrics for one selection run.

    The manifest must have been produced from exactly this dataset; a
    record mismatch raises ValueError.
    """
    if len(manifest.entries) != len(dataset.records):
        raise ValueError(
            f"manifest covers {len(manifest.entries)} records, dataset has "
            f"{len(dataset.records)}"
        )
    for entry, rec in zip(manifest.entries, dataset.records):
        if entry.id != rec.id or entry.label != rec.label:
            raise ValueError(
                f"manifest entry ({entry.id!r}, {entry.label!r}) does not match "
                f"dataset record ({rec.id!r}, {rec.label!r})"
            )
    for label in dataset.classes:
        if label not in tags or len(tags[label]) != len(dataset.classes[label]):
            raise ValueError(f"subgroup tags missing or incomplete for class {label!r}")

    by_class: dict[str, list] = {label: [] for label in dataset.classes}
    for entry in manifest.entries:
        by_class[entry.label].append(entry)

    n1 = manifest.config.n1
    report = BiasReport()
    for label, recs in dataset.classes.items():
        entries = by_class[label]
        class_tags = tags[label]
        names = sorted(set(class_tags))
        n = len(recs)

        orig_counts = {name: 0 for name in names}
        for tag in class_tags:
            orig_counts[tag] += 1
        sel_idx = [
            i
            for i, e in enumerate(entries)
            if e.status in (SELECTED, ALL_KEPT_SMALL_CLASS)
        ]
        sel_counts = {name: 0 for name in names}
        for i in sel_idx:
            sel_counts[class_tags[i]] += 1
        n_sel = len(sel_idx)
        original_share = {name: orig_counts[name] / n for name in names}
        selected_share = {
            name: (sel_counts[name] / n_sel if n_sel else 0.0) for name in names
        }

        minority = min(names, key=lambda name: (orig_counts[name], name))
        delta = selected_share[minority] - original_share[minority]

        n_buckets = 1 + max(
            (e.bucket for e in entries if e.bucket is not None), default=-1
        )
        bucket_members = [0] * n_buckets
        bucket_selected = [0] * n_buckets
        for e in entries:
            if e.bucket is not None and e.status in (SELECTED, RETAINED_NOT_SAMPLED):
                bucket_members[e.bucket] += 1
                if e.status == SELECTED:
                    bucket_selected[e.bucket] += 1
        devs = [
            abs(bucket_selected[b] - n1)
            for b in range(n_buckets)
            if bucket_members[b] >= n1
        ]
        occupancy_max_dev = max(devs) if devs else 0

        report.classes[label] = ClassBias(
            label=label,
            records=n,
            selected=n_sel,
            original_share=original_share,
            selected_share=selected_share,
            minority=minority,
            minority_share_delta=delta,
            bucket_members=bucket_members,
            bucket_selected=bucket_selected,
            occupancy_max_dev=occupancy_max_dev,
            variance_retention=_variance_retention(recs, sel_idx),
        )
    return report


def _variance_retention(recs: Sequence[EmbeddingRecord], sel_idx: Sequence[int]) -> float:
    matrix = np.stack([r.vector for r in recs]).astype(np.float64)
    total = _trace_cov(matrix)
    if total == 0.0:
        return 1.0
    if not sel_idx:
        return 0.0
    return _trace_cov(matrix[list(sel_idx)]) / total


def _trace_cov(matrix: np.ndarray) -> float:
    mu = matrix.mean(axis=0)
    return float(((matrix - mu) ** 2).sum() / matrix.shape[0])
