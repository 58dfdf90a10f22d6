"""Typed storage for class-labeled embedding vectors and selection manifests.

Three on-disk formats live here, all designed for byte-stable round trips:

CSV (.csv)
    UTF-8, LF line endings, no quoting (commas are forbidden inside ids and
    labels).  Columns are ``id,label,f_1,...,f_d``.  A header row is optional
    on read and detected by a non-numeric third field; the writer always
    emits one.  Float components are written as the shortest decimal string
    that round-trips to the same float32, so read(write(ds)) == ds exactly.

VPED binary (.vped)
    Little-endian throughout.  18-byte header: magic ``56 50 45 44``
    ("VPED"), format version u16 (currently 1), dimensionality u32, record
    count u64.  Each record is ``id_len:u16, id:utf8, label_len:u16,
    label:utf8, dim * f32``.  Bit-exact round trips.

Selection manifest (.jsonl)
    One JSON object per line.  Line 1 is metadata::

        {"config": {...}, "seed": u64, "dim": u32, "records": u64}

    where ``config`` echoes every selection parameter except the seed.
    Every following line describes one input record, in input order::

        {"id": ..., "label": ..., "status": ..., "similarity": f|null,
         "bucket": int|null}

    ``status`` is one of ALL_KEPT_SMALL_CLASS, DISCARDED_THRESHOLD,
    RETAINED_NOT_SAMPLED, SELECTED.  Similarities are recorded rounded to
    9 decimal places (see selection.py for why).

The same id may appear under several labels; identity is the (id, label)
pair and duplicates of that pair are rejected.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field
from typing import TYPE_CHECKING, Iterable, Optional, Sequence

import numpy as np

if TYPE_CHECKING:
    from varpedis.selection import SelectionConfig

MAGIC = b"VPED"
FORMAT_VERSION = 1
HEADER = struct.Struct("<4sHIQ")  # magic, version, dim, record count

ALL_KEPT_SMALL_CLASS = "ALL_KEPT_SMALL_CLASS"
DISCARDED_THRESHOLD = "DISCARDED_THRESHOLD"
RETAINED_NOT_SAMPLED = "RETAINED_NOT_SAMPLED"
SELECTED = "SELECTED"
STATUSES = frozenset(
    {ALL_KEPT_SMALL_CLASS, DISCARDED_THRESHOLD, RETAINED_NOT_SAMPLED, SELECTED}
)

_MAX_NAME_BYTES = 0xFFFF


class FormatError(ValueError):
    """A file or in-memory value violates one of the storage contracts."""


def format_float32(value: np.float32 | float) -> str:
    """Shortest decimal string that parses back to the identical float32."""
    return str(np.float32(value))


@dataclass(frozen=True, eq=False)
class EmbeddingRecord:
    """One embedding: an id, a class label, and a float32 vector.

    Records are immutable after construction; the vector array is marked
    non-writeable.  Equality is exact: ids, labels, and vector bits.
    """

    id: str
    label: str
    vector: np.ndarray = field(repr=False)

    def __post_init__(self) -> None:
        if not self.id:
            raise FormatError("record id must be non-empty")
        if not self.label:
            raise FormatError(f"record {self.id!r}: label must be non-empty")
        for name, text in (("id", self.id), ("label", self.label)):
            if "," in text or "\n" in text or "\r" in text:
                raise FormatError(
                    f"record {self.id!r}: {name} may not contain commas or line breaks"
                )
            if len(text.encode("utf-8")) > _MAX_NAME_BYTES:
                raise FormatError(f"record {self.id!r}: {name} exceeds 65535 UTF-8 bytes")
        vec = np.asarray(self.vector, dtype=np.float32)
        if vec.ndim != 1 or vec.shape[0] < 1:
            raise FormatError(f"record {self.id!r}: vector must be 1-D and non-empty")
        if not np.isfinite(vec).all():
            raise FormatError(f"record {self.id!r}: vector has non-finite components")
        if vec.flags.writeable:
            if vec is self.vector:
                vec = vec.copy()
            vec.flags.writeable = False
        object.__setattr__(self, "vector", vec)

    @property
    def dim(self) -> int:
        return int(self.vector.shape[0])

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, EmbeddingRecord):
            return NotImplemented
        return (
            self.id == other.id
            and self.label == other.label
            and self.vector.tobytes() == other.vector.tobytes()
        )

    def __hash__(self) -> int:
        return hash((self.id, self.label))


@dataclass(eq=False)
class Dataset:
    """An ordered collection of records grouped by class label.

    ``records`` preserves global input order (the order manifests are
    emitted in); ``classes`` maps each label to its records in that same
    relative order, keyed in order of first appearance.
    """

    dim: int
    records: tuple[EmbeddingRecord, ...]
    classes: dict[str, list[EmbeddingRecord]] = field(init=False, repr=False)

    def __post_init__(self) -> None:
        if self.dim < 1:
            raise FormatError(f"dimensionality must be >= 1, got {self.dim}")
        self.records = tuple(self.records)
        seen: set[tuple[str, str]] = set()
        classes: dict[str, list[EmbeddingRecord]] = {}
        for rec in self.records:
            if rec.dim != self.dim:
                raise FormatError(
                    f"record {rec.id!r}: dimension {rec.dim} != dataset dimension {self.dim}"
                )
            key = (rec.id, rec.label)
            if key in seen:
                raise FormatError(f"duplicate record {rec.id!r} under label {rec.label!r}")
            seen.add(key)
            classes.setdefault(rec.label, []).append(rec)
        self.classes = classes

    def __len__(self) -> int:
        return len(self.records)

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, Dataset):
            return NotImplemented
        return self.dim == other.dim and self.records == other.records

    @classmethod
    def from_records(cls, records: Iterable[EmbeddingRecord], dim: Optional[int] = None) -> "Dataset":
        recs = tuple(records)
        if not recs:
            raise FormatError("dataset has no records")
        return cls(dim=dim if dim is not None else recs[0].dim, records=recs)


def read_csv(path: str, expected_dim: Optional[int] = None) -> Dataset:
    """Parse a CSV embedding file.

    Raises FormatError on an empty file, dimension mismatches, non-finite
    components, duplicate (id, label) pairs, or malformed rows; messages
    carry 1-based line numbers.
    """
    with open(path, "r", encoding="utf-8", newline="") as fh:
        text = fh.read()
    if not text:
        raise FormatError(f"{path}: empty file")
    if "\r" in text:
        raise FormatError(f"{path}: CR line endings are not part of the format (LF only)")
    lines = text.split("\n")
    if lines and lines[-1] == "":
        lines.pop()

    records: list[EmbeddingRecord] = []
    dim = expected_dim
    for lineno, line in enumerate(lines, start=1):
        if line == "":
            raise FormatError(f"{path}:{lineno}: blank line")
        parts = line.split(",")
        if len(parts) < 3:
            raise FormatError(f"{path}:{lineno}: expected id,label,f_1,... got {len(parts)} fields")
        if lineno == 1 and not _is_number(parts[2]):
            continue  # header row
        rec_id, label = parts[0], parts[1]
        try:
            vec = np.array(parts[2:], dtype=np.float32)
        except ValueError as exc:
            raise FormatError(f"{path}:{lineno}: bad float component ({exc})") from None
        if dim is None:
            dim = len(parts) - 2
        elif len(parts) - 2 != dim:
            raise FormatError(
                f"{path}:{lineno}: row has {len(parts) - 2} components, expected {dim}"
            )
        try:
            records.append(EmbeddingRecord(id=rec_id, label=label, vector=vec))
        except FormatError as exc:
            raise FormatError(f"{path}:{lineno}: {exc}") from None
    if not records:
        raise FormatError(f"{path}: no data rows")
    try:
        return Dataset(dim=dim, records=tuple(records))
    except FormatError as exc:
        raise FormatError(f"{path}: {exc}") from None


def write_csv(dataset: Dataset, path: str) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        header = ["id", "label"] + [f"f_{i}" for i in range(1, dataset.dim + 1)]
        fh.write(",".join(header) + "\n")
        for rec in dataset.records:
            comps = ",".join(format_float32(c) for c in rec.vector)
            fh.write(f"{rec.id},{rec.label},{comps}\n")


def _is_number(token: str) -> bool:
    try:
        float(token)
    except ValueError:
        return False
    return True


def read_binary(path: str) -> Dataset:
    """Parse a VPED file.  Bit-exact inverse of write_binary."""
    with open(path, "rb") as fh:
        data = fh.read()
    if len(data) < HEADER.size:
        raise FormatError(f"{path}: truncated header ({len(data)} bytes)")
    magic, version, dim, count = HEADER.unpack_from(data, 0)
    if magic != MAGIC:
        raise FormatError(f"{path}: bad magic {magic!r}, expected {MAGIC!r}")
    if version != FORMAT_VERSION:
        raise FormatError(f"{path}: unsupported format version {version}")
    if dim < 1:
        raise FormatError(f"{path}: dimensionality {dim} out of range")
    offset = HEADER.size
    vec_bytes = 4 * dim
    records: list[EmbeddingRecord] = []
    for n in range(count):
        try:
            rec_id, offset = _read_name(data, offset)
            label, offset = _read_name(data, offset)
            if offset + vec_bytes > len(data):
                raise FormatError("truncated vector")
            vec = np.frombuffer(data, dtype="<f4", count=dim, offset=offset)
            offset += vec_bytes
            records.append(EmbeddingRecord(id=rec_id, label=label, vector=vec))
        except FormatError as exc:
            raise FormatError(f"{path}: record {n}: {exc}") from None
    if offset != len(data):
        raise FormatError(
            f"{path}: {len(data) - offset} trailing bytes after the declared "
            f"{count} records"
        )
    if not records:
        raise FormatError(f"{path}: empty file (0 records)")
    try:
        return Dataset(dim=dim, records=tuple(records))
    except FormatError as exc:
        raise FormatError(f"{path}: {exc}") from None


def _read_name(data: bytes, offset: int) -> tuple[str, int]:
    if offset + 2 > len(data):
        raise FormatError("truncated length prefix")
    (length,) = struct.unpack_from("<H", data, offset)
    offset += 2
    if offset + length > len(data):
        raise FormatError("truncated name field")
    try:
        text = data[offset : offset + length].decode("utf-8")
    except UnicodeDecodeError as exc:
        raise FormatError(f"invalid UTF-8 in name field ({exc})") from None
    return text, offset + length


def write_binary(dataset: Dataset, path: str) -> None:
    with open(path, "wb") as fh:
        fh.write(HEADER.pack(MAGIC, FORMAT_VERSION, dataset.dim, len(dataset.records)))
        for rec in dataset.records:
            for text in (rec.id, rec.label):
                raw = text.encode("utf-8")
                fh.write(struct.pack("<H", len(raw)))
                fh.write(raw)
            fh.write(rec.vector.astype("<f4", copy=False).tobytes())


@dataclass(frozen=True)
class ManifestEntry:
    """Selection outcome for one input record."""

    id: str
    label: str
    status: str
    similarity: Optional[float] = None
    bucket: Optional[int] = None

    def __post_init__(self) -> None:
        if self.status not in STATUSES:
            raise FormatError(f"unknown manifest status {self.status!r}")
        if self.status == SELECTED and (self.similarity is None or self.bucket is None):
            raise FormatError(
                f"entry {self.id!r}: SELECTED entries need a similarity and a bucket"
            )


@dataclass
class SelectionManifest:
    """Full record-level account of one selection run."""

    config: "SelectionConfig"
    dim: int
    records: int
    entries: list[ManifestEntry]


def write_manifest(manifest: SelectionManifest, path: str) -> None:
    """Serialize to JSONL with a fixed field order (byte-deterministic)."""
    cfg = manifest.config
    meta = {
        "config": {
            "theta": cfg.theta,
            "k": cfg.k,
            "n_min": cfg.n_min,
            "n1": cfg.n1,
            "small_class_max": cfg.small_class_max,
        },
        "seed": cfg.seed,
        "dim": manifest.dim,
        "records": manifest.records,
    }
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(json.dumps(meta, separators=(",", ":")) + "\n")
        for entry in manifest.entries:
            obj = {
                "id": entry.id,
                "label": entry.label,
                "status": entry.status,
                "similarity": entry.similarity,
                "bucket": entry.bucket,
            }
            fh.write(json.dumps(obj, separators=(",", ":")) + "\n")


def read_manifest(path: str) -> SelectionManifest:
    from varpedis.selection import SelectionConfig

    with open(path, "r", encoding="utf-8", newline="") as fh:
        lines = fh.read().split("\n")
    if lines and lines[-1] == "":
        lines.pop()
    if not lines:
        raise FormatError(f"{path}: empty manifest")
    try:
        meta = json.loads(lines[0])
        config = SelectionConfig(seed=meta["seed"], **meta["config"])
        dim = meta["dim"]
        declared = meta["records"]
    except (json.JSONDecodeError, KeyError, TypeError) as exc:
        raise FormatError(f"{path}:1: bad metadata line ({exc})") from None
    entries: list[ManifestEntry] = []
    for lineno, line in enumerate(lines[1:], start=2):
        try:
            obj = json.loads(line)
            entries.append(
                ManifestEntry(
                    id=obj["id"],
                    label=obj["label"],
                    status=obj["status"],
                    similarity=obj["similarity"],
                    bucket=obj["bucket"],
                )
            )
        except (json.JSONDecodeError, KeyError, TypeError, FormatError) as exc:
            raise FormatError(f"{path}:{lineno}: bad manifest entry ({exc})") from None
    if len(entries) != declared:
        raise FormatError(
            f"{path}: metadata declares {declared} records but {len(entries)} entries follow"
        )
    return SelectionManifest(config=config, dim=dim, records=declared, entries=entries)


def detect_format(path: str) -> str:
    """Classify a dataset file as "vped" or "csv" by magic bytes, then suffix."""
    try:
        with open(path, "rb") as fh:
            head = fh.read(4)
    except OSError:
        head = b""
    if head == MAGIC:
        return "vped"
    if str(path).lower().endswith(".vped"):
        return "vped"
    return "csv"


def read_dataset(path: str, fmt: Optional[str] = None) -> Dataset:
    """Read either format; auto-detect when fmt is None."""
    fmt = fmt or detect_format(path)
    if fmt == "vped":
        return read_binary(path)
    if fmt == "csv":
        return read_csv(path)
    raise FormatError(f"unknown dataset format {fmt!r}")
