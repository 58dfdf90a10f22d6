"""Embedding-store writers, the label map, and the skip report.

The embedding formats here are wire-compatible with the curation
engine's readers:

* CSV: UTF-8, LF, no quoting, ``id,label,f_1..f_d`` with a header row;
  floats as the shortest decimal that round-trips float32.
* VPED: little-endian; 18-byte header (magic ``VPED``, version u16,
  dim u32, count u64), then per record u16-length-prefixed id and label
  plus dim float32 values.

Label map: CSV ``relative_path,label``, one row per output record.  The
same path may appear under several labels.  A header row matching the
column names exactly is skipped.

Skip report: JSONL, one object per image that could not be processed.
"""

from __future__ import annotations

import json
import struct
from typing import Iterable, Sequence

import numpy as np

MAGIC = b"VPED"
FORMAT_VERSION = 1
HEADER = struct.Struct("<4sHIQ")


def format_float(value: float) -> str:
    return str(np.float32(value))


def _checked(name: str, value: str, line: int, path: str) -> str:
    if not value:
        raise ValueError(f"{path}:{line}: empty {name}")
    if "," in value or "\n" in value or "\r" in value:
        raise ValueError(f"{path}:{line}: {name} may not contain commas or line breaks")
    return value


def read_label_map(path: str) -> list[tuple[str, str]]:
    entries: list[tuple[str, str]] = []
    with open(path, "r", encoding="utf-8", newline="") as fh:
        for line_no, raw in enumerate(fh, start=1):
            line = raw.rstrip("\n").rstrip("\r")
            if not line:
                continue
            if line_no == 1 and line == "relative_path,label":
                continue
            parts = line.split(",")
            if len(parts) != 2:
                raise ValueError(
                    f"{path}:{line_no}: expected 'relative_path,label', got {len(parts)} fields"
                )
            rel = _checked("relative_path", parts[0], line_no, path)
            label = _checked("label", parts[1], line_no, path)
            entries.append((rel, label))
    if not entries:
        raise ValueError(f"{path}: label map has no entries")
    return entries


def write_embeddings_csv(path: str, rows: Sequence[tuple[str, str, np.ndarray]], dim: int) -> None:
    header = "id,label," + ",".join(f"f_{i}" for i in range(1, dim + 1))
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(header + "\n")
        for rec_id, label, vector in rows:
            values = ",".join(format_float(v) for v in vector)
            fh.write(f"{rec_id},{label},{values}\n")


def write_embeddings_vped(path: str, rows: Sequence[tuple[str, str, np.ndarray]], dim: int) -> None:
    with open(path, "wb") as fh:
        fh.write(HEADER.pack(MAGIC, FORMAT_VERSION, dim, len(rows)))
        for rec_id, label, vector in rows:
            id_bytes = rec_id.encode("utf-8")
            label_bytes = label.encode("utf-8")
            fh.write(struct.pack("<H", len(id_bytes)))
            fh.write(id_bytes)
            fh.write(struct.pack("<H", len(label_bytes)))
            fh.write(label_bytes)
            fh.write(np.asarray(vector, dtype="<f4").tobytes())


def write_embeddings(path: str, rows: Sequence[tuple[str, str, np.ndarray]], dim: int) -> None:
    """Pick the format from the file extension: .vped binary, else CSV."""
    for rec_id, label, vector in rows:
        if len(vector) != dim:
            raise ValueError(f"record {rec_id!r}: vector has {len(vector)} values, expected {dim}")
    if path.endswith(".vped"):
        write_embeddings_vped(path, rows, dim)
    else:
        write_embeddings_csv(path, rows, dim)


def read_embeddings(path: str) -> tuple[int, list[tuple[str, str, np.ndarray]]]:
    """Read either format back; used by the round-trip tests."""
    with open(path, "rb") as fh:
        head = fh.read(4)
    if head == MAGIC:
        return _read_vped(path)
    return _read_csv(path)


def _read_csv(path: str) -> tuple[int, list[tuple[str, str, np.ndarray]]]:
    rows: list[tuple[str, str, np.ndarray]] = []
    dim = None
    with open(path, "r", encoding="utf-8", newline="") as fh:
        for line_no, raw in enumerate(fh, start=1):
            line = raw.rstrip("\n")
            if not line:
                continue
            parts = line.split(",")
            if line_no == 1 and parts[2:3] == ["f_1"]:
                continue
            vector = np.array([np.float32(p) for p in parts[2:]], dtype=np.float32)
            if dim is None:
                dim = len(vector)
            rows.append((parts[0], parts[1], vector))
    return dim or 0, rows


def _read_vped(path: str) -> tuple[int, list[tuple[str, str, np.ndarray]]]:
    rows: list[tuple[str, str, np.ndarray]] = []
    with open(path, "rb") as fh:
        magic, version, dim, count = HEADER.unpack(fh.read(HEADER.size))
        if magic != MAGIC or version != FORMAT_VERSION:
            raise ValueError(f"{path}: not a supported VPED file")
        for _ in range(count):
            (id_len,) = struct.unpack("<H", fh.read(2))
            rec_id = fh.read(id_len).decode("utf-8")
            (label_len,) = struct.unpack("<H", fh.read(2))
            label = fh.read(label_len).decode("utf-8")
            vector = np.frombuffer(fh.read(4 * dim), dtype="<f4")
            rows.append((rec_id, label, vector.copy()))
    return dim, rows


def write_skip_report(path: str, skips: Iterable[dict]) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for skip in skips:
            fh.write(json.dumps(skip, separators=(",", ":"), sort_keys=True) + "\n")
