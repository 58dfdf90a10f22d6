"""Directory-of-images to embedding file."""

from __future__ import annotations

import logging
import os
from dataclasses import dataclass, field
from typing import Callable, Optional

import torch
from PIL import Image, UnidentifiedImageError

from imgfeat import backbone as bb
from imgfeat import formats

log = logging.getLogger("imgfeat")

# detector hook: gets the 256x256 RGB image, returns a (left, top,
# right, bottom) box in that coordinate space, or None to fall back
Detector = Callable[[Image.Image], Optional[tuple[int, int, int, int]]]


@dataclass
class ExtractJob:
    image_root: str
    label_map: str
    output: str
    backbone: str = "densenet121"
    crop: str = "center"            # "center" or "detector"
    detector: Optional[Detector] = None
    weights_dir: str = "backbone-weights"
    weights_path: Optional[str] = None
    batch_size: int = 8
    skip_report: Optional[str] = None

    def __post_init__(self) -> None:
        if self.crop not in ("center", "detector"):
            raise ValueError(f"crop must be 'center' or 'detector', got {self.crop!r}")
        if self.crop == "detector" and self.detector is None:
            raise ValueError("crop='detector' needs a detector callable")
        if self.batch_size < 1:
            raise ValueError(f"batch_size must be >= 1, got {self.batch_size}")


@dataclass
class ExtractResult:
    output: str
    skip_report: str
    written: int
    skipped: list[dict] = field(default_factory=list)


def extract(job: ExtractJob) -> ExtractResult:
    """Embed every label-map entry, in label-map order.

    Images that cannot be opened or decoded are skipped with a warning
    and listed in the sidecar report; everything else becomes one output
    record per (path, label) entry.  Re-running an identical job writes
    identical bytes.
    """
    entries = formats.read_label_map(job.label_map)
    dim = bb.backbone_dim(job.backbone)
    weights = job.weights_path or bb.ensure_weights(job.weights_dir, job.backbone)
    model = bb.load_backbone(weights, job.backbone)

    tensors: list[torch.Tensor] = []
    kept: list[tuple[str, str]] = []
    skipped: list[dict] = []
    for rel, label in entries:
        path = os.path.join(job.image_root, rel)
        try:
            with Image.open(path) as image:
                image.load()
                box = None
                if job.crop == "detector":
                    box = job.detector(image.convert("RGB").resize(
                        (bb.RESIZE_TO, bb.RESIZE_TO), Image.BILINEAR
                    ))
                tensors.append(bb.preprocess(image, box))
        except (FileNotFoundError, UnidentifiedImageError, OSError) as exc:
            log.warning("skipping %s: %s", rel, exc)
            skipped.append({"path": rel, "label": label, "reason": str(exc)})
            continue
        kept.append((rel, label))

    rows = []
    for start in range(0, len(tensors), job.batch_size):
        batch = torch.stack(tensors[start:start + job.batch_size])
        vectors = bb.embed_batch(model, batch)
        for (rel, label), vector in zip(kept[start:start + job.batch_size], vectors):
            rows.append((rel, label, vector))

    formats.write_embeddings(job.output, rows, dim)
    report_path = job.skip_report or job.output + ".skips.jsonl"
    formats.write_skip_report(report_path, skipped)
    log.info("wrote %d records (%d skipped) to %s", len(rows), len(skipped), job.output)
    return ExtractResult(
        output=job.output, skip_report=report_path, written=len(rows), skipped=skipped
    )
