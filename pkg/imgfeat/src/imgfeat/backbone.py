"""Backbone construction, pinned weights, and image preprocessing.

Embedding determinism needs fixed weights.  Pretrained checkpoints are
not always fetchable, so the default weight source is a seeded random
initialization of the backbone, materialized once into a cache file and
pinned by a content hash in a lock file next to it.  Loading verifies
the hash, so a silently changed cache is an error, never a silently
different embedding.  Pass an explicit weights file to use a real
pretrained checkpoint instead; it gets pinned the same way.

Preprocessing: RGB, bilinear resize to 256x256, 224x224 crop (center,
or a caller-supplied box), scale to [0, 1], normalize with the ImageNet
channel statistics the backbone family conventionally uses.
"""

from __future__ import annotations

import hashlib
import json
import os

import numpy as np
import torch
from PIL import Image

RESIZE_TO = 256
CROP_TO = 224
INIT_SEED = 73
IMAGENET_MEAN = (0.485, 0.456, 0.406)
IMAGENET_STD = (0.229, 0.224, 0.225)

_BACKBONES = {"densenet121": 1024}


def backbone_dim(name: str) -> int:
    if name not in _BACKBONES:
        raise ValueError(f"unknown backbone {name!r}; supported: {sorted(_BACKBONES)}")
    return _BACKBONES[name]


def _build(name: str) -> torch.nn.Module:
    backbone_dim(name)
    from torchvision.models import densenet121

    return densenet121(weights=None)


def state_dict_digest(state: dict) -> str:
    """Content hash over parameter names and tensor bytes, in key order."""
    h = hashlib.sha256()
    for key in sorted(state):
        h.update(key.encode("utf-8"))
        h.update(b"\x00")
        h.update(state[key].detach().cpu().contiguous().numpy().tobytes())
    return h.hexdigest()


def ensure_weights(cache_dir: str, name: str = "densenet121") -> str:
    """Materialize the seeded default weights for `name`, return their path.

    Creates ``<cache_dir>/<name>-seeded.pt`` plus a ``.lock.json`` sidecar
    on first use; later calls verify the cache against the lock.
    """
    backbone_dim(name)
    os.makedirs(cache_dir, exist_ok=True)
    weights_path = os.path.join(cache_dir, f"{name}-seeded.pt")
    lock_path = weights_path + ".lock.json"

    if not os.path.exists(weights_path):
        torch.manual_seed(INIT_SEED)
        model = _build(name)
        state = model.state_dict()
        torch.save(state, weights_path)
        lock = {
            "backbone": name,
            "source": "seeded-init",
            "init_seed": INIT_SEED,
            "sha256": state_dict_digest(state),
            "torch": torch.__version__,
        }
        with open(lock_path, "w", encoding="utf-8") as fh:
            json.dump(lock, fh, indent=2, sort_keys=True)
            fh.write("\n")
    return weights_path


def load_backbone(weights_path: str, name: str = "densenet121") -> torch.nn.Module:
    """Build `name`, load pinned weights, verify the lock, set eval mode."""
    model = _build(name)
    state = torch.load(weights_path, map_location="cpu", weights_only=True)
    digest = state_dict_digest(state)

    lock_path = weights_path + ".lock.json"
    if os.path.exists(lock_path):
        with open(lock_path, "r", encoding="utf-8") as fh:
            lock = json.load(fh)
        if lock.get("sha256") != digest:
            raise ValueError(
                f"{weights_path}: content hash {digest[:12]}... does not match "
                f"lock file {lock.get('sha256', '?')[:12]}..."
            )
    else:
        with open(lock_path, "w", encoding="utf-8") as fh:
            json.dump(
                {"backbone": name, "source": "external", "sha256": digest,
                 "torch": torch.__version__},
                fh, indent=2, sort_keys=True,
            )
            fh.write("\n")

    model.load_state_dict(state)
    model.eval()
    return model


def preprocess(image: Image.Image, crop_box=None) -> torch.Tensor:
    """Image -> normalized (3, 224, 224) float tensor.

    ``crop_box`` is (left, top, right, bottom) in 256x256 coordinates;
    the box content is resized to 224x224.  Without a box the central
    224x224 window is taken.
    """
    rgb = image.convert("RGB").resize((RESIZE_TO, RESIZE_TO), Image.BILINEAR)
    if crop_box is not None:
        left, top, right, bottom = (int(v) for v in crop_box)
        left = max(0, min(left, RESIZE_TO - 1))
        top = max(0, min(top, RESIZE_TO - 1))
        right = max(left + 1, min(right, RESIZE_TO))
        bottom = max(top + 1, min(bottom, RESIZE_TO))
        cropped = rgb.crop((left, top, right, bottom)).resize(
            (CROP_TO, CROP_TO), Image.BILINEAR
        )
    else:
        margin = (RESIZE_TO - CROP_TO) // 2
        cropped = rgb.crop((margin, margin, margin + CROP_TO, margin + CROP_TO))

    array = np.asarray(cropped, dtype=np.float32) / 255.0
    tensor = torch.from_numpy(array).permute(2, 0, 1)
    mean = torch.tensor(IMAGENET_MEAN).view(3, 1, 1)
    std = torch.tensor(IMAGENET_STD).view(3, 1, 1)
    return (tensor - mean) / std


def embed_batch(model: torch.nn.Module, batch: torch.Tensor) -> np.ndarray:
    """Pooled feature vectors for a (n, 3, 224, 224) batch, float32."""
    with torch.no_grad():
        features = model.features(batch)
        pooled = torch.nn.functional.adaptive_avg_pool2d(torch.relu(features), 1)
    return pooled.flatten(1).cpu().numpy().astype(np.float32)
