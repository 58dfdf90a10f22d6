from __future__ import annotations

import logging

import numpy as np
import pytest
from PIL import Image

from imgfeat import ensure_weights


@pytest.fixture(autouse=True)
def fresh_logging():
    # cli.main() binds its handler to sys.stderr at call time; reset per
    # test so nothing writes into a dead capture buffer
    root = logging.getLogger()
    saved = root.handlers[:]
    root.handlers[:] = []
    yield
    root.handlers[:] = saved
    logging.getLogger("imgfeat").handlers[:] = []


def pytest_terminal_summary(terminalreporter):
    import sys

    acceptance = sys.modules.get("test_acceptance_secondary")
    verdicts = getattr(acceptance, "VERDICTS", None)
    if verdicts:
        terminalreporter.write_sep("-", "acceptance criteria (imgfeat)")
        for line in verdicts:
            terminalreporter.write_line(line)


@pytest.fixture(scope="session")
def weights_dir(tmp_path_factory):
    path = tmp_path_factory.mktemp("weights")
    ensure_weights(str(path))
    return str(path)


def _pattern(w, h, phase):
    xx, yy = np.meshgrid(np.arange(w), np.arange(h))
    r = ((xx * 7 + phase) % 256).astype(np.uint8)
    g = ((yy * 11 + 3 * phase) % 256).astype(np.uint8)
    b = ((xx + yy + 5 * phase) % 256).astype(np.uint8)
    return Image.fromarray(np.stack([r, g, b], axis=-1))


@pytest.fixture(scope="session")
def image_dir(tmp_path_factory):
    """A small image tree: two nested PNGs, a JPEG, solid extremes, and
    one file that is not an image at all."""
    root = tmp_path_factory.mktemp("images")
    (root / "a").mkdir()
    (root / "b").mkdir()
    _pattern(20, 14, 0).save(root / "a" / "first.png")
    _pattern(33, 41, 1).save(root / "b" / "second.png")
    _pattern(64, 64, 2).save(root / "third.jpg", quality=90)
    Image.new("RGB", (64, 64), (0, 0, 0)).save(root / "black.png")
    Image.new("RGB", (64, 64), (255, 255, 255)).save(root / "white.png")
    (root / "broken.png").write_bytes(b"\x89PNG not really image data")
    return str(root)


def write_label_map(path, entries, header=False):
    lines = ["relative_path,label"] if header else []
    lines += [f"{rel},{label}" for rel, label in entries]
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    return str(path)


@pytest.fixture(scope="session")
def write_map():
    # handed out as a fixture because test modules cannot safely
    # `import conftest` when several test trees are collected together
    return write_label_map
