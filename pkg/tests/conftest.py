from __future__ import annotations

import logging

import pytest

from factories import make_dataset


@pytest.fixture(autouse=True)
def fresh_logging():
    # cli.main() calls logging.basicConfig, which binds its handler to
    # whatever sys.stderr is at that moment; clear handlers around every
    # test so each run rebinds to the live stream instead of a dead
    # capture buffer from an earlier test
    root = logging.getLogger()
    saved = root.handlers[:]
    root.handlers[:] = []
    yield
    root.handlers[:] = saved
    logging.getLogger("varpedis").handlers[:] = []


def pytest_terminal_summary(terminalreporter):
    import sys

    acceptance = sys.modules.get("test_acceptance")
    verdicts = getattr(acceptance, "VERDICTS", None)
    if verdicts:
        terminalreporter.write_sep("-", "acceptance criteria")
        for line in verdicts:
            terminalreporter.write_line(line)


@pytest.fixture(scope="session")
def big_fixture_path(tmp_path_factory):
    """The 15-class reference dataset: 14 x 5000 + 1 x 124, d=1024, VPED."""
    from varpedis.store import write_binary

    sizes = {f"finding-{i:02d}": 5000 for i in range(14)}
    sizes["rare-finding"] = 124
    dataset = make_dataset(sizes, d=1024, seed=20240800, outlier_share=0.03)
    path = tmp_path_factory.mktemp("fixtures") / "reference-15.vped"
    write_binary(dataset, str(path))
    return str(path)
