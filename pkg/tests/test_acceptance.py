"""The acceptance gate.

One test per required behavior.  Each records a single line

    [ACCEPTANCE] <name>: PASS|FAIL

which conftest replays in the terminal summary, so the verdicts survive
into a teed test log regardless of capture mode.
"""

import contextlib
import dataclasses
import importlib.resources
import time

import numpy as np
import pytest
from hypothesis import HealthCheck, given, settings
from hypothesis import strategies as st

from factories import make_dataset
from oracles import (
    oracle_centroid,
    oracle_cosine,
    oracle_sample,
    oracle_select,
    oracle_stream,
)
from test_selection import assert_valid_buckets
from varpedis import (
    SelectionConfig,
    bucketize,
    cli,
    cosine,
    centroid,
    evaluate_selection,
    generate_population,
    load_population_spec,
    read_binary,
    read_csv,
    read_manifest,
    select_class,
    select_dataset,
    threshold_filter,
    write_binary,
    write_csv,
    write_manifest,
)
from varpedis.similarity import ScoredRecord
from varpedis.store import (
    ALL_KEPT_SMALL_CLASS,
    SELECTED,
    Dataset,
    EmbeddingRecord,
)

CANONICAL = str(importlib.resources.files("varpedis") / "data" / "canonical_90_10.json")

# minority_share_delta per run seed on the canonical 90/10 population,
# reproduced exactly by an independent re-derivation of the entire
# pipeline (seed expansion, population draw, scoring, bucketing, draws)
PINNED_DELTAS = {
    1: 0.6002967359050445,
    2: 0.6023809523809524,
    3: 0.5986506746626686,
    4: 0.6041420118343196,
    5: 0.6118402282453638,
}


VERDICTS: list[str] = []


def _report(name, verdict):
    line = f"[ACCEPTANCE] {name}: {verdict}"
    print(line)
    VERDICTS.append(line)


@contextlib.contextmanager
def criterion(name):
    try:
        yield
    except BaseException:
        _report(name, "FAIL")
        raise
    _report(name, "PASS")


@pytest.fixture(scope="module")
def big_dataset(big_fixture_path):
    return read_binary(big_fixture_path)


@pytest.fixture(scope="module")
def big_manifest(big_dataset):
    return select_dataset(big_dataset, SelectionConfig(seed=41))


def test_determinism(big_fixture_path, tmp_path, monkeypatch):
    with criterion("determinism"):
        outs = [str(tmp_path / f"run-{i}.jsonl") for i in range(3)]
        start = time.perf_counter()
        rc = cli.main(["select", "--input", big_fixture_path,
                       "--output", outs[0], "--seed", "41"])
        elapsed = time.perf_counter() - start
        assert rc == 0
        for out in outs[1:]:
            assert cli.main(["select", "--input", big_fixture_path,
                             "--output", out, "--seed", "41"]) == 0
        blobs = [open(out, "rb").read() for out in outs]
        assert blobs[0] == blobs[1] == blobs[2]

        monkeypatch.setenv(cli.THREADS_ENV, "4")
        threaded = str(tmp_path / "run-threads.jsonl")
        assert cli.main(["select", "--input", big_fixture_path,
                         "--output", threaded, "--seed", "41"]) == 0
        assert open(threaded, "rb").read() == blobs[0]

        assert elapsed < 10.0, f"select run took {elapsed:.2f}s"


def test_cap_and_passthrough(big_dataset, big_manifest):
    with criterion("cap-and-passthrough"):
        config = big_manifest.config
        budget = config.k * config.n1
        picked: dict[str, int] = {}
        for entry in big_manifest.entries:
            if entry.status in (SELECTED, ALL_KEPT_SMALL_CLASS):
                picked[entry.label] = picked.get(entry.label, 0) + 1
        for label, records in big_dataset.classes.items():
            if label == "rare-finding":
                continue
            assert len(records) == 5000
            assert picked[label] <= budget
        assert picked["rare-finding"] == 124
        small_statuses = {
            e.status for e in big_manifest.entries if e.label == "rare-finding"
        }
        assert small_statuses == {ALL_KEPT_SMALL_CLASS}


def test_oracle_equivalence():
    with criterion("oracle-equivalence"):
        master = np.random.default_rng(8252025)
        for case in range(100):
            n = int(master.integers(5, 51))
            d = int(master.integers(2, 9))
            config = SelectionConfig(
                seed=int(master.integers(0, 2**32)),
                theta=float(master.uniform(0.1, 0.9)),
                k=int(master.integers(1, 4)),
                n_min=int(master.integers(1, 7)),
                n1=int(master.integers(1, 7)),
                small_class_max=int(master.integers(0, 11)),
            )
            block = master.normal(0.6, 0.45, size=(n, d)).astype(np.float32)
            records = [
                EmbeddingRecord(id=f"r{i}", label=f"case-{case}", vector=row)
                for i, row in enumerate(block)
            ]
            got = select_class(records, config)
            want = oracle_select(
                records, config.theta, config.k, config.n_min,
                config.n1, config.small_class_max, config.seed,
            )
            assert got.passthrough == want["passthrough"], f"case {case}"
            assert set(got.selected) == want["selected"], f"case {case}"
            assert set(got.discarded) == want["discarded"], f"case {case}"
            got_members = [sorted(b.members) for b in got.buckets]
            want_members = [members for _, _, members in want["buckets"]]
            assert got_members == want_members, f"case {case}"


def test_numerics(tmp_path):
    with criterion("numerics"):
        rng = np.random.default_rng(431)
        block = rng.normal(0.0, 1.3, size=(1000, 64)).astype(np.float32)
        records = [
            EmbeddingRecord(id=f"v{i}", label="n", vector=row)
            for i, row in enumerate(block)
        ]

        cent = centroid(records)
        ref_cent = oracle_centroid(block)
        assert np.max(np.abs(cent.vector - np.asarray(ref_cent))) <= 1e-9

        for i in range(1000):
            a, b = block[i], block[(i + 1) % 1000]
            assert abs(cosine(a, b) - oracle_cosine(a, b)) <= 1e-12

        for row in block[:200]:
            assert abs(cosine(row, row) - 1.0) <= 1e-12

        base = make_dataset(
            {"big": 1400, "mid": 1200, "fit": 700, "tiny": 300},
            d=32, seed=77, outlier_share=0.05,
        )
        manifests = {}
        for alpha in (0.01, 1.0, 100.0):
            recs = tuple(
                EmbeddingRecord(
                    id=r.id,
                    label=r.label,
                    vector=(r.vector.astype(np.float64) * alpha).astype(np.float32),
                )
                for r in base.records
            )
            manifests[alpha] = select_dataset(
                Dataset(dim=base.dim, records=recs), SelectionConfig(seed=13)
            )
        ref = manifests[1.0]
        for alpha in (0.01, 100.0):
            for ea, eb in zip(ref.entries, manifests[alpha].entries):
                assert (ea.id, ea.label, ea.status, ea.bucket) == (
                    eb.id, eb.label, eb.status, eb.bucket,
                )
                if ea.similarity is None:
                    assert eb.similarity is None
                else:
                    assert abs(ea.similarity - eb.similarity) <= 1e-6


@settings(
    max_examples=1000,
    deadline=None,
    suppress_health_check=[HealthCheck.too_slow, HealthCheck.filter_too_much],
)
@given(
    sims=st.lists(
        st.floats(min_value=-1.0, max_value=1.0, allow_nan=False, width=64),
        min_size=1,
        max_size=120,
    ),
    k=st.integers(min_value=1, max_value=6),
    n_min=st.integers(min_value=1, max_value=10),
    theta=st.floats(min_value=-1.0, max_value=1.0, allow_nan=False),
)
def run_partition_property(sims, k, n_min, theta):
    scored = [ScoredRecord(record_index=i, similarity=s) for i, s in enumerate(sims)]
    retained, discarded = threshold_filter(scored, theta)
    assert sorted(retained + discarded) == list(range(len(sims)))
    assert all(sims[i] >= theta for i in retained)
    assert all(sims[i] < theta for i in discarded)
    if retained:
        kept = [sims[i] for i in retained]
        assert_valid_buckets(bucketize(kept, k, n_min), kept, k, n_min)


def test_partition_invariants():
    with criterion("partition-invariants"):
        run_partition_property()


def test_format_round_trips(tmp_path):
    with criterion("format-round-trips"):
        dataset = make_dataset(
            {"fmt-a": 300, "fmt-b": 200}, d=24, seed=55, outlier_share=0.05
        )
        edge_rows = np.array(
            [
                [np.float32(1e-45), np.float32(3.0e38), -np.float32(2.5e-30)] + [0.25] * 21,
                [np.float32(-1e-45), np.float32(1.1754944e-38), 1.0] + [-0.75] * 21,
            ],
            dtype=np.float32,
        )
        records = list(dataset.records) + [
            EmbeddingRecord(id=f"edge-{i}", label="fmt-edge", vector=row)
            for i, row in enumerate(edge_rows)
        ]
        dataset = Dataset.from_records(records, dim=24)

        v1, v2 = str(tmp_path / "a.vped"), str(tmp_path / "b.vped")
        write_binary(dataset, v1)
        again = read_binary(v1)
        write_binary(again, v2)
        assert open(v1, "rb").read() == open(v2, "rb").read()
        for ra, rb in zip(dataset.records, again.records):
            assert ra.vector.tobytes() == rb.vector.tobytes()

        c1 = str(tmp_path / "a.csv")
        write_csv(dataset, c1)
        reread = read_csv(c1)
        for ra, rb in zip(dataset.records, reread.records):
            assert (ra.id, ra.label) == (rb.id, rb.label)
            assert ra.vector.tobytes() == rb.vector.tobytes()

        config = SelectionConfig(seed=3, small_class_max=100)
        manifest = select_dataset(dataset, config)
        m1, m2 = str(tmp_path / "a.jsonl"), str(tmp_path / "b.jsonl")
        write_manifest(manifest, m1)
        reparsed = read_manifest(m1)
        write_manifest(reparsed, m2)
        assert open(m1, "rb").read() == open(m2, "rb").read()
        assert reparsed.config == manifest.config
        assert reparsed.dim == manifest.dim
        assert reparsed.records == manifest.records
        assert list(reparsed.entries) == list(manifest.entries)


def test_bias_harness():
    with criterion("bias-harness"):
        spec = load_population_spec(CANONICAL)
        for seed, want in PINNED_DELTAS.items():
            run_spec = dataclasses.replace(spec, seed=seed)
            dataset, tags = generate_population(run_spec)
            manifest = select_dataset(dataset, SelectionConfig(seed=seed))
            report = evaluate_selection(manifest, dataset, tags)

            cohort = report.classes["cohort"]
            assert cohort.occupancy_max_dev == 0, f"seed {seed}"
            assert report.classes["control"].occupancy_max_dev == 0, f"seed {seed}"
            assert abs(cohort.minority_share_delta - want) <= 1e-9, f"seed {seed}"

            # a uniform draw of the same size, derived entirely on the
            # test side, must not show the same minority lift
            stream = oracle_stream(seed, "cohort", domain="varpedis.test.baseline")
            picked = oracle_sample(list(range(cohort.records)), cohort.selected, stream)
            hits = sum(1 for i in picked if tags["cohort"][i] == cohort.minority)
            base_delta = hits / cohort.selected - cohort.original_share[cohort.minority]
            assert cohort.minority_share_delta > base_delta + 0.5, f"seed {seed}"
