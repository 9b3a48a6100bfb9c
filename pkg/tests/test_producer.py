import math
import threading
import tracemalloc

import numpy as np
import pytest

from featcross import producer as pr
from featcross.datasets import bank_like
from featcross.estimator import CrossFeatureClassifier
from featcross.exceptions import BadMagic, ChecksumError, UnsupportedVersion
from featcross.producer import MAGIC, Producer, bench_latency, dumps, load, loads, save, score_csv
from conftest import write_csv


@pytest.fixture(scope="module")
def table():
    return bank_like(n_rows=4000, seed=11)


@pytest.fixture(scope="module")
def artifact(table):
    est = CrossFeatureClassifier(tune=False, hyper={"alpha": 0.2}, max_cross_features=2, bucket_count=4096,
                                 performance_guard=False)
    return est.fit(table).artifact_


@pytest.fixture(scope="module")
def blob(artifact):
    return dumps(artifact)


def test_artifact_has_crosses(artifact):
    assert len(artifact.feature_set.crosses) == 2
    assert artifact.model.weights.dtype == np.float64


def test_round_trip_is_byte_identical(artifact, blob, tmp_path):
    again = loads(blob)
    assert dumps(again) == blob
    assert again.feature_set == artifact.feature_set
    assert np.array_equal(again.model.weights, artifact.model.weights)
    assert again.metadata == artifact.metadata
    path = tmp_path / "m.acxf"
    save(artifact, path)
    assert path.read_bytes() == blob
    assert not (tmp_path / "m.acxf.tmp").exists()
    assert dumps(load(path)) == blob


def test_every_truncation_is_rejected(mixed_table):
    small = CrossFeatureClassifier(tune=False, max_cross_features=1, bucket_count=64,
                                   performance_guard=False).fit(mixed_table).artifact_
    blob = dumps(small)
    assert loads(blob).feature_set == small.feature_set
    for cut in range(len(blob)):
        with pytest.raises((ChecksumError, BadMagic)):
            loads(blob[:cut])


def test_short_magic_prefix_reads_as_truncation(blob):
    for cut in range(4):
        with pytest.raises(ChecksumError):
            loads(blob[:cut])


def test_trailing_bytes_rejected(blob):
    with pytest.raises(ChecksumError):
        loads(blob + b"\0")


def test_bad_magic_and_version(blob):
    with pytest.raises(BadMagic):
        loads(b"XCXF" + blob[4:])
    bumped = blob[:4] + (pr.FORMAT_VERSION + 1).to_bytes(4, "little") + blob[8:]
    with pytest.raises(UnsupportedVersion):
        loads(bumped)


def test_corruption_detected(blob):
    rng = np.random.default_rng(0)
    for pos in rng.integers(8, len(blob), 60):
        bad = bytearray(blob)
        bad[pos] ^= 0x20
        with pytest.raises((ChecksumError, UnsupportedVersion)):
            loads(bytes(bad))


def test_producer_matches_batch_path(artifact, table):
    prod = Producer(artifact)
    rows = table.rows()[:2000]
    batch = artifact.predict_table(table)[:2000]
    online = prod.predict_rows(rows)
    assert np.max(np.abs(online - batch)) <= 1e-9
    codes = artifact.encode(table)[:2000]
    assert np.array_equal(prod.transform_rows(rows), codes)


def test_rows_with_missing_values_use_fill_rules(artifact, table):
    prod = Producer(artifact)
    rows = table.rows()
    idx = [i for i, r in enumerate(rows) if r[0] is None or (isinstance(r[0], float) and math.isnan(r[0]))]
    assert idx
    batch = artifact.predict_table(table)
    for i in idx[:10]:
        assert prod.predict_row(rows[i]) == pytest.approx(batch[i], abs=1e-12)
        r = list(rows[i])
        r[0] = ""
        assert prod.predict_row(r) == pytest.approx(batch[i], abs=1e-12)


def test_unseen_token_and_out_of_range_value(artifact, table):
    prod = Producer(artifact)
    row = list(table.rows()[0])
    cat = table.schema.names.index("cat0")
    row[cat] = "never-seen"
    p = prod.predict_row(row)
    assert 0 < p < 1
    spec = artifact.discretization["num1"]
    num = table.schema.names.index("num1")
    hi, top = list(row), list(row)
    hi[num] = spec.value_max * 100
    top[num] = spec.value_max
    assert np.array_equal(prod.transform_row(hi), prod.transform_row(top))
    lo, bottom = list(row), list(row)
    lo[num] = spec.value_min - 1e6
    bottom[num] = spec.value_min
    assert np.array_equal(prod.transform_row(lo), prod.transform_row(bottom))


def test_zero_weights_give_half(artifact, table):
    art = loads(dumps(artifact))
    art.model.weights[:] = 0
    art.model.bias = 0.0
    assert Producer(art).predict_row(table.rows()[3]) == 0.5


def test_dict_rows_and_validation(artifact, table):
    prod = Producer(artifact)
    row = table.rows()[5]
    as_dict = dict(zip(table.schema.names, row))
    assert prod.predict_row(as_dict) == prod.predict_row(row)
    assert prod.predict_row(tuple(row)) == prod.predict_row(row)
    with pytest.raises(ValueError):
        prod.predict_row({**as_dict, "bogus": 1})
    with pytest.raises(ValueError):
        prod.predict_row(row[:-1])


def test_threads_share_one_producer(artifact, table):
    prod = Producer(artifact)
    rows = table.rows()[:500]
    expected = prod.predict_rows(rows)
    results = {}

    def work(k):
        results[k] = prod.predict_rows(rows)

    threads = [threading.Thread(target=work, args=(k,)) for k in range(4)]
    for t in threads:
        t.start()
    for t in threads:
        t.join()
    for k in range(4):
        assert np.array_equal(results[k], expected)


def test_no_memory_growth_in_steady_state(artifact, table):
    prod = Producer(artifact)
    rows = table.rows()[:1000]
    prod.predict_rows(rows)
    tracemalloc.start()
    try:
        for r in rows:
            prod.predict_row(r)
        before = tracemalloc.get_traced_memory()[0]
        for _ in range(3):
            for r in rows:
                prod.predict_row(r)
        after = tracemalloc.get_traced_memory()[0]
    finally:
        tracemalloc.stop()
    assert after - before < 16 * 1024


def test_bench_latency_report(artifact, table):
    rep = bench_latency(artifact, table.rows()[:1000], repetitions=2)
    assert rep.rows == 1000 and rep.repetitions == 2
    assert 0 < rep.p50_us <= rep.p95_us <= rep.p99_us
    assert rep.throughput_rows_per_s > 0
    assert set(rep.to_dict()) >= {"p50_us", "p95_us", "p99_us"}
    with pytest.raises(ValueError):
        bench_latency(artifact, table.rows()[:999])
    with pytest.raises(ValueError):
        bench_latency(artifact, table.rows()[:1000], repetitions=0)


def test_score_csv_preserves_order(artifact, table, tmp_path):
    rows = table.rows()[:50]
    src = write_csv(tmp_path / "in.csv", table.schema.names,
                    [["" if v is None or (isinstance(v, float) and math.isnan(v)) else v for v in r] for r in rows])
    out = tmp_path / "out.csv"
    assert score_csv(artifact, src, out) == 50
    lines = out.read_text().splitlines()
    assert lines[0] == "probability"
    got = np.array([float(x) for x in lines[1:]])
    assert np.allclose(got, Producer(artifact).predict_rows(rows), atol=1e-9)


def test_magic_constant():
    assert MAGIC == b"ACXF"
