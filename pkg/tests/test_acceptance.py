"""End-to-end acceptance checks, one test per criterion.

Each test records a PASS/FAIL line that is repeated in the terminal summary.
Benchmark datasets live under ``data/``; a missing dataset fails its criterion.
"""

import json
import time

import numpy as np
import pytest

from conftest import DATA
from featcross.cin import run_experiments
from featcross.config import RunConfig
from featcross.datasets import bank_like, dominant_arm_problem, planted_cross
from featcross.estimator import CrossFeatureClassifier, prepare
from featcross.features import CrossFeature
from featcross.lr import LRHyperParams, auc, train_field_wise, train_full
from featcross.producer import Producer, bench_latency, dumps
from featcross.search import TerminationConfig, beam_search, smbgd
from featcross.tabular import FeatureSchema, load_csv, partition_blocks

pytestmark = pytest.mark.slow


def _load_benchmark(name):
    root = DATA / name
    if not (root / "train.csv").exists():
        return None
    schema = FeatureSchema.from_json(root / "schema.json")
    return load_csv(root / "train.csv", schema), load_csv(root / "test.csv", schema)


def _fit_timed(train, workers):
    est = CrossFeatureClassifier(workers=workers)
    t0 = time.monotonic()
    est.fit(train)
    return est, time.monotonic() - t0


@pytest.fixture(scope="module")
def adult():
    data = _load_benchmark("adult")
    if data is None:
        return None
    train, test = data
    est, elapsed = _fit_timed(train, workers=4)
    return train, test, est, elapsed


def _benchmark_verdict(verdict, number, name, data, target, min_gain, max_seconds):
    if data is None:
        verdict(number, False, f"data/{name}/train.csv missing (see scripts/prepare_{name}.py)")
        pytest.fail(f"{name} dataset missing")
    _, test, est, elapsed = data
    base = auc(est.base_artifact_.predict_table(test), test.labels)
    full = auc(est.artifact_.predict_table(test), test.labels)
    gain = (full - base) / base
    checks = {
        f"base test AUC {base:.4f} within {target}±0.010": abs(base - target) <= 0.010,
        f"relative gain {gain * 100:+.3f}% (need >= +{min_gain * 100:.1f}%)": gain >= min_gain,
        f"fit {elapsed:.1f}s (limit {max_seconds}s)": elapsed <= max_seconds,
    }
    detail = "; ".join(f"{k} [{'ok' if v else 'miss'}]" for k, v in checks.items())
    detail += f"; crosses={est.artifact_.metadata['crosses']}"
    assert verdict(number, all(checks.values()), detail), detail


def test_c01_adult_benchmark(verdict, adult):
    _benchmark_verdict(verdict, 1, "adult", adult, 0.9169, 0.008, 30 * 60)


def test_c02_bank_benchmark(verdict):
    data = _load_benchmark("bank")
    if data is not None:
        train, test = data
        est, elapsed = _fit_timed(train, workers=4)
        data = (train, test, est, elapsed)
    _benchmark_verdict(verdict, 2, "bank", data, 0.9400, 0.003, 10 * 60)


def test_c03_planted_cross(verdict):
    hits, aucs = 0, []
    for seed in range(10):
        pc = planted_cross(n_rows=20000, seed=seed)
        assert max(pc.single_field_auc.values()) <= 0.6
        prep = prepare(pc.table, RunConfig(seed=seed, bucket_count=4096))
        state = beam_search(prep.data, LRHyperParams(alpha=0.2), TerminationConfig(max_cross_features=4))
        names = {c.name(prep.encoder.base_names) for c in state.solution.crosses}
        hits += "a*b*c" in names
        aucs.append(state.solution_auc)
    ok = hits >= 9 and min(aucs) >= 0.95
    detail = f"planted order-3 cross recovered {hits}/10 (need 9); min validation AUC {min(aucs):.4f} (need 0.95)"
    assert verdict(3, ok, detail), detail


def test_c04_smbgd_selection(verdict):
    wins = 0
    accounting_ok = True
    for seed in range(100):
        prob = dominant_arm_problem(seed)
        part = partition_blocks(len(prob.y_train), 8, n_val=len(prob.y_val))
        winner, rounds = smbgd(prob.arms, part, prob.y_train, prob.y_val, LRHyperParams(alpha=0.2), 4096)
        wins += winner.cross == prob.dominant
        accounting_ok &= (
            [(r.arms_in, r.arms_out) for r in rounds] == [(8, 4), (4, 2), (2, 1)]
            and [len(r.blocks) for r in rounds] == [1, 2, 4]
            and len({b for r in rounds for b in r.blocks}) == 7
            and sum(r.arms_in * len(r.blocks) for r in rounds) == 24
        )
    ok = wins >= 95 and accounting_ok
    detail = f"dominant arm won {wins}/100 (need 95); 8->4->2->1 over 1/2/4 fresh blocks: {accounting_ok}"
    assert verdict(4, ok, detail), detail


def _pairwise_auc(s, y):
    pos, neg = s[y == 1], s[y == 0]
    diff = pos[:, None] - neg[None, :]
    wins = np.count_nonzero(diff > 0) + 0.5 * np.count_nonzero(diff == 0)
    return wins / (pos.size * neg.size)


def test_c05_auc_oracle(verdict):
    rng = np.random.default_rng(2024)
    mismatches = 0
    for _ in range(200):
        n = int(rng.integers(2, 1001))
        s = rng.integers(0, int(rng.integers(2, 50)), n).astype(float)  # heavy ties
        y = rng.integers(0, 2, n)
        y[:2] = (0, 1)
        mismatches += auc(s, y) != _pairwise_auc(s, y)
    detail = f"{200 - mismatches}/200 instances equal bit for bit"
    assert verdict(5, mismatches == 0, detail), detail


def test_c06_field_wise_equivalence(verdict):
    equiv = warm = 0
    for seed in range(50):
        rng = np.random.default_rng(seed)
        n = int(rng.integers(500, 3000))
        buckets = 256
        codes = rng.integers(0, buckets, n)
        y = rng.integers(0, 2, n).astype(float)
        hyper = LRHyperParams(alpha=float(rng.uniform(0.01, 1)), l1=float(rng.uniform(0, 1e-3)),
                              l2=float(rng.uniform(0, 1e-3)), batch_size=int(rng.integers(1, 300)))
        # zero solution weights: b_sum is identically zero, one block
        part = partition_blocks(n, 1, n_val=0)
        fw = train_field_wise(codes, y, part, [0], hyper, buckets)
        full, _ = train_full(codes, y, None, None, (CrossFeature((0,)),), hyper, buckets, train_bias=False)
        equiv += np.array_equal(fw, full.weights[0])
        # warm start over [P] then [Q] against one call over [P, Q]
        part = partition_blocks(n, 8, n_val=0)
        part.bsum.train[:] = rng.normal(size=n)
        p_blocks = sorted(rng.choice(part.block_count, 3, replace=False).tolist())
        q_blocks = [b for b in range(part.block_count) if b not in p_blocks][:4]
        first = train_field_wise(codes, y, part, p_blocks, hyper, buckets)
        chained = train_field_wise(codes, y, part, q_blocks, hyper, buckets, warm=first)
        joint = train_field_wise(codes, y, part, p_blocks + q_blocks, hyper, buckets)
        warm += np.array_equal(chained, joint)
    ok = equiv == 50 and warm == 50
    detail = f"field-wise == full on {equiv}/50 seeds; warm-start composition on {warm}/50 seeds"
    assert verdict(6, ok, detail), detail


def test_c07_cin_dichotomy(verdict):
    t0 = time.monotonic()
    rows = run_experiments(4, 3, 3, ("representable", "adversarial"), range(100), restarts=20)
    elapsed = time.monotonic() - t0
    rep = [r[5] for r in rows if r[0] == "representable"]
    adv = [r[5] for r in rows if r[0] == "adversarial"]
    certified = all(r[6].get("gap", 0) >= 0.1 for r in rows if r[0] == "adversarial")
    ok = (len(rep) == len(adv) == 100 and max(rep) < 1e-6 and min(adv) > 1e-3 and certified
          and elapsed < 60)
    detail = (f"representable max residual {max(rep):.2e} (<1e-6); adversarial min {min(adv):.3e} (>1e-3), "
              f"certified {certified}; {elapsed:.1f}s (<60s)")
    assert verdict(7, ok, detail), detail


def test_c08_latency(verdict):
    table = bank_like(n_rows=40000, seed=8)
    est = CrossFeatureClassifier(tune=False, hyper={"alpha": 0.2}, max_cross_features=5,
                                 performance_guard=False, workers=4).fit(table)
    # rows as a service would receive them: each one freshly deserialized
    rows = [json.loads(json.dumps(r)) for r in (table.rows() * 3)[:100_000]]
    report = bench_latency(Producer(est.artifact_), rows, repetitions=3)
    n_fields = len(table.schema.fields)
    n_cross = len(est.artifact_.feature_set.crosses)
    ok = report.p50_us < 5.0 and report.rows >= 100_000 and n_cross > 0
    detail = (f"p50 {report.p50_us:.2f}us p95 {report.p95_us:.2f}us p99 {report.p99_us:.2f}us over "
              f"{report.rows} rows x {report.repetitions}; {n_fields} raw fields, {n_cross} crosses (need p50 < 5us)")
    assert verdict(8, ok, detail), detail


def test_c09_determinism(verdict, adult):
    if adult is None:
        table = bank_like(n_rows=20000, seed=9)
        first = CrossFeatureClassifier(workers=4).fit(table).artifact_
        source = "bank_like"
    else:
        table, first, source = adult[0], adult[2].artifact_, "adult"
    second = CrossFeatureClassifier(workers=1).fit(table).artifact_
    a, b = dumps(first), dumps(second)
    ok = a == b
    detail = f"{source} default fit, workers 4 vs 1: {len(a)} vs {len(b)} bytes, identical={ok}"
    assert verdict(9, ok, detail), detail


def test_c10_search_cost(verdict):
    table = bank_like(n_rows=20000, seed=10)
    prep = prepare(table, RunConfig(granularities=[10], bucket_count=1 << 14))
    assert prep.data.n_base == 20
    state = beam_search(prep.data, LRHyperParams(alpha=0.2),
                        TerminationConfig(max_cross_features=10, performance_guard=False))
    per_iter = [r.n_candidates for r in state.history]
    bounds = [(20 + k) * (19 + k) // 2 for k in range(len(per_iter))]
    total = state.candidates_evaluated
    ok = (len(per_iter) == 10 and all(c <= b for c, b in zip(per_iter, bounds))
          and total == sum(per_iter) <= sum(bounds) and total <= 10 * 30 ** 2 / 2)
    detail = (f"{len(per_iter)} iterations, {total} candidates evaluated; sum of C(members,2) = {sum(bounds)}; "
              f"cap 10*30^2/2 = 4500")
    assert verdict(10, ok, detail), detail
