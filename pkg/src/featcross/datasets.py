"""Synthetic data with known ground truth, used by tests, the acceptance suite
and the latency benchmark."""

import math
from dataclasses import dataclass

import numpy as np

from .features import CrossFeature
from .lr import auc
from .search import CandidateArm
from .tabular import FeatureSchema, FieldDef, Kind, RawTable, partition_blocks


@dataclass
class PlantedCross:
    table: RawTable
    planted: tuple          # names of the three planted columns
    truth: np.ndarray       # noiseless label
    single_field_auc: dict


def _field_auc(codes, y):
    """AUC of scoring each row by its category's positive rate (best single-field scorer)."""
    k = int(codes.max()) + 1
    pos = np.bincount(codes, weights=y, minlength=k)
    cnt = np.maximum(np.bincount(codes, minlength=k), 1)
    return auc((pos / cnt)[codes], y)


def planted_cross(n_rows=20000, seed=0, cardinality=4, n_noise_categorical=4, n_noise_numerical=1,
                  label_noise=0.02, max_single_auc=0.6, max_tries=200):
    """Label = noisy deterministic function of the order-3 cross of columns a, b, c.

    The decision table mixes an (a, b) interaction with an (a, b, c) term, both
    double-centred so that no single column carries a main effect; the pair
    term lets a greedy search reach the triple through ``a*b``. Tables whose
    single-column AUC exceeds ``max_single_auc`` are redrawn.
    """
    rng = np.random.default_rng(seed)
    k = cardinality
    for _ in range(max_tries):
        pair = rng.standard_normal((k, k))
        pair -= pair.mean(axis=0, keepdims=True)
        pair -= pair.mean(axis=1, keepdims=True)
        trip = rng.standard_normal((k, k, k))
        for ax in range(3):
            trip -= trip.mean(axis=ax, keepdims=True)
        score = pair[:, :, None] + 0.8 * trip
        score -= np.median(score)
        table = score > 0
        a, b, c = (rng.integers(0, k, n_rows) for _ in range(3))
        truth = table[a, b, c].astype(np.int8)
        single = {name: _field_auc(col, truth) for name, col in zip("abc", (a, b, c))}
        if max(single.values()) <= max_single_auc and 0.3 < truth.mean() < 0.7:
            break
    else:
        raise RuntimeError("could not draw a table with weak single-field signal")
    flip = rng.random(n_rows) < label_noise
    y = np.where(flip, 1 - truth, truth).astype(np.int8)
    cols = {}
    fields = []
    for name, codes in zip("abc", (a, b, c)):
        fields.append(FieldDef(name, Kind.CATEGORICAL))
        cols[name] = _tokens(name, codes)
    for j in range(n_noise_categorical):
        name = f"noise{j}"
        fields.append(FieldDef(name, Kind.CATEGORICAL))
        cols[name] = _tokens(name, rng.integers(0, k + 1, n_rows))
    for j in range(n_noise_numerical):
        name = f"x{j}"
        fields.append(FieldDef(name, Kind.NUMERICAL))
        cols[name] = rng.standard_normal(n_rows)
    schema = FeatureSchema(tuple(fields), "label")
    return PlantedCross(RawTable(schema, cols, y), ("a", "b", "c"), truth, single)


def _tokens(prefix, codes):
    out = np.empty(len(codes), dtype=object)
    out[:] = [f"{prefix}{int(v)}" for v in codes]
    return out


def bank_like(n_rows=40000, seed=0, n_numerical=10, n_categorical=10, cardinality=12):
    """Mixed schema with 20 raw columns and a label driven by main effects and two interactions."""
    rng = np.random.default_rng(seed)
    fields, cols = [], {}
    logit = np.full(n_rows, -1.0)
    for j in range(n_numerical):
        name = f"num{j}"
        x = rng.gamma(2.0, 1.0 + j, n_rows)
        fields.append(FieldDef(name, Kind.NUMERICAL))
        cols[name] = x
        logit += 0.15 * (x - x.mean()) / x.std()
    codes = []
    for j in range(n_categorical):
        name = f"cat{j}"
        c = rng.integers(0, cardinality, n_rows)
        codes.append(c)
        fields.append(FieldDef(name, Kind.CATEGORICAL))
        cols[name] = _tokens(name, c)
        logit += rng.normal(0, 0.3, cardinality)[c]
    logit += rng.normal(0, 1.0, (cardinality, cardinality))[codes[0], codes[1]]
    logit += rng.normal(0, 1.0, (cardinality, cardinality))[codes[2], codes[3]]
    y = (rng.random(n_rows) < 1 / (1 + np.exp(-logit))).astype(np.int8)
    # a sprinkle of missing values in both kinds of columns
    for name in ("num0", "cat9"):
        hole = rng.random(n_rows) < 0.01
        cols[name] = cols[name].copy()
        cols[name][hole] = math.nan if name.startswith("num") else None
    return RawTable(FeatureSchema(tuple(fields), "y"), cols, y)


@dataclass
class ArmProblem:
    arms: list
    partition: object
    y_train: np.ndarray
    y_val: np.ndarray
    dominant: CrossFeature


def dominant_arm_problem(seed, n_arms=8, n_train=14000, n_val=4000, cardinality=16, effect=1.5,
                         bucket_count=1 << 12):
    """``n_arms`` single-column arms; only one (chosen at random) drives the label.

    ``b_sum`` is zero, so each arm's field-wise fit sees only its own column.
    """
    rng = np.random.default_rng(seed)
    n = n_train + n_val
    dom = int(rng.integers(0, n_arms))
    codes = rng.integers(0, bucket_count, (n_arms, n))
    levels = rng.integers(0, cardinality, n)
    codes[dom] = rng.permutation(bucket_count)[:cardinality][levels]
    y = (rng.random(n) < 1 / (1 + np.exp(-rng.normal(0, effect, cardinality)[levels]))).astype(np.float64)
    part = partition_blocks(n_train, n_arms, n_val=n_val)
    arms = [CandidateArm(CrossFeature((i,)), codes[i, :n_train].copy(), codes[i, n_train:].copy())
            for i in range(n_arms)]
    return ArmProblem(arms, part, y[:n_train], y[n_train:], CrossFeature((dom,)))
