"""Feature space: base fields, cross features as sets of base fields, hashing,
and multi-granularity discretization of numerical columns."""

import math
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from . import _kernels
from .hashing import chain_hash, constituents_digest, token_hash
from .lr import train_full
from .tabular import Kind

DEFAULT_LEVELS = (10, 100, 1000)
DEFAULT_BUCKETS = 1 << 18


@dataclass(frozen=True, order=False)
class CrossFeature:
    """Canonical, duplicate-free set of base field indices (order 1 = a base field)."""

    constituents: tuple

    def __post_init__(self):
        cons = tuple(sorted({int(c) for c in self.constituents}))
        if not cons:
            raise ValueError("a cross feature needs at least one constituent")
        if cons[0] < 0:
            raise ValueError("base field indices are non-negative")
        object.__setattr__(self, "constituents", cons)

    @property
    def order(self):
        return len(self.constituents)

    @property
    def sort_key(self):
        return (self.order, self.constituents)

    def __or__(self, other):
        return CrossFeature(self.constituents + other.constituents)

    def __lt__(self, other):
        return self.sort_key < other.sort_key

    def name(self, base_names):
        return "*".join(base_names[c] for c in self.constituents)

    @cached_property
    def digest(self):
        return constituents_digest(self.constituents)


class FeatureSet:
    """All ``n_base`` base fields plus a set of adopted crosses, in canonical order."""

    def __init__(self, n_base, crosses=()):
        if n_base < 1:
            raise ValueError("a feature set needs at least one base field")
        self.n_base = int(n_base)
        extra = set()
        for c in crosses:
            c = c if isinstance(c, CrossFeature) else CrossFeature(c)
            if c.constituents[-1] >= self.n_base:
                raise ValueError(f"{c} references a field outside 0..{self.n_base - 1}")
            if c.order > 1:
                extra.add(c)
        self._crosses = tuple(sorted(extra))
        self._members = tuple(CrossFeature((i,)) for i in range(self.n_base)) + self._crosses
        self._lookup = frozenset(self._members)

    @property
    def members(self):
        return self._members

    @property
    def crosses(self):
        return self._crosses

    def __iter__(self):
        return iter(self._members)

    def __len__(self):
        return len(self._members)

    def __contains__(self, item):
        return item in self._lookup

    def __eq__(self, other):
        return isinstance(other, FeatureSet) and self.n_base == other.n_base and self._lookup == other._lookup

    def __hash__(self):
        return hash((self.n_base, self._lookup))

    def __repr__(self):
        return f"FeatureSet(n_base={self.n_base}, crosses={[c.constituents for c in self._crosses]})"

    def add(self, cross):
        return FeatureSet(self.n_base, self._crosses + (cross,))

    def to_list(self):
        return [list(c.constituents) for c in self._crosses]


def candidate_crosses(node):
    """New crosses reachable by one pair-wise crossing of ``node``'s members.

    Union semantics: crossing AB with AC gives ABC. Candidates already in the
    node are dropped and duplicates keep their first pair's position.
    """
    seen = set()
    out = []
    members = node.members
    for i in range(len(members)):
        for j in range(i + 1, len(members)):
            cand = members[i] | members[j]
            if cand in node or cand in seen:
                continue
            seen.add(cand)
            out.append(cand)
    return out


def expand_children(node):
    return [node.add(c) for c in candidate_crosses(node)]


@dataclass(frozen=True)
class HashConfig:
    bucket_count: int = DEFAULT_BUCKETS
    seed: int = 0

    def __post_init__(self):
        b = self.bucket_count
        if b < 2 or b & (b - 1):
            raise ValueError(f"bucket_count must be a power of two >= 2, got {b}")
        if not 0 <= self.seed < 1 << 64:
            raise ValueError("seed must fit in 64 unsigned bits")

    @property
    def mask(self):
        return self.bucket_count - 1

    def to_dict(self):
        return {"bucket_count": self.bucket_count, "seed": self.seed}


def hash_base(field_index, token, cfg):
    return token_hash(cfg.seed, field_index, token) & cfg.mask


def hash_cross(cross, row, cfg):
    """Bucket of ``cross`` for one row; ``row[i]`` is base field i's bucket."""
    try:
        buckets = [int(row[c]) for c in cross.constituents]
    except (KeyError, IndexError):
        raise ValueError(f"row lacks a bucket for a constituent of {cross.constituents}") from None
    if cross.order == 1:
        return buckets[0]
    return chain_hash(cfg.seed, cross.digest, buckets) & cfg.mask


def hash_cross_columns(cross, base_codes, cfg):
    """Vectorised :func:`hash_cross` over a (n, d) base bucket matrix."""
    if cross.order == 1:
        return np.ascontiguousarray(base_codes[:, cross.constituents[0]], dtype=np.int64)
    start = np.uint64((cfg.seed ^ cross.digest) & ((1 << 64) - 1))
    cols = np.asarray(cross.constituents, dtype=np.int64)
    return _kernels.cross_column(np.ascontiguousarray(base_codes, dtype=np.int64), cols, start, np.uint64(cfg.mask))


@dataclass(frozen=True)
class NumericBinning:
    value_min: float
    value_max: float
    granularities: tuple

    def __post_init__(self):
        if not self.value_min <= self.value_max:
            raise ValueError("value_min must not exceed value_max")
        g = tuple(int(x) for x in self.granularities)
        if any(x < 1 for x in g) or any(a >= b for a, b in zip(g, g[1:])):
            raise ValueError("granularities must be positive and strictly increasing")
        object.__setattr__(self, "granularities", g)

    def to_dict(self):
        return {"min": self.value_min, "max": self.value_max, "granularities": list(self.granularities)}

    @classmethod
    def from_dict(cls, doc):
        return cls(doc["min"], doc["max"], tuple(doc["granularities"]))


def bin_values(values, vmin, vmax, granularity):
    """Equal-width bin index, clamped to [0, granularity - 1]; constant range maps to 0."""
    values = np.asarray(values, dtype=np.float64)
    if vmax == vmin:
        return np.zeros(values.shape, dtype=np.int64)
    x = np.floor((values - vmin) * granularity / (vmax - vmin))
    return np.clip(x, 0, granularity - 1).astype(np.int64)


def bin_value(v, vmin, vmax, granularity):
    """Scalar twin of :func:`bin_values` with identical float evaluation."""
    if vmax == vmin:
        return 0
    x = math.floor((v - vmin) * granularity / (vmax - vmin)) if math.isfinite(v) else (math.inf if v > 0 else -math.inf)
    return int(min(max(x, 0), granularity - 1))


def default_levels(p=3):
    return tuple(10 ** i for i in range(1, p + 1))


def granularity_depth(n_rows, escalate_rows=5_000_000):
    """Number of granularity levels: 3 by default, 4 for very large data."""
    return 4 if n_rows > escalate_rows else 3


def discretize_multi_granularity(column, levels=DEFAULT_LEVELS):
    """Bin a filled numerical column at every granularity in ``levels``."""
    levels = tuple(sorted(int(g) for g in levels))
    if not levels:
        raise ValueError("at least one granularity level is required")
    column = np.asarray(column, dtype=np.float64)
    binning = NumericBinning(float(column.min()), float(column.max()), levels)
    return [bin_values(column, binning.value_min, binning.value_max, g) for g in levels], binning


def keep_best_half(scores):
    """Keep the top ceil(n/2) granularities by score; ties favour coarser bins."""
    ranked = sorted(scores, key=lambda g: (-scores[g], g))
    return sorted(ranked[: math.ceil(len(ranked) / 2)])


def filter_granularities(train_values, val_values, y_train, y_val, binning, partition, hyper, cfg,
                         max_blocks=2):
    """Score each granularity by a single-field LR fit on the first blocks.

    Each candidate trains bias plus its own weights (no ``b_sum``) for one
    pass over up to ``max_blocks`` blocks, and is ranked by validation AUC.
    Returns the kept granularities in increasing order.
    """
    if len(binning.granularities) == 1:
        return list(binning.granularities)
    blocks = list(range(min(max_blocks, partition.block_count)))
    rows = partition.rows(blocks)
    starts = partition.batch_starts(blocks, hyper.batch_size)
    scores = {}
    for g in binning.granularities:
        lut = np.array([hash_base(0, str(b), cfg) for b in range(g)], dtype=np.int64)
        tr = lut[bin_values(np.asarray(train_values)[rows], binning.value_min, binning.value_max, g)]
        va = lut[bin_values(val_values, binning.value_min, binning.value_max, g)]
        _, metric = train_full(tr, np.asarray(y_train)[rows], va, y_val, ("g",), hyper,
                               cfg.bucket_count, starts=starts)
        scores[g] = metric.auc
    return keep_best_half(scores)


@dataclass(frozen=True)
class BaseField:
    """A post-discretization categorical field."""

    index: int
    column: str
    granularity: int = None

    @property
    def name(self):
        return self.column if self.granularity is None else f"{self.column}@{self.granularity}"


def build_base_fields(schema, discretization):
    out = []
    for f in schema.fields:
        if f.kind is Kind.CATEGORICAL:
            out.append(BaseField(len(out), f.name))
        else:
            for g in discretization[f.name].granularities:
                out.append(BaseField(len(out), f.name, g))
    return tuple(out)


@dataclass
class FieldEncoder:
    """Maps a filled table to its (n, d) base bucket matrix."""

    schema: object
    discretization: dict
    hash: HashConfig
    base_fields: tuple = field(default=None)

    def __post_init__(self):
        if self.base_fields is None:
            self.base_fields = build_base_fields(self.schema, self.discretization)

    @property
    def base_names(self):
        return [bf.name for bf in self.base_fields]

    def bin_lut(self, bf):
        return np.array([hash_base(bf.index, str(b), self.hash) for b in range(bf.granularity)], dtype=np.int64)

    def encode(self, table):
        n = table.n_rows
        out = np.empty((n, len(self.base_fields)), dtype=np.int64)
        for bf in self.base_fields:
            col = table.columns[bf.column]
            if bf.granularity is None:
                lut = {tok: hash_base(bf.index, tok, self.hash) for tok in set(col)}
                out[:, bf.index] = np.fromiter((lut[t] for t in col), dtype=np.int64, count=n)
            else:
                spec = self.discretization[bf.column]
                bins = bin_values(col, spec.value_min, spec.value_max, bf.granularity)
                out[:, bf.index] = self.bin_lut(bf)[bins]
        return out


class EncodedData:
    """Encoded train/validation splits with memoised cross columns."""

    def __init__(self, base_train, y_train, base_val, y_val, cfg):
        self.base_train = np.ascontiguousarray(base_train, dtype=np.int64)
        self.base_val = np.ascontiguousarray(base_val, dtype=np.int64)
        self.y_train = np.asarray(y_train, dtype=np.float64)
        self.y_val = np.asarray(y_val, dtype=np.float64)
        self.cfg = cfg
        self._cache = {}

    @property
    def n_base(self):
        return self.base_train.shape[1]

    def column(self, cross):
        cols = self._cache.get(cross)
        if cols is None:
            cols = (hash_cross_columns(cross, self.base_train, self.cfg),
                    hash_cross_columns(cross, self.base_val, self.cfg))
            if cross.order > 1:
                self._cache[cross] = cols
        return cols

    def matrix(self, fields):
        pairs = [self.column(c) for c in fields]
        train = np.column_stack([p[0] for p in pairs]) if pairs else np.zeros((len(self.y_train), 0), np.int64)
        val = np.column_stack([p[1] for p in pairs]) if pairs else np.zeros((len(self.y_val), 0), np.int64)
        return np.ascontiguousarray(train), np.ascontiguousarray(val)

    def forget(self, keep):
        """Drop memoised columns not in ``keep``."""
        keep = set(keep)
        self._cache = {k: v for k, v in self._cache.items() if k in keep}
