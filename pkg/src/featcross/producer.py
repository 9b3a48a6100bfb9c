"""Self-contained inference artifact and its low-latency execution path.

File layout (all integers little-endian)::

    b"ACXF" | u32 format_version | u32 section_count
    section_count x (u16 name_len | name utf-8 | u64 payload_len | u32 crc32)
    u32 crc32 of everything above
    payloads, concatenated in table order

JSON sections are written with sorted keys and compact separators so equal
artifacts serialize to equal bytes. Each model field gets one ``w/NNNN``
section of raw ``<f4`` weights.
"""

import csv
import json
import math
import operator
import os
import struct
import threading
import time
import zlib
from dataclasses import dataclass, field

import numba as nb
import numpy as np
from numba.experimental import jitclass

from . import _kernels
from .exceptions import BadMagic, ChecksumError, UnsupportedVersion
from .features import (
    FeatureSet,
    FieldEncoder,
    HashConfig,
    NumericBinning,
    hash_base,
    hash_cross_columns,
)
from .lr import LRHyperParams, LRModel, linear_scores, sigmoid
from .tabular import FeatureSchema, FillRules, Kind, load_csv, table_from_records

MAGIC = b"ACXF"
FORMAT_VERSION = 1
_TOKEN_MEMO_LIMIT = 1 << 16


@dataclass
class ProducerArtifact:
    schema: FeatureSchema
    fill_rules: FillRules
    discretization: dict
    hash: HashConfig
    feature_set: FeatureSet
    model: LRModel
    metadata: dict = field(default_factory=dict)
    format_version: int = FORMAT_VERSION

    def __post_init__(self):
        if tuple(self.model.fields) != tuple(self.feature_set.members):
            raise ValueError("model fields must follow the feature set's member order")
        # storage is float32; keep the in-memory copy identical to what a reload gives
        self.model = self.model.quantized()

    @property
    def encoder(self):
        return FieldEncoder(self.schema, self.discretization, self.hash)

    def encode(self, table):
        """(n, F) bucket matrix over the model's fields for a raw table."""
        filled = self.fill_rules.apply(table)
        base = self.encoder.encode(filled)
        if not self.feature_set.crosses:
            return base
        cols = [hash_cross_columns(c, base, self.hash) for c in self.feature_set.crosses]
        return np.ascontiguousarray(np.column_stack([base] + cols))

    def predict_table(self, table):
        return sigmoid(linear_scores(self.model, self.encode(table)))

    def producer(self):
        return Producer(self)


def _dumps(doc):
    return json.dumps(doc, sort_keys=True, separators=(",", ":"), allow_nan=False).encode("utf-8")


def _sections(art):
    spec = {
        "fill_rules": art.fill_rules.to_dict(),
        "discretization": {k: v.to_dict() for k, v in sorted(art.discretization.items())},
        "hash": art.hash.to_dict(),
        "feature_set": {"n_base": art.feature_set.n_base, "crosses": art.feature_set.to_list()},
    }
    model = {
        "bias": float(art.model.bias),
        "hyper": art.model.hyper.to_dict(),
        "fields": len(art.model.fields),
        "bucket_count": art.model.bucket_count,
    }
    out = [
        ("schema", _dumps(art.schema.to_dict())),
        ("rules", _dumps(spec)),
        ("model", _dumps(model)),
        ("metadata", _dumps(art.metadata)),
    ]
    w32 = art.model.weights.astype("<f4")
    for i in range(w32.shape[0]):
        out.append((f"w/{i:04d}", w32[i].tobytes()))
    return out


def dumps(art):
    sections = _sections(art)
    head = bytearray(MAGIC)
    head += struct.pack("<II", art.format_version, len(sections))
    for name, payload in sections:
        raw = name.encode("utf-8")
        head += struct.pack("<H", len(raw)) + raw
        head += struct.pack("<QI", len(payload), zlib.crc32(payload))
    head += struct.pack("<I", zlib.crc32(bytes(head)))
    return bytes(head) + b"".join(p for _, p in sections)


def save(art, path):
    """Write ``art`` to ``path`` via a temporary file, so readers never see half an artifact."""
    data = dumps(art)
    tmp = f"{path}.tmp"
    with open(tmp, "wb") as fh:
        fh.write(data)
    os.replace(tmp, path)


class _Reader:
    def __init__(self, buf):
        self.buf = buf
        self.pos = 0

    def take(self, n):
        if self.pos + n > len(self.buf):
            raise ChecksumError("artifact is truncated")
        out = self.buf[self.pos:self.pos + n]
        self.pos += n
        return out

    def unpack(self, fmt):
        return struct.unpack(fmt, self.take(struct.calcsize(fmt)))


def loads(buf):
    buf = bytes(buf)
    if buf[:4] != MAGIC:
        if len(buf) < 4 and MAGIC.startswith(buf):
            raise ChecksumError("artifact is truncated")
        raise BadMagic("not a featcross artifact (bad magic bytes)")
    rd = _Reader(buf)
    rd.take(4)
    (version,) = rd.unpack("<I")
    if version != FORMAT_VERSION:
        raise UnsupportedVersion(f"artifact format version {version}, this build reads {FORMAT_VERSION}")
    (count,) = rd.unpack("<I")
    table = []
    for _ in range(count):
        (nlen,) = rd.unpack("<H")
        name = rd.take(nlen).decode("utf-8", errors="replace")
        length, crc = rd.unpack("<QI")
        table.append((name, length, crc))
    header_end = rd.pos
    (head_crc,) = rd.unpack("<I")
    if zlib.crc32(buf[:header_end]) != head_crc:
        raise ChecksumError("section table checksum mismatch")
    payloads = {}
    for name, length, crc in table:
        payload = rd.take(length)
        if zlib.crc32(payload) != crc:
            raise ChecksumError(f"section {name!r} checksum mismatch")
        payloads[name] = payload
    if rd.pos != len(buf):
        raise ChecksumError("trailing bytes after the last section")
    return _from_sections(payloads)


def _from_sections(p):
    try:
        schema = FeatureSchema.from_dict(json.loads(p["schema"]))
        spec = json.loads(p["rules"])
        mdoc = json.loads(p["model"])
        metadata = json.loads(p["metadata"])
    except KeyError as exc:
        raise ChecksumError(f"artifact lacks section {exc}") from None
    fs = FeatureSet(spec["feature_set"]["n_base"], [tuple(c) for c in spec["feature_set"]["crosses"]])
    n_fields, n_buckets = mdoc["fields"], mdoc["bucket_count"]
    if n_fields != len(fs):
        raise ChecksumError("weight section count does not match the feature set")
    weights = np.empty((n_fields, n_buckets), dtype=np.float64)
    for i in range(n_fields):
        raw = p.get(f"w/{i:04d}")
        if raw is None or len(raw) != 4 * n_buckets:
            raise ChecksumError(f"weight section {i} is missing or has the wrong size")
        weights[i] = np.frombuffer(raw, dtype="<f4")
    model = LRModel(fs.members, weights, mdoc["bias"], LRHyperParams.from_dict(mdoc["hyper"]))
    return ProducerArtifact(
        schema=schema,
        fill_rules=FillRules.from_dict(spec["fill_rules"]),
        discretization={k: NumericBinning.from_dict(v) for k, v in spec["discretization"].items()},
        hash=HashConfig(**spec["hash"]),
        feature_set=fs,
        model=model,
        metadata=metadata,
    )


def load(path):
    with open(path, "rb") as fh:
        return loads(fh.read())


# ---------------------------------------------------------------- hot path

_plan_spec = [
    ("base_src", nb.int64[:]),
    ("base_gran", nb.int64[:]),
    ("base_vmin", nb.float64[:]),
    ("base_vmax", nb.float64[:]),
    ("base_fill", nb.float64[:]),
    ("bin_lut", nb.int64[:, :]),
    ("cross_ptr", nb.int64[:]),
    ("cross_cols", nb.int64[:]),
    ("cross_start", nb.uint64[:]),
    ("mask", nb.uint64),
    ("weights", nb.float32[:, :]),
    ("bias", nb.float64),
    ("n_vals", nb.int64),
]


@jitclass(_plan_spec)
class _Plan:
    def __init__(self, base_src, base_gran, base_vmin, base_vmax, base_fill, bin_lut, cross_ptr, cross_cols,
                 cross_start, mask, weights, bias, n_vals):
        self.base_src = base_src
        self.base_gran = base_gran
        self.base_vmin = base_vmin
        self.base_vmax = base_vmax
        self.base_fill = base_fill
        self.bin_lut = bin_lut
        self.cross_ptr = cross_ptr
        self.cross_cols = cross_cols
        self.cross_start = cross_start
        self.mask = mask
        self.weights = weights
        self.bias = bias
        self.n_vals = n_vals


@nb.njit(nogil=True)
def _encode(plan, buf):
    # buf = [raw slots | codes]: categorical slots already hold bucket ids,
    # numerical slots raw values (NaN = missing); codes are written as floats
    off = plan.n_vals
    d = plan.base_src.shape[0]
    for j in range(d):
        v = buf[plan.base_src[j]]
        g = plan.base_gran[j]
        if g == 0:
            buf[off + j] = v
            continue
        if not np.isfinite(v):
            v = plan.base_fill[j]
        lo = plan.base_vmin[j]
        hi = plan.base_vmax[j]
        b = 0
        if hi != lo:
            x = np.floor((v - lo) * g / (hi - lo))
            if x < 0.0:
                x = 0.0
            elif x > g - 1:
                x = g - 1.0
            b = np.int64(x)
        buf[off + j] = plan.bin_lut[j, b]
    for k in range(plan.cross_start.shape[0]):
        h = _kernels.mix64(plan.cross_start[k])
        for t in range(plan.cross_ptr[k], plan.cross_ptr[k + 1]):
            h = _kernels.mix64(h ^ np.uint64(np.int64(buf[off + plan.cross_cols[t]])))
        buf[off + d + k] = np.int64(h & plan.mask)


@nb.njit(nogil=True)
def _score(plan, buf):
    _encode(plan, buf)
    off = plan.n_vals
    z = plan.bias
    for f in range(plan.weights.shape[0]):
        z += np.float64(plan.weights[f, np.int64(buf[off + f])])
    return _kernels.sigmoid(z)


class _TokenTable(dict):
    """token -> bucket (as float) for one categorical base field.

    Unseen tokens are hashed on demand; the memo stops growing at a fixed
    size so a stream of novel tokens cannot grow memory without bound.
    """

    __slots__ = ("index", "cfg", "fill")

    def __init__(self, index, cfg, fill):
        super().__init__()
        self.index, self.cfg, self.fill = index, cfg, fill
        b = float(hash_base(index, fill, cfg))
        self[None] = b
        self[""] = b

    def __missing__(self, key):
        try:
            b = float(hash_base(self.index, str(key), self.cfg))
        except TypeError:
            raise ValueError(f"unusable category token {key!r}") from None
        if len(self) < _TOKEN_MEMO_LIMIT:
            try:
                self[key] = b
            except TypeError:
                pass
        return b


def _to_float(v):
    if v is None:
        return math.nan
    try:
        v = float(v)
    except (TypeError, ValueError):
        return math.nan
    return v if math.isfinite(v) else math.nan


class Producer:
    """Compiled transform+predict path for one loaded artifact.

    Raw rows are sequences in schema order (``None`` or ``""`` = missing) or
    mappings from field name to value. The artifact is shared read-only; each
    thread gets its own scratch buffer.
    """

    def __init__(self, artifact):
        self.artifact = art = artifact
        schema = art.schema
        enc = art.encoder
        self.names = schema.names
        self._n_cols = len(self.names)
        self._name_pos = {n: i for i, n in enumerate(self.names)}
        cat_cols = [i for i, f in enumerate(schema.fields) if f.kind is Kind.CATEGORICAL]
        num_cols = [i for i, f in enumerate(schema.fields) if f.kind is Kind.NUMERICAL]
        # raw slot layout: categorical buckets first, then numerical values
        slot = {c: s for s, c in enumerate(cat_cols + num_cols)}
        self._n_vals = len(slot)
        self._n_cat = len(cat_cols)
        self._cat_get = _row_getter(cat_cols)
        self._num_get = _row_getter(num_cols)
        col_of = {f.name: i for i, f in enumerate(schema.fields)}
        gran, src, vmin, vmax, fill = [], [], [], [], []
        max_g = max([bf.granularity or 1 for bf in enc.base_fields])
        bin_lut = np.zeros((len(enc.base_fields), max_g), dtype=np.int64)
        tables = {}
        for bf in enc.base_fields:
            src.append(slot[col_of[bf.column]])
            if bf.granularity is None:
                tables[col_of[bf.column]] = _TokenTable(bf.index, art.hash, art.fill_rules.token)
                gran.append(0)
                vmin.append(0.0), vmax.append(0.0), fill.append(0.0)
            else:
                spec = art.discretization[bf.column]
                gran.append(bf.granularity)
                vmin.append(spec.value_min), vmax.append(spec.value_max)
                fill.append(art.fill_rules.medians[bf.column])
                bin_lut[bf.index, :bf.granularity] = enc.bin_lut(bf)
        self._tables = [tables[c] for c in cat_cols]
        crosses = art.feature_set.crosses
        ptr = np.zeros(len(crosses) + 1, dtype=np.int64)
        cols = []
        for k, c in enumerate(crosses):
            cols.extend(c.constituents)
            ptr[k + 1] = len(cols)
        start = np.array([(art.hash.seed ^ c.digest) & ((1 << 64) - 1) for c in crosses], dtype=np.uint64)
        self._plan = _Plan(
            np.asarray(src, dtype=np.int64), np.asarray(gran, dtype=np.int64),
            np.asarray(vmin, dtype=np.float64), np.asarray(vmax, dtype=np.float64),
            np.asarray(fill, dtype=np.float64), bin_lut, ptr, np.asarray(cols, dtype=np.int64), start,
            np.uint64(art.hash.mask), # float32 holds the artifact weights exactly and halves the memory touched per row
            np.ascontiguousarray(art.model.weights, dtype=np.float32), float(art.model.bias),
            self._n_vals,
        )
        self._n_fields = len(art.model.fields)
        self._local = threading.local()
        self._owner = threading.get_ident()
        self._buf, self._raw = self._new_scratch()
        self._pack = struct.Struct(f"={self._n_vals}d").pack_into
        self._score = _entry_point(_score, self._plan, self._buf)
        self._encode = _entry_point(_encode, self._plan, self._buf)
        self.predict_row = self._row_path()

    def _new_scratch(self):
        buf = np.zeros(self._n_vals + self._n_fields, dtype=np.float64)
        return buf, buf[:self._n_vals]

    def _scratch(self):
        if threading.get_ident() == self._owner:
            return self._buf, self._raw
        loc = self._local
        pair = getattr(loc, "pair", None)
        if pair is None:
            pair = loc.pair = self._new_scratch()
        return pair

    def _load(self, row):
        buf, raw = self._scratch()
        if type(row) is not list and type(row) is not tuple:
            row = self._coerce(row)
        if len(row) != self._n_cols:
            raise ValueError(f"row has {len(row)} values, schema has {self._n_cols} fields")
        try:
            self._pack(raw, 0, *map(_lookup, self._tables, self._cat_get(row)), *self._num_get(row))
        except struct.error:
            # missing or textual numerics: slow path with explicit conversion
            raw[:] = [*map(_lookup, self._tables, self._cat_get(row)), *map(_to_float, self._num_get(row))]
        return buf

    def _row_path(self):
        # predict_row is the latency-critical call; bind everything it touches
        # to closure locals and keep the owner thread on a branch-only path
        get_ident, owner = threading.get_ident, self._owner
        buf0, raw0 = self._buf, self._raw
        pack, tables, cat_get, num_get = self._pack, self._tables, self._cat_get, self._num_get
        score, plan, n_cols, load = self._score, self._plan, self._n_cols, self._load

        def predict_row(row):
            """Probability for one raw row (sequence in schema order or name -> value mapping)."""
            if get_ident() != owner or (type(row) is not list and type(row) is not tuple) \
                    or len(row) != n_cols:
                return score(plan, load(row))
            try:
                pack(raw0, 0, *map(_lookup, tables, cat_get(row)), *num_get(row))
            except struct.error:
                return score(plan, load(row))
            return score(plan, buf0)

        return predict_row

    def _coerce(self, row):
        if not isinstance(row, dict):
            return list(row)
        out = [None] * self._n_cols
        pos = self._name_pos
        for k, v in row.items():
            i = pos.get(k)
            if i is None:
                raise ValueError(f"unknown field {k!r}")
            out[i] = v
        return out

    def transform_row(self, row):
        """Bucket ids over the model's fields (base fields, then crosses)."""
        buf = self._load(row)
        self._encode(self._plan, buf)
        return buf[self._n_vals:].astype(np.int64)

    def predict_rows(self, rows):
        return np.array([self.predict_row(r) for r in rows], dtype=np.float64)

    def transform_rows(self, rows):
        return np.array([self.transform_row(r) for r in rows], dtype=np.int64).reshape(-1, self._n_fields)


_lookup = dict.__getitem__


def _entry_point(dispatcher, *args):
    """Compiled entry of ``dispatcher`` for ``args``' types, skipping per-call type dispatch."""
    dispatcher(*args)
    try:
        key = tuple(dispatcher.typeof_pyval(a) for a in args)
        return dispatcher.overloads[key].entry_point
    except (AttributeError, KeyError):
        return dispatcher


def _row_getter(idx):
    if not idx:
        return lambda row: ()
    if len(idx) == 1:
        i = idx[0]
        return lambda row: (row[i],)
    return operator.itemgetter(*idx)


@dataclass(frozen=True)
class LatencyReport:
    rows: int
    repetitions: int
    p50_us: float
    p95_us: float
    p99_us: float
    mean_us: float
    throughput_rows_per_s: float

    def to_dict(self):
        return dict(self.__dict__)


def bench_latency(producer, rows, repetitions=1, warmup=True):
    """Warm per-row transform+predict latency over ``rows`` x ``repetitions`` calls."""
    if isinstance(producer, ProducerArtifact):
        producer = Producer(producer)
    rows = list(rows)
    if len(rows) < 1000:
        raise ValueError(f"need at least 1000 rows, got {len(rows)}")
    if repetitions < 1:
        raise ValueError("repetitions must be >= 1")
    predict = producer.predict_row
    if warmup:
        for r in rows:
            predict(r)
    clock = time.perf_counter_ns
    samples = np.empty(len(rows) * repetitions, dtype=np.int64)
    i = 0
    total0 = clock()
    for _ in range(repetitions):
        for r in rows:
            t0 = clock()
            predict(r)
            samples[i] = clock() - t0
            i += 1
    total = (clock() - total0) / 1e9
    p50, p95, p99 = np.percentile(samples, [50, 95, 99]) / 1e3
    return LatencyReport(len(rows), repetitions, float(p50), float(p95), float(p99),
                         float(samples.mean() / 1e3), samples.size / total)


def score_csv(artifact, in_path, out_path, column="probability"):
    """Batch mode: score every row of ``in_path``; writes one probability per row."""
    table = load_csv(in_path, artifact.schema, require_label=False)
    probs = artifact.predict_table(table)
    with open(out_path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow([column])
        for p in probs:
            w.writerow([repr(float(p))])
    return len(probs)


def records_table(artifact, rows):
    """Raw rows (schema order) to a :class:`RawTable` for the batch path."""
    return table_from_records(rows, artifact.schema)


__all__ = [
    "FORMAT_VERSION", "MAGIC", "LatencyReport", "Producer", "ProducerArtifact",
    "bench_latency", "dumps", "load", "loads", "records_table", "save", "score_csv",
]
