"""Deterministic 64-bit hashing used for base and cross feature buckets.

Two named primitives are combined:

* keyed BLAKE2b with an 8-byte digest hashes category tokens, keyed by the
  run seed and salted with the field index;
* the SplitMix64 finalizer chains bucket ids into a cross bucket.

Both have scalar (pure Python) and vectorised (numpy ``uint64``) forms that
agree bit for bit; the numba kernels in :mod:`featcross._kernels` carry a third
copy of the mixer.
"""

from hashlib import blake2b

import numpy as np

MASK64 = (1 << 64) - 1
GOLDEN_GAMMA = 0x9E3779B97F4A7C15
MIX_MUL1 = 0xBF58476D1CE4E5B9
MIX_MUL2 = 0x94D049BB133111EB

_U_GAMMA = np.uint64(GOLDEN_GAMMA)
_U_MUL1 = np.uint64(MIX_MUL1)
_U_MUL2 = np.uint64(MIX_MUL2)
_S30, _S27, _S31 = np.uint64(30), np.uint64(27), np.uint64(31)


def splitmix64(x):
    """SplitMix64 step on a Python int (wraps modulo 2**64)."""
    z = (x + GOLDEN_GAMMA) & MASK64
    z = ((z ^ (z >> 30)) * MIX_MUL1) & MASK64
    z = ((z ^ (z >> 27)) * MIX_MUL2) & MASK64
    return z ^ (z >> 31)


def splitmix64_array(x):
    """Vectorised SplitMix64 over a ``uint64`` array."""
    z = np.asarray(x, dtype=np.uint64) + _U_GAMMA
    z = (z ^ (z >> _S30)) * _U_MUL1
    z = (z ^ (z >> _S27)) * _U_MUL2
    return z ^ (z >> _S31)


def token_hash(seed, field_index, token):
    """64-bit keyed BLAKE2b of ``token`` salted with ``field_index``."""
    h = blake2b(
        token.encode("utf-8"),
        digest_size=8,
        key=int(seed).to_bytes(8, "little"),
        salt=int(field_index).to_bytes(16, "little"),
    )
    return int.from_bytes(h.digest(), "little")


def constituents_digest(constituents):
    """64-bit BLAKE2b digest identifying a canonical constituent tuple."""
    text = ",".join(str(int(c)) for c in constituents)
    h = blake2b(text.encode("ascii"), digest_size=8, person=b"featcross-x")
    return int.from_bytes(h.digest(), "little")


def chain_hash(seed, digest, buckets):
    """Scalar cross hash: fold ``buckets`` into SplitMix64 starting at seed^digest."""
    h = splitmix64((int(seed) ^ int(digest)) & MASK64)
    for b in buckets:
        h = splitmix64(h ^ int(b))
    return h


def chain_hash_columns(seed, digest, columns):
    """Vectorised :func:`chain_hash`; ``columns`` is a sequence of int arrays."""
    n = len(columns[0])
    h = splitmix64_array(np.full(n, (int(seed) ^ int(digest)) & MASK64, dtype=np.uint64))
    for col in columns:
        h = splitmix64_array(h ^ np.asarray(col).astype(np.uint64))
    return h
