"""Numerical probe of whether entry-wise products of embeddings can represent
embedded cross features.

For one-hot x (hot bit i) and y (hot bit k), ``(A x) o (B y) = C z`` reduces to
``a_i o b_k = c_ik`` for every pair (i, k). :func:`cin_residual` fits the best
A, B by alternating least squares and reports how far the product family is
from C; :func:`build_c` constructs matrices on either side of that line.
"""

import math
from dataclasses import dataclass

import numpy as np

MODES = ("representable", "adversarial", "random")


def _als_once(blocks, rng, max_iter, tol):
    # blocks: (D, m, n); row d is fitted by the rank-1 matrix a[d] b[d]^T
    d_rows, m, n = blocks.shape
    b = rng.standard_normal((d_rows, n))
    prev = math.inf
    resid = math.inf
    for _ in range(max_iter):
        bb = np.einsum("dk,dk->d", b, b)
        a = np.einsum("dik,dk->di", blocks, b) / np.where(bb > 0, bb, 1.0)[:, None]
        aa = np.einsum("di,di->d", a, a)
        b = np.einsum("dik,di->dk", blocks, a) / np.where(aa > 0, aa, 1.0)[:, None]
        diff = blocks - a[:, :, None] * b[:, None, :]
        resid = float(np.sum(diff * diff))
        if math.isfinite(prev) and prev - resid <= tol * max(prev, 1e-300):
            break
        prev = resid
    return resid


def cin_residual(c, m, n, restarts=20, seed=0, max_iter=2000, tol=1e-13):
    """Minimal relative residual ``min_{A,B} sum_ik |a_i o b_k - c_ik|^2 / |C|^2``.

    ``c`` is D x (m*n) with column ``i * n + k`` holding c_ik. The minimum over
    ``restarts`` random initialisations is returned.
    """
    c = np.asarray(c, dtype=np.float64)
    if c.ndim != 2 or c.shape[1] != m * n:
        raise ValueError(f"C must be D x {m * n}, got {c.shape}")
    if not np.isfinite(c).all():
        raise ValueError("C contains non-finite entries")
    if restarts < 1:
        raise ValueError("restarts must be >= 1")
    total = float(np.sum(c * c))
    if total == 0.0:
        return 0.0
    blocks = c.reshape(c.shape[0], m, n)
    rng = np.random.default_rng(seed)
    best = min(_als_once(blocks, rng, max_iter, tol) for _ in range(restarts))
    return best / total


@dataclass(frozen=True)
class CinExperiment:
    d_rows: int
    m: int
    n: int
    mode: str = "adversarial"
    seed: int = 0
    restarts: int = 20

    def __post_init__(self):
        if min(self.d_rows, self.m, self.n) < 1:
            raise ValueError("dimensions must be >= 1")
        if self.mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}")


def _find_witness(c, m, n, min_gap):
    """Indices (i, j, k, l, entry) with c_ik/c_jk and c_il/c_jl apart by >= min_gap."""
    blocks = c.reshape(c.shape[0], m, n)
    best = None
    for i in range(m):
        for j in range(m):
            if i == j:
                continue
            for k in range(n):
                for l in range(n):
                    if k == l:
                        continue
                    den1, den2 = blocks[:, j, k], blocks[:, j, l]
                    ok = (np.abs(den1) > 1e-6) & (np.abs(den2) > 1e-6)
                    if not ok.any():
                        continue
                    gap = np.where(ok, np.abs(blocks[:, i, k] / np.where(ok, den1, 1.0)
                                              - blocks[:, i, l] / np.where(ok, den2, 1.0)), -1.0)
                    e = int(np.argmax(gap))
                    if gap[e] >= min_gap and (best is None or gap[e] > best["gap"]):
                        best = {"i": i, "j": j, "k": k, "l": l, "entry": e, "gap": float(gap[e])}
    return best


def build_c(exp, min_gap=0.1, max_tries=100):
    """Construct C for ``exp.mode`` and return ``(C, certificate)``.

    A single pair (m = n = 1) is always representable, so that case is built
    as representable whatever the mode and the certificate says so.
    """
    rng = np.random.default_rng(exp.seed)
    d, m, n = exp.d_rows, exp.m, exp.n
    mode = exp.mode
    cert = {"mode": mode}
    if mode == "adversarial" and (m < 2 or n < 2):
        cert = {"mode": "representable", "requested": mode, "flag": "needs m, n >= 2"}
        mode = "representable"
    if mode == "representable":
        a = rng.standard_normal((d, m))
        b = rng.standard_normal((d, n))
        c = (a[:, :, None] * b[:, None, :]).reshape(d, m * n)
        return c, cert
    if mode == "random":
        return rng.standard_normal((d, m * n)), cert
    scale = 1.0
    tries = 0
    while True:
        c = scale * rng.standard_normal((d, m * n))
        witness = _find_witness(c, m, n, min_gap)
        if witness is not None:
            cert.update(witness)
            cert["tries"] = tries + 1
            return c, cert
        tries += 1
        if tries % max_tries == 0:
            scale *= 2.0


def run_experiments(d_rows=4, m=3, n=3, modes=("representable", "adversarial"), seeds=range(1),
                    restarts=20):
    """Rows of (mode, D, m, n, seed, residual, certificate) for the CLI table."""
    rows = []
    for mode in modes:
        for seed in seeds:
            exp = CinExperiment(d_rows, m, n, mode, seed, restarts)
            c, cert = build_c(exp)
            res = cin_residual(c, m, n, restarts=restarts, seed=seed)
            rows.append((mode, d_rows, m, n, seed, res, cert))
    return rows
