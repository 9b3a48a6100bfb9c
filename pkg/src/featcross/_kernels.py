"""numba kernels for the training and scoring inner loops.

All kernels are deterministic: rows are visited in the order given and
coordinate updates inside a mini-batch are independent of each other.
"""

import numba as nb
import numpy as np

_GAMMA = np.uint64(0x9E3779B97F4A7C15)
_MUL1 = np.uint64(0xBF58476D1CE4E5B9)
_MUL2 = np.uint64(0x94D049BB133111EB)


@nb.njit(inline="always")
def mix64(x):
    z = x + _GAMMA
    z = (z ^ (z >> np.uint64(30))) * _MUL1
    z = (z ^ (z >> np.uint64(27))) * _MUL2
    return z ^ (z >> np.uint64(31))


@nb.njit(inline="always")
def sigmoid(z):
    if z >= 0.0:
        return 1.0 / (1.0 + np.exp(-z))
    e = np.exp(z)
    return e / (1.0 + e)


@nb.njit(cache=True, nogil=True)
def sgd_pass(codes, bsum, y, weights, bias, starts, alpha, l1, l2, train_bias, grad, count):
    """One pass of proximal mini-batch SGD over ``codes`` rows.

    codes:   (n, F) int64 bucket ids, one column per weight vector
    bsum:    (n,) frozen partial logit added to every row
    weights: (F, B) float64, updated in place
    bias:    (1,) float64, updated in place when ``train_bias``
    starts:  batch boundaries, ``starts[-1] == n``
    grad, count: (F, B) zero scratch; left zeroed on return

    Per batch and touched bucket: the gradient is averaged over the rows that
    hit the bucket, then w <- w - alpha * (grad + l2 * w) and w is
    soft-thresholded by alpha * l1. The bias uses the batch-mean gradient.
    """
    n_fields = codes.shape[1]
    shrink = alpha * l1
    for bi in range(starts.shape[0] - 1):
        s = starts[bi]
        e = starts[bi + 1]
        m = e - s
        if m <= 0:
            continue
        gb = 0.0
        b0 = bias[0]
        for r in range(s, e):
            z = b0
            for f in range(n_fields):
                z += weights[f, codes[r, f]]
            z += bsum[r]
            g = sigmoid(z) - y[r]
            gb += g
            for f in range(n_fields):
                grad[f, codes[r, f]] += g
                count[f, codes[r, f]] += 1.0
        # NaN marks a coordinate already updated in this batch
        for r in range(s, e):
            for f in range(n_fields):
                c = codes[r, f]
                gsum = grad[f, c]
                if gsum != gsum:
                    continue
                w = weights[f, c]
                w = w - alpha * (gsum / count[f, c] + l2 * w)
                count[f, c] = 0.0
                if w > shrink:
                    w -= shrink
                elif w < -shrink:
                    w += shrink
                else:
                    w = 0.0
                weights[f, c] = w
                grad[f, c] = np.nan
        for r in range(s, e):
            for f in range(n_fields):
                grad[f, codes[r, f]] = 0.0
        if train_bias:
            bias[0] = b0 - alpha * (gb / m)


@nb.njit(cache=True, nogil=True)
def linear_scores(codes, weights, bias):
    """bias + sum_f weights[f, codes[r, f]] for every row, summed in field order."""
    n = codes.shape[0]
    out = np.empty(n, dtype=np.float64)
    for r in range(n):
        z = bias
        for f in range(codes.shape[1]):
            z += weights[f, codes[r, f]]
        out[r] = z
    return out


@nb.njit(cache=True, nogil=True)
def field_scores(codes, weights, bsum):
    """weights[codes[r]] + bsum[r] for a single field."""
    n = codes.shape[0]
    out = np.empty(n, dtype=np.float64)
    for r in range(n):
        out[r] = 0.0 + weights[codes[r]] + bsum[r]
    return out


@nb.njit(cache=True, nogil=True)
def cross_column(base, cols, start, mask):
    """Chained SplitMix64 over ``base[:, cols]`` rows, reduced with ``mask``."""
    n = base.shape[0]
    out = np.empty(n, dtype=np.int64)
    for r in range(n):
        h = mix64(start)
        for j in range(cols.shape[0]):
            h = mix64(h ^ np.uint64(base[r, cols[j]]))
        out[r] = np.int64(h & mask)
    return out
