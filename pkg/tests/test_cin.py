import numpy as np
import pytest

from featcross.cin import CinExperiment, build_c, cin_residual, run_experiments
from featcross.lr import cin_residual as reexported


def _svd_oracle(c, m, n):
    # per row the best rank-1 fit leaves every singular value but the largest
    total = 0.0
    for row in np.asarray(c).reshape(-1, m, n):
        s = np.linalg.svd(row, compute_uv=False)
        total += float(np.sum(s[1:] ** 2))
    return total / float(np.sum(np.asarray(c) ** 2))


@pytest.mark.parametrize("seed", range(5))
@pytest.mark.parametrize("shape", [(2, 2, 2), (4, 3, 3), (3, 4, 2)])
def test_residual_matches_svd(seed, shape):
    d, m, n = shape
    c = np.random.default_rng(seed).standard_normal((d, m * n))
    assert cin_residual(c, m, n, seed=seed) == pytest.approx(_svd_oracle(c, m, n), rel=1e-6, abs=1e-12)


def test_representable_matrix_has_zero_residual():
    c, cert = build_c(CinExperiment(4, 3, 3, "representable", seed=2))
    assert cert["mode"] == "representable"
    assert cin_residual(c, 3, 3) < 1e-20


def test_adversarial_certificate_is_valid():
    exp = CinExperiment(4, 3, 3, "adversarial", seed=5)
    c, cert = build_c(exp)
    blocks = c.reshape(4, 3, 3)
    e, i, j, k, l = cert["entry"], cert["i"], cert["j"], cert["k"], cert["l"]
    gap = abs(blocks[e, i, k] / blocks[e, j, k] - blocks[e, i, l] / blocks[e, j, l])
    assert gap == pytest.approx(cert["gap"]) and gap >= 0.1
    assert cin_residual(c, 3, 3) > 1e-3


def test_single_pair_is_flagged_representable():
    c, cert = build_c(CinExperiment(3, 1, 1, "adversarial"))
    assert cert["mode"] == "representable" and cert["requested"] == "adversarial"
    assert cin_residual(c, 1, 1) == pytest.approx(0.0, abs=1e-20)


def test_errors_and_trivial_cases():
    assert cin_residual(np.zeros((2, 4)), 2, 2) == 0.0
    with pytest.raises(ValueError):
        cin_residual(np.zeros((2, 5)), 2, 2)
    with pytest.raises(ValueError):
        cin_residual(np.full((1, 4), np.nan), 2, 2)
    with pytest.raises(ValueError):
        cin_residual(np.ones((1, 4)), 2, 2, restarts=0)
    with pytest.raises(ValueError):
        CinExperiment(0, 2, 2)
    with pytest.raises(ValueError):
        CinExperiment(2, 2, 2, mode="other")


def test_run_experiments_rows():
    rows = run_experiments(3, 2, 2, ("representable", "adversarial", "random"), range(2), restarts=4)
    assert [r[0] for r in rows] == ["representable"] * 2 + ["adversarial"] * 2 + ["random"] * 2
    assert all(r[1:4] == (3, 2, 2) for r in rows)
    assert rows[0][5] < 1e-20 < rows[2][5]


def test_reexport():
    assert reexported is cin_residual
