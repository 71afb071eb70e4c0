"""Compiled kernels: numba and numpy flavours agree, batched fits equal single fits."""

import numpy as np
import pytest

from mirglucose import _kernels as k
from mirglucose.evaluation.errorgrid import parkes_polygons


def problem(seed, n=30, p=6):
    rng = np.random.default_rng(seed)
    X = rng.standard_normal((n, p))
    y = X @ rng.standard_normal(p) + 0.3 * rng.standard_normal(n) + 100
    return X, y, rng


def test_lower_hull_flavours_agree():
    rng = np.random.default_rng(0)
    for _ in range(20):
        x = np.sort(rng.uniform(0, 10, 200))
        y = rng.standard_normal(200)
        np.testing.assert_array_equal(k._lower_hull_numba(x, y), k._lower_hull_numpy(x, y))
    x = np.arange(10.0)
    np.testing.assert_array_equal(k._lower_hull_numba(x, 2 * x), k._lower_hull_numpy(x, 2 * x))


@pytest.mark.parametrize("code", [0, 1, 2])
def test_gram_flavours_agree(code):
    X, _, rng = problem(1)
    Q = rng.standard_normal((7, X.shape[1]))
    a = k._gram_numba(X, Q, code, 0.2, 3, 1.0)
    b = k._gram_numpy(X, Q, code, 0.2, 3, 1.0)
    np.testing.assert_allclose(a, b, rtol=1e-13, atol=1e-13)


@pytest.mark.parametrize("code", [0, 1, 2])
def test_smo_flavours_agree(code):
    X, y, _ = problem(2)
    K = k._gram_numpy(X, X, code, 0.1, 2, 1.0)
    ra = k._smo_numba(K, y, 1.3, 0.2, 1e-3, 100000)
    rb = k._smo_numpy(K, y, 1.3, 0.2, 1e-3, 100000)
    np.testing.assert_allclose(ra[0], rb[0], atol=1e-12)
    assert ra[1] == pytest.approx(rb[1], abs=1e-10)
    assert ra[2] == rb[2] and ra[4] and rb[4]


def test_exact_and_batch_flavours_agree():
    X, y, rng = problem(3)
    K = k._gram_numpy(X, X, 0, 1.0, 3, 0.0)
    Kq = k._gram_numpy(X, rng.standard_normal((4, X.shape[1])), 0, 1.0, 3, 0.0)
    a = k._svr_exact_numba(K, y, 0.8, 0.1, 1e-3, 100000)
    b = k._svr_exact_numpy(K, y, 0.8, 0.1, 1e-3, 100000)
    np.testing.assert_allclose(a[0], b[0], atol=1e-10)
    Cs = np.linspace(0.1, 2.0, 6)
    es = np.full(6, 0.2)
    for exact in (True, False):
        pa = k._svr_batch_numba(K, y, Kq, Cs, es, 1e-3, 100000, exact)[0]
        pb = k._svr_batch_numpy(K, y, Kq, Cs, es, 1e-3, 100000, exact)[0]
        np.testing.assert_allclose(pa, pb, rtol=1e-12, atol=1e-10)


def test_polygon_zone_flavours_agree():
    rng = np.random.default_rng(4)
    px, py = rng.uniform(0, 550, (2, 5000))
    for kind in ("parkes1", "parkes2"):
        vx, vy, starts, codes, _ = parkes_polygons(kind)
        np.testing.assert_array_equal(k._polygon_zones_numba(px, py, vx, vy, starts, codes),
                                      k._polygon_zones_numpy(px, py, vx, vy, starts, codes))


@pytest.mark.parametrize("seed", range(3))
def test_warm_started_batch_equals_cold_fits(seed):
    X, y, rng = problem(10 + seed, n=40, p=15)
    K = k.gram(X, X, 0, 1.0, 3, 0.0)
    Kq = k.gram(X, rng.standard_normal((3, X.shape[1])), 0, 1.0, 3, 0.0)
    Cs = np.array([0.1, 0.5, 1.0, 2.0, 2.0, 1.0, 0.5, 0.1])
    es = np.array([0.1, 0.1, 0.1, 0.1, 0.3, 0.3, 0.3, 0.3])
    preds, _, conv = k.svr_batch(K, y, Kq, Cs, es, 1e-3, 100000, True)
    assert conv.all()
    n = y.size
    for c in range(Cs.size):
        beta, rho, _, gap, ok = k.svr_exact(K, y, Cs[c], es[c], 1e-3, 100000)
        assert ok and gap < 1e-3
        np.testing.assert_array_equal(preds[c], k.expand(beta[:n] - beta[n:], Kq, -rho))


def test_plain_batch_equals_single_smo_fits():
    X, y, rng = problem(20)
    K = k.gram(X, X, 1, 0.1, 3, 0.0)
    Kq = k.gram(X, rng.standard_normal((2, X.shape[1])), 1, 0.1, 3, 0.0)
    Cs = np.array([0.5, 1.0, 2.0])
    es = np.array([0.1, 0.2, 0.5])
    preds, _, _ = k.svr_batch(K, y, Kq, Cs, es, 1e-3, 100000, False)
    n = y.size
    for c in range(3):
        beta, rho, _, _, _ = k.smo_solve(K, y, Cs[c], es[c], 1e-3, 100000)
        np.testing.assert_array_equal(preds[c], k.expand(beta[:n] - beta[n:], Kq, -rho))


def test_exact_finish_improves_on_smo_objective():
    X, y, _ = problem(30, n=45, p=20)
    K = k.gram(X, X, 0, 1.0, 3, 0.0)
    n = y.size

    # on the feasible set sum(d) = 0 the objective is unchanged by centring y;
    # centring stops SMO's ~1e-11 drift in sum(d) from being amplified by y ~ 100
    yc = y - y.mean()

    def dual(beta):
        d = beta[:n] - beta[n:]
        terms = np.array([-0.5 * d @ K @ d, -0.1 * np.abs(d).sum(), yc @ d])
        return terms.sum(), np.abs(terms).sum()

    smo = k.smo_solve(K, y, 1.0, 0.1, 1e-3, 100000)
    ex = k.svr_exact(K, y, 1.0, 0.1, 1e-3, 100000)
    assert ex[4] and ex[3] <= smo[3] + 1e-12
    (f_ex, scale), (f_smo, _) = dual(ex[0]), dual(smo[0])
    # the objective cancels terms of size `scale`; compare at that rounding level
    assert f_ex >= f_smo - 1e-12 * scale
    d = ex[0][:n] - ex[0][n:]
    assert abs(d.sum()) < 1e-9 and np.all(np.abs(d) <= 1.0)
