import math

import numpy as np
import pytest

from crossint.gaussmodel import equicorrelated
from crossint.numcore import (AccuracyError, NotPositiveDefiniteError, QuadratureRule, Rng,
                              adaptive_quad, cholesky, gauss_hermite, jacobi_svd, normal_cdf,
                              pinv, standard_normal)

PHI_HALF = 0.69146246127401310364  # mpmath ncdf(0.5)


def penrose_residual(m, p):
    return max(
        np.abs(m @ p @ m - m).max(),
        np.abs(p @ m @ p - p).max(),
        np.abs((m @ p).T - m @ p).max(),
        np.abs((p @ m).T - p @ m).max(),
    )


def test_pinv_identity_and_rank_deficient_diagonal():
    assert np.allclose(pinv(np.eye(3), 1e-12), np.eye(3), atol=1e-15)
    assert np.allclose(pinv(np.diag([2.0, 0.0]), 1e-12), np.diag([0.5, 0.0]), atol=1e-15)


@pytest.mark.parametrize("method", ["lapack", "jacobi"])
def test_pinv_penrose_on_seeded_4x3(method):
    m = Rng(11).normal((4, 3))
    assert penrose_residual(m, pinv(m, 1e-12, method)) < 1e-10


@pytest.mark.parametrize("seed", range(6))
def test_pinv_penrose_random_up_to_20(seed):
    rng = Rng(100 + seed)
    rows, cols = (int(v) for v in 2 + (rng.uniform(2) * 19).astype(int))
    m = rng.normal((rows, cols))
    for method in ("lapack", "jacobi"):
        assert penrose_residual(m, pinv(m, 1e-12, method)) < 1e-10


def test_pinv_matches_inverse_when_invertible():
    m = Rng(3).normal((6, 6)) + 6 * np.eye(6)
    assert np.allclose(pinv(m) @ m, np.eye(6), atol=1e-13)


def test_pinv_rejects_bad_input():
    with pytest.raises(ValueError):
        pinv(np.array([[1.0, np.nan]]))
    with pytest.raises(ValueError):
        pinv(np.eye(2), rel_tol=1.5)


def test_jacobi_singular_values_match_lapack():
    m = Rng(5).normal((7, 4))
    u, s, vt = jacobi_svd(m)
    assert np.allclose(s, np.linalg.svd(m, compute_uv=False), rtol=1e-13)
    assert np.allclose((u * s) @ vt, m, atol=1e-13)
    wide = m.T
    u, s, vt = jacobi_svd(wide)
    assert np.allclose((u * s) @ vt, wide, atol=1e-13)


def test_cholesky_examples():
    assert np.array_equal(cholesky(np.eye(3)), np.eye(3))
    low = cholesky(np.array([[1.0, 0.5], [0.5, 1.0]]))
    assert np.allclose(low, [[1.0, 0.0], [0.5, math.sqrt(0.75)]], atol=1e-15)
    low = cholesky(equicorrelated(10, 0.5))
    assert np.allclose(low @ low.T, equicorrelated(10, 0.5), atol=1e-14)


@pytest.mark.parametrize("seed", range(5))
def test_cholesky_reconstruction_random_spd(seed):
    a = Rng(seed).normal((8, 8))
    sigma = a @ a.T + np.eye(8)
    low = cholesky(sigma)
    assert np.all(np.triu(low, 1) == 0.0)
    assert np.abs(low @ low.T - sigma).max() <= 1e-12 * np.abs(sigma).max()


def test_cholesky_not_positive_definite():
    with pytest.raises(NotPositiveDefiniteError):
        cholesky(np.array([[1.0, 2.0], [2.0, 1.0]]))


def test_gauss_hermite_examples():
    assert gauss_hermite(lambda x: np.ones_like(x), 0.7, 3.0, 5) == pytest.approx(1.0, abs=1e-14)
    assert gauss_hermite(lambda x: x, 0.3, 2.0, 5) == pytest.approx(0.3, abs=1e-14)
    oracle = adaptive_quad(lambda x: x**4 * np.exp(-0.5 * x * x) / math.sqrt(2 * math.pi),
                           -math.inf, math.inf, 1e-13)
    assert oracle == pytest.approx(3.0, abs=1e-11)
    assert gauss_hermite(lambda x: x**4, 0.0, 1.0, 3) == pytest.approx(oracle, abs=1e-11)


@pytest.mark.parametrize("order", [1, 3, 6, 10])
def test_gauss_hermite_monomial_exactness(order):
    for k in range(2 * order):
        exact = 0.0 if k % 2 else float(np.prod(np.arange(k - 1, 0, -2))) if k else 1.0
        # odd moments vanish, so measure error against E|x|^k
        scale = 2 ** (k / 2) * math.gamma((k + 1) / 2) / math.sqrt(math.pi)
        got = gauss_hermite(lambda x: x**k, 0.0, 1.0, order)
        assert abs(got - exact) <= 1e-12 * scale


def test_adaptive_quad_examples():
    assert adaptive_quad(lambda x: x, 0.0, 1.0, 1e-12) == pytest.approx(0.5, abs=1e-14)
    pdf = lambda x: np.exp(-0.5 * x * x) / math.sqrt(2 * math.pi)
    assert adaptive_quad(pdf, -math.inf, 0.0, 1e-13) == pytest.approx(0.5, abs=1e-13)
    got = adaptive_quad(lambda x: pdf(x) * np.exp(x), -math.inf, math.inf, 1e-13)
    assert got == pytest.approx(math.exp(0.5), abs=1e-12)
    assert adaptive_quad(pdf, 0.0, math.inf, 1e-13) == pytest.approx(0.5, abs=1e-13)
    assert adaptive_quad(lambda x: x, 1.0, 0.0, 1e-12) == pytest.approx(-0.5, abs=1e-14)


def test_adaptive_quad_reports_best_estimate_when_limit_hit():
    with pytest.raises(AccuracyError) as info:
        adaptive_quad(lambda x: 1.0 / np.sqrt(x), 0.0, 1.0, 1e-15, max_intervals=4)
    assert info.value.estimate == pytest.approx(2.0, abs=0.1)


@pytest.mark.parametrize("f", [np.cos, lambda x: x * x * np.exp(x / 3), lambda x: np.exp(np.sin(x))])
def test_adaptive_and_gauss_hermite_agree(f):
    mean, var = 0.2, 0.7
    gh = gauss_hermite(f, mean, var, 60)
    sd = math.sqrt(var)
    aq = adaptive_quad(lambda x: np.exp(-0.5 * ((x - mean) / sd) ** 2) / (sd * math.sqrt(2 * math.pi)) * f(x),
                       -math.inf, math.inf, 1e-13)
    assert gh == pytest.approx(aq, abs=1e-10)


def test_quadrature_rule_line_integral_both_kinds():
    f = lambda x: np.exp(-0.5 * (x - 0.4) ** 2)
    exact = math.sqrt(2 * math.pi)
    assert QuadratureRule("gauss-hermite", order=30).line_integral(f) == pytest.approx(exact, rel=1e-12)
    assert QuadratureRule().line_integral(f) == pytest.approx(exact, rel=1e-12)


def test_normal_cdf():
    assert normal_cdf(0.0) == 0.5
    for z in (0.1, 1.0, 3.0):
        assert normal_cdf(z) + normal_cdf(-z) == pytest.approx(1.0, abs=1e-15)
    assert abs(normal_cdf(0.5) - PHI_HALF) < 1e-14
    assert abs(normal_cdf(0.5) - 0.5 * (1 + math.erf(0.5 / math.sqrt(2)))) < 1e-15


def test_rng_determinism_and_uniform_range():
    a = [standard_normal(r) for r in [Rng(42)] for _ in range(1)]
    r1, r2 = Rng(42), Rng(42)
    assert np.array_equal(r1.normal(100), r2.normal(100))
    assert a[0] == Rng(42).normal(1)[0]
    u = Rng(7).uniform(100_000)
    assert u.min() > 0.0 and u.max() < 1.0


def test_rng_draws_do_not_depend_on_batching():
    whole = Rng(9).uniform(10)
    r = Rng(9)
    parts = np.concatenate([r.uniform(3), r.uniform(7)])
    assert np.array_equal(whole, parts)


def test_rng_moments():
    z = Rng(2024).normal(10**6)
    assert abs(z.mean()) < 4 / math.sqrt(10**6)
    assert abs(z.var() - 1.0) < 0.01


def test_rng_split_streams_differ():
    base = Rng(5)
    a, b = base.split(0).uniform(50), base.split(1).uniform(50)
    assert not np.array_equal(a, b)
    assert np.array_equal(a, Rng(5).split(0).uniform(50))
