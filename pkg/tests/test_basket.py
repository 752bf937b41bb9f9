import math

import numpy as np
import pytest

from crossint.basket import (BasketConfig, Call1DKernelArgs, GaussianRampTarget, call_kernel,
                             call_kernel_1d, exact_d1, integrand, payoff, reference_value)
from crossint.gaussmodel import Conditioner, GaussianSpec, density
from crossint.montecarlo import estimate
from crossint.numcore import Rng, adaptive_quad

EXACT_D1 = 0.38292492254802620728
REFERENCE_D10 = 0.15201433162891706  # independent scipy.quad Fourier prototype


def test_payoff_examples():
    cfg = BasketConfig.defaults(10)
    assert payoff(cfg, np.zeros(10)) == 0.0
    assert payoff(cfg, np.full(10, math.log(2))) == pytest.approx(1.0, rel=1e-15)
    assert payoff(cfg, np.full(10, -1.0)) == 0.0


def test_integrand_is_density_times_payoff():
    cfg = BasketConfig.defaults(6, rho=0.2)
    xs = Rng(0).normal((100, 6))
    vals = integrand(cfg, xs)
    assert np.array_equal(vals, density(cfg.gaussian, xs) * payoff(cfg, xs))
    assert np.all(vals >= 0)


def test_payoff_midpoint_convexity():
    cfg = BasketConfig.defaults(4)
    rng = Rng(1)
    a, b = rng.normal((200, 4)), rng.normal((200, 4))
    mid = np.log(0.5 * (np.exp(a) + np.exp(b)))
    assert np.all(payoff(cfg, mid) <= 0.5 * (payoff(cfg, a) + payoff(cfg, b)) + 1e-15)


def test_d1_mc_agrees_with_quadrature():
    cfg = BasketConfig.defaults(1)
    quad = adaptive_quad(lambda x: integrand(cfg, x[:, None]), -math.inf, math.inf, 1e-13)
    est = estimate(lambda x: payoff(cfg, x), cfg.gaussian, 200_000, seed=8)
    assert abs(est.mean - quad) < 3 * est.std_error


def test_call_kernel_examples():
    assert call_kernel_1d(Call1DKernelArgs(0.7, 0.5, -0.2, 0.3)) == 0.7 * math.exp(-0.2 + 0.15) + 0.5
    assert call_kernel_1d(Call1DKernelArgs(1.0, -1.0, -0.5, 1.0)) == pytest.approx(EXACT_D1, abs=1e-15)
    with pytest.raises(ValueError):
        Call1DKernelArgs(0.0, 1.0, 0.0, 1.0)


def test_call_kernel_against_quadrature():
    rng = Rng(17)
    for _ in range(200):
        a, b, m, v = 0.05 + 2 * rng.uniform(), 2 * rng.normal(), rng.normal(), 0.05 + 2 * rng.uniform()
        norm = 1 / math.sqrt(2 * math.pi * v)
        f = lambda x: norm * np.exp(-0.5 * (x - m) ** 2 / v) * np.maximum(0, a * np.exp(x) + b)
        lo = math.log(-b / a) if b < 0 else -math.inf
        oracle = adaptive_quad(f, lo, math.inf, 1e-13)
        assert call_kernel_1d(Call1DKernelArgs(a, b, m, v)) == pytest.approx(oracle, abs=1e-10)


def test_call_kernel_continuous_at_zero_offset():
    at = call_kernel(0.8, 0.0, 0.1, 0.5)
    # the kernel moves by at most |db| across the branch switch
    for eps in (1e-14, 1e-16):
        assert abs(call_kernel(0.8, -eps, 0.1, 0.5) - at) < 1e-12
        assert abs(call_kernel(0.8, eps, 0.1, 0.5) - at) < 1e-12


def test_call_kernel_vectorises():
    b = np.array([-1.0, 0.3])
    out = call_kernel(1.0, b, -0.5, 1.0)
    assert out.shape == (2,)
    assert out[0] == call_kernel(1.0, -1.0, -0.5, 1.0)


def test_exact_d1():
    assert exact_d1(BasketConfig.defaults(1)) == pytest.approx(EXACT_D1, abs=1e-15)
    assert exact_d1(BasketConfig.defaults(1, strike=1e-12)) == pytest.approx(1.0, abs=1e-11)
    assert exact_d1(BasketConfig.defaults(1, strike=1e6)) < 1e-30
    discounted = exact_d1(BasketConfig.defaults(1, rate=0.05))
    assert discounted == pytest.approx(EXACT_D1 * math.exp(-0.05), rel=1e-14)
    with pytest.raises(ValueError):
        exact_d1(BasketConfig.defaults(2))


def test_config_validation():
    spec = GaussianSpec.standard(2)
    with pytest.raises(ValueError):
        BasketConfig([0.5], 1.0, spec)
    with pytest.raises(ValueError):
        BasketConfig([0.5, -0.5], 1.0, spec)
    with pytest.raises(ValueError):
        BasketConfig([0.5, 0.5], 0.0, spec)


def test_reference_value_d1():
    assert reference_value(BasketConfig.defaults(1)) == pytest.approx(EXACT_D1, abs=1e-12)


def test_reference_value_d10():
    cfg = BasketConfig.defaults(10)
    assert reference_value(cfg) == pytest.approx(REFERENCE_D10, abs=1e-13)
    assert abs(reference_value(cfg, 400) - reference_value(cfg, 800)) < 1e-13


def test_reference_value_rejects_correlation():
    with pytest.raises(NotImplementedError):
        reference_value(BasketConfig.defaults(3, rho=0.1))


@pytest.mark.parametrize("rho", [0.0, 0.3])
def test_line_integrals_on_random_pinnings(rho):
    d = 5
    cfg = BasketConfig.defaults(d, rho=rho)
    target = GaussianRampTarget.for_basket(cfg)
    rng = Rng(31)
    nodes = rng.normal((6, d)) * 0.6 - 0.5
    view = target.bind(nodes)
    for a in (0, 2, d - 1):
        got = view.line_integrals(a)
        left = nodes[:1] if a == 0 else nodes
        right = nodes[:1] if a == d - 1 else nodes
        cond = Conditioner(cfg.gaussian, a)
        for k in range(left.shape[0]):
            for l in range(right.shape[0]):
                pinned = np.concatenate([left[k, :a], right[l, a + 1:]])
                # kernel route: conditional Gaussian weight times the call kernel
                logw, mean = cond(pinned)
                e = cfg.weights * np.exp(np.concatenate([left[k, :a], [0.0], right[l, a + 1:]]))
                b = e.sum() - e[a] - cfg.strike
                kernel = math.exp(logw) * call_kernel(cfg.weights[a], b, mean, cond.variance)
                # quadrature route on the raw integrand
                def g(x):
                    pts = np.repeat(np.insert(pinned, a, 0.0)[None, :], len(x), axis=0)
                    pts[:, a] = x
                    return integrand(cfg, pts)
                kink = math.log(-b / cfg.weights[a]) if b < 0 else -math.inf
                quad = adaptive_quad(g, kink, math.inf, 1e-14)
                scale = max(abs(quad), 1e-300)
                assert got[k, l] == pytest.approx(kernel, rel=1e-10, abs=1e-10 * scale)
                assert got[k, l] == pytest.approx(quad, rel=1e-10, abs=1e-16)


def test_gaussian_only_target():
    spec = GaussianSpec.standard(3, rho=0.4)
    target = GaussianRampTarget(spec)
    assert not target.has_ramp
    x = Rng(2).normal((5, 3))
    assert np.allclose(target(x), density(spec, x), rtol=1e-14)
    with pytest.raises(ValueError):
        GaussianRampTarget(spec, weights=[1, 1, 1])
