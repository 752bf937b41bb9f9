"""Fourier-TT integration of the basket call against a diagonal Gaussian.

On the box ``w_i e^{x_i} <= K`` the basket sum ``S`` lies in ``[0, K d]``, where

    max(0, S - K) = (d-1)/d * S + sum_m c_m sin(m pi S / (K d)),
    c_m = -(2 K d / (m^2 pi^2)) sin(m pi / d).

Each ``sin(sum_i theta_i)`` is the (2, 1) entry of a product of 2x2 rotations,
so its Gaussian integral over the box is a chain of per-dimension 2x2
integral matrices. Off the box the payoff equals ``S - K``, and its integral
follows from full-space moments minus box moments, all of which factorise.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .basket import BasketConfig
from .gaussmodel import truncated_lognormal_mean
from .numcore import adaptive_quad, normal_cdf

__all__ = [
    "BoxDomain",
    "FourierSeriesSpec",
    "FourierTTModel",
    "eval_series",
    "rotation",
    "series_coeff",
]


@dataclass(frozen=True)
class FourierSeriesSpec:
    strike: float
    dim: int
    n_terms: int = 0

    def __post_init__(self):
        if not self.strike > 0.0 or self.dim < 1 or self.n_terms < 0:
            raise ValueError("need strike > 0, dim >= 1 and n_terms >= 0")


def series_coeff(spec: FourierSeriesSpec, m: int) -> float:
    """Coefficient of ``sin(m pi S / (K d))``; zero when ``d`` divides ``m``."""
    if m < 1:
        raise ValueError("m starts at 1")
    if m % spec.dim == 0:
        return 0.0
    return -(2.0 * spec.strike * spec.dim) / (m * m * math.pi**2) * math.sin(m * math.pi / spec.dim)


def eval_series(spec: FourierSeriesSpec, S, n_terms: int | None = None):
    """Truncated series for ``max(0, S - K)`` on ``0 <= S <= K d``."""
    n_terms = spec.n_terms if n_terms is None else n_terms
    s = np.asarray(S, dtype=float)
    kd = spec.strike * spec.dim
    if np.any(s < 0.0) or np.any(s > kd):
        raise ValueError("S outside [0, K d]")
    out = (spec.dim - 1) / spec.dim * s
    for m in range(1, n_terms + 1):
        c = series_coeff(spec, m)
        if c:
            out = out + c * np.sin(m * math.pi * s / kd)
    return float(out) if out.ndim == 0 else out


def rotation(theta: float) -> np.ndarray:
    c, s = math.cos(theta), math.sin(theta)
    return np.array([[c, -s], [s, c]])


@dataclass(frozen=True)
class BoxDomain:
    """``x_i <= uppers_i`` for all ``i``."""

    uppers: np.ndarray

    @classmethod
    def for_basket(cls, weights, strike: float) -> "BoxDomain":
        return cls(np.log(strike / np.asarray(weights, dtype=float)))

    def contains(self, x) -> bool:
        return bool(np.all(np.asarray(x) <= self.uppers))


class FourierTTModel:
    """Fourier-TT estimator of the basket value.

    Per-dimension integral matrices are cached on the marginal parameters,
    so identical coordinates (the equal-weight default) share quadratures.
    ``matrix_integrals`` counts requested 2x2 integral matrices.
    """

    def __init__(self, cfg: BasketConfig, n_terms: int = 100, quad_tol: float = 1e-13):
        g = cfg.gaussian
        if not g.is_diagonal:
            raise NotImplementedError("Fourier-TT needs a diagonal covariance")
        self.cfg = cfg
        self.series = FourierSeriesSpec(cfg.strike, cfg.dim, n_terms)
        self.weights = cfg.weights
        self.mu = g.mu
        self.var = np.diag(g.sigma).copy()
        self.box = BoxDomain.for_basket(cfg.weights, cfg.strike)
        self.quad_tol = quad_tol
        self.matrix_integrals = 0
        self._cache: dict[tuple, np.ndarray] = {}
        self._sines: list[float] = []

    # -- per-dimension pieces ------------------------------------------------

    def _key(self, i: int, m: int) -> tuple:
        return (m, float(self.mu[i]), float(self.var[i]), float(self.weights[i]), float(self.box.uppers[i]))

    def term_matrix(self, i: int, m: int) -> np.ndarray:
        """Integral over ``x_i <= b_i`` of ``N(x; mu_i, var_i) R[m pi w_i e^x / (K d)]``.

        The cosine and sine integrals fill the rotation pattern, so two scalar
        quadratures give the whole matrix.
        """
        self.matrix_integrals += 1
        key = self._key(i, m)
        mat = self._cache.get(key)
        if mat is None:
            mu, var, b = self.mu[i], self.var[i], self.box.uppers[i]
            omega = m * math.pi * self.weights[i] / (self.series.strike * self.series.dim)
            norm = 1.0 / math.sqrt(2.0 * math.pi * var)

            def pdf(x):
                return norm * np.exp(-0.5 * (x - mu) ** 2 / var)

            cos_i = adaptive_quad(lambda x: pdf(x) * np.cos(omega * np.exp(x)), -math.inf, b, self.quad_tol)
            sin_i = adaptive_quad(lambda x: pdf(x) * np.sin(omega * np.exp(x)), -math.inf, b, self.quad_tol)
            mat = np.array([[cos_i, -sin_i], [sin_i, cos_i]])
            self._cache[key] = mat
        return mat

    def sine_integral(self, m: int) -> float:
        """Box integral of the product density times ``sin(m pi S / (K d))``."""
        row = np.array([0.0, 1.0])
        for i in range(self.series.dim):
            row = row @ self.term_matrix(i, m)
        return float(row[0])

    # -- assembly --------------------------------------------------------------

    def box_probabilities(self) -> np.ndarray:
        return normal_cdf((self.box.uppers - self.mu) / np.sqrt(self.var))

    def separable_parts(self) -> tuple[float, float]:
        """Linear part inside the box and the whole outside-box part."""
        d = self.series.dim
        k = self.series.strike
        p = self.box_probabilities()
        e = np.array([w * truncated_lognormal_mean(m, v, b)
                      for w, m, v, b in zip(self.weights, self.mu, self.var, self.box.uppers)])
        full = np.array([w * truncated_lognormal_mean(m, v) for w, m, v in zip(self.weights, self.mu, self.var)])
        others = np.array([np.prod(np.delete(p, i)) for i in range(d)])
        box_s = math.fsum(others * e)
        inside_linear = (d - 1) / d * box_s
        outside = math.fsum([math.fsum(full), -k, -box_s, k * float(np.prod(p))])
        return inside_linear, outside

    def sine_terms(self, n_terms: int) -> list[float]:
        """``c_m * sine_integral(m)`` for ``m = 1..n_terms`` (cached)."""
        while len(self._sines) < n_terms:
            m = len(self._sines) + 1
            c = series_coeff(self.series, m)
            self._sines.append(c * self.sine_integral(m) if c else 0.0)
        return self._sines[:n_terms]

    def integrate(self, n_terms: int | None = None) -> float:
        """Estimate at the given truncation (default: the model's ``n_terms``)."""
        n_terms = self.series.n_terms if n_terms is None else n_terms
        lin, out = self.separable_parts()
        total = math.fsum([lin, out, *self.sine_terms(n_terms)])
        return total * math.exp(self.cfg.gaussian.log_discount)

    def partial_sums(self, truncations) -> list[float]:
        """Estimates at several truncations, in the given order."""
        return [self.integrate(t) for t in truncations]
