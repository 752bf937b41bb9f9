"""Multivariate Gaussian weight: density, 1-D conditionals, sampling."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Mapping

import numpy as np

from .numcore import Rng, cholesky, normal_cdf

__all__ = [
    "Conditional1D",
    "Conditioner",
    "GaussianSpec",
    "condition",
    "density",
    "equicorrelated",
    "log_density",
    "sample",
    "truncated_lognormal_mean",
]

_LOG_2PI = math.log(2.0 * math.pi)


def equicorrelated(dim: int, rho: float) -> np.ndarray:
    """Covariance with unit variances and constant correlation ``rho``."""
    return rho + (1.0 - rho) * np.eye(dim)


@dataclass(frozen=True)
class GaussianSpec:
    """Gaussian weight ``exp(-rate * horizon) * N(x; mu, sigma)``."""

    mu: np.ndarray
    sigma: np.ndarray
    rate: float = 0.0
    horizon: float = 1.0
    chol: np.ndarray = field(init=False, repr=False, compare=False)
    _prec: np.ndarray = field(init=False, repr=False, compare=False)
    _logdet: float = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        mu = np.atleast_1d(np.asarray(self.mu, dtype=float))
        sigma = np.atleast_2d(np.asarray(self.sigma, dtype=float))
        if sigma.shape != (mu.size, mu.size):
            raise ValueError("sigma must be dim x dim with dim = len(mu)")
        low = cholesky(sigma)
        object.__setattr__(self, "mu", mu)
        object.__setattr__(self, "sigma", sigma)
        object.__setattr__(self, "chol", low)
        inv_low = np.linalg.inv(low)
        object.__setattr__(self, "_prec", inv_low.T @ inv_low)
        object.__setattr__(self, "_logdet", 2.0 * float(np.sum(np.log(np.diag(low)))))

    @classmethod
    def standard(cls, dim: int, mu: float = -0.5, rho: float = 0.0, **kw) -> "GaussianSpec":
        return cls(np.full(dim, mu), equicorrelated(dim, rho), **kw)

    @property
    def dim(self) -> int:
        return self.mu.size

    @property
    def is_diagonal(self) -> bool:
        return bool(np.all(self.sigma == np.diag(np.diag(self.sigma))))

    @property
    def log_discount(self) -> float:
        return -self.rate * self.horizon


def log_density(spec: GaussianSpec, x) -> np.ndarray | float:
    """Log of :func:`density`; accepts one point or a batch of rows."""
    x = np.asarray(x, dtype=float)
    if x.shape[-1] != spec.dim:
        raise ValueError(f"point has length {x.shape[-1]}, expected {spec.dim}")
    dx = x - spec.mu
    quad = np.einsum("...i,ij,...j->...", dx, spec._prec, dx)
    out = -0.5 * (quad + spec.dim * _LOG_2PI + spec._logdet) + spec.log_discount
    return float(out) if out.ndim == 0 else out


def density(spec: GaussianSpec, x) -> np.ndarray | float:
    """Discounted Gaussian density at ``x``."""
    return np.exp(log_density(spec, x))


@dataclass(frozen=True)
class Conditional1D:
    log_weight: float
    mean: float
    variance: float


class Conditioner:
    """Conditional law of coordinate ``free`` given all others.

    The pinned-block factorisation is done once; each call then costs a
    couple of dot products per point.
    """

    def __init__(self, spec: GaussianSpec, free: int):
        if not 0 <= free < spec.dim:
            raise ValueError("free dimension out of range")
        self.spec = spec
        self.free = free
        keep = np.array([i for i in range(spec.dim) if i != free], dtype=int)
        self.pinned_dims = keep
        s = spec.sigma
        if keep.size:
            spp = s[np.ix_(keep, keep)]
            try:
                low = cholesky(spp)
            except ValueError as exc:
                raise ArithmeticError("pinned covariance block is singular") from exc
            inv_low = np.linalg.inv(low)
            prec = inv_low.T @ inv_low
            self._beta = prec @ s[keep, free]
            self.variance = float(s[free, free] - s[free, keep] @ self._beta)
            self._prec = prec
            self._logdet = 2.0 * float(np.sum(np.log(np.diag(low))))
        else:
            self._beta = np.zeros(0)
            self.variance = float(s[free, free])
            self._prec = np.zeros((0, 0))
            self._logdet = 0.0
        if not self.variance > 0.0:
            raise ArithmeticError("conditional variance is not positive")

    def __call__(self, pinned):
        """``pinned`` holds the other ``dim - 1`` coordinates in natural
        order (one row per point). Returns ``(log_weight, mean)``."""
        p = np.asarray(pinned, dtype=float)
        mu = self.spec.mu
        dp = p - mu[self.pinned_dims]
        mean = mu[self.free] + dp @ self._beta
        quad = np.einsum("...i,ij,...j->...", dp, self._prec, dp)
        k = self.pinned_dims.size
        logw = -0.5 * (quad + k * _LOG_2PI + self._logdet) + self.spec.log_discount
        return logw, mean


def condition(spec: GaussianSpec, pinned: Mapping[int, float], free: int) -> Conditional1D:
    """Conditional 1-D Gaussian of ``free`` given the values in ``pinned``."""
    missing = set(range(spec.dim)) - set(pinned) - {free}
    if missing or free in pinned:
        raise ValueError("pinned must cover every dimension except free")
    cond = Conditioner(spec, free)
    logw, mean = cond(np.array([pinned[i] for i in cond.pinned_dims], dtype=float))
    return Conditional1D(float(logw), float(mean), cond.variance)


def sample(spec: GaussianSpec, rng: Rng, size: int | None = None) -> np.ndarray:
    """``mu + L z`` with ``z`` i.i.d. standard normal; rows are samples."""
    count = 1 if size is None else size
    z = rng.normal((count, spec.dim))
    x = spec.mu + z @ spec.chol.T
    return x[0] if size is None else x


def truncated_lognormal_mean(mean: float, variance: float, upper: float = math.inf) -> float:
    """Integral of ``N(x; mean, variance) * exp(x)`` over ``x < upper``."""
    if not variance > 0.0:
        raise ValueError("variance must be positive")
    full = math.exp(mean + 0.5 * variance)
    if upper == math.inf:
        return full
    if upper == -math.inf:
        return 0.0
    return full * normal_cdf((upper - mean - variance) / math.sqrt(variance))
