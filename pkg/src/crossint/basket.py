"""European basket call under a Gaussian log-price model.

The value is the integral of ``G(x) * max(0, sum_i w_i exp(x_i) - K)`` with
``G`` the discounted Gaussian density. This module also provides the
structured TT-X target for that integrand. Its node view exploits that
``log G`` is quadratic and the payoff is a ramp of an additive function, so
slices, connections and line integrals come from prefix/suffix sums and the
closed-form 1-D call kernel instead of pointwise evaluation.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .gaussmodel import GaussianSpec, density, log_density
from .numcore import QuadratureRule, normal_cdf
from .ttcross import TargetFunction

__all__ = [
    "BasketConfig",
    "Call1DKernelArgs",
    "GaussianRampTarget",
    "call_kernel",
    "call_kernel_1d",
    "exact_d1",
    "integrand",
    "payoff",
    "reference_value",
]

_LOG_2PI = math.log(2.0 * math.pi)
_DENSE_CHUNK = 1 << 22


@dataclass(frozen=True)
class BasketConfig:
    """Basket call: weights, strike and the Gaussian law of log-prices."""

    weights: np.ndarray
    strike: float
    gaussian: GaussianSpec
    t_star: float = 1.0
    dim: int = field(init=False)

    def __post_init__(self):
        w = np.atleast_1d(np.asarray(self.weights, dtype=float))
        if w.size != self.gaussian.dim:
            raise ValueError("weights and Gaussian dimension differ")
        if np.any(w <= 0.0):
            raise ValueError("weights must be positive")
        if not self.strike > 0.0:
            raise ValueError("strike must be positive")
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "dim", w.size)

    @classmethod
    def defaults(cls, dim: int = 10, rho: float = 0.0, strike: float = 1.0,
                 mu: float = -0.5, rate: float = 0.0) -> "BasketConfig":
        """Equal weights ``1/d``, ``mu_i = -0.5``, unit variances, correlation ``rho``."""
        spec = GaussianSpec.standard(dim, mu=mu, rho=rho, rate=rate, horizon=1.0)
        return cls(np.full(dim, 1.0 / dim), strike, spec)


def payoff(cfg: BasketConfig, x) -> np.ndarray | float:
    x = np.asarray(x, dtype=float)
    out = np.maximum(0.0, np.exp(x) @ cfg.weights - cfg.strike)
    return float(out) if out.ndim == 0 else out


def integrand(cfg: BasketConfig, x) -> np.ndarray | float:
    return density(cfg.gaussian, x) * payoff(cfg, x)


@dataclass(frozen=True)
class Call1DKernelArgs:
    scale: float
    offset: float
    mean: float
    variance: float

    def __post_init__(self):
        if not self.scale > 0.0 or not self.variance > 0.0:
            raise ValueError("scale and variance must be positive")


def call_kernel(a, b, mean, variance):
    """Vectorised ``E[max(0, a exp(X) + b)]`` for ``X ~ N(mean, variance)``."""
    scalar = all(np.ndim(t) == 0 for t in (a, b, mean, variance))
    a, b, mean, variance = np.broadcast_arrays(*(np.atleast_1d(np.asarray(t, dtype=float))
                                                 for t in (a, b, mean, variance)))
    fwd = a * np.exp(mean + 0.5 * variance)
    out = fwd + b
    neg = b < 0.0
    if np.any(neg):
        sd = np.sqrt(variance[neg])
        xs = np.log(-b[neg] / a[neg])
        m = mean[neg]
        out[neg] = (fwd[neg] * normal_cdf((m + variance[neg] - xs) / sd)
                    + b[neg] * normal_cdf((m - xs) / sd))
    return float(out[0]) if scalar else out


def call_kernel_1d(args: Call1DKernelArgs) -> float:
    """Closed-form integral of ``N(x; mean, variance) * max(0, a e^x + b)``."""
    return float(call_kernel(args.scale, args.offset, args.mean, args.variance))


def exact_d1(cfg: BasketConfig) -> float:
    """Single-asset Black-Scholes value."""
    if cfg.dim != 1:
        raise ValueError("exact_d1 needs a one-dimensional basket")
    g = cfg.gaussian
    val = call_kernel_1d(Call1DKernelArgs(cfg.weights[0], -cfg.strike, g.mu[0], g.sigma[0, 0]))
    return val * math.exp(g.log_discount)


def reference_value(cfg: BasketConfig, n_terms: int | None = None,
                    quad_tol: float = 1e-13) -> float:
    """Fourier-TT value at a truncation where the series has settled.

    With ``n_terms`` omitted, the truncation doubles from 100 until two
    consecutive values differ by less than 1e-13.
    """
    from .fouriertt import FourierTTModel

    if not cfg.gaussian.is_diagonal:
        raise NotImplementedError("reference value needs a diagonal covariance")
    model = FourierTTModel(cfg, n_terms or 100, quad_tol=quad_tol)
    if n_terms is not None:
        return model.integrate()
    prev = model.integrate(100)
    terms = 100
    while True:
        terms *= 2
        cur = model.integrate(terms)
        if abs(cur - prev) < 1e-13 or terms >= 6400:
            return cur
        prev = cur


# ---------------------------------------------------------------------------
# structured TT-X target


class GaussianRampTarget(TargetFunction):
    """``G(x)`` alone, or ``G(x) * max(0, sum_i w_i e^{x_i} - K)``."""

    def __init__(self, spec: GaussianSpec, weights=None, strike: float | None = None):
        self.spec = spec
        self.weights = None if weights is None else np.asarray(weights, dtype=float)
        self.strike = strike
        if (self.weights is None) != (strike is None):
            raise ValueError("weights and strike go together")
        super().__init__(spec.dim, self._value, measure=spec)

    @classmethod
    def for_basket(cls, cfg: BasketConfig) -> "GaussianRampTarget":
        return cls(cfg.gaussian, cfg.weights, cfg.strike)

    @property
    def has_ramp(self) -> bool:
        return self.weights is not None

    def _value(self, x: np.ndarray) -> np.ndarray:
        g = np.exp(log_density(self.spec, x))
        if self.has_ramp:
            g = g * np.maximum(0.0, np.exp(x) @ self.weights - self.strike)
        return g

    def bind(self, nodes: np.ndarray, quad: QuadratureRule | None = None) -> "GaussianRampView":
        return GaussianRampView(self, nodes)


class GaussianRampView:
    """Slices of a Gaussian-times-ramp target at fixed nodes.

    With ``z = x - mu`` and precision ``P``, pinning a prefix ``I`` from node
    ``k`` and a suffix ``J`` from node ``l`` around free coordinate ``a``
    gives the log-weight

        c0 - (alpha_k + beta_l + 2 C_kl)/2 - P_aa xi^2 / 2 - xi (u_k + w_l)

    with ``xi = x - mu_a``, while the ramp argument is ``eL_k + eR_l + w_a e^x - K``.
    """

    def __init__(self, target: GaussianRampTarget, nodes: np.ndarray):
        self.target = target
        self.nodes = nodes
        self.n, self.dim = nodes.shape
        spec = target.spec
        self.diagonal = spec.is_diagonal
        self.prec = spec._prec
        self.c0 = -0.5 * (self.dim * _LOG_2PI + spec._logdet) + spec.log_discount
        self.z = nodes - spec.mu
        if target.has_ramp:
            e = target.weights * np.exp(nodes)
            zero = np.zeros((self.n, 1))
            # eL[:, a] sums coordinates < a, eR[:, a] sums coordinates >= a
            self.eL = np.concatenate([zero, np.cumsum(e, axis=1)], axis=1)
            self.eR = np.concatenate([np.cumsum(e[:, ::-1], axis=1)[:, ::-1], zero], axis=1)
        if self.diagonal:
            q = self.z**2 * np.diag(self.prec)
            zero = np.zeros((self.n, 1))
            self.qL = np.concatenate([zero, np.cumsum(q, axis=1)], axis=1)
            self.qR = np.concatenate([np.cumsum(q[:, ::-1], axis=1)[:, ::-1], zero], axis=1)
        self._order = {}

    # -- pieces ----------------------------------------------------------

    def _rows(self, a: int) -> slice:
        return slice(0, 1) if a == 0 else slice(None)

    def _cols(self, a: int) -> slice:
        return slice(0, 1) if a == self.dim - 1 else slice(None)

    def _quad_parts(self, lo: int, hi: int, rows: slice, cols: slice):
        """alpha (prefix ``[0, lo)``), beta (suffix ``[hi, d)``), cross term."""
        if self.diagonal:
            return self.qL[rows, lo], self.qR[cols, hi], None
        p = self.prec
        zi = self.z[rows, :lo]
        zj = self.z[cols, hi:]
        alpha = np.einsum("ki,ij,kj->k", zi, p[:lo, :lo], zi)
        beta = np.einsum("li,ij,lj->l", zj, p[hi:, hi:], zj)
        cross = zi @ p[:lo, hi:] @ zj.T
        return alpha, beta, cross

    def _log_weight(self, lo: int, hi: int, rows: slice, cols: slice) -> np.ndarray:
        alpha, beta, cross = self._quad_parts(lo, hi, rows, cols)
        lw = self.c0 - 0.5 * (alpha[:, None] + beta[None, :])
        if cross is not None:
            lw = lw - cross
        return lw

    def _linear(self, a: int, rows: slice, cols: slice):
        """Coefficients ``u_k``, ``w_l`` of ``xi`` in the quadratic form."""
        if self.diagonal:
            return np.zeros(self.z[rows].shape[0]), np.zeros(self.z[cols].shape[0])
        p = self.prec
        return self.z[rows, :a] @ p[:a, a], self.z[cols, a + 1:] @ p[a + 1:, a]

    def _ramp_offset(self, lo: int, hi: int, rows: slice, cols: slice) -> np.ndarray:
        return self.eL[rows, lo][:, None] + self.eR[cols, hi][None, :] - self.target.strike

    def _count(self, k: int) -> None:
        self.target.evals += int(k)

    # -- view protocol -----------------------------------------------------

    def split_matrix(self, a: int) -> np.ndarray:
        rows = cols = slice(None)
        out = np.exp(self._log_weight(a, a, rows, cols))
        if self.target.has_ramp:
            out *= np.maximum(0.0, self._ramp_offset(a, a, rows, cols))
        self._count(out.size)
        return out

    def slice_matrix(self, a: int, x: float) -> np.ndarray:
        rows, cols = self._rows(a), self._cols(a)
        u, w = self._linear(a, rows, cols)
        xi = float(x) - self.target.spec.mu[a]
        lw = self._log_weight(a, a + 1, rows, cols)
        lw = lw - 0.5 * self.prec[a, a] * xi * xi - xi * (u[:, None] + w[None, :])
        out = np.exp(lw)
        if self.target.has_ramp:
            shift = self.target.weights[a] * math.exp(float(x))
            out *= np.maximum(0.0, self._ramp_offset(a, a + 1, rows, cols) + shift)
        self._count(out.size)
        return out

    def slice_apply(self, a: int, v: np.ndarray, x: np.ndarray, fast: bool = False) -> np.ndarray:
        rows, cols = self._rows(a), self._cols(a)
        x = np.asarray(x, dtype=float)
        xi = x - self.target.spec.mu[a]
        u, w = self._linear(a, rows, cols)
        lw = self._log_weight(a, a + 1, rows, cols)
        self._count(x.size * lw.size)
        # x-dependent factors split into a row part and a column part
        row_x = np.exp(-np.outer(xi, u))
        col_x = np.exp(-0.5 * self.prec[a, a] * xi[:, None] ** 2 - np.outer(xi, w))
        vr = v * row_x
        if not self.target.has_ramp:
            return (vr @ np.exp(lw)) * col_x
        shift = self.target.weights[a] * np.exp(x)
        if self.diagonal:
            # the Gaussian weight factorises, leaving a pure ramp sum over k
            gk = np.exp(-0.5 * self.qL[rows, a])
            gl = np.exp(self.c0 - 0.5 * self.qR[cols, a + 1])
            eL = self.eL[rows, a]
            t = self.eR[cols, a + 1][None, :] + shift[:, None] - self.target.strike
            zk = vr * gk
            if fast and zk.shape[1] > 1:
                inner = self._ramp_sum_sorted(a, eL, zk, t)
            else:
                inner = self._ramp_sum_dense(eL, zk, t)
            return inner * gl * col_x
        gauss = np.exp(lw)
        off = self._ramp_offset(a, a + 1, rows, cols)
        out = np.empty((x.size, gauss.shape[1]))
        step = max(1, _DENSE_CHUNK // gauss.size)
        for lo in range(0, x.size, step):
            sl = slice(lo, lo + step)
            ramp = np.maximum(0.0, off[None, :, :] + shift[sl, None, None])
            out[sl] = np.einsum("ck,ckl->cl", vr[sl], gauss[None, :, :] * ramp)
        return out * col_x

    @staticmethod
    def _ramp_sum_dense(eL: np.ndarray, zk: np.ndarray, t: np.ndarray) -> np.ndarray:
        """``sum_k zk[c, k] * max(0, eL_k + t[c, l])`` by direct summation."""
        out = np.empty(t.shape)
        step = max(1, _DENSE_CHUNK // max(eL.size * t.shape[1], 1))
        for lo in range(0, t.shape[0], step):
            sl = slice(lo, lo + step)
            ramp = np.maximum(0.0, eL[None, :, None] + t[sl, None, :])
            out[sl] = np.einsum("ck,ckl->cl", zk[sl], ramp)
        return out

    def _ramp_sum_sorted(self, a: int, eL: np.ndarray, zk: np.ndarray, t: np.ndarray) -> np.ndarray:
        """Same sum in ``O(n log n)`` per point.

        Sorting ``eL`` turns the active set ``eL_k > -t`` into a suffix, so the
        sum is ``A(t) + t B(t)`` with suffix sums ``A`` of ``z eL`` and ``B`` of
        ``z``. The two terms may cancel, so this is used only for ranking.
        """
        order = self._order.get(a)
        if order is None:
            order = self._order[a] = np.argsort(eL, kind="stable")
        es = eL[order]
        zs = zk[:, order]
        pad = np.zeros((zs.shape[0], 1))
        b_suf = np.concatenate([np.cumsum(zs[:, ::-1], axis=1)[:, ::-1], pad], axis=1)
        a_suf = np.concatenate([np.cumsum((zs * es)[:, ::-1], axis=1)[:, ::-1], pad], axis=1)
        idx = np.searchsorted(es, -t, side="right")
        return np.take_along_axis(a_suf, idx, axis=1) + t * np.take_along_axis(b_suf, idx, axis=1)

    def line_integrals(self, a: int) -> np.ndarray:
        """Analytic integral over coordinate ``a`` of every slice entry."""
        rows, cols = self._rows(a), self._cols(a)
        paa = self.prec[a, a]
        u, w = self._linear(a, rows, cols)
        s = u[:, None] + w[None, :]
        lw = self._log_weight(a, a + 1, rows, cols) + s * s / (2.0 * paa)
        scale = math.sqrt(2.0 * math.pi / paa)
        out = np.exp(lw) * scale
        if self.target.has_ramp:
            mean = self.target.spec.mu[a] - s / paa
            out *= call_kernel(self.target.weights[a], self._ramp_offset(a, a + 1, rows, cols),
                               mean, 1.0 / paa)
        self._count(out.size)
        return out
