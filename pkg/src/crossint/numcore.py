"""Dense linear algebra, special functions, 1-D quadrature and a seeded RNG.

Everything here is small and self-contained. The heavy lifting for large
matrices is delegated to LAPACK through numpy; the one-sided Jacobi SVD is
kept as an independent reference route.
"""

from __future__ import annotations

import heapq
import math
from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy import special

__all__ = [
    "AccuracyError",
    "NotPositiveDefiniteError",
    "QuadratureRule",
    "Rng",
    "adaptive_quad",
    "cholesky",
    "gauss_hermite",
    "jacobi_svd",
    "normal_cdf",
    "pinv",
    "standard_normal",
]

_MASK64 = (1 << 64) - 1


class NotPositiveDefiniteError(ValueError):
    """Raised when a Cholesky pivot is not strictly positive."""


class AccuracyError(ArithmeticError):
    """Adaptive quadrature hit its subdivision limit.

    The best available estimate and its error estimate are attached.
    """

    def __init__(self, message: str, estimate: float, error: float):
        super().__init__(message)
        self.estimate = estimate
        self.error = error


# ---------------------------------------------------------------------------
# linear algebra


def _check_finite(m: np.ndarray) -> np.ndarray:
    m = np.asarray(m, dtype=float)
    if m.ndim != 2 or m.size == 0:
        raise ValueError("expected a non-empty 2-D matrix")
    if not np.all(np.isfinite(m)):
        raise ValueError("matrix has non-finite entries")
    return m


def jacobi_svd(m: np.ndarray, tol: float = 1e-15, max_sweeps: int = 60):
    """Thin SVD by one-sided (Hestenes) Jacobi rotations.

    Returns ``u, s, vt`` with singular values sorted in decreasing order.
    Columns are orthogonalised pairwise until every pair satisfies
    ``|a_i . a_j| <= tol * |a_i| |a_j|``.
    """
    a = _check_finite(m)
    transposed = a.shape[0] < a.shape[1]
    if transposed:
        a = a.T
    a = a.copy()
    ncol = a.shape[1]
    v = np.eye(ncol)
    for _ in range(max_sweeps):
        rotated = False
        for i in range(ncol - 1):
            for j in range(i + 1, ncol):
                ai, aj = a[:, i], a[:, j]
                alpha = ai @ ai
                beta = aj @ aj
                gamma = ai @ aj
                if abs(gamma) <= tol * math.sqrt(alpha * beta) or gamma == 0.0:
                    continue
                rotated = True
                zeta = (beta - alpha) / (2.0 * gamma)
                t = math.copysign(1.0, zeta) / (abs(zeta) + math.hypot(1.0, zeta))
                c = 1.0 / math.hypot(1.0, t)
                s = c * t
                a[:, [i, j]] = np.column_stack((c * ai - s * aj, s * ai + c * aj))
                vi, vj = v[:, i].copy(), v[:, j].copy()
                v[:, i] = c * vi - s * vj
                v[:, j] = s * vi + c * vj
        if not rotated:
            break
    sv = np.linalg.norm(a, axis=0)
    order = np.argsort(-sv, kind="stable")
    sv = sv[order]
    a = a[:, order]
    v = v[:, order]
    u = np.zeros_like(a)
    nz = sv > 0
    u[:, nz] = a[:, nz] / sv[nz]
    if transposed:
        return v, sv, u.T
    return u, sv, v.T


def pinv(m: np.ndarray, rel_tol: float = 1e-12, method: str = "lapack") -> np.ndarray:
    """Moore-Penrose pseudo-inverse with a relative singular-value cutoff.

    Singular values below ``rel_tol * s_max`` are treated as zero.
    ``method`` selects LAPACK (``gesdd``) or the Jacobi reference SVD.
    """
    if not 0.0 < rel_tol < 1.0:
        raise ValueError("rel_tol must lie in (0, 1)")
    a = _check_finite(m)
    if method == "lapack":
        u, s, vt = np.linalg.svd(a, full_matrices=False)
    elif method == "jacobi":
        u, s, vt = jacobi_svd(a)
    else:
        raise ValueError(f"unknown SVD method {method!r}")
    if s[0] == 0.0:
        return np.zeros(a.T.shape)
    keep = s > rel_tol * s[0]
    return (vt[keep].T / s[keep]) @ u[:, keep].T


def cholesky(sigma: np.ndarray) -> np.ndarray:
    """Lower-triangular ``L`` with ``L @ L.T == sigma``."""
    a = _check_finite(sigma)
    n = a.shape[0]
    if a.shape != (n, n):
        raise ValueError("cholesky needs a square matrix")
    if not np.allclose(a, a.T, rtol=1e-12, atol=0.0):
        raise ValueError("cholesky needs a symmetric matrix")
    low = np.zeros_like(a)
    for j in range(n):
        pivot = a[j, j] - low[j, :j] @ low[j, :j]
        if not pivot > 0.0:
            raise NotPositiveDefiniteError(f"non-positive pivot {pivot!r} at column {j}")
        low[j, j] = math.sqrt(pivot)
        low[j + 1 :, j] = (a[j + 1 :, j] - low[j + 1 :, :j] @ low[j, :j]) / low[j, j]
    return low


# ---------------------------------------------------------------------------
# special functions


def normal_cdf(z):
    """Standard normal CDF through the complementary error function."""
    z = np.asarray(z, dtype=float)
    out = 0.5 * special.erfc(-z / math.sqrt(2.0))
    return float(out) if out.ndim == 0 else out


# ---------------------------------------------------------------------------
# quadrature


@dataclass(frozen=True)
class QuadratureRule:
    """How to do a 1-D integral over the real line when no closed form exists.

    ``gauss-hermite`` uses ``order`` nodes of the Gaussian weight centred at
    ``center`` with standard deviation ``scale`` and divides that weight back
    out. ``adaptive-kronrod`` runs :func:`adaptive_quad` to ``tolerance``.
    """

    kind: str = "adaptive-kronrod"
    order: int = 40
    tolerance: float = 1e-13
    center: float = 0.0
    scale: float = 1.0

    def __post_init__(self):
        if self.kind not in ("gauss-hermite", "adaptive-kronrod"):
            raise ValueError(f"unknown quadrature kind {self.kind!r}")
        if self.order < 1 or not self.tolerance > 0.0 or not self.scale > 0.0:
            raise ValueError("order must be >= 1, tolerance and scale > 0")

    def nodes_weights(self) -> tuple[np.ndarray, np.ndarray]:
        """Nodes and weights of the unweighted rule (gauss-hermite only)."""
        t, w = np.polynomial.hermite_e.hermegauss(self.order)
        return self.center + self.scale * t, w * self.scale * np.exp(0.5 * t * t)

    def line_integral(self, f: Callable) -> float:
        """Integral of ``f`` over the real line."""
        if self.kind == "gauss-hermite":
            x, w = self.nodes_weights()
            return float(w @ np.asarray(f(x), dtype=float))
        return adaptive_quad(f, -math.inf, math.inf, self.tolerance)


def gauss_hermite(f: Callable, mean: float, variance: float, order: int) -> float:
    """Gauss-Hermite estimate of ``E[f(X)]`` for ``X ~ N(mean, variance)``.

    ``f`` must accept a numpy array of nodes.
    """
    if order < 1 or not variance > 0.0:
        raise ValueError("order must be >= 1 and variance > 0")
    x, w = np.polynomial.hermite_e.hermegauss(order)
    vals = np.asarray(f(mean + math.sqrt(variance) * x), dtype=float)
    return float(w @ vals) / math.sqrt(2.0 * math.pi)


# 15-point Kronrod nodes on [-1, 1] with embedded 7-point Gauss weights
_XK = np.array([
    -0.991455371120812639206854697526329, -0.949107912342758524526189684047851,
    -0.864864423359769072789712788640926, -0.741531185599394439863864773280788,
    -0.586087235467691130294144845693013, -0.405845151377397166906606412076961,
    -0.207784955007898467600689403773245, 0.0,
    0.207784955007898467600689403773245, 0.405845151377397166906606412076961,
    0.586087235467691130294144845693013, 0.741531185599394439863864773280788,
    0.864864423359769072789712788640926, 0.949107912342758524526189684047851,
    0.991455371120812639206854697526329,
])
_WK = np.array([
    0.022935322010529224963732008058970, 0.063092092629978553290700663189204,
    0.104790010322250183839876322541518, 0.140653259715525918745189590510238,
    0.169004726639267902826583426598550, 0.190350578064785409913256402421014,
    0.204432940075298892414161999234649, 0.209482141084727828012999174891714,
    0.204432940075298892414161999234649, 0.190350578064785409913256402421014,
    0.169004726639267902826583426598550, 0.140653259715525918745189590510238,
    0.104790010322250183839876322541518, 0.063092092629978553290700663189204,
    0.022935322010529224963732008058970,
])
_WG = np.zeros(15)
_WG[1::2] = [
    0.129484966168869693270611432679082, 0.279705391489276667901467771423780,
    0.381830050505118944950369775488975, 0.417959183673469387755102040816327,
    0.381830050505118944950369775488975, 0.279705391489276667901467771423780,
    0.129484966168869693270611432679082,
]


def _transform(f: Callable, lo: float, hi: float):
    """Map (lo, hi) to a finite parameter interval.

    Both ends infinite: x = t / (1 - t^2) on (-1, 1).
    One end infinite: x = lo + t / (1 - t) or x = hi - t / (1 - t) on [0, 1).
    """
    if math.isinf(lo) and math.isinf(hi):
        def g(t):
            d = 1.0 - t * t
            return f(t / d) * (1.0 + t * t) / (d * d)
        return g, -1.0, 1.0
    if math.isinf(hi):
        def g(t):
            return f(lo + t / (1.0 - t)) / (1.0 - t) ** 2
        return g, 0.0, 1.0
    if math.isinf(lo):
        def g(t):
            return f(hi - t / (1.0 - t)) / (1.0 - t) ** 2
        return g, 0.0, 1.0
    return f, lo, hi


def _gk15(g: Callable, a: float, b: float):
    half = 0.5 * (b - a)
    mid = 0.5 * (a + b)
    y = np.asarray(g(mid + half * _XK), dtype=float)
    kron = half * (_WK @ y)
    gauss = half * (_WG @ y)
    return kron, abs(kron - gauss)


def adaptive_quad(f: Callable, lo: float, hi: float, tol: float = 1e-12,
                  max_intervals: int = 2000) -> float:
    """Globally adaptive Gauss-Kronrod (7/15) quadrature.

    ``f`` is called with numpy arrays. Infinite endpoints go through the
    rational transforms described in :func:`_transform`. The interval with
    the largest error estimate is bisected until the summed error estimate
    falls below ``tol``.
    """
    if not tol > 0.0:
        raise ValueError("tol must be positive")
    if lo == hi:
        return 0.0
    sign = 1.0
    if lo > hi:
        lo, hi, sign = hi, lo, -1.0
    with np.errstate(over="ignore", under="ignore", invalid="ignore", divide="ignore"):
        g, a, b = _transform(f, lo, hi)

        def safe(t):
            y = np.asarray(g(t), dtype=float)
            return np.where(np.isfinite(y), y, 0.0)

        val, err = _gk15(safe, a, b)
        heap = [(-err, a, b, val)]
        total, total_err = val, err
        while total_err > tol:
            if len(heap) >= max_intervals:
                raise AccuracyError("subdivision limit reached", sign * total, total_err)
            neg_err, l, r, v = heapq.heappop(heap)
            m = 0.5 * (l + r)
            v1, e1 = _gk15(safe, l, m)
            v2, e2 = _gk15(safe, m, r)
            total += v1 + v2 - v
            total_err += e1 + e2 + neg_err
            heapq.heappush(heap, (-e1, l, m, v1))
            heapq.heappush(heap, (-e2, m, r, v2))
            if total_err <= tol:
                # re-sum to drop accumulated round-off from the running updates
                total = math.fsum(item[3] for item in heap)
                total_err = math.fsum(-item[0] for item in heap)
    return sign * float(total)


# ---------------------------------------------------------------------------
# random numbers


def _splitmix64(x: np.ndarray) -> np.ndarray:
    """SplitMix64 finaliser applied elementwise to uint64 counters."""
    with np.errstate(over="ignore"):
        z = x + np.uint64(0x9E3779B97F4A7C15)
        z = (z ^ (z >> np.uint64(30))) * np.uint64(0xBF58476D1CE4E5B9)
        z = (z ^ (z >> np.uint64(27))) * np.uint64(0x94D049BB133111EB)
        return z ^ (z >> np.uint64(31))


class Rng:
    """Counter-based generator: draw ``i`` is ``splitmix64(key + i * golden)``.

    Streams depend only on the 64-bit seed and the draw index, so results are
    identical across platforms and independent of how draws are batched.
    Normals use Box-Muller on consecutive uniform pairs, two normals per pair.
    """

    _GOLDEN = np.uint64(0x9E3779B97F4A7C15)

    def __init__(self, seed: int = 0):
        self.seed = int(seed) & _MASK64
        self._key = _splitmix64(np.array([self.seed], dtype=np.uint64))[0]
        self._counter = 0

    def _raw(self, count: int) -> np.ndarray:
        idx = np.arange(self._counter, self._counter + count, dtype=np.uint64)
        self._counter += count
        with np.errstate(over="ignore"):
            return _splitmix64(self._key + idx * self._GOLDEN)

    def uniform(self, size: int | tuple | None = None):
        """Uniforms on the open interval (0, 1) with 53 random bits; a float
        when ``size`` is omitted."""
        if size is None:
            return float(self.uniform(1)[0])
        shape = (size,) if isinstance(size, int) else tuple(size)
        count = int(np.prod(shape))
        bits = self._raw(count) >> np.uint64(11)
        return ((bits.astype(np.float64) + 0.5) * 2.0**-53).reshape(shape)

    def normal(self, size: int | tuple | None = None):
        """Standard normals by Box-Muller; consumes one uniform per normal,
        rounded up to an even count."""
        if size is None:
            return float(self.normal(1)[0])
        shape = (size,) if isinstance(size, int) else tuple(size)
        count = int(np.prod(shape))
        pairs = (count + 1) // 2
        u = self.uniform(2 * pairs)
        r = np.sqrt(-2.0 * np.log(u[0::2]))
        theta = 2.0 * math.pi * u[1::2]
        z = np.empty(2 * pairs)
        z[0::2] = r * np.cos(theta)
        z[1::2] = r * np.sin(theta)
        return z[:count].reshape(shape)

    def split(self, stream: int) -> "Rng":
        """Independent child generator: seed XOR hash(stream index)."""
        h = int(_splitmix64(np.array([stream], dtype=np.uint64))[0])
        return Rng(self.seed ^ h)


def standard_normal(rng: Rng) -> float:
    """One N(0, 1) draw."""
    return float(rng.normal(1)[0])
