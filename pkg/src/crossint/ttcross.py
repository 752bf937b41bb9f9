"""Tensor-train cross (TT-X) interpolation and integration.

A model anchored at nodes ``s_1..s_n`` represents ``f`` as the chain

    F_1[x_1] Q_1^+ F_2[x_2] Q_2^+ ... Q_{d-1}^+ F_d[x_d]

with ``F_a[x](k, l) = f(s_k[:a], x, s_l[a+1:])`` and connection matrices
``Q_a(k, l) = f(s_k[:a], s_l[a:])``. The first slice has a single row and
the last a single column, since nothing is pinned on the missing side.
Dimensions are 0-based throughout: ``a`` runs over ``0..d-1`` for slices and
over ``1..d-1`` for the interface between coordinates ``a-1`` and ``a``.

Targets expose their values through a *node view* (see :class:`DenseView`),
which lets structured integrands assemble slices far faster than pointwise
evaluation while keeping the same arithmetic contract.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from typing import Callable

import numpy as np

from .gaussmodel import GaussianSpec, density, sample
from .numcore import QuadratureRule, Rng, pinv

__all__ = ["DenseView", "NodeSet", "TTXModel", "TargetFunction", "linear_transform", "uniform_box",
           "whiten"]

_CHUNK = 1 << 21  # entries per dense block when evaluating slices pointwise
_RETRIES = 8
_JITTER = 1e-9


class TargetFunction:
    """A function of ``dim`` variables plus an evaluation counter.

    ``func`` maps an ``(m, dim)`` array to ``m`` values. ``integrate_1d``
    optionally supplies analytic line integrals: called as
    ``integrate_1d(a, left, right)`` with node arrays, it returns the matrix
    of integrals over coordinate ``a`` of ``f(left_k[:a], x, right_l[a+1:])``.
    ``measure`` is the default proposal for candidate nodes.
    """

    def __init__(self, dim: int, func: Callable, integrate_1d: Callable | None = None,
                 measure: GaussianSpec | None = None):
        if dim < 1:
            raise ValueError("dim must be positive")
        self.dim = dim
        self._func = func
        self.integrate_1d = integrate_1d
        self.measure = measure
        self.evals = 0

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        pts = x.reshape(-1, self.dim)
        self.evals += pts.shape[0]
        vals = np.asarray(self._func(pts), dtype=float).reshape(pts.shape[0])
        return float(vals[0]) if x.ndim == 1 else vals.reshape(x.shape[:-1])

    def bind(self, nodes: np.ndarray, quad: QuadratureRule | None = None) -> "DenseView":
        """Slice/connection accessor for a fixed node array."""
        return DenseView(self, nodes, quad)


def linear_transform(target: TargetFunction, shift, matrix,
                     measure: GaussianSpec | None = None) -> TargetFunction:
    """``g(y) = |det M| f(shift + M y)``, which has the same integral as ``f``.

    The result is a plain pointwise target, so any structured view of
    ``target`` is lost and line integrals fall back to quadrature.
    """
    shift = np.asarray(shift, dtype=float)
    m = np.asarray(matrix, dtype=float)
    if m.shape != (target.dim, target.dim) or shift.shape != (target.dim,):
        raise ValueError("transform does not match the target dimension")
    jac = abs(float(np.linalg.det(m)))
    if not jac > 0.0:
        raise ValueError("transform matrix is singular")

    def func(y):
        return jac * target(shift + y @ m.T)

    return TargetFunction(target.dim, func, measure=measure)


def whiten(target: TargetFunction, spec: GaussianSpec) -> TargetFunction:
    """``target`` in coordinates ``y = L^{-1} (x - mu)`` of the Gaussian ``spec``.

    Candidates are then drawn from the standard normal.
    """
    unit = GaussianSpec(np.zeros(spec.dim), np.eye(spec.dim))
    return linear_transform(target, spec.mu, spec.chol, measure=unit)


def uniform_box(lower, upper) -> Callable:
    """Candidate proposal drawing uniformly from the box ``[lower, upper]``."""
    lo = np.asarray(lower, dtype=float)
    hi = np.asarray(upper, dtype=float)
    if lo.shape != hi.shape or np.any(hi <= lo):
        raise ValueError("need lower < upper in every coordinate")

    def propose(rng: Rng, count: int) -> np.ndarray:
        return lo + (hi - lo) * rng.uniform((count, lo.size))

    return propose


class DenseView:
    """Pointwise assembly of TT-X slices for an arbitrary target."""

    def __init__(self, target: TargetFunction, nodes: np.ndarray,
                 quad: QuadratureRule | None = None):
        self.target = target
        self.nodes = nodes
        self.quad = quad or QuadratureRule()
        self.n, self.dim = nodes.shape

    def _sides(self, a: int):
        left = self.nodes[:1] if a == 0 else self.nodes
        right = self.nodes[:1] if a == self.dim - 1 else self.nodes
        return left, right

    def split_matrix(self, a: int) -> np.ndarray:
        """``Q_a(k, l) = f(s_k[:a], s_l[a:])`` for ``1 <= a <= d-1``."""
        s = self.nodes
        pts = np.empty((self.n, self.n, self.dim))
        pts[:, :, :a] = s[:, None, :a]
        pts[:, :, a:] = s[None, :, a:]
        return self.target(pts)

    def _slice_points(self, a: int, x: np.ndarray) -> np.ndarray:
        left, right = self._sides(a)
        pts = np.empty((x.size, left.shape[0], right.shape[0], self.dim))
        pts[..., :a] = left[None, :, None, :a]
        pts[..., a] = x[:, None, None]
        pts[..., a + 1:] = right[None, None, :, a + 1:]
        return pts

    def slice_matrix(self, a: int, x: float) -> np.ndarray:
        return self.target(self._slice_points(a, np.array([float(x)])))[0]

    def slice_apply(self, a: int, v: np.ndarray, x: np.ndarray, fast: bool = False) -> np.ndarray:
        """``out[c, l] = sum_k v[c, k] F_a[x_c](k, l)``."""
        x = np.asarray(x, dtype=float)
        left, right = self._sides(a)
        per_point = left.shape[0] * right.shape[0]
        step = max(1, _CHUNK // max(per_point * self.dim, 1))
        out = np.empty((x.size, right.shape[0]))
        for lo in range(0, x.size, step):
            block = self.target(self._slice_points(a, x[lo:lo + step]))
            out[lo:lo + step] = np.einsum("ck,ckl->cl", v[lo:lo + step], block)
        return out

    def line_integrals(self, a: int) -> np.ndarray:
        left, right = self._sides(a)
        if self.target.integrate_1d is not None:
            self.target.evals += left.shape[0] * right.shape[0]
            return np.asarray(self.target.integrate_1d(a, left, right), dtype=float)
        if self.quad.kind == "gauss-hermite":
            xq, wq = self.quad.nodes_weights()
            vals = self.target(self._slice_points(a, xq))
            return np.einsum("q,qkl->kl", wq, vals)
        out = np.empty((left.shape[0], right.shape[0]))
        for k in range(left.shape[0]):
            for l in range(right.shape[0]):
                def g(x, k=k, l=l):
                    return self.target(self._slice_points(a, np.atleast_1d(x))[:, k, l])
                out[k, l] = self.quad.line_integral(g)
        return out


class NodeSet:
    """Ordered, distinct, finite nodes in ``dim`` dimensions."""

    def __init__(self, dim: int, nodes=None):
        self.dim = dim
        self._rows: list[np.ndarray] = []
        self._keys: set[bytes] = set()
        if nodes is not None:
            for s in np.atleast_2d(np.asarray(nodes, dtype=float)):
                self.append(s)

    def __len__(self) -> int:
        return len(self._rows)

    def __contains__(self, x) -> bool:
        return np.asarray(x, dtype=float).tobytes() in self._keys

    def append(self, x) -> None:
        x = np.array(x, dtype=float).reshape(self.dim)
        if not np.all(np.isfinite(x)):
            raise ValueError("node coordinates must be finite")
        if x in self:
            raise ValueError("duplicate node")
        self._rows.append(x)
        self._keys.add(x.tobytes())

    def array(self) -> np.ndarray:
        if not self._rows:
            return np.zeros((0, self.dim))
        return np.vstack(self._rows)


class TTXModel:
    """TT-X representation of ``target`` anchored at a growing node set."""

    def __init__(self, target: TargetFunction, nodes=None, pinv_tol: float = 1e-12,
                 quad: QuadratureRule | None = None, threads: int = 1,
                 proposal: Callable | None = None):
        self.target = target
        self.dim = target.dim
        self.pinv_tol = pinv_tol
        self.quad = quad or QuadratureRule()
        self.threads = max(1, int(threads))
        self.proposal = proposal
        self.nodes = NodeSet(self.dim, nodes)
        self.q_pinv: list[np.ndarray] = []
        self.assembly_evals = 0
        self._view = None
        if len(self.nodes):
            self._rebuild()

    # -- structure -------------------------------------------------------

    @property
    def n(self) -> int:
        return len(self.nodes)

    def _map(self, fn, items):
        if self.threads == 1:
            return [fn(i) for i in items]
        with ThreadPoolExecutor(self.threads) as pool:
            return list(pool.map(fn, items))

    def _rebuild(self) -> None:
        before = self.target.evals
        self._view = self.target.bind(self.nodes.array(), self.quad)
        qs = self._map(self._view.split_matrix, range(1, self.dim))
        self.q_pinv = self._map(lambda q: pinv(q, self.pinv_tol), qs)
        self._int_slices = None
        self.assembly_evals = self.target.evals - before

    def connection(self, a: int) -> np.ndarray:
        """``Q_a`` for the interface before coordinate ``a`` (1 <= a <= d-1)."""
        return self._view.split_matrix(a)

    def f_matrix(self, a: int, x: float) -> np.ndarray:
        """Slice ``F_a[x]``: 1 x n for the first, n x 1 for the last coordinate."""
        if not 0 <= a < self.dim:
            raise ValueError("dimension out of range")
        if self.n == 0:
            raise ValueError("model has no nodes")
        return self._view.slice_matrix(a, x)

    # -- evaluation --------------------------------------------------------

    def evaluate_many(self, xs, fast: bool = False) -> np.ndarray:
        """Chain product at each row of ``xs``; zero for an empty model.

        ``fast`` lets structured views trade a little round-off for speed;
        it is used when ranking candidate nodes.
        """
        xs = np.atleast_2d(np.asarray(xs, dtype=float))
        if xs.shape[1] != self.dim:
            raise ValueError("points have the wrong dimension")
        if self.n == 0:
            return np.zeros(xs.shape[0])
        v = np.ones((xs.shape[0], 1))
        for a in range(self.dim):
            if a:
                v = v @ self.q_pinv[a - 1]
            v = self._view.slice_apply(a, v, xs[:, a], fast=fast)
        return v[:, 0]

    def evaluate(self, x) -> float:
        x = np.asarray(x, dtype=float)
        if x.shape != (self.dim,):
            raise ValueError("point has the wrong dimension")
        return float(self.evaluate_many(x[None, :])[0])

    # -- growth --------------------------------------------------------------

    def _propose(self, rng: Rng, count: int) -> np.ndarray:
        if self.proposal is not None:
            return np.asarray(self.proposal(rng, count), dtype=float).reshape(count, self.dim)
        if self.target.measure is None:
            raise ValueError("no proposal sampler configured")
        return sample(self.target.measure, rng, count)

    def _residual(self, xs: np.ndarray) -> np.ndarray:
        return np.abs(self.target(xs) - self.evaluate_many(xs, fast=True))

    def _local_search(self, x: np.ndarray, r: float, steps: int) -> tuple[np.ndarray, float]:
        """Coordinate-wise hill climbing on the residual with halving steps."""
        if self.target.measure is not None:
            h = np.sqrt(np.diag(self.target.measure.sigma)) * 0.5
        else:
            h = np.full(self.dim, 0.5)
        for _ in range(steps):
            for i in range(self.dim):
                trial = np.repeat(x[None, :], 2, axis=0)
                trial[0, i] -= h[i]
                trial[1, i] += h[i]
                rt = self._residual(trial)
                j = int(np.argmax(rt))
                if rt[j] > r:
                    x, r = trial[j], float(rt[j])
            h = h * 0.5
        return x, r

    def _fresh(self, x: np.ndarray, rng: Rng) -> np.ndarray:
        """Redraw a colliding candidate, then fall back to a small jitter."""
        for _ in range(_RETRIES):
            if x not in self.nodes:
                return x
            x = self._propose(rng, 1)[0]
        while x in self.nodes:
            x = x + _JITTER * (1.0 + np.abs(x)) * rng.normal(self.dim)
        return x

    def add_nodes(self, rng: Rng, count: int = 1, pool: int = 256,
                  local_steps: int = 0) -> "TTXModel":
        """Draw ``pool`` candidates, append the ``count`` largest-residual ones.

        With ``count == 1`` this is the plain greedy step. Larger counts share
        one pseudo-inverse rebuild between several new nodes.
        """
        if pool < 1 or count < 1:
            raise ValueError("pool and count must be positive")
        cand = self._propose(rng, pool)
        res = self._residual(cand)
        order = np.argsort(-res, kind="stable")[:count]
        for j in order:
            x, r = cand[j], float(res[j])
            if local_steps:
                x, _ = self._local_search(x, r, local_steps)
            self.nodes.append(self._fresh(x, rng))
        self._rebuild()
        return self

    def add_node(self, rng: Rng, pool: int = 256, local_steps: int = 0) -> "TTXModel":
        """One greedy step: the candidate with the largest ``|f - f~|`` wins."""
        return self.add_nodes(rng, 1, pool, local_steps)

    # -- integration ---------------------------------------------------------

    def integral_slices(self) -> list[np.ndarray]:
        if self._int_slices is None:
            before = self.target.evals
            self._int_slices = self._map(self._view.line_integrals, range(self.dim))
            self.assembly_evals += self.target.evals - before
        return self._int_slices

    def integrate(self, quad: QuadratureRule | None = None) -> float:
        """Integral of the chain over the whole space."""
        if self.n == 0:
            raise ValueError("model has no nodes")
        if quad is not None and quad != self.quad:
            self.quad = quad
            self._view.quad = quad
            self._int_slices = None
        slices = self.integral_slices()
        v = slices[0]
        for a in range(1, self.dim):
            v = (v @ self.q_pinv[a - 1]) @ slices[a]
        return float(v[0, 0])

    def rms_error(self, sampler: GaussianSpec, rng: Rng, n_samples: int,
                  l2: bool = False) -> float:
        """Root-mean-square residual over draws from ``sampler``.

        With ``l2`` the squared residuals are divided by the sampler density,
        which turns the mean into an estimate of the squared L2 norm of
        ``f - f~`` over the whole space.
        """
        if n_samples < 1:
            raise ValueError("n_samples must be positive")
        xs = sample(sampler, rng, n_samples)
        diff = self.target(xs) - self.evaluate_many(xs)
        sq = diff * diff
        if l2:
            sq = sq / density(sampler, xs)
        return math.sqrt(float(np.mean(sq)))
