"""Plain Monte Carlo baseline with chunked, order-fixed statistics."""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Callable, Iterable, Iterator

import numpy as np

from .gaussmodel import GaussianSpec, sample
from .numcore import Rng

__all__ = ["McEstimate", "RunningStats", "estimate", "sweep"]

CHUNK = 1 << 18


@dataclass(frozen=True)
class McEstimate:
    mean: float
    std_error: float
    n_samples: int
    payoff_std: float


@dataclass(frozen=True)
class RunningStats:
    """Count, mean and sum of squared deviations; merged pairwise."""

    count: int = 0
    mean: float = 0.0
    m2: float = 0.0

    @classmethod
    def of(cls, values: np.ndarray) -> "RunningStats":
        if values.size == 0:
            return cls()
        mu = float(np.mean(values))
        dev = values - mu
        return cls(values.size, mu, float(dev @ dev))

    def merge(self, other: "RunningStats") -> "RunningStats":
        if other.count == 0:
            return self
        if self.count == 0:
            return other
        n = self.count + other.count
        delta = other.mean - self.mean
        mean = self.mean + delta * other.count / n
        m2 = self.m2 + other.m2 + delta * delta * self.count * other.count / n
        return RunningStats(n, mean, m2)

    def result(self) -> McEstimate:
        if self.count < 2:
            raise ValueError("need at least two samples")
        std = math.sqrt(self.m2 / (self.count - 1))
        return McEstimate(self.mean, std / math.sqrt(self.count), self.count, std)


def _chunk_stats(payoff: Callable, dist: GaussianSpec, seed: int, index: int, size: int) -> RunningStats:
    rng = Rng(seed).split(index)
    return RunningStats.of(np.asarray(payoff(sample(dist, rng, size)), dtype=float))


def _chunks(n: int) -> Iterator[tuple[int, int]]:
    for index, lo in enumerate(range(0, n, CHUNK)):
        yield index, min(CHUNK, n - lo)


def _stats(payoff, dist, seed, jobs, threads) -> list[RunningStats]:
    if threads <= 1:
        return [_chunk_stats(payoff, dist, seed, i, s) for i, s in jobs]
    with ThreadPoolExecutor(threads) as pool:
        return list(pool.map(lambda job: _chunk_stats(payoff, dist, seed, *job), jobs))


def estimate(payoff: Callable, dist: GaussianSpec, n: int, seed: int = 0,
             threads: int = 1) -> McEstimate:
    """Mean and standard error of ``payoff`` over ``n`` draws from ``dist``.

    Draws are split into fixed-size chunks with derived seeds; chunk
    statistics merge in chunk order, so the result is independent of
    ``threads``.
    """
    if n < 2:
        raise ValueError("n must be at least 2")
    acc = RunningStats()
    for st in _stats(payoff, dist, seed, list(_chunks(n)), threads):
        acc = acc.merge(st)
    return acc.result()


def sweep(payoff: Callable, dist: GaussianSpec, counts: Iterable[int], seed: int = 0,
          threads: int = 1) -> Iterator[McEstimate]:
    """Estimates at increasing sample counts, reusing completed chunks.

    Each yielded value is bit-identical to ``estimate`` at the same count:
    full chunks are kept, and the trailing partial chunk is redrawn from the
    prefix of its stream.
    """
    acc = RunningStats()
    full_done = 0
    for n in counts:
        if n < 2:
            raise ValueError("counts must be at least 2")
        full = n // CHUNK
        jobs = [(i, CHUNK) for i in range(full_done, full)]
        for st in _stats(payoff, dist, seed, jobs, threads):
            acc = acc.merge(st)
        full_done = max(full_done, full)
        tail = n - full * CHUNK
        total = acc
        if tail:
            total = acc.merge(_chunk_stats(payoff, dist, seed, full, tail))
        yield total.result()
