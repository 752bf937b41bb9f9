"""Aitken extrapolation of a deterministic sequence."""

from __future__ import annotations

import math

import numpy as np

__all__ = ["aitken"]


def aitken(seq, guard: float = 1e-13) -> np.ndarray:
    """Secant-step extrapolation of ``psi_0, psi_1, ...``.

    Element ``i`` of the result (``1 <= i <= len - 2``, stored at ``i - 1``)
    is ``psi_i - g_i / g'_i`` with ``g_i = psi_{i+1} - psi_i`` and
    ``g'_i = (g_i - g_{i-1}) / (psi_i - psi_{i-1})``. When either difference
    is negligible against ``guard`` the element falls back to ``psi_{i+1}``.
    """
    psi = np.asarray(seq, dtype=float)
    if psi.ndim != 1 or psi.size < 3:
        raise ValueError("need at least three values")
    if not guard > 0.0:
        raise ValueError("guard must be positive")
    out = np.empty(psi.size - 2)
    with np.errstate(over="ignore", invalid="ignore"):
        for i in range(1, psi.size - 1):
            g_prev = psi[i] - psi[i - 1]
            g = psi[i + 1] - psi[i]
            dg = g - g_prev
            if abs(dg) <= guard * abs(g) or abs(g_prev) <= guard * abs(psi[i]):
                out[i - 1] = psi[i + 1]
                continue
            val = psi[i] - g * g_prev / dg
            out[i - 1] = val if math.isfinite(val) else psi[i + 1]
    return out
