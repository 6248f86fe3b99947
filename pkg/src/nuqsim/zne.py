"""Zero-noise extrapolation from observables measured at amplified noise r."""
from __future__ import annotations

from typing import Sequence

import numpy as np

# large-noise limits of the observables under full depolarization
ASYMPTOTES = {
    "single_spin_entropy": 1.0,
    "pair_entropy": 2.0,
    "extended_concurrence": -0.5,
    "inversion_probability": 0.5,
}


class InapplicableAnsatzError(ValueError):
    """The exponential ansatz cannot describe the data (sign change or zero)."""


def richardson_extrapolate(points: Sequence[tuple[float, float]]) -> float:
    """Value at r = 0 of the interpolating polynomial through the points."""
    pts = [(float(r), float(v)) for r, v in points]
    rs = [r for r, _ in pts]
    if len(pts) < 2:
        raise ValueError("need at least two noise levels")
    if len(set(rs)) != len(rs):
        raise ValueError(f"duplicate noise levels in {rs}")
    total = 0.0
    for i, (ri, vi) in enumerate(pts):
        weight = 1.0
        for j, rj in enumerate(rs):
            if j != i:
                weight *= rj / (rj - ri)
        total += weight * vi
    return total


def exp_extrapolate(v_r: float, v_rp: float, r: float, rp: float) -> float:
    """A from v = A exp(-alpha r) through (r, v_r) and (rp, v_rp)."""
    if r == rp:
        raise ValueError("noise levels must differ")
    if v_r == 0 or v_rp == 0 or (v_r > 0) != (v_rp > 0):
        raise InapplicableAnsatzError(f"exponential ansatz inapplicable to values {v_r}, {v_rp}")
    return v_r * (v_rp / v_r) ** (r / (r - rp))


def shifted_exp_extrapolate(v_r: float, v_rp: float, r: float, rp: float, asymptote: float) -> float:
    """Exponential extrapolation of v - asymptote, shifted back."""
    return exp_extrapolate(v_r - asymptote, v_rp - asymptote, r, rp) + asymptote


def extrapolate_replicas(
    values_by_r: dict[float, np.ndarray],
    method: str,
    asymptote: float = 0.0,
    levels: tuple[float, float] | None = None,
) -> tuple[np.ndarray, np.ndarray]:
    """Apply an extrapolator replica by replica.

    Returns the zero-noise values and a validity mask; replicas where the
    exponential ansatz is inapplicable are marked invalid (value NaN).
    """
    rs = sorted(values_by_r) if levels is None else list(levels)
    arrays = [np.asarray(values_by_r[r], dtype=float) for r in rs]
    n = len(arrays[0])
    if any(len(a) != n for a in arrays):
        raise ValueError("replica counts differ between noise levels")
    if method == "richardson":
        out = np.array([richardson_extrapolate(list(zip(rs, col))) for col in zip(*arrays)])
        return out, np.ones(n, dtype=bool)
    if method not in ("exp", "shifted-exp"):
        raise ValueError(f"unknown extrapolation method {method!r}")
    if len(rs) != 2:
        raise ValueError("exponential extrapolation uses exactly two noise levels")
    shift = asymptote if method == "shifted-exp" else 0.0
    a, b = arrays[0] - shift, arrays[1] - shift
    valid = (a != 0) & (b != 0) & (np.sign(a) == np.sign(b))
    out = np.full(n, np.nan)
    r, rp = rs
    out[valid] = a[valid] * (b[valid] / a[valid]) ** (r / (r - rp)) + shift
    return out, valid
