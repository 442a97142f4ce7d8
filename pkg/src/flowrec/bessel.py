"""Bessel functions of the first kind and their positive zeros.

Function values come from scipy; the zero finder is built here: the m = 0
row uses the McMahon expansion as a Newton starting point, higher rows use
the strict interlacing j_{m-1,n} < j_{m,n} < j_{m-1,n+1} to bracket each
zero. Rows are cached.
"""

from __future__ import annotations

import math

import numpy as np
from scipy import optimize, special

from .errors import GeometryError


def bessel_j(m: int, x):
    """J_m(x) for x >= 0 (scalar or array)."""
    x = np.asarray(x, dtype=float)
    if np.any(x < 0.0):
        raise GeometryError("bessel_j requires x >= 0")
    out = special.jv(m, x)
    return float(out) if out.ndim == 0 else out


def bessel_j_prime(m: int, x):
    """J_m'(x) via the recurrence (J_{m-1} - J_{m+1}) / 2, J_0' = -J_1."""
    x = np.asarray(x, dtype=float)
    if m == 0:
        out = -special.jv(1, x)
    else:
        out = 0.5 * (special.jv(m - 1, x) - special.jv(m + 1, x))
    return float(out) if out.ndim == 0 else out


def _newton_polish(m: int, x: float) -> float:
    for _ in range(50):
        f = bessel_j(m, x)
        step = f / bessel_j_prime(m, x)
        x -= step
        if abs(step) < 1e-13:
            break
    return x


def _zeros_m0(count: int) -> list:
    zeros = []
    for n in range(1, count + 1):
        beta = (n - 0.25) * math.pi
        x = beta + 1.0 / (8.0 * beta) - 31.0 / (384.0 * beta**3) + 3779.0 / (15360.0 * beta**5)
        zeros.append(_newton_polish(0, x))
    return zeros


_zero_rows: dict = {}


def _zeros_row(m: int, count: int) -> list:
    row = _zero_rows.get(m, [])
    if len(row) >= count:
        return row
    if m == 0:
        row = _zeros_m0(count)
    else:
        prev = _zeros_row(m - 1, count + 1)
        row = list(row)
        for n in range(len(row) + 1, count + 1):
            lo = prev[n - 1] * (1.0 + 1e-12)
            hi = prev[n] * (1.0 - 1e-12)
            x = optimize.brentq(lambda t: bessel_j(m, t), lo, hi, xtol=1e-12)
            row.append(_newton_polish(m, x))
    _zero_rows[m] = row
    return row


def bessel_zero(m: int, n: int) -> float:
    """n-th positive zero of J_m (n >= 1)."""
    if m < 0 or n < 1:
        raise ValueError("need m >= 0 and n >= 1")
    return _zeros_row(m, n)[n - 1]
