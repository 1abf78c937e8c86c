"""Bessel functions of the first kind of real order, their zeros, and Gamma.

``bessel_j`` delegates to :func:`scipy.special.jv` (Amos / Cephes), which is
accurate to a few ulps of the local envelope ``sqrt(J^2 + Y^2)`` over the
ranges used here. The ascending power series is kept as
``bessel_j_series``; it is exact enough for ``x`` up to roughly ``2 + nu``
and serves as an independent check of the library routine.

Zeros are located by scanning ``J_nu`` with step ``pi/8`` (consecutive zeros
are at least ``7 pi / 8`` apart for every ``nu >= 0``), bisecting each sign
change and polishing with two safeguarded Newton steps.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy import special

from .errors import BracketError, DomainError

__all__ = [
    "ZeroTable",
    "bessel_j",
    "bessel_j_prime",
    "bessel_j_series",
    "bessel_zeros",
    "zero_bounds",
    "gamma_fn",
    "log_gamma",
]

_SCAN_STEP = math.pi / 8
# irrational phase so grid points never land on the exact zeros k*pi of J_{1/2}
_SCAN_PHASE = 0.5 * (math.sqrt(5.0) - 1.0) * _SCAN_STEP


def _check_order(nu):
    nu = float(nu)
    if not math.isfinite(nu) or nu < 0:
        raise DomainError(f"Bessel order must be finite and >= 0, got {nu}")
    return nu


def _as_nonneg(x, strict=False):
    arr = np.asarray(x, dtype=float)
    if not np.all(np.isfinite(arr)):
        raise DomainError("Bessel argument must be finite")
    if strict and np.any(arr <= 0):
        raise DomainError("Bessel argument must be > 0")
    if np.any(arr < 0):
        raise DomainError("Bessel argument must be >= 0")
    return arr


def _out(arr, like):
    return float(arr) if np.ndim(like) == 0 else arr


def bessel_j(nu, x):
    """J_nu(x) for real ``nu >= 0`` and ``x >= 0`` (scalar or array)."""
    nu = _check_order(nu)
    arr = _as_nonneg(x)
    return _out(special.jv(nu, arr), x)


def bessel_j_prime(nu, x):
    """J'_nu(x) through ``J'_nu(x) = nu J_nu(x) / x - J_{nu+1}(x)``, ``x > 0``."""
    nu = _check_order(nu)
    arr = _as_nonneg(x, strict=True)
    val = nu * special.jv(nu, arr) / arr - special.jv(nu + 1.0, arr)
    return _out(val, x)


def bessel_j_series(nu, x, terms=60):
    """Ascending series sum_k (-1)^k (x/2)^(2k+nu) / (k! Gamma(k+nu+1)).

    Terms are generated by the ratio recurrence, so no factorial is formed
    explicitly. Loses relative accuracy once ``x`` is large compared to
    ``nu + 2`` (the terms grow like I_nu(x) before cancelling).
    """
    nu = _check_order(nu)
    x = float(_as_nonneg(x))
    if x == 0.0:
        return 1.0 if nu == 0.0 else 0.0
    half = 0.5 * x
    term = math.exp(nu * math.log(half) - math.lgamma(nu + 1.0))
    total = term
    q = -half * half
    for k in range(1, terms):
        term *= q / (k * (k + nu))
        total += term
    return total


def gamma_fn(x):
    """Gamma(x) for ``x > 0`` (C library ``tgamma``; ~1 ulp over the range used)."""
    x = float(x)
    if not math.isfinite(x) or x <= 0:
        raise DomainError(f"gamma_fn needs x > 0, got {x}")
    return math.gamma(x)


def log_gamma(x):
    x = float(x)
    if not math.isfinite(x) or x <= 0:
        raise DomainError(f"log_gamma needs x > 0, got {x}")
    return math.lgamma(x)


def zero_bounds(nu, k):
    """Lower and upper bracket of the k-th positive zero of J_nu.

    For ``nu <= 1/2`` the zero lies in ``[pi(k + nu/2 - 1/4), pi(k + nu/4 - 1/8)]``;
    for ``nu >= 1/2`` the two ends swap. Both collapse to ``k pi`` at ``nu = 1/2``.
    """
    nu = _check_order(nu)
    a = math.pi * (k + nu / 2 - 0.25)
    b = math.pi * (k + nu / 4 - 0.125)
    return (a, b) if nu <= 0.5 else (b, a)


@dataclass(frozen=True)
class ZeroTable:
    """First ``count`` positive zeros of J_nu, strictly increasing."""

    nu: float
    zeros: np.ndarray

    @property
    def count(self):
        return len(self.zeros)

    def __getitem__(self, k):
        """1-based access: ``table[1]`` is the first positive zero."""
        if not 1 <= k <= self.count:
            raise IndexError(f"zero index {k} outside 1..{self.count}")
        return float(self.zeros[k - 1])

    def residuals(self):
        return np.abs(special.jv(self.nu, self.zeros))


def _scan_brackets(nu, count):
    lo1, _ = zero_bounds(nu, 1)
    # j_{nu,1} > max(nu, lower bracket), so nothing is missed below the start
    start = max(max(nu, lo1) - _SCAN_STEP, _SCAN_STEP) - _SCAN_PHASE
    stop = zero_bounds(nu, count)[1] + 2 * math.pi
    for _ in range(8):
        grid = np.arange(start, stop, _SCAN_STEP)
        vals = special.jv(nu, grid)
        idx = np.nonzero(np.signbit(vals[:-1]) != np.signbit(vals[1:]))[0]
        if len(idx) >= count:
            idx = idx[:count]
            return grid[idx], grid[idx + 1]
        stop += (count - len(idx) + 2) * math.pi
    raise BracketError(nu, len(idx) + 1)


@lru_cache(maxsize=256)
def _zeros_cached(nu, count):
    a, b = _scan_brackets(nu, count)
    fa = special.jv(nu, a)
    # vectorised bisection down to width max(1e-13, 4 ulp)
    while True:
        width = b - a
        target = np.maximum(1e-13, 4 * np.spacing(b))
        if np.all(width <= target):
            break
        m = 0.5 * (a + b)
        fm = special.jv(nu, m)
        left = np.signbit(fm) == np.signbit(fa)
        a = np.where(left, m, a)
        fa = np.where(left, fm, fa)
        b = np.where(left, b, m)
    z = 0.5 * (a + b)
    lo = a - 4 * np.spacing(a)
    hi = b + 4 * np.spacing(b)
    for _ in range(2):
        f = special.jv(nu, z)
        df = nu * f / z - special.jv(nu + 1.0, z)
        step = np.where(df != 0, f / np.where(df != 0, df, 1.0), 0.0)
        cand = z - step
        ok = (cand >= lo) & (cand <= hi) & (np.abs(special.jv(nu, cand)) <= np.abs(f))
        z = np.where(ok, cand, z)
    if np.any(np.diff(z) <= 0) or z[0] <= 0:
        bad = int(np.argmin(np.diff(z))) + 2 if len(z) > 1 else 1
        raise BracketError(nu, bad, "zeros not strictly increasing after refinement")
    z.setflags(write=False)
    return z


def bessel_zeros(nu, count):
    """Return the first ``count`` positive zeros of J_nu as a :class:`ZeroTable`."""
    nu = _check_order(nu)
    count = int(count)
    if count < 1:
        raise ValueError("count must be >= 1")
    return ZeroTable(nu, _zeros_cached(nu, count))
