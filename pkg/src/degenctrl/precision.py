"""Arithmetic backends: float64 (``base``) and mpmath (``extended``).

The exponential Gram matrices handled in :mod:`degenctrl.biortho` reach
condition numbers of 1e13 at N=12 and 1e21 at N=24, and the exponential-sum
coefficients of the biorthogonal functions are correspondingly large. A
float64 representation therefore cannot resolve biorthogonality below
about ``eps * cond``. The extended backend carries every coefficient and
every evaluation in mpmath at ``dps`` decimal digits, inside numpy object
arrays so the array code is shared.
"""
from __future__ import annotations

import contextlib
import os
from functools import lru_cache

import mpmath
import numpy as np
import scipy.linalg as sla

__all__ = ["Backend", "get_backend", "default_precision"]

ENV_PRECISION = "DEGENCTRL_PRECISION"
DEFAULT_EXTENDED_DPS = 50


def default_precision():
    """Precision used when none is requested: ``$DEGENCTRL_PRECISION`` or 'extended'.

    float64 cannot represent the family coefficients accurately enough for
    a 1e-10 biorthogonality residual beyond about N = 6 exponents, so the
    built-in default is the extended backend.
    """
    value = os.environ.get(ENV_PRECISION, "extended").strip().lower()
    if value not in ("base", "extended"):
        raise ValueError(f"{ENV_PRECISION} must be 'base' or 'extended', got {value!r}")
    return value


class Backend:
    """Minimal array arithmetic used by the Gram / exponential-sum code."""

    name = "base"
    dps = 16

    def context(self):
        return contextlib.nullcontext()

    def asarray(self, x):
        return np.asarray(x, dtype=float)

    def exp(self, x):
        return np.exp(x)

    def expm1(self, x):
        return np.expm1(x)

    def sqrt(self, x):
        return np.sqrt(x)

    def to_float(self, x):
        return np.asarray(x, dtype=float)

    def solve_spd(self, A, B):
        """Equilibrated, pivoted Cholesky solve with one guarded refinement step.

        The matrix is scaled to unit diagonal first (exponential Gram
        matrices have diagonals spanning many orders of magnitude). The
        refinement residual is formed in ``longdouble``; the correction is
        kept only if it lowers that residual, since for condition numbers
        beyond 1/eps a float64 refinement step can diverge.
        """
        A = np.asarray(A, dtype=float)
        B = np.asarray(B, dtype=float)
        n = A.shape[0]
        d = 1.0 / np.sqrt(np.diag(A))
        As = A * d[:, None] * d[None, :]
        Bs = B * d.reshape((-1,) + (1,) * (B.ndim - 1))
        c, piv, rank, info = sla.lapack.dpstrf(As, lower=0)
        if info < 0 or rank < n:
            # numerically semidefinite: fall back to symmetric-indefinite LU
            X = sla.solve(As, Bs, assume_a="sym")
        else:
            U = np.triu(c)
            p = piv - 1

            def _solve(rhs):
                y = sla.solve_triangular(U, rhs[p], trans="T")
                z = sla.solve_triangular(U, y)
                out = np.empty_like(z)
                out[p] = z
                return out

            Al = As.astype(np.longdouble)
            Bl = Bs.astype(np.longdouble)

            def _resid(X):
                return (Bl - Al @ X.astype(np.longdouble)).astype(float)

            X = _solve(Bs)
            R = _resid(X)
            X1 = X + _solve(R)
            if np.max(np.abs(_resid(X1))) < np.max(np.abs(R)):
                X = X1
        return X * d.reshape((-1,) + (1,) * (X.ndim - 1))

    def gauss_legendre(self, n):
        return _leggauss_float(n)

    def __repr__(self):
        return f"Backend({self.name})"


class ExtendedBackend(Backend):
    name = "extended"

    def __init__(self, dps=DEFAULT_EXTENDED_DPS):
        self.dps = int(dps)
        self._exp = np.frompyfunc(mpmath.exp, 1, 1)
        self._expm1 = np.frompyfunc(mpmath.expm1, 1, 1)
        self._sqrt = np.frompyfunc(mpmath.sqrt, 1, 1)
        self._mpf = np.frompyfunc(lambda v: mpmath.mpf(float(v)), 1, 1)

    def context(self):
        return mpmath.workdps(self.dps)

    def asarray(self, x):
        arr = np.asarray(x)
        if arr.dtype == object:
            return arr
        out = np.empty(arr.shape, dtype=object)
        out[...] = self._mpf(arr.astype(float))
        return out

    def exp(self, x):
        return self._exp(x)

    def expm1(self, x):
        return self._expm1(x)

    def sqrt(self, x):
        return self._sqrt(x)

    def to_float(self, x):
        arr = np.asarray(x)
        if arr.dtype != object:
            return arr.astype(float)
        return np.vectorize(float, otypes=[float])(arr) if arr.size else arr.astype(float)

    def solve_spd(self, A, B):
        with self.context():
            M = mpmath.matrix(A.tolist())
            R = mpmath.matrix(B.tolist())
            X = _mp_multi_solve(M, R)
            # one refinement sweep at working precision
            X = X + _mp_multi_solve(M, R - M * X)
            return np.array(X.tolist(), dtype=object).reshape(B.shape)

    def gauss_legendre(self, n):
        return _leggauss_mp(n, self.dps)

    def __repr__(self):
        return f"Backend(extended, dps={self.dps})"


def _mp_multi_solve(M, R):
    L = mpmath.cholesky(M)
    n = M.rows
    out = mpmath.matrix(n, R.cols)
    for j in range(R.cols):
        y = mpmath.matrix(n, 1)
        for i in range(n):
            s = R[i, j]
            for k in range(i):
                s -= L[i, k] * y[k]
            y[i] = s / L[i, i]
        for i in reversed(range(n)):
            s = y[i]
            for k in range(i + 1, n):
                s -= L[k, i] * out[k, j]
            out[i, j] = s / L[i, i]
    return out


@lru_cache(maxsize=16)
def _leggauss_float(n):
    x, w = np.polynomial.legendre.leggauss(n)
    x.setflags(write=False)
    w.setflags(write=False)
    return x, w


@lru_cache(maxsize=16)
def _leggauss_mp(n, dps):
    """Legendre nodes/weights to ``dps`` digits, Newton-polished from float64."""
    x0, _ = np.polynomial.legendre.leggauss(n)
    xs, ws = [], []
    with mpmath.workdps(dps + 10):
        for guess in x0:
            x = mpmath.mpf(guess)
            for _ in range(8):
                p0, p1 = mpmath.mpf(1), x
                for k in range(2, n + 1):
                    p0, p1 = p1, ((2 * k - 1) * x * p1 - (k - 1) * p0) / k
                dp = n * (x * p1 - p0) / (x * x - 1)
                dx = p1 / dp
                x -= dx
                if abs(dx) < mpmath.mpf(10) ** (-(dps + 5)):
                    break
            p0, p1 = mpmath.mpf(1), x
            for k in range(2, n + 1):
                p0, p1 = p1, ((2 * k - 1) * x * p1 - (k - 1) * p0) / k
            dp = n * (x * p1 - p0) / (x * x - 1)
            xs.append(+x)
            ws.append(2 / ((1 - x * x) * dp * dp))
    return np.array(xs, dtype=object), np.array(ws, dtype=object)


_BASE = Backend()


def get_backend(precision=None, dps=None):
    """Return the backend for ``'base'`` or ``'extended'`` (env default if None)."""
    precision = precision or default_precision()
    if isinstance(precision, Backend):
        return precision
    if precision == "base":
        return _BASE
    if precision == "extended":
        return ExtendedBackend(dps or DEFAULT_EXTENDED_DPS)
    raise ValueError(f"unknown precision {precision!r}")
