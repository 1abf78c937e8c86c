"""Finite biorthogonal families to real exponentials on (0, T).

For exponents 0 = lambda_0 < lambda_1 < ... < lambda_N the family
``sigma_m`` is the minimal-L2-norm element of span{e^(lambda_n t)} with

    int_0^T sigma_m(t) e^(lambda_n t) dt = delta_mn .

Everything is written in the shifted basis ``e_n(t) = e^(lambda_n (t - T))``
whose Gram matrix

    G_ij = (1 - e^(-(lambda_i + lambda_j) T)) / (lambda_i + lambda_j),  G_00 = T

has entries in (0, T]. With ``D = G^-1`` one has

    sigma_m(t) = e^(-lambda_m T) sum_i D_mi e_i(t),

so the family is stored as ``D`` together with the per-row log scale
``-lambda_m T``; the scale underflows in float64 long before ``D`` does.

The residual reported is the *scaled* biorthogonality defect
``max |int s_m e_n - delta_mn|`` for ``s_m = e^(lambda_m T) sigma_m``, i.e.
``|D G - I|`` with ``G`` re-computed by graded Gauss-Legendre quadrature.
The unscaled defect ``int sigma_m e^(lambda_n t) - delta_mn`` carries the
factor ``e^((lambda_n - lambda_m) T)``, which overflows once
``lambda_N T > 709`` and hides nothing but that factor.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .errors import DuplicateExponent, IllConditioned
from .precision import get_backend

__all__ = [
    "ExponentSet",
    "BiorthogonalFamily",
    "build_family",
    "family_norms",
    "family_log_norms",
    "integer_part",
    "upper_bound_shape",
    "log_upper_bound_shape",
    "lower_bound_b",
    "log_lower_bound_b",
    "lower_bound_bstar",
    "log_lower_bound_bstar",
    "BstarTerms",
    "bstar_terms",
]

DUPLICATE_RTOL = 1e-8
QUAD_POINTS = 64


@dataclass(frozen=True)
class ExponentSet:
    """Exponents 0 = lambda_0 < lambda_1 < ... < lambda_N and horizon T."""

    lambdas: np.ndarray
    T: float

    def __post_init__(self):
        lam = np.array(self.lambdas, dtype=float).ravel()
        T = float(self.T)
        if not (math.isfinite(T) and T > 0):
            raise ValueError(f"T must be positive, got {T}")
        if lam.size == 0 or lam[0] != 0.0:
            raise ValueError("the first exponent must be exactly 0")
        if not np.all(np.isfinite(lam)):
            raise ValueError("exponents must be finite")
        if lam.size > 1:
            gaps = np.diff(lam)
            if np.any(gaps <= DUPLICATE_RTOL * lam[-1]):
                i = int(np.argmin(gaps))
                raise DuplicateExponent(
                    f"exponents {i} and {i + 1} are closer than {DUPLICATE_RTOL:g} * lambda_N"
                )
        lam.setflags(write=False)
        object.__setattr__(self, "lambdas", lam)
        object.__setattr__(self, "T", T)

    @property
    def N(self):
        return self.lambdas.size - 1

    @classmethod
    def from_spectrum(cls, sys, T=None, n=None):
        """Prepend lambda_0 = 0 to the first ``n`` eigenvalues of an EigenSystem."""
        T = sys.params.T if T is None else T
        lam = sys.lambdas if n is None else sys.lambdas[:n]
        return cls(np.concatenate(([0.0], lam)), T)

    def scaled(self, s):
        """(s lambda, T / s): the family transforms covariantly."""
        return ExponentSet(self.lambdas * s, self.T / s)


def _gram(backend, lam, T):
    """Shifted Gram matrix in the backend's arithmetic."""
    with backend.context():
        L = backend.asarray(lam)
        Tb = backend.asarray(np.array(T))
        S = L[:, None] + L[None, :]
        G = np.empty(S.shape, dtype=S.dtype)
        pos = S != 0
        G[pos] = -backend.expm1(-S[pos] * Tb) / S[pos]
        G[~pos] = Tb
        return G


def _panels(T, c_max):
    """Panel edges on [0, T], graded geometrically toward t = T.

    The integrands e^(c (t - T)) vary on the scale 1/c near t = T, so the
    panel next to T has width ~1/c_max and widths double moving left.
    """
    if c_max * T <= 4.0:
        return np.array([0.0, T])
    h = 1.0 / c_max
    edges = [T]
    while edges[-1] - h > 0:
        edges.append(edges[-1] - h)
        h *= 2.0
    edges.append(0.0)
    return np.array(edges[::-1])


def _quadrature_nodes(backend, T, c_max, n=QUAD_POINTS):
    """Composite Gauss-Legendre nodes/weights on [0, T] in backend arithmetic (cached)."""
    return _nodes_cached(backend.name, backend.dps, float(T), float(c_max), int(n))


@lru_cache(maxsize=64)
def _nodes_cached(name, dps, T, c_max, n):
    backend = get_backend(name, dps)
    x, w = backend.gauss_legendre(n)
    edges = _panels(T, c_max)
    with backend.context():
        E = backend.asarray(edges)
        nodes, weights = [], []
        for a, b in zip(E[:-1], E[1:]):
            half = (b - a) / 2
            mid = (b + a) / 2
            nodes.append(mid + half * x)
            weights.append(half * w)
        t, wt = np.concatenate(nodes), np.concatenate(weights)
    t.setflags(write=False)
    wt.setflags(write=False)
    return t, wt


def _basis_at(backend, lam, T, t):
    """Matrix of e^(lambda_n (t - T)), rows n, columns t."""
    with backend.context():
        L = backend.asarray(lam)
        return backend.exp(L[:, None] * (t[None, :] - backend.asarray(np.array(T)).item()))


def _basis_on_nodes(backend, lam, T, c_max, n=QUAD_POINTS):
    """(nodes, weights, basis) for the graded rule; the basis matrix is cached."""
    return _basis_cached(backend.name, backend.dps, tuple(float(v) for v in lam), float(T), float(c_max), int(n))


@lru_cache(maxsize=64)
def _basis_cached(name, dps, lam, T, c_max, n):
    backend = get_backend(name, dps)
    t, w = _nodes_cached(name, dps, T, c_max, n)
    B = _basis_at(backend, np.array(lam), T, t)
    B.setflags(write=False)
    return t, w, B


def quadrature_gram(exponents, precision=None, dps=None, n=QUAD_POINTS):
    """Gram matrix of the shifted exponentials by graded composite Gauss quadrature."""
    backend = get_backend(precision, dps)
    lam = exponents.lambdas
    t, w, B = _basis_on_nodes(backend, lam, exponents.T, 2.0 * lam[-1], n)
    with backend.context():
        return (B * w[None, :]) @ B.T


@dataclass(frozen=True)
class BiorthogonalFamily:
    """sigma_m(t) = exp(log_scale[m]) * sum_i dual[m, i] * e^(lambda_i (t - T)).

    ``dual`` is the inverse shifted Gram matrix as floats; ``dual_exact`` keeps
    the backend representation (mpmath numbers for the extended backend),
    which is what all downstream computations use.
    """

    exponents: ExponentSet
    dual: np.ndarray
    dual_exact: np.ndarray
    log_scale: np.ndarray
    gram: np.ndarray
    gram_exact: np.ndarray
    residual: float
    residual_algebraic: float
    condition_estimate: float
    precision: str
    dps: int
    tol: float

    @property
    def N(self):
        return self.exponents.N

    @property
    def T(self):
        return self.exponents.T

    @property
    def lambdas(self):
        return self.exponents.lambdas

    @property
    def backend(self):
        return get_backend(self.precision, self.dps)

    @property
    def coeffs(self):
        """c[m, n] with sigma_m = sum_n c[m, n] e^(lambda_n (t - T)); may underflow."""
        return np.exp(self.log_scale)[:, None] * self.dual

    def evaluate(self, m, t):
        """sigma_m(t) in float64 (direct sum; loses digits when the family is badly conditioned)."""
        t = np.asarray(t, dtype=float)
        E = np.exp(self.lambdas[:, None] * (t[None, :] - self.T))
        return math.exp(self.log_scale[m]) * (self.dual[m] @ E)

    def biorthogonality_matrix(self, n=QUAD_POINTS):
        """Quadrature matrix int s_m e_n with s_m = e^(lambda_m T) sigma_m (ideally I)."""
        backend = self.backend
        Gq = quadrature_gram(self.exponents, backend, n=n)
        with backend.context():
            return backend.to_float(self.dual_exact @ Gq)


def _norm1(A):
    return float(np.max(np.sum(np.abs(A), axis=0)))


def build_family(exponents, tol=1e-10, precision=None, dps=None, raise_on_failure=True):
    """Construct the minimal-norm biorthogonal family for ``exponents``.

    The shifted Gram system ``G D = I`` is solved with a pivoted Cholesky
    factorisation and one refinement step in the selected backend. The
    residual is then recomputed independently: the Gram matrix is
    re-evaluated by composite 64-point Gauss-Legendre quadrature (panels
    graded toward t = T) and ``max |D G_quad - I|`` is stored.

    Raises
    ------
    IllConditioned
        If the residual exceeds ``tol`` (unless ``raise_on_failure`` is False).
    """
    backend = get_backend(precision, dps)
    lam = exponents.lambdas
    T = exponents.T
    G = _gram(backend, lam, T)
    n = lam.size
    with backend.context():
        eye = backend.asarray(np.eye(n))
        D = backend.solve_spd(G, eye)
        # symmetrise: D is the inverse of a symmetric matrix
        D = (D + D.T) / 2
        algebraic = float(np.max(np.abs(backend.to_float(D @ G - eye))))
        Gq = quadrature_gram(exponents, backend)
        resid = float(np.max(np.abs(backend.to_float(D @ Gq - eye))))
    Gf = backend.to_float(G)
    Df = backend.to_float(D)
    cond = _norm1(Gf) * _norm1(Df)
    family = BiorthogonalFamily(
        exponents=exponents,
        dual=Df,
        dual_exact=D,
        log_scale=-lam * T,
        gram=Gf,
        gram_exact=G,
        residual=resid,
        residual_algebraic=algebraic,
        condition_estimate=cond,
        precision=backend.name,
        dps=backend.dps,
        tol=float(tol),
    )
    if raise_on_failure and not resid <= tol:
        raise IllConditioned(resid, cond, tol)
    return family


def family_log_norms(family):
    """log ||sigma_m||_{L2(0,T)} from the quadratic form D G D."""
    backend = family.backend
    D, G = family.dual_exact, family.gram_exact
    with backend.context():
        q = backend.to_float(np.array([(D[m] @ G) @ D[m] for m in range(D.shape[0])], dtype=D.dtype))
    return 0.5 * np.log(q) + family.log_scale


def family_norms(family):
    """||sigma_m||_{L2(0,T)}, m = 0..N (may underflow to 0 for large lambda_m T)."""
    return np.exp(family_log_norms(family))


# ---------------------------------------------------------------------------
# analytic bound shapes (universal constants set to 1)


def integer_part(x, rtol=1e-12):
    """floor(x), tolerant to rounding just below an integer (2*pi/pi -> 2)."""
    return int(math.floor(x + rtol * max(1.0, abs(x))))


def log_upper_bound_shape(lam_m, T, gamma_min):
    if gamma_min <= 0 or T <= 0:
        raise ValueError("gamma_min and T must be positive")
    g2T = gamma_min**2 * T
    return (
        -2.0 * lam_m * T
        + math.sqrt(lam_m) / gamma_min
        + 1.0 / g2T
        - math.log(T)
        + math.log(max(g2T, 1.0 / g2T))
    )


def upper_bound_shape(exponents, gamma_min, m):
    """e^(-2 lam_m T) e^(sqrt(lam_m)/g) e^(1/(g^2 T)) (1/T) max(T g^2, 1/(T g^2)).

    ``exponents`` is an :class:`ExponentSet` (lambda_m taken from it) and
    ``g = gamma_min`` is a lower gap bound.
    """
    lam_m = float(exponents.lambdas[m])
    return math.exp(log_upper_bound_shape(lam_m, exponents.T, gamma_min))


def _cal_C_log(m, gamma_max, lambda_1):
    s = integer_part(2.0 * math.sqrt(lambda_1) / gamma_max)
    return math.lgamma(m + 1) + (m + s + 1) * math.log(2.0) + math.log(m + s + 1)


def log_lower_bound_b(T, gamma_max, lambda_1, m, c_u=1.0):
    """log b(T, gamma_max, m); see :func:`lower_bound_b`."""
    if T <= 0 or gamma_max <= 0 or lambda_1 <= 0 or m < 1:
        raise ValueError("need T, gamma_max, lambda_1 > 0 and m >= 1")
    g2T = gamma_max**2 * T
    return (
        2.0 * math.log(c_u)
        - 2.0 * _cal_C_log(m, gamma_max, lambda_1)
        - math.log(T)
        - 2 * m * math.log(2.0 * g2T)
        - 2.0 * math.log1p(4.0 * g2T)
    )


def lower_bound_b(T, gamma_max, lambda_1, m, c_u=1.0):
    """Lower-bound factor for biorthogonal norms under a global upper gap.

    b = c_u^2 / (C^2 T) * (1/(2 g^2 T))^(2m) / (4 g^2 T + 1)^2 with
    C(m, g, lambda_1) = m! 2^(m + s + 1) (m + s + 1), s = [2 sqrt(lambda_1)/g].
    """
    return math.exp(log_lower_bound_b(T, gamma_max, lambda_1, m, c_u))


@dataclass(frozen=True)
class BstarTerms:
    K: int
    K_prime: int
    log_C_plus: float
    log_C_minus: float
    log_C_star: float
    log_bstar: float


def _log_factorial(n):
    if n < 0:
        raise ValueError(f"factorial of negative integer {n}")
    if n > 1e300:
        raise OverflowError(f"factorial argument {n} beyond log-space range")
    return math.lgamma(n + 1.0)


def bstar_terms(T, gamma_max, gamma_max_star, n_star, lambda_1, m, c_u=1.0):
    """All intermediate quantities of b* (lower bound with an asymptotic upper gap)."""
    if T <= 0 or gamma_max <= 0 or gamma_max_star <= 0 or lambda_1 <= 0:
        raise ValueError("T, gaps and lambda_1 must be positive")
    if not 1 <= m <= n_star:
        raise ValueError(f"need 1 <= m <= N_* (m={m}, N_*={n_star})")
    if gamma_max_star > gamma_max * (1 + 1e-12):
        raise ValueError("need gamma_max_star <= gamma_max")
    gm, gs, N = gamma_max, gamma_max_star, int(n_star)
    r = gm / gs
    s = integer_part(2.0 * math.sqrt(lambda_1) / gm)
    a = integer_part((2.0 * math.sqrt(lambda_1) + (N + m) * gm) / gs)
    bprime = integer_part(r * (N - m))
    K = a - N + 2
    Kp = bprime - N + 2
    log_Cp = (
        (N - 1) * math.log(r)
        + _log_factorial(N + m + s + 1)
        - _log_factorial(m + s + 1)
        - _log_factorial(a + 1)
        - math.log(2 * m + s + 1)
    )
    log_Cm = (N - 1) * math.log(r) + _log_factorial(m - 1) + _log_factorial(N - m) - _log_factorial(1 + bprime)
    top = N + K + Kp + 3
    log_Cs = -_log_factorial(top) + math.log(c_u) + 2 * (N - 1) * math.log(gs) - log_Cp - log_Cm
    g2T = T * gs**2
    log_b = (
        log_Cs
        + 0.5 * math.log1p(T * lambda_1)
        - 0.5 * math.log(T)
        + (K + Kp + 2) * math.log(g2T)
        - top * math.log1p(g2T)
    )
    return BstarTerms(K, Kp, log_Cp, log_Cm, log_Cs, log_b)


def log_lower_bound_bstar(T, gamma_max, gamma_max_star, n_star, lambda_1, m, c_u=1.0):
    return bstar_terms(T, gamma_max, gamma_max_star, n_star, lambda_1, m, c_u).log_bstar


def lower_bound_bstar(T, gamma_max, gamma_max_star, n_star, lambda_1, m, c_u=1.0):
    """b* = C* sqrt(1 + T lambda_1)/sqrt(T) (T g*^2)^(K+K'+2) / (1 + T g*^2)^(N*+K+K'+3).

    Factorials are evaluated through ``lgamma``; the result may underflow to
    0.0 for very large N_* (use :func:`log_lower_bound_bstar`).
    """
    return math.exp(log_lower_bound_bstar(T, gamma_max, gamma_max_star, n_star, lambda_1, m, c_u))
