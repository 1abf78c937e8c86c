"""Boundary controls from a biorthogonal family (moment method).

For a datum u0 = sum_k rho_k Phi_k the null-control condition reduces to

    right end:   Phi_k'(1) int_0^T H(t) e^(lambda_k t) dt = rho_k
    left  end:  -l_k      int_0^T H(t) e^(lambda_k t) dt = rho_k

for H in H^1 with H(0) = H(T) = 0. Integrating by parts with K = H',
these become ``int K e^(lambda_k t) = -lambda_k rho_k / Phi_k'(1)`` (right)
and ``= lambda_k rho_k / l_k`` (left), solved by

    K = sum_k w_k rho_k sigma_k,   w_k = -lambda_k / Phi_k'(1)  or  lambda_k / l_k,

with the family sigma built on {0, lambda_1, ..., lambda_N}; the sigma_0
row guarantees int K = 0, i.e. H(T) = 0.

At x = 0 the factor l_k is the weighted flux
lim x^(alpha+2 gamma) (x^-gamma Phi_k)'(x) (``left_trace='flux'``, default).
With the boundary datum (x^-gamma u)(0, t) = H(t) the duality identity picks
up both x^(alpha+gamma) Phi_k' and -gamma x^(alpha+gamma-1) Phi_k at x = 0;
``left_trace='limit'`` keeps only the first, r_k = lim x^(alpha+gamma) Phi_k',
and then the control is exact only when gamma = 0.

Representation. K(t) = e^(-lambda_1 T) sum_n khat_n e^(lambda_n (t - T)),
with ``khat`` held in the family's arithmetic. Every quantity below has a
closed form in terms of the shifted Gram matrix.

Residual convention. The raw moment defect

    d_k = c_k int_0^T H e^(lambda_k t) dt - rho_k,   c_k = Phi_k'(1) or -r_k,

equals ``-e^(lambda_k T) beta_k(T)`` where beta_k(T) is the k-th terminal
coefficient. It is reported in the damped form
``e^(-(lambda_k - lambda_1) T) d_k = -e^(lambda_1 T) beta_k(T)``, which is
what the solve controls; the raw form overflows for lambda_k T > 709.
"""
from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .biortho import QUAD_POINTS, _basis_on_nodes
from .errors import CriticalPotentialError
from .spectrum import LEFT, RIGHT, _side

__all__ = [
    "InitialDatum",
    "ControlSignal",
    "synthesize_right",
    "synthesize_left",
    "synthesize",
    "moment_residuals",
    "MomentResiduals",
    "boundary_weights",
    "boundary_trace",
]

DEFAULT_GRID = 2048


@dataclass(frozen=True)
class InitialDatum:
    """Coefficients rho_k of u0 against Phi_1..Phi_N."""

    coeffs: np.ndarray
    tag: Optional[str] = None

    def __post_init__(self):
        c = np.array(self.coeffs, dtype=float).ravel()
        if c.size == 0 or not np.all(np.isfinite(c)):
            raise ValueError("initial datum needs finitely many finite coefficients")
        c.setflags(write=False)
        object.__setattr__(self, "coeffs", c)

    @property
    def N(self):
        return self.coeffs.size

    @property
    def norm(self):
        return float(np.linalg.norm(self.coeffs))

    @classmethod
    def mode(cls, N, m):
        """u0 = Phi_m."""
        if not 1 <= m <= N:
            raise ValueError(f"mode {m} outside 1..{N}")
        c = np.zeros(N)
        c[m - 1] = 1.0
        return cls(c, tag=f"Phi_{m}")

    @classmethod
    def random_unit(cls, N, rng):
        """Gaussian direction normalised to unit length; ``rng`` is a numpy Generator or seed."""
        rng = np.random.default_rng(rng)
        v = rng.standard_normal(N)
        return cls(v / np.linalg.norm(v), tag="random_unit")

    @classmethod
    def zero(cls, N):
        return cls(np.zeros(N), tag="zero")

    def __add__(self, other):
        return InitialDatum(self.coeffs + other.coeffs)

    def scaled(self, s):
        return InitialDatum(s * self.coeffs)


LEFT_TRACES = ("flux", "limit")


def boundary_trace(sys, side, left_trace="flux"):
    """Phi_k'(1) (right) or -l_k / -r_k (left): the factor in front of int H e^(lambda_k t)."""
    if _side(side) == RIGHT:
        return np.asarray(sys.trace_right)
    if left_trace not in LEFT_TRACES:
        raise ValueError(f"left_trace must be one of {LEFT_TRACES}, got {left_trace!r}")
    if sys.trace_left is None:
        raise CriticalPotentialError("control at x=0 requires mu < mu_crit(alpha)")
    return -np.asarray(sys.flux_left if left_trace == "flux" else sys.trace_left)


def boundary_weights(sys, side, left_trace="flux"):
    """w_k with K = sum_k w_k rho_k sigma_k: -lambda_k/Phi_k'(1) or lambda_k/l_k."""
    return -np.asarray(sys.lambdas) / boundary_trace(sys, side, left_trace)


@dataclass(frozen=True)
class ControlSignal:
    """K = H' as an exponential sum plus uniform samples of K and H.

    ``khat`` are the coefficients in units of ``exp(log_scale)``,
    ``log_scale = -lambda_1 T``:  K(t) = exp(log_scale) sum_n khat_n e^(lambda_n (t-T)).
    """

    side: str
    lambdas: np.ndarray
    T: float
    khat: np.ndarray
    khat_exact: np.ndarray = field(repr=False)
    log_scale: float
    t: np.ndarray = field(repr=False)
    K_grid: np.ndarray = field(repr=False)
    H_grid: np.ndarray = field(repr=False)
    norm_K: float
    norm_H: float
    norm_H1: float
    H_T: float
    precision: str
    dps: int
    datum: Optional[np.ndarray] = field(default=None, repr=False)
    left_trace: str = "flux"

    @property
    def scale(self):
        return math.exp(self.log_scale)

    @property
    def expsum(self):
        """Float coefficients kappa_n of K = sum_n kappa_n e^(lambda_n (t - T))."""
        return self.scale * self.khat

    def K(self, t):
        t = np.asarray(t, dtype=float)
        E = np.exp(self.lambdas[:, None] * (np.atleast_1d(t)[None, :] - self.T))
        val = self.scale * (self.khat @ E)
        return float(val[0]) if np.ndim(t) == 0 else val

    def H(self, t):
        """H(t) = int_0^t K: kappa_0 t + sum_{n>=1} kappa_n (e^(lam_n (t-T)) - e^(-lam_n T)) / lam_n."""
        t = np.asarray(t, dtype=float)
        tt = np.atleast_1d(t)
        lam = self.lambdas
        val = self.khat[0] * tt
        if lam.size > 1:
            lp = lam[1:, None]
            val = val + (self.khat[1:, None] * (np.exp(lp * (tt[None, :] - self.T)) - np.exp(-lp * self.T)) / lp).sum(0)
        val = self.scale * val
        return float(val[0]) if np.ndim(t) == 0 else val

    def to_csv(self, header=None):
        """CSV text with columns t, K, H (shortest round-trip floats)."""
        buf = io.StringIO()
        for line in header or ():
            buf.write(f"# {line}\n")
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["t", "K", "H"])
        for row in zip(self.t, self.K_grid, self.H_grid):
            w.writerow([repr(float(v)) for v in row])
        return buf.getvalue()

    def to_dict(self):
        return {
            "side": self.side,
            "T": self.T,
            "lambdas": [float(v) for v in self.lambdas],
            "log_scale": self.log_scale,
            "khat": [float(v) for v in self.khat],
            "expsum": [float(v) for v in self.expsum],
            "norm_K_L2": self.norm_K,
            "norm_H_L2": self.norm_H,
            "norm_H_H1": self.norm_H1,
            "H_T": self.H_T,
            "precision": self.precision,
            "dps": self.dps,
            "left_trace": self.left_trace,
        }

    def to_json(self, **extra):
        d = self.to_dict()
        d.update(extra)
        return json.dumps(d, indent=2, sort_keys=True)


def _h_integrals(backend, lam, T, G, khat):
    """Closed forms, in units of exp(log_scale), needed for H.

    Returns (int_0^T H e_k dt for k = 0..N, ||H||^2, H(T)) where e_k is the
    shifted exponential e^(lambda_k (t - T)).

    With H = k0 t + sum_n kn/lam_n (e_n(t) - e^(-lam_n T)):
      int H e_k = k0 I1_k + sum_n kn/lam_n (G_nk - e^(-lam_n T) G_0k),
      I1_k = int t e_k = T/lam_k - (1 - e^(-lam_k T))/lam_k^2 (= T^2/2 for k = 0).
    """
    with backend.context():
        L = backend.asarray(lam)
        Tb = backend.asarray(np.array(T)).item()
        n = L.size
        decay = backend.exp(-L * Tb)
        I1 = np.empty(n, dtype=L.dtype)
        I1[0] = Tb * Tb / 2
        if n > 1:
            Lp = L[1:]
            I1[1:] = Tb / Lp + backend.expm1(-Lp * Tb) / (Lp * Lp)
        a = np.empty(n, dtype=L.dtype)  # coefficient of e_n in H
        a[0] = khat[0] * 0  # t-term handled separately
        if n > 1:
            a[1:] = khat[1:] / L[1:]
        c0 = -(a[1:] * decay[1:]).sum() if n > 1 else khat[0] * 0  # constant term
        k0 = khat[0]
        # int H e_k = k0 I1_k + sum_n a_n G_nk + c0 G_0k
        HE = k0 * I1 + a @ G + c0 * G[0]
        # ||H||^2 = k0^2 T^3/3 + a G a + c0^2 T + 2 k0 a.I1 + 2 k0 c0 T^2/2 + 2 c0 a.G0
        norm2 = (
            k0 * k0 * Tb**3 / 3
            + (a @ G) @ a
            + c0 * c0 * Tb
            + 2 * k0 * (a @ I1)
            + k0 * c0 * Tb * Tb
            + 2 * c0 * (a @ G[0])
        )
        HT = k0 * Tb + (a * (1 - decay)).sum()
        return HE, norm2, HT


def synthesize(sys, family, u0, side, n_grid=DEFAULT_GRID, left_trace="flux"):
    """Moment-method control for either end (see module docstring)."""
    side = _side(side)
    N = sys.n_modes
    if u0.N != N:
        raise ValueError(f"datum has {u0.N} coefficients, system has {N} modes")
    if family.N != N:
        raise ValueError(f"family built on {family.N} exponents, system has {N} modes")
    lam = family.lambdas
    if not np.allclose(lam[1:], sys.lambdas, rtol=1e-14, atol=0):
        raise ValueError("family exponents do not match the system's eigenvalues")
    if abs(family.T - sys.params.T) > 1e-14 * sys.params.T:
        raise ValueError("family horizon differs from the system's T")
    w = boundary_weights(sys, side, left_trace)
    backend = family.backend
    T = family.T
    log_scale = -float(lam[1]) * T
    with backend.context():
        # K = sum_m w_m rho_m sigma_m, sigma_m = e^(-lam_m T) D_m . e
        # khat = e^(lam_1 T) kappa = sum_m w_m rho_m e^(-(lam_m - lam_1) T) D_m
        damp = backend.exp(-backend.asarray(lam[1:] - lam[1]) * backend.asarray(np.array(T)).item())
        coef = backend.asarray(w * u0.coeffs) * damp
        khat_exact = coef @ family.dual_exact[1:]
        G = family.gram_exact
        normK2 = (khat_exact @ G) @ khat_exact
        _, normH2, HT = _h_integrals(backend, lam, T, G, khat_exact)
        normK2 = float(normK2)
        normH2 = float(normH2)
        HT = float(HT)
    khat = backend.to_float(khat_exact)
    scale = math.exp(log_scale)
    t = np.linspace(0.0, T, n_grid)
    normK = scale * math.sqrt(max(normK2, 0.0))
    normH = scale * math.sqrt(max(normH2, 0.0))
    sig = ControlSignal(
        side=side,
        lambdas=np.array(lam),
        T=T,
        khat=khat,
        khat_exact=khat_exact,
        log_scale=log_scale,
        t=t,
        K_grid=np.empty(0),
        H_grid=np.empty(0),
        norm_K=normK,
        norm_H=normH,
        norm_H1=math.hypot(normK, normH),
        H_T=scale * HT,
        precision=family.precision,
        dps=family.dps,
        datum=np.array(u0.coeffs),
        left_trace=left_trace,
    )
    K_grid = sig.K(t)
    H_grid = sig.H(t)
    H_grid[0] = 0.0
    object.__setattr__(sig, "K_grid", K_grid)
    object.__setattr__(sig, "H_grid", H_grid)
    return sig


def synthesize_right(sys, family, u0, n_grid=DEFAULT_GRID):
    """Control acting at x = 1:  K = -sum_k (lambda_k / Phi_k'(1)) rho_k sigma_k."""
    return synthesize(sys, family, u0, RIGHT, n_grid)


def synthesize_left(sys, family, u0, n_grid=DEFAULT_GRID, left_trace="flux"):
    """Control acting at x = 0 (weighted trace):  K = sum_k (lambda_k / l_k) rho_k sigma_k.

    ``left_trace='limit'`` uses r_k in place of l_k (see module docstring).
    """
    if sys.trace_left is None:
        raise CriticalPotentialError("control at x=0 requires mu < mu_crit(alpha)")
    return synthesize(sys, family, u0, LEFT, n_grid, left_trace)


@dataclass(frozen=True)
class MomentResiduals:
    """Damped moment defects e^(-(lambda_k - lambda_1) T) (c_k int H e^(lambda_k t) - rho_k)."""

    closed_form: np.ndarray
    quadrature: np.ndarray
    disagreement: float
    # e^(lambda_1 T) beta_k(T) = -closed_form; kept for convenience
    log_unit: float

    @property
    def max_abs(self):
        return float(np.max(np.abs(self.closed_form)))

    def __array__(self, dtype=None):
        return np.asarray(self.closed_form, dtype=dtype)

    def __iter__(self):
        return iter(self.closed_form)

    def __len__(self):
        return len(self.closed_form)


def scaled_h_moments(sys, signal, backend, quadrature=False, n=QUAD_POINTS):
    """int_0^T H e^(lambda_k (t - T)) dt, k = 1..N, in units of exp(signal.log_scale).

    Closed form from the exponential sum or, with ``quadrature=True``, by
    graded composite Gauss-Legendre quadrature of the same integrand.
    """
    lam_sys = np.asarray(sys.lambdas)
    lam = signal.lambdas
    T = signal.T
    with backend.context():
        kh = signal.khat_exact if signal.precision == backend.name else backend.asarray(signal.khat)
        L = backend.asarray(lam)
        Tb = backend.asarray(np.array(T)).item()
        if not quadrature:
            # Gram between the control exponents and the (possibly longer) mode list
            S = L[:, None] + backend.asarray(np.concatenate(([0.0], lam_sys)))[None, :]
            Gx = np.empty(S.shape, dtype=S.dtype)
            pos = S != 0
            Gx[pos] = -backend.expm1(-S[pos] * Tb) / S[pos]
            Gx[~pos] = Tb
            lam_all = np.concatenate(([0.0], lam_sys))
            HE = _h_integrals_general(backend, lam, lam_all, Tb, Gx, kh)
            return HE[1:]
        c_max = float(lam[-1] + lam_sys[-1])
        t, w, Bk = _basis_on_nodes(backend, lam, T, c_max, n)
        Ht = kh[0] * t
        if lam.size > 1:
            decay = backend.exp(-L[1:] * Tb)
            Ht = Ht + ((kh[1:] / L[1:])[:, None] * (Bk[1:] - decay[:, None])).sum(0)
        _, _, Bs = _basis_on_nodes(backend, lam_sys, T, c_max, n)
        return (Bs * (w * Ht)[None, :]).sum(1)


def _h_integrals_general(backend, lam, lam_test, Tb, Gx, kh):
    """int H e^(mu_k (t - T)) for test exponents mu_k (lam_test[0] must be 0)."""
    n = lam.size
    Lt = backend.asarray(lam_test)
    I1 = np.empty(Lt.size, dtype=Lt.dtype)
    I1[0] = Tb * Tb / 2
    I1[1:] = Tb / Lt[1:] + backend.expm1(-Lt[1:] * Tb) / (Lt[1:] * Lt[1:])
    HE = kh[0] * I1
    if n > 1:
        L = backend.asarray(lam)
        a = kh[1:] / L[1:]
        decay = backend.exp(-L[1:] * Tb)
        c0 = -(a * decay).sum()
        HE = HE + a @ Gx[1:] + c0 * Gx[0]
    return HE


def moment_residuals(sys, signal, u0, n=QUAD_POINTS, quadrature=True):
    """Damped moment defects, closed form and by quadrature.

    For side='right' the defect is Phi_k'(1) int H e^(lambda_k t) - rho_k,
    for side='left' it is -l_k int H e^(lambda_k t) - rho_k (or -r_k, following
    the signal's ``left_trace``); each is
    multiplied by e^(-(lambda_k - lambda_1) T) (see module docstring).
    With ``quadrature=False`` only the closed form is evaluated (the
    quadrature fields are then NaN).
    """
    from .precision import get_backend

    backend = get_backend(signal.precision, signal.dps)
    N = sys.n_modes
    if u0.N != N:
        raise ValueError("datum and system sizes differ")
    c = boundary_trace(sys, signal.side, signal.left_trace)
    lam = np.asarray(sys.lambdas)
    T = signal.T
    lam1 = float(signal.lambdas[1]) if signal.lambdas.size > 1 else float(lam[0])
    out = []
    for quad in (False, True) if quadrature else (False,):
        HE = scaled_h_moments(sys, signal, backend, quadrature=quad, n=n)
        with backend.context():
            # e^(-(lam_k - lam1)T) (c_k e^(lam_k T) e^(log_scale) HE_k - rho_k), log_scale = -lam1 T
            damp = backend.exp(-backend.asarray(lam - lam1) * backend.asarray(np.array(T)).item())
            r = backend.asarray(c) * HE - backend.asarray(u0.coeffs) * damp
            out.append(backend.to_float(r))
    closed = out[0]
    quad = out[1] if quadrature else np.full_like(closed, np.nan)
    scale = max(1.0, float(np.max(np.abs(closed))), u0.norm)
    return MomentResiduals(closed, quad, float(np.max(np.abs(closed - quad))) / scale, log_unit=-lam1 * T)
