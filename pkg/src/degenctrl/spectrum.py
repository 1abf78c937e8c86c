"""Spectral data of  -(x^a u_x)_x - mu x^(a-2) u  on (0, 1) with Dirichlet ends.

Eigenvalues are ``((2-a)/2)^2 j_{nu,k}^2`` with ``nu = 2/(2-a) sqrt(mu_c - mu)``
and ``mu_c = (1-a)^2/4``; eigenfunctions are Bessel functions in the variable
``y = x^((2-a)/2)``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy import special

from . import specfun
from .errors import CriticalPotentialError, DomainError

__all__ = [
    "ProblemParams",
    "DerivedParams",
    "EigenSystem",
    "GapReport",
    "mu_crit",
    "mu_for_nu",
    "derive_params",
    "eigen_system",
    "eval_eigenfunction",
    "eval_eigenfunction_derivative",
    "eval_left_trace",
    "left_trace_limit",
    "printed_left_trace",
    "eval_left_flux",
    "left_flux_limit",
    "project_onto_modes",
    "eigen_gram",
    "eigenfunction_matrix",
    "gap_report",
    "eval_profile",
    "profile_ode_residual",
]

RIGHT = "right"
LEFT = "left"
SIDES = (RIGHT, LEFT)


def mu_crit(alpha):
    """Generalised Hardy constant (1 - alpha)^2 / 4."""
    return 0.25 * (1.0 - alpha) ** 2


def mu_for_nu(alpha, nu):
    """Inverse of nu(alpha, mu): the potential giving Bessel order ``nu``.

    ``nu = 1/2`` gives ``alpha (3 alpha - 4) / 16``, the boundary between the
    two gap regimes.
    """
    return mu_crit(alpha) - (nu * (2.0 - alpha) / 2.0) ** 2


def _side(side):
    if side not in SIDES:
        raise ValueError(f"side must be 'right' or 'left', got {side!r}")
    return side


@dataclass(frozen=True)
class ProblemParams:
    alpha: float
    mu: float
    T: float = 1.0

    def __post_init__(self):
        a, mu, T = float(self.alpha), float(self.mu), float(self.T)
        object.__setattr__(self, "alpha", a)
        object.__setattr__(self, "mu", mu)
        object.__setattr__(self, "T", T)
        if not (math.isfinite(a) and 0.0 <= a < 1.0):
            raise DomainError(f"alpha must lie in [0, 1), got {a}")
        if not math.isfinite(mu) or mu > mu_crit(a) * (1 + 1e-14) + 1e-300:
            raise DomainError(f"mu={mu} exceeds mu_crit(alpha)={mu_crit(a)}")
        if not (math.isfinite(T) and T > 0):
            raise DomainError(f"T must be positive, got {T}")

    @property
    def mu_crit(self):
        return mu_crit(self.alpha)

    @property
    def is_critical(self):
        return self.mu >= self.mu_crit

    def with_T(self, T):
        return ProblemParams(self.alpha, self.mu, T)


@dataclass(frozen=True)
class DerivedParams:
    nu: float
    gamma: float
    mu_crit: float
    q_right: float
    q_left: float
    # sqrt(mu_c - mu), reused everywhere
    root: float


def derive_params(params, side=None):
    """Bessel order, weight exponent gamma and the two profile exponents.

    ``side='left'`` rejects the critical potential, where the weighted
    Dirichlet problem at x=0 is not posed.
    """
    mc = params.mu_crit
    root = math.sqrt(max(mc - params.mu, 0.0))
    if side is not None and _side(side) == LEFT and root == 0.0:
        raise CriticalPotentialError("control at x=0 requires mu < mu_crit(alpha)")
    a = params.alpha
    return DerivedParams(
        nu=2.0 / (2.0 - a) * root,
        gamma=math.sqrt(mc) - root,
        mu_crit=mc,
        q_right=(1.0 - a) / 2.0 + root,
        q_left=2.0 * root,
        root=root,
    )


@dataclass(frozen=True)
class EigenSystem:
    """First ``n_modes`` eigenpairs plus the boundary traces used by the controls.

    ``trace_right[k-1]`` is Phi_k'(1) (sign included); ``trace_left[k-1]`` is
    r_k = lim x^(alpha+gamma) Phi_k'(x) as x -> 0+, absent at the critical
    potential.
    """

    params: ProblemParams
    derived: DerivedParams
    n_modes: int
    zeros: specfun.ZeroTable
    lambdas: np.ndarray
    jprime: np.ndarray
    norm_consts: np.ndarray
    trace_right: np.ndarray
    trace_left: Optional[np.ndarray] = field(default=None)
    flux_left: Optional[np.ndarray] = field(default=None)

    @property
    def alpha(self):
        return self.params.alpha

    @property
    def nu(self):
        return self.derived.nu

    @property
    def sqrt_lambdas(self):
        return np.sqrt(self.lambdas)

    def _index(self, k):
        if not 1 <= k <= self.n_modes:
            raise IndexError(f"mode index {k} outside 1..{self.n_modes}")
        return k - 1

    def truncated(self, n):
        """Same system restricted to its first ``n`` modes."""
        if not 1 <= n <= self.n_modes:
            raise ValueError(f"cannot truncate {self.n_modes} modes to {n}")
        return eigen_system(self.params, n)


def _log_leading(derived, C, j):
    """log A_k, where Phi_k(x) ~ A_k x^q_right as x -> 0+."""
    nu = derived.nu
    return math.log(C) + nu * math.log(j / 2.0) - math.lgamma(1.0 + nu)


def eigen_system(params, N):
    """Eigenvalues, normalisation and boundary traces of the first N modes."""
    N = int(N)
    if N < 1:
        raise ValueError("N must be >= 1")
    d = derive_params(params)
    a = params.alpha
    zt = specfun.bessel_zeros(d.nu, N)
    j = np.array(zt.zeros)
    jp = specfun.bessel_j_prime(d.nu, j)
    C = math.sqrt(2.0 - a) / np.abs(jp)
    lambdas = ((2.0 - a) / 2.0) ** 2 * j**2
    # Phi_k'(1) = C_k (2-a)/2 j_k J'_nu(j_k): magnitude (2-a)^{3/2} j_k / 2
    trace_right = C * (2.0 - a) / 2.0 * j * jp
    trace_left = flux_left = None
    if d.root > 0.0:
        lead = np.exp([_log_leading(d, c, jj) for c, jj in zip(C, j)])
        # x^(a+g) Phi' -> A q_right;  x^(a+2g) (x^-g Phi)' -> A (q_right - gamma) = A q_left
        trace_left = lead * (math.sqrt(d.mu_crit) + d.root)
        flux_left = lead * d.q_left
    for arr in (j, jp, C, lambdas, trace_right, trace_left, flux_left):
        if arr is not None:
            arr.setflags(write=False)
    return EigenSystem(params, d, N, zt, lambdas, jp, C, trace_right, trace_left, flux_left)


def _check_x(x):
    arr = np.asarray(x, dtype=float)
    if np.any(arr < 0) or np.any(arr > 1) or not np.all(np.isfinite(arr)):
        raise DomainError("x must lie in [0, 1]")
    return arr


def eval_eigenfunction(sys, k, x):
    """Phi_k(x) = C_k x^((1-a)/2) J_nu(j_k x^((2-a)/2)); vectorised in x."""
    i = sys._index(k)
    arr = _check_x(x)
    a = sys.alpha
    j = sys.zeros.zeros[i]
    val = sys.norm_consts[i] * arr ** ((1.0 - a) / 2.0) * special.jv(sys.nu, j * arr ** ((2.0 - a) / 2.0))
    return float(val) if np.ndim(x) == 0 else val


def eval_eigenfunction_derivative(sys, k, x):
    """Phi_k'(x) for x in (0, 1], written without cancellation.

    With z = j x^((2-a)/2) and J'(z) = nu J/z - J_{nu+1}(z):
    Phi' = C x^(-(1+a)/2) [ q_r J_nu(z) - (2-a)/2 z J_{nu+1}(z) ],
    q_r = (1-a)/2 + nu (2-a)/2.
    """
    i = sys._index(k)
    arr = _check_x(x)
    if np.any(arr == 0):
        raise ValueError("derivative requires x > 0")
    a = sys.alpha
    nu = sys.nu
    z = sys.zeros.zeros[i] * arr ** ((2.0 - a) / 2.0)
    bracket = sys.derived.q_right * special.jv(nu, z) - (2.0 - a) / 2.0 * z * special.jv(nu + 1.0, z)
    val = sys.norm_consts[i] * arr ** (-(1.0 + a) / 2.0) * bracket
    return float(val) if np.ndim(x) == 0 else val


def eigenfunction_matrix(sys, x, modes=None):
    """Rows Phi_k(x) for k in ``modes`` (default all), columns over ``x``."""
    modes = range(1, sys.n_modes + 1) if modes is None else modes
    arr = _check_x(x)
    a = sys.alpha
    idx = np.asarray(list(modes)) - 1
    j = sys.zeros.zeros[idx][:, None]
    y = arr ** ((2.0 - a) / 2.0)
    return sys.norm_consts[idx][:, None] * arr ** ((1.0 - a) / 2.0) * special.jv(sys.nu, j * y)


def eval_left_trace(sys, k):
    """r_k from the small-argument expansion J_nu(z) ~ (z/2)^nu / Gamma(1+nu).

    r_k = C_k (j_k/2)^nu (sqrt(mu_c) + sqrt(mu_c - mu)) / Gamma(1+nu).
    """
    i = sys._index(k)
    if sys.trace_left is None:
        raise CriticalPotentialError("left trace undefined at mu = mu_crit(alpha)")
    return float(sys.trace_left[i])


def printed_left_trace(sys, k):
    """The alternative closed form C_k (sqrt(mu_c)+sqrt(mu_c-mu)) j_k / Gamma(1+nu).

    Kept only so the ratio to :func:`eval_left_trace` can be reported; it
    does not match the limit definition unless nu = 1.
    """
    i = sys._index(k)
    d = sys.derived
    if d.root == 0.0:
        raise CriticalPotentialError("left trace undefined at mu = mu_crit(alpha)")
    return float(
        sys.norm_consts[i] * (math.sqrt(d.mu_crit) + d.root) * sys.zeros.zeros[i] / math.gamma(1.0 + d.nu)
    )


def _richardson(xs, f, p):
    """Extrapolate f(x) = L + c1 x^p + c2 x^(2p) + ... to x -> 0 from geometric samples."""
    xs = np.asarray(xs, dtype=float)
    table = list(np.asarray(f, dtype=float))
    level = 1
    while len(table) > 1:
        new = []
        for i in range(len(table) - 1):
            s = (xs[i] / xs[i + level]) ** (level * p)
            new.append((s * table[i + 1] - table[i]) / (s - 1.0))
        table = new
        level += 1
    return float(table[0])


def left_trace_limit(sys, k, xs=(1e-4, 1e-5, 1e-6)):
    """Numerical limit of x^(alpha+gamma) Phi_k'(x) as x -> 0+.

    The sampled function behaves like r_k + c1 x^p + c2 x^(2p) + ... with
    p = 2 - alpha, so repeated Richardson extrapolation is applied over the
    samples ``xs``.
    """
    if sys.derived.root == 0.0:
        raise CriticalPotentialError("left trace undefined at mu = mu_crit(alpha)")
    xs = np.asarray(xs, dtype=float)
    f = xs ** (sys.alpha + sys.derived.gamma) * eval_eigenfunction_derivative(sys, k, xs)
    return _richardson(xs, f, 2.0 - sys.alpha)


def eval_left_flux(sys, k):
    """l_k = lim x^(alpha+2 gamma) (x^-gamma Phi_k)'(x) = C_k (j_k/2)^nu q_left / Gamma(1+nu)."""
    i = sys._index(k)
    if sys.flux_left is None:
        raise CriticalPotentialError("left flux undefined at mu = mu_crit(alpha)")
    return float(sys.flux_left[i])


def left_flux_limit(sys, k, xs=(1e-4, 1e-5, 1e-6)):
    """Richardson-extrapolated limit of x^(a+g) Phi_k' - g x^(a+g-1) Phi_k as x -> 0+."""
    if sys.derived.root == 0.0:
        raise CriticalPotentialError("left flux undefined at mu = mu_crit(alpha)")
    xs = np.asarray(xs, dtype=float)
    g = sys.derived.gamma
    w = sys.alpha + g
    f = xs**w * eval_eigenfunction_derivative(sys, k, xs) - g * xs ** (w - 1.0) * eval_eigenfunction(sys, k, xs)
    return _richardson(xs, f, 2.0 - sys.alpha)


@dataclass(frozen=True)
class GapReport:
    """Gaps sqrt(lambda_{k+1}) - sqrt(lambda_k), k = 1..N-1, and their certificates."""

    nu: float
    alpha: float
    gaps: np.ndarray
    gap_min: float
    gap_max: float
    regime: str
    lower_bound: float
    upper_bound: float
    passes_bounds: bool
    n_star: int
    gamma_max_star: float
    passes_asymptotic: bool
    uniform_lower: float
    uniform_upper: Optional[float]
    passes_uniform: bool

    @property
    def ok(self):
        return self.passes_bounds and self.passes_asymptotic and self.passes_uniform


def gap_report(sys, rtol=1e-12):
    """Check the eigenvalue gaps against the Bessel-zero gap bounds.

    ``rtol`` is a relative rounding allowance: at nu = 1/2 the gaps equal
    the upper bound exactly.
    """
    if sys.n_modes < 2:
        raise ValueError("gap report needs at least two modes")
    a = sys.alpha
    nu = sys.nu
    half = (2.0 - a) / 2.0
    gaps = np.diff(sys.sqrt_lambdas)
    j = sys.zeros.zeros
    if nu <= 0.5:
        regime = "nu<=1/2"
        lo, hi = 7.0 * math.pi * (2.0 - a) / 16.0, math.pi * (2.0 - a) / 2.0
        ulo, uhi = 7.0 * math.pi / 16.0, math.pi
    else:
        regime = "nu>=1/2"
        lo, hi = math.pi * (2.0 - a) / 2.0, half * (j[1] - j[0])
        ulo, uhi = math.pi / 2.0, None

    def _within(values, low, high):
        ok = np.all(values >= low * (1 - rtol))
        if high is not None:
            ok = ok and np.all(values <= high * (1 + rtol))
        return bool(ok)

    k_index = np.arange(1, len(gaps) + 1)
    n_star = int(math.floor(nu)) + 1
    tail = gaps[k_index > nu]
    passes_asym = True if nu < 0.5 else bool(np.all(tail <= 2 * math.pi * (1 + rtol)))
    return GapReport(
        nu=nu,
        alpha=a,
        gaps=gaps,
        gap_min=float(gaps.min()),
        gap_max=float(gaps.max()),
        regime=regime,
        lower_bound=lo,
        upper_bound=hi,
        passes_bounds=_within(gaps, lo, hi),
        n_star=n_star,
        gamma_max_star=2 * math.pi,
        passes_asymptotic=passes_asym,
        uniform_lower=ulo,
        uniform_upper=uhi,
        passes_uniform=_within(gaps, ulo, uhi),
    )


def eval_profile(params, side, x):
    """Stationary lift profile: x^q_right (side='right') or 1 - x^q_left ('left')."""
    arr = _check_x(x)
    d = derive_params(params, side)
    if side == RIGHT:
        val = arr**d.q_right
    else:
        val = 1.0 - arr**d.q_left
    return float(val) if np.ndim(x) == 0 else val


def profile_ode_residual(params, side, x, h=1e-3):
    """Finite-difference residual of the profile ODE at interior points.

    Right: (x^a p')' + mu x^(a-2) p. Left: the same operator applied to
    g = x^gamma p. The conservative three-point stencil is evaluated at
    steps h and h/2 and Richardson-combined (fourth order). Returned
    relative to the size of the individual terms.
    """
    arr = np.asarray(x, dtype=float)
    if np.any(arr - h <= 0) or np.any(arr + h >= 1 + 1e-12):
        raise DomainError("x +- h must stay inside (0, 1]")
    d = derive_params(params, side)
    a, mu = params.alpha, params.mu

    def g(s):
        p = eval_profile(params, side, s)
        return p if side == RIGHT else s**d.gamma * p

    g0 = g(arr)

    def div(step):
        gm, gp = g(arr - step), g(arr + step)
        flux_p = (arr + step / 2) ** a * (gp - g0) / step
        flux_m = (arr - step / 2) ** a * (g0 - gm) / step
        return (flux_p - flux_m) / step, flux_p

    d1, flux = div(h)
    d2, _ = div(h / 2)
    pot = mu * arr ** (a - 2.0) * g0
    scale = np.abs(flux) / arr + np.abs(pot) + np.abs(g0)
    return ((4 * d2 - d1) / 3 + pot) / scale


def _y_rule(n_modes, points=32):
    """Composite Gauss rule on y in [0, 1]: geometric panels toward 0, then uniform.

    Integrands in y behave like y^s near 0 (s non-integer in general) and
    oscillate with frequency ~ j_{nu,N} ~ pi N, so the uniform part uses
    panels of width <= pi / (j_max) roughly one half-wave each.
    """
    x, w = np.polynomial.legendre.leggauss(points)
    n_uniform = max(8, int(math.ceil((n_modes + 8) / 2.0)))
    uniform = np.linspace(0.0, 1.0, n_uniform + 1)
    first = uniform[1]
    geo = first * 2.0 ** -np.arange(60, 0, -1)
    edges = np.concatenate(([0.0], geo, uniform[1:]))
    a, b = edges[:-1], edges[1:]
    half = (b - a)[:, None] / 2
    nodes = ((b + a)[:, None] / 2 + half * x[None, :]).ravel()
    weights = (half * w[None, :]).ravel()
    return nodes, weights


def project_onto_modes(sys, f, modes=None, points=32):
    """int_0^1 f(x) Phi_k(x) dx for k in ``modes`` (default 1..N) by quadrature in y = x^((2-a)/2).

    ``f`` is a vectorised callable on x in (0, 1]. With x = y^(2/(2-a)),
    dx = (2/(2-a)) y^(a/(2-a)) dy, the eigenfunction part becomes a pure
    Bessel function of j_k y and the remaining factor is y^(1/(2-a)).
    """
    modes = list(range(1, sys.n_modes + 1)) if modes is None else list(modes)
    a = sys.alpha
    y, w = _y_rule(max(modes), points)
    y = y[y > 0]
    w = w[-y.size:]
    x = y ** (2.0 / (2.0 - a))
    jac = (2.0 / (2.0 - a)) * y ** (1.0 / (2.0 - a))  # includes x^((1-a)/2)
    fx = np.asarray(f(x), dtype=float)
    idx = np.asarray(modes) - 1
    J = special.jv(sys.nu, sys.zeros.zeros[idx][:, None] * y[None, :])
    return (sys.norm_consts[idx][:, None] * J * (w * jac * fx)[None, :]).sum(1)


def eigen_gram(sys, modes=None, points=32):
    """Quadrature Gram matrix int Phi_j Phi_k dx (identity for an orthonormal family)."""
    modes = list(range(1, sys.n_modes + 1)) if modes is None else list(modes)
    a = sys.alpha
    y, w = _y_rule(max(modes), points)
    jac = (2.0 / (2.0 - a)) * y ** (1.0 / (2.0 - a))
    # Phi_j Phi_k dx = C_j C_k x^(1-a) J J dx; x^(1-a) dx = (2/(2-a)) y dy
    wt = w * (2.0 / (2.0 - a)) * y
    idx = np.asarray(modes) - 1
    B = sys.norm_consts[idx][:, None] * special.jv(sys.nu, sys.zeros.zeros[idx][:, None] * y[None, :])
    del jac
    return (B * wt[None, :]) @ B.T
