"""Controllability-cost measurements and analytic bound shapes.

The measured cost of a synthesised control is ``||H||_{H^1(0,T)} / ||u0||``;
over a batch of data its maximum approximates the global cost from above
(the moment-method control is one admissible control, not the optimal one).

Bound shapes are the analytic upper/lower cost bounds with every universal
constant set to 1. They are meant for shape comparisons (slopes in 1/T,
trends in mu), never for absolute inequalities.
"""
from __future__ import annotations

import csv
import io
import json
import logging
import math
from dataclasses import dataclass, field
from typing import Dict

import numpy as np

from . import specfun
from .biortho import (
    ExponentSet,
    build_family,
    log_lower_bound_b,
    log_lower_bound_bstar,
)
from .errors import CriticalPotentialError
from .moment_control import InitialDatum, moment_residuals, synthesize
from .spectrum import (
    LEFT,
    RIGHT,
    ProblemParams,
    _side,
    derive_params,
    eigen_system,
    mu_crit,
)

__all__ = [
    "CostReport",
    "measure_cost",
    "default_batch",
    "upper_shape_thm1",
    "upper_shape_thm0",
    "lower_shapes",
    "regime_of",
    "series_tail_sum",
    "series_tail_bound_check",
    "default_grid",
    "sweep",
    "fit_slope",
    "sandwich_ratios",
    "sweep_to_csv",
    "sweep_to_json",
]

log = logging.getLogger(__name__)

LOW_NU = "nu<=1/2"
HIGH_NU = "nu>=1/2"
BATCH_SEED = 20240101
N_RANDOM = 8
N_CANONICAL = 5


def regime_of(params):
    """Which branch of the lower bound applies: nu <= 1/2 or nu > 1/2.

    nu = 1/2 exactly when mu = alpha (3 alpha - 4) / 16; that point is
    assigned to the nu <= 1/2 branch (both branches are valid there).
    """
    nu = derive_params(params).nu
    return LOW_NU if nu <= 0.5 * (1 + 1e-13) else HIGH_NU


def _core(params):
    d = derive_params(params)
    T = params.T
    return d, T, (1.0 + d.root)


def upper_shape_thm1(params):
    """e^(1/T) [1 + sqrt(mu_c - mu)] e^(-[1 + sqrt(mu_c - mu)]^2 T)  (control at x = 1)."""
    d, T, s = _core(params)
    return math.exp(1.0 / T + math.log(s) - s * s * T)


def log_upper_shape_thm0(params):
    d, T, s = _core(params)
    if d.root == 0.0:
        raise CriticalPotentialError("control at x=0 requires mu < mu_crit(alpha)")
    return (
        specfun.log_gamma(1.0 + d.nu)
        - math.log(math.sqrt(d.mu_crit) + d.root)
        + 1.0 / T
        + math.log(s)
        - s * s * T
    )


def upper_shape_thm0(params):
    """Gamma(1+nu) / (sqrt(mu_c) + sqrt(mu_c - mu)) times the x = 1 shape (control at x = 0)."""
    return math.exp(log_upper_shape_thm0(params))


def lower_shapes(params, side=RIGHT):
    """(regime, value) of the lower cost-bound shape for the branch selected by nu.

    x = 1:
      nu <= 1/2 : e^(1/T) e^(-(1+R)^2 T)
      nu >= 1/2 : the same times e^(-R^(4/3) (ln R + ln(1/T)))
    x = 0 (both multiplied by 1/(sqrt(mu_c) + R)):
      nu <= 1/2 : T^-4 e^(-(1-alpha)^2 T) e^(1/T)
      nu >= 1/2 : e^(1/T) e^(-(1+R)^2 T) e^(-R^(4/3) (ln R + ln(1/T)))
    with R = sqrt(mu_c - mu).
    """
    side = _side(side)
    d, T, s = _core(params)
    regime = regime_of(params)
    R = d.root
    tail = 0.0
    if regime == HIGH_NU:
        tail = -(R ** (4.0 / 3.0)) * (math.log(R) + math.log(1.0 / T))
    if side == RIGHT:
        val = 1.0 / T - s * s * T + tail
    else:
        if R == 0.0:
            raise CriticalPotentialError("control at x=0 requires mu < mu_crit(alpha)")
        pre = -math.log(math.sqrt(d.mu_crit) + R)
        if regime == LOW_NU:
            val = pre - 4.0 * math.log(T) - (1.0 - params.alpha) ** 2 * T + 1.0 / T
        else:
            val = pre + 1.0 / T - s * s * T + tail
    return regime, math.exp(val)


def biorthogonal_lower_terms(sys, T=None, m=1):
    """log b or log b* for the spectrum of ``sys`` (branch chosen by nu).

    nu <= 1/2 uses the uniform upper gap pi; nu > 1/2 uses b* with
    gamma_max* = 2 pi, N_* = [nu] + 1 and gamma_max the larger of the
    first gap bound ((2-a)/2)(j_2 - j_1) and 2 pi (any upper gap bound is
    admissible, and b* needs gamma_max* <= gamma_max).
    """
    T = sys.params.T if T is None else T
    lam1 = float(sys.lambdas[0])
    if sys.nu <= 0.5:
        return {"kind": "b", "gamma_max": math.pi, "log_value": log_lower_bound_b(T, math.pi, lam1, m)}
    z = specfun.bessel_zeros(sys.nu, 2).zeros
    gmax = max((2.0 - sys.alpha) / 2.0 * (z[1] - z[0]), 2 * math.pi)
    n_star = int(math.floor(sys.nu)) + 1
    return {
        "kind": "bstar",
        "gamma_max": gmax,
        "gamma_max_star": 2 * math.pi,
        "n_star": n_star,
        "log_value": log_lower_bound_bstar(T, gmax, 2 * math.pi, n_star, lam1, m),
    }


@dataclass
class CostReport:
    params: ProblemParams
    side: str
    N: int
    nu: float
    regime: str
    status: str = "ok"
    message: str = ""
    measured_cost: float = float("nan")
    cost_phi1: float = float("nan")
    per_datum: Dict[str, float] = field(default_factory=dict)
    upper_shape: float = float("nan")
    lower_shape: float = float("nan")
    moment_residual: float = float("nan")
    family_residual: float = float("nan")
    condition_estimate: float = float("nan")
    precision: str = ""

    def row(self):
        p = self.params
        return {
            "alpha": p.alpha,
            "mu": p.mu,
            "T": p.T,
            "nu": self.nu,
            "side": self.side,
            "regime": self.regime,
            "status": self.status,
            "measured_cost": self.measured_cost,
            "cost_phi1": self.cost_phi1,
            "upper_shape": self.upper_shape,
            "lower_shape": self.lower_shape,
            "moment_residual": self.moment_residual,
            "family_residual": self.family_residual,
            "condition_estimate": self.condition_estimate,
            "message": self.message,
        }

    def to_dict(self):
        d = self.row()
        d.update({"N": self.N, "precision": self.precision, "per_datum": dict(self.per_datum)})
        return d


def default_batch(N, seed=BATCH_SEED, policy="default"):
    """Phi_1..Phi_5 plus 8 seeded random unit vectors ('default'), Phi_1..Phi_5 ('modes') or Phi_1 ('phi1')."""
    if policy == "phi1":
        return [InitialDatum.mode(N, 1)]
    n_modes = min(N_CANONICAL, N)
    batch = [InitialDatum.mode(N, m) for m in range(1, n_modes + 1)]
    if policy == "modes":
        return batch
    if policy != "default":
        raise ValueError(f"unknown datum policy {policy!r}")
    rng = np.random.default_rng(seed)
    for i in range(N_RANDOM):
        d = InitialDatum.random_unit(N, rng)
        batch.append(InitialDatum(d.coeffs, tag=f"random_{i}"))
    return batch


def measure_cost(sys, side, family, batch, left_trace="flux"):
    """Synthesise one control per datum and report max ||H||_{H^1} / ||u0||."""
    side = _side(side)
    params = sys.params
    report = CostReport(
        params=params,
        side=side,
        N=sys.n_modes,
        nu=sys.nu,
        regime=regime_of(params),
        family_residual=family.residual,
        condition_estimate=family.condition_estimate,
        precision=family.precision,
    )
    worst = 0.0
    worst_res = 0.0
    for i, u0 in enumerate(batch):
        tag = u0.tag or f"datum_{i}"
        if u0.norm == 0.0:
            report.per_datum[tag] = 0.0
            continue
        sig = synthesize(sys, family, u0, side, left_trace=left_trace)
        cost = sig.norm_H1 / u0.norm
        report.per_datum[tag] = cost
        worst = max(worst, cost)
        res = moment_residuals(sys, sig, u0, quadrature=False)
        worst_res = max(worst_res, res.max_abs / u0.norm)
        if tag == "Phi_1":
            report.cost_phi1 = cost
    report.measured_cost = worst
    report.moment_residual = worst_res
    report.upper_shape = upper_shape_thm1(params) if side == RIGHT else upper_shape_thm0(params)
    report.lower_shape = lower_shapes(params, side)[1]
    return report


# ---------------------------------------------------------------------------


def series_tail_sum(nu, Y, chunk=64):
    """sum_k j_{nu,k}^2 exp(-j_{nu,k}^2 Y).

    Summed until the terms fall below 1e-300 or 10 * ceil(1/sqrt(Y)) terms
    have been added, whichever comes later.
    """
    if Y <= 0:
        raise ValueError("Y must be positive")
    min_terms = 10 * int(math.ceil(1.0 / math.sqrt(Y)))
    count = max(chunk, min_terms)
    while True:
        j = specfun.bessel_zeros(nu, count).zeros
        terms = j * j * np.exp(-j * j * Y)
        # last term is tiny and the terms are decreasing beyond the peak
        if terms[-1] < 1e-300 and count >= min_terms and j[-1] ** 2 * Y > 1.0:
            small = np.nonzero((terms < 1e-300) & (j * j * Y > 1.0))[0]
            stop = max(int(small[0]), min_terms)
            return float(math.fsum(terms[:stop]))
        count *= 2


def series_tail_bound_check(nu, Y):
    """Sum and ratio sum / [((1+nu^2)/Y^(3/2)) e^(-(1+nu^2) Y)] on a (nu, Y) grid.

    Scalars give scalars; sequences give arrays of shape (len(nu), len(Y)).
    """
    nus = np.atleast_1d(np.asarray(nu, dtype=float))
    Ys = np.atleast_1d(np.asarray(Y, dtype=float))
    sums = np.empty((nus.size, Ys.size))
    ratios = np.empty_like(sums)
    for i, n in enumerate(nus):
        for k, y in enumerate(Ys):
            s = series_tail_sum(float(n), float(y))
            sums[i, k] = s
            a = 1.0 + n * n
            log_ref = math.log(a) - 1.5 * math.log(y) - a * y
            ratios[i, k] = math.exp(math.log(s) - log_ref) if s > 0 else 0.0
    if np.ndim(nu) == 0 and np.ndim(Y) == 0:
        return float(sums[0, 0]), float(ratios[0, 0])
    return sums, ratios


# ---------------------------------------------------------------------------


def default_grid():
    """alpha in {0, .3, .6} x mu in {mu_c(alpha), 0, -5} x T in {.25, 1, 4}."""
    grid = []
    for a in (0.0, 0.3, 0.6):
        for mu in (mu_crit(a), 0.0, -5.0):
            for T in (0.25, 1.0, 4.0):
                grid.append(ProblemParams(a, mu, T))
    return grid


def sweep(grid, side, N, datum_policy="default", precision=None, dps=None, seed=BATCH_SEED, tol=1e-10,
          left_trace="flux"):
    """One CostReport per grid point; per-point failures are recorded, not raised.

    The biorthogonal family is rebuilt for each point (it depends on T).
    """
    side = _side(side)
    grid = list(grid)
    if not grid:
        raise ValueError("empty grid")
    reports = []
    for params in grid:
        d = derive_params(params)
        rep = CostReport(params=params, side=side, N=N, nu=d.nu, regime=regime_of(params))
        if side == LEFT and d.root == 0.0:
            rep.status = "skipped"
            rep.message = "mu = mu_crit: control at x=0 not posed"
            reports.append(rep)
            continue
        try:
            sys = eigen_system(params, N)
            fam = build_family(ExponentSet.from_spectrum(sys), tol=tol, precision=precision, dps=dps)
            rep = measure_cost(sys, side, fam, default_batch(N, seed, datum_policy), left_trace=left_trace)
        except Exception as exc:  # recorded per point; the sweep continues
            log.warning("sweep point %s failed: %s", params, exc)
            rep.status = "error"
            rep.message = f"{type(exc).__name__}: {exc}"
            rep.family_residual = getattr(exc, "residual", float("nan"))
            rep.condition_estimate = getattr(exc, "condition_estimate", float("nan"))
        reports.append(rep)
    return reports


def fit_slope(x, y):
    """Least-squares slope of y against x."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    return float(np.polyfit(x, y, 1)[0])


def sandwich_ratios(reports):
    """Extremal ratios lower/measured and measured/upper over successful reports."""
    ok = [r for r in reports if r.status == "ok" and r.measured_cost > 0]
    if not ok:
        return None
    lo = np.array([r.lower_shape / r.measured_cost for r in ok])
    up = np.array([r.measured_cost / r.upper_shape for r in ok])
    return {
        "lower_over_measured": (float(lo.min()), float(lo.max())),
        "measured_over_upper": (float(up.min()), float(up.max())),
    }


CSV_COLUMNS = [
    "alpha",
    "mu",
    "T",
    "nu",
    "side",
    "regime",
    "status",
    "measured_cost",
    "cost_phi1",
    "upper_shape",
    "lower_shape",
    "moment_residual",
    "family_residual",
    "condition_estimate",
    "message",
]


def _fmt(v):
    if isinstance(v, float):
        return repr(v)
    return str(v)


def sweep_to_csv(reports, header=None):
    buf = io.StringIO()
    for line in header or ():
        buf.write(f"# {line}\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_COLUMNS)
    for r in reports:
        row = r.row()
        w.writerow([_fmt(row[c]) for c in CSV_COLUMNS])
    return buf.getvalue()


def sweep_to_json(reports, provenance=None):
    doc = {"provenance": provenance or {}, "reports": [r.to_dict() for r in reports]}
    return json.dumps(doc, indent=2, sort_keys=True)
