"""Spectral forward solver for the boundary-controlled problems.

Terminal coefficients beta_k(T) = <u(., T), Phi_k> are computed two ways.

Path A (duality). Pairing the equation with Phi_k e^(lambda_k (t - T)) gives

    beta_k(T) = e^(-lambda_k T) (rho_k - c_k int_0^T H e^(lambda_k t) dt),

c_k = Phi_k'(1) at x = 1 and c_k = -l_k at x = 0 (see :mod:`moment_control`).

Path B (lift). Write u = w + P(x) H(t) with the stationary profile
P = x^q_right (x = 1) or P = x^gamma (1 - x^q_left) (x = 0), which solves the
homogeneous equation. Then w has zero boundary data and is driven by
-P(x) K(t), so

    w_k(T) = e^(-lambda_k T) rho_k - P_k int_0^T K(s) e^(-lambda_k (T - s)) ds,
    beta_k(T) = w_k(T) + P_k H(T),

with P_k = int P Phi_k dx evaluated by quadrature (independently of the
closed forms P_k = -Phi_k'(1)/lambda_k and P_k = l_k/lambda_k).

All time integrals are closed-form: K is an exponential sum.
"""
from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass, field
from typing import Dict, Optional

import numpy as np

from .errors import CriticalPotentialError
from .moment_control import boundary_trace, scaled_h_moments
from .precision import get_backend
from .spectrum import (
    LEFT,
    RIGHT,
    _side,
    derive_params,
    eigen_system,
    eigenfunction_matrix,
    eval_profile,
    project_onto_modes,
)

__all__ = [
    "TrajectoryResult",
    "simulate",
    "lift_projections",
    "projection_identities_check",
    "free_decay",
    "snapshot_grid",
]

SNAPSHOT_POINTS = 512


def snapshot_grid(n=SNAPSHOT_POINTS):
    """x-grid on [0, 1] graded toward x = 0 (quadratic clustering)."""
    s = np.linspace(0.0, 1.0, n)
    return s * s


def _lift_function(params, side):
    d = derive_params(params, side)
    if side == RIGHT:
        return lambda x: x**d.q_right
    return lambda x: x**d.gamma * (1.0 - x**d.q_left)


def lift_projections(sys, side, modes=None):
    """P_k = int_0^1 P(x) Phi_k(x) dx by quadrature, P the lift profile of ``side``."""
    return project_onto_modes(sys, _lift_function(sys.params, _side(side)), modes)


def projection_identities_check(sys, k):
    """Quadrature defects of the two lift projection identities for mode k.

    Returns ``(right, left)`` with

      right = int x^q_right Phi_k dx + Phi_k'(1) / lambda_k,
      left  = int x^gamma (1 - x^q_left) Phi_k dx - l_k / lambda_k,

    both zero in exact arithmetic (``left`` is None at the critical potential).
    """
    lam = sys.lambdas[sys._index(k)]
    right = float(lift_projections(sys, RIGHT, [k])[0] + sys.trace_right[k - 1] / lam)
    left = None
    if sys.flux_left is not None:
        left = float(lift_projections(sys, LEFT, [k])[0] - sys.flux_left[k - 1] / lam)
    return right, left


def projection_identity_limit_trace(sys, k):
    """Defect of int x^gamma p Phi_k dx = r_k / lambda_k, i.e. with r_k in place of l_k."""
    if sys.trace_left is None:
        raise CriticalPotentialError("left trace undefined at mu = mu_crit(alpha)")
    lam = sys.lambdas[sys._index(k)]
    return float(lift_projections(sys, LEFT, [k])[0] - sys.trace_left[k - 1] / lam)


@dataclass(frozen=True)
class TrajectoryResult:
    side: str
    M: int
    N: int
    T: float
    beta_T: np.ndarray
    beta_T_lift: np.ndarray
    terminal_norm: float
    path_disagreement: float
    snapshots: Dict[float, np.ndarray] = field(default_factory=dict, repr=False)
    x: Optional[np.ndarray] = field(default=None, repr=False)

    @property
    def controlled_max(self):
        """max_{k <= N} |beta_k(T)|."""
        return float(np.max(np.abs(self.beta_T[: self.N])))

    def to_dict(self):
        return {
            "side": self.side,
            "M": self.M,
            "N": self.N,
            "T": self.T,
            "beta_T": [float(v) for v in self.beta_T],
            "beta_T_lift": [float(v) for v in self.beta_T_lift],
            "terminal_norm": self.terminal_norm,
            "path_disagreement": self.path_disagreement,
            "controlled_max": self.controlled_max,
        }

    def to_json(self, **extra):
        d = self.to_dict()
        d.update(extra)
        return json.dumps(d, indent=2, sort_keys=True)

    def snapshot_csv(self, t, header=None):
        buf = io.StringIO()
        for line in header or ():
            buf.write(f"# {line}\n")
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["x", "u"])
        for xv, uv in zip(self.x, self.snapshots[t]):
            w.writerow([repr(float(xv)), repr(float(uv))])
        return buf.getvalue()


def _coefficients_at(sys_m, signal, rho, P, t):
    """w_k(t) for all modes of ``sys_m`` (float64; used for snapshots only)."""
    lam_m = np.asarray(sys_m.lambdas)
    lam = signal.lambdas
    S = lam[:, None] + lam_m[None, :]
    # int_0^t e^(lam_n (s - T)) e^(-lam_k (t - s)) ds = e^(lam_n (t - T)) (1 - e^(-S t)) / S
    conv = np.exp(lam[:, None] * (t - signal.T)) * (-np.expm1(-S * t)) / S
    Kconv = signal.scale * (signal.khat @ conv)
    return np.exp(-lam_m * t) * rho - P * Kconv


def simulate(sys, side, signal, u0, M=None, snapshot_times=(), n_x=SNAPSHOT_POINTS):
    """Terminal state of the controlled problem along both computation paths.

    Parameters
    ----------
    sys : EigenSystem
        Spectrum the control was synthesised on (N modes).
    side : {'right', 'left'}
    signal : ControlSignal
    u0 : InitialDatum
        Coefficients on the first N modes (or on M modes).
    M : int, optional
        Number of modes tracked; defaults to 2N. Modes k > N are uncontrolled.
    snapshot_times : sequence of float
        Times at which u(x, t) is reconstructed on a graded x-grid.
    """
    side = _side(side)
    if signal.side != side:
        raise ValueError(f"signal was synthesised for side={signal.side!r}, not {side!r}")
    N = sys.n_modes
    if signal.lambdas.size != N + 1 or not np.allclose(signal.lambdas[1:], sys.lambdas, rtol=1e-14, atol=0):
        raise ValueError("signal and eigen system do not match")
    if abs(signal.T - sys.params.T) > 1e-14 * sys.params.T:
        raise ValueError("signal horizon differs from the system's T")
    M = 2 * N if M is None else int(M)
    if M < N:
        raise ValueError("M must be >= N")
    sys_m = sys if M == N else eigen_system(sys.params, M)
    rho = np.zeros(M)
    if u0.N > M:
        raise ValueError("datum has more coefficients than tracked modes")
    rho[: u0.N] = u0.coeffs
    T = signal.T
    lam_m = np.asarray(sys_m.lambdas)
    backend = get_backend(signal.precision, signal.dps)
    c = boundary_trace(sys_m, side, signal.left_trace)

    # Path A: beta_k = e^(-lam_k T) rho_k - c_k e^(log_scale) int H e_k
    HE = scaled_h_moments(sys_m, signal, backend)
    with backend.context():
        decay = backend.exp(-backend.asarray(lam_m) * backend.asarray(np.array(T)).item())
        scale = backend.exp(backend.asarray(np.array(signal.log_scale)).item())
        beta_a = backend.asarray(rho) * decay - backend.asarray(c) * scale * HE
        beta_a = backend.to_float(beta_a)

        # Path B: w_k(T) = e^(-lam_k T) rho_k - P_k int K e_k ;  beta_k = w_k(T) + P_k H(T)
        P = lift_projections(sys_m, side)
        lam_all = np.concatenate(([0.0], lam_m))
        G = _gram_cross(backend, signal.lambdas, lam_all, T)
        kh = signal.khat_exact if signal.precision == backend.name else backend.asarray(signal.khat)
        KE = (kh @ G)[1:]
        HT = backend.asarray(np.array(signal.H_T)).item()
        beta_b = backend.asarray(rho) * decay - backend.asarray(P) * scale * KE + backend.asarray(P) * HT
        beta_b = backend.to_float(beta_b)

    disagreement = float(np.max(np.abs(beta_a - beta_b)))
    snaps = {}
    x = None
    if snapshot_times:
        x = snapshot_grid(n_x)
        Phi = eigenfunction_matrix(sys_m, x)
        prof = eval_profile(sys.params, side, x)
        for t in snapshot_times:
            t = float(t)
            if not 0.0 <= t <= T:
                raise ValueError(f"snapshot time {t} outside [0, T]")
            w = _coefficients_at(sys_m, signal, rho, P, t) if t > 0 else rho.copy()
            snaps[t] = w @ Phi + prof * signal.H(t)
    return TrajectoryResult(
        side=side,
        M=M,
        N=N,
        T=T,
        beta_T=beta_a,
        beta_T_lift=beta_b,
        terminal_norm=float(np.linalg.norm(beta_a)),
        path_disagreement=disagreement,
        snapshots=snaps,
        x=x,
    )


def _gram_cross(backend, lam_row, lam_col, T):
    with backend.context():
        A = backend.asarray(lam_row)
        B = backend.asarray(lam_col)
        Tb = backend.asarray(np.array(T)).item()
        S = A[:, None] + B[None, :]
        G = np.empty(S.shape, dtype=S.dtype)
        pos = S != 0
        G[pos] = -backend.expm1(-S[pos] * Tb) / S[pos]
        G[~pos] = Tb
        return G


def free_decay(sys, u0, times):
    """Uncontrolled evolution: beta_k(t) = rho_k e^(-lambda_k t) for each t (rows)."""
    times = np.asarray(times, dtype=float)
    if np.any(times < 0):
        raise ValueError("times must be >= 0")
    lam = np.asarray(sys.lambdas)[: u0.N]
    return u0.coeffs[None, :] * np.exp(-np.outer(times, lam))

