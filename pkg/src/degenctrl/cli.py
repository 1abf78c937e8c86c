"""Command-line frontend: ``degenctrl <subcommand> [--key value ...]``.

Every subcommand resolves a flat configuration (defaults < ``--config`` file
< command-line flags), runs one stage of the pipeline and writes a CSV or
JSON artifact that embeds the resolved configuration.

Exit codes: 0 success, 1 a ``verify`` property failed, 2 invalid
configuration, 3 numerical failure (e.g. an ill-conditioned Gram solve).
"""
from __future__ import annotations

import argparse
import csv
import io
import logging
import math
import sys
import time
from dataclasses import dataclass, fields
from pathlib import Path
from typing import Optional

import numpy as np

from . import __version__
from .biortho import ExponentSet, build_family, family_norms
from .cost_lab import (
    CSV_COLUMNS,
    default_batch,
    default_grid,
    sandwich_ratios,
    sweep,
)
from .errors import (
    BracketError,
    CriticalPotentialError,
    DomainError,
    DuplicateExponent,
    IllConditioned,
)
from .moment_control import InitialDatum, moment_residuals, synthesize
from .precision import DEFAULT_EXTENDED_DPS, default_precision
from .simulator import projection_identities_check, simulate
from .spectrum import (
    LEFT,
    RIGHT,
    ProblemParams,
    derive_params,
    eigen_gram,
    eigen_system,
    gap_report,
)

log = logging.getLogger("degenctrl")

SUBCOMMANDS = ("spectrum", "gaps", "biortho", "control", "simulate", "cost-sweep", "verify")
EXIT_OK, EXIT_FAILED, EXIT_CONFIG, EXIT_NUMERIC = 0, 1, 2, 3
DEFAULT_N = {"base": 12, "extended": 24}

# verification tolerances
ORTHO_TOL = 1e-8
PROJECTION_TOL = 1e-7
MOMENT_TOL = 1e-8
PATH_TOL = 1e-8
VERIFY_MODES = 5


class ConfigError(ValueError):
    """Invalid or unknown configuration entry."""


# ---------------------------------------------------------------------------
# configuration


@dataclass
class RunConfig:
    subcommand: str
    alpha: Optional[float] = None
    mu: Optional[float] = None
    T: float = 1.0
    side: str = RIGHT
    N: Optional[int] = None
    M: Optional[int] = None
    precision: Optional[str] = None
    dps: int = DEFAULT_EXTENDED_DPS
    tol: float = 1e-10
    seed: int = 20240101
    datum: str = "random"
    grid: str = "default"
    left_trace: str = "flux"
    snapshots: str = ""
    n_grid: int = 2048
    output: Optional[str] = None
    format: Optional[str] = None

    def resolved(self):
        """Fill in environment/derived defaults and validate; returns a new RunConfig."""
        c = RunConfig(**{f.name: getattr(self, f.name) for f in fields(self)})
        if c.subcommand not in SUBCOMMANDS:
            raise ConfigError(f"unknown subcommand {c.subcommand!r}")
        try:
            c.precision = c.precision or default_precision()
        except ValueError as exc:
            raise ConfigError(str(exc)) from None
        if c.precision not in ("base", "extended"):
            raise ConfigError(f"precision must be 'base' or 'extended', got {c.precision!r}")
        if c.side not in (RIGHT, LEFT):
            raise ConfigError(f"side must be 'right' or 'left', got {c.side!r}")
        if c.left_trace not in ("flux", "limit"):
            raise ConfigError(f"left_trace must be 'flux' or 'limit', got {c.left_trace!r}")
        if c.N is None:
            c.N = DEFAULT_N[c.precision]
        if c.N < 1:
            raise ConfigError("N must be >= 1")
        if c.M is not None and c.M < c.N:
            raise ConfigError("M must be >= N")
        if not (c.tol > 0):
            raise ConfigError("tol must be > 0")
        if c.dps < 16:
            raise ConfigError("dps must be >= 16")
        if c.n_grid < 2:
            raise ConfigError("n_grid must be >= 2")
        if c.grid != "default":
            raise ConfigError(f"unknown grid {c.grid!r} (only 'default')")
        _parse_datum(c.datum, c.N)
        _parse_times(c.snapshots)
        single_point = c.subcommand not in ("cost-sweep", "verify")
        if single_point or c.alpha is not None or c.mu is not None:
            c.alpha = 0.0 if c.alpha is None else c.alpha
            c.mu = 0.0 if c.mu is None else c.mu
            try:
                ProblemParams(c.alpha, c.mu, c.T)
            except DomainError as exc:
                raise ConfigError(str(exc)) from None
        elif not (c.T > 0 and math.isfinite(c.T)):
            raise ConfigError("T must be a positive finite number")
        if c.format is None:
            c.format = Path(c.output).suffix.lstrip(".") if c.output else ""
            if c.format not in ("csv", "json"):
                c.format = "json" if c.subcommand in ("simulate", "verify", "biortho", "gaps") else "csv"
        if c.format not in ("csv", "json"):
            raise ConfigError(f"format must be 'csv' or 'json', got {c.format!r}")
        if c.output is None:
            c.output = f"{c.subcommand.replace('-', '_')}.{c.format}"
        return c

    def items(self):
        return [(f.name, getattr(self, f.name)) for f in fields(self)]

    def to_lines(self):
        """The resolved config as ``key=value`` lines (re-parseable by :func:`parse_config_text`)."""
        return [f"{k}={_fmt_value(v)}" for k, v in self.items() if v is not None]

    def to_dict(self):
        return {k: v for k, v in self.items()}


_TYPES = {
    "alpha": float,
    "mu": float,
    "T": float,
    "N": int,
    "M": int,
    "dps": int,
    "tol": float,
    "seed": int,
    "n_grid": int,
}
_KEYS = {f.name for f in fields(RunConfig)}


def _fmt_value(v):
    if isinstance(v, float):
        return repr(v)
    return str(v)


def _coerce(key, raw):
    if key not in _KEYS:
        raise ConfigError(f"unknown configuration key {key!r}")
    if raw is None:
        return None
    kind = _TYPES.get(key)
    if kind is None or not isinstance(raw, str):
        return raw
    try:
        value = kind(raw)
    except ValueError:
        raise ConfigError(f"{key}: cannot parse {raw!r} as {kind.__name__}") from None
    if kind is float and not math.isfinite(value):
        raise ConfigError(f"{key} must be finite")
    return value


def parse_config_text(text):
    """Parse flat ``key=value`` lines ('#' comments and blank lines ignored)."""
    out = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected key=value, got {line!r}")
        key, value = (s.strip() for s in line.split("=", 1))
        out[key] = _coerce(key, value)
    return out


def config_from_text(text, subcommand=None):
    values = parse_config_text(text)
    if subcommand is not None:
        values["subcommand"] = subcommand
    if "subcommand" not in values:
        raise ConfigError("no subcommand given")
    return RunConfig(**values)


def config_from_header(text):
    """Recover the RunConfig embedded in a CSV artifact's leading ``# key=value`` lines."""
    lines = []
    for line in text.splitlines():
        if not line.startswith("#"):
            break
        body = line[1:].strip()
        if "=" in body and not body.startswith("note:"):
            lines.append(body)
    return config_from_text("\n".join(lines))


def _parse_datum(spec, N):
    """'random' (seeded unit vector) or 'mode:m' (Phi_m)."""
    if spec == "random":
        return ("random", None)
    if spec.startswith("mode:"):
        try:
            m = int(spec[5:])
        except ValueError:
            raise ConfigError(f"bad datum {spec!r}") from None
        if not 1 <= m <= N:
            raise ConfigError(f"datum mode {m} outside 1..{N}")
        return ("mode", m)
    raise ConfigError(f"datum must be 'random' or 'mode:m', got {spec!r}")


def _parse_times(spec):
    if not spec:
        return ()
    try:
        return tuple(float(s) for s in spec.split(","))
    except ValueError:
        raise ConfigError(f"bad snapshot list {spec!r}") from None


def make_datum(cfg):
    kind, m = _parse_datum(cfg.datum, cfg.N)
    if kind == "mode":
        return InitialDatum.mode(cfg.N, m)
    return InitialDatum.random_unit(cfg.N, np.random.default_rng(cfg.seed))


# ---------------------------------------------------------------------------
# output


def _json_value(v):
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if v is None:
        return "null"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        v = float(v)
        if not math.isfinite(v):
            return "null"
        return format(v, ".17g")
    return None


def dumps_json(obj, indent=0):
    """Deterministic JSON: sorted keys, floats at 17 significant digits, NaN/inf as null."""
    import json

    pad = "  " * (indent + 1)
    end = "  " * indent
    scalar = _json_value(obj)
    if scalar is not None:
        return scalar
    if isinstance(obj, str):
        return json.dumps(obj)
    if isinstance(obj, dict):
        if not obj:
            return "{}"
        items = [f"{pad}{json.dumps(str(k))}: {dumps_json(obj[k], indent + 1)}" for k in sorted(obj, key=str)]
        return "{\n" + ",\n".join(items) + "\n" + end + "}"
    if isinstance(obj, (list, tuple, np.ndarray)):
        if len(obj) == 0:
            return "[]"
        items = [f"{pad}{dumps_json(v, indent + 1)}" for v in obj]
        return "[\n" + ",\n".join(items) + "\n" + end + "]"
    raise TypeError(f"cannot serialise {type(obj).__name__}")


def _csv_text(cfg, columns, rows, notes=()):
    buf = io.StringIO()
    buf.write(f"# degenctrl {__version__}\n")
    for line in cfg.to_lines():
        buf.write(f"# {line}\n")
    for line in notes:
        buf.write(f"# note: {line}\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    for row in rows:
        w.writerow([_fmt_value(float(v)) if isinstance(v, (float, np.floating)) else v for v in row])
    return buf.getvalue()


def _write(cfg, payload=None, columns=None, rows=None, notes=()):
    """Write the artifact in cfg.format; ``payload`` (dict) for JSON, ``columns``/``rows`` for CSV."""
    if cfg.format == "json":
        doc = {"config": cfg.to_dict(), "version": __version__}
        doc.update(payload or {})
        text = dumps_json(doc) + "\n"
    else:
        text = _csv_text(cfg, columns, rows, notes)
    path = Path(cfg.output)
    if path.parent != Path(""):
        path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(text)
    log.info("wrote %s", path)
    return path


# ---------------------------------------------------------------------------
# subcommands


def _params(cfg):
    return ProblemParams(cfg.alpha, cfg.mu, cfg.T)


def _system_and_family(cfg):
    sys_ = eigen_system(_params(cfg), cfg.N)
    fam = build_family(ExponentSet.from_spectrum(sys_), tol=cfg.tol, precision=cfg.precision, dps=cfg.dps)
    return sys_, fam


def cmd_spectrum(cfg):
    params = _params(cfg)
    sys_ = eigen_system(params, cfg.N)
    d = sys_.derived
    k = np.arange(1, cfg.N + 1)
    left = sys_.trace_left if sys_.trace_left is not None else np.full(cfg.N, np.nan)
    flux = sys_.flux_left if sys_.flux_left is not None else np.full(cfg.N, np.nan)
    cols = ["k", "j", "lambda", "norm_const", "dphi_1", "r_left", "l_left"]
    data = list(zip(k, sys_.zeros.zeros, sys_.lambdas, sys_.norm_consts, sys_.trace_right, left, flux))
    payload = {
        "nu": d.nu,
        "gamma": d.gamma,
        "mu_crit": d.mu_crit,
        "modes": [dict(zip(cols, (int(r[0]),) + tuple(float(v) for v in r[1:]))) for r in data],
    }
    _write(cfg, payload, cols, data)
    return EXIT_OK


def cmd_gaps(cfg):
    rep = gap_report(eigen_system(_params(cfg), cfg.N))
    info = {
        "nu": rep.nu,
        "regime": rep.regime,
        "gap_min": rep.gap_min,
        "gap_max": rep.gap_max,
        "lower_bound": rep.lower_bound,
        "upper_bound": rep.upper_bound,
        "passes_bounds": rep.passes_bounds,
        "n_star": rep.n_star,
        "gamma_max_star": rep.gamma_max_star,
        "passes_asymptotic": rep.passes_asymptotic,
        "uniform_lower": rep.uniform_lower,
        "uniform_upper": rep.uniform_upper,
        "passes_uniform": rep.passes_uniform,
        "gaps": rep.gaps,
    }
    _write(cfg, info, ["k", "gap"], [(i + 1, g) for i, g in enumerate(rep.gaps)])
    return EXIT_OK if rep.ok else EXIT_FAILED


def cmd_biortho(cfg):
    sys_ = eigen_system(_params(cfg), cfg.N)
    fam = build_family(ExponentSet.from_spectrum(sys_), tol=cfg.tol, precision=cfg.precision, dps=cfg.dps,
                       raise_on_failure=False)
    norms = family_norms(fam)
    payload = {
        "lambdas": fam.lambdas,
        "residual": fam.residual,
        "residual_algebraic": fam.residual_algebraic,
        "condition_estimate": fam.condition_estimate,
        "precision": fam.precision,
        "sigma_norms": norms,
    }
    _write(cfg, payload, ["m", "lambda", "sigma_norm"], [(m, fam.lambdas[m], norms[m]) for m in range(len(norms))])
    if not fam.residual <= cfg.tol:
        raise IllConditioned(fam.residual, fam.condition_estimate, cfg.tol)
    return EXIT_OK


def cmd_control(cfg):
    sys_, fam = _system_and_family(cfg)
    u0 = make_datum(cfg)
    sig = synthesize(sys_, fam, u0, cfg.side, n_grid=cfg.n_grid, left_trace=cfg.left_trace)
    res = moment_residuals(sys_, sig, u0, quadrature=False)
    payload = sig.to_dict()
    payload.update(
        {
            "datum": u0.coeffs,
            "moment_residual": res.max_abs,
            "family_residual": fam.residual,
            "t": sig.t,
            "K": sig.K_grid,
            "H": sig.H_grid,
        }
    )
    _write(cfg, payload, ["t", "K", "H"], zip(sig.t, sig.K_grid, sig.H_grid))
    return EXIT_OK


def cmd_simulate(cfg):
    sys_, fam = _system_and_family(cfg)
    u0 = make_datum(cfg)
    sig = synthesize(sys_, fam, u0, cfg.side, n_grid=cfg.n_grid, left_trace=cfg.left_trace)
    times = _parse_times(cfg.snapshots)
    res = simulate(sys_, cfg.side, sig, u0, M=cfg.M, snapshot_times=times)
    payload = res.to_dict()
    payload["snapshots"] = {repr(t): {"u": v} for t, v in res.snapshots.items()}
    if res.x is not None:
        payload["x"] = res.x
    rows = [(k + 1, a, b) for k, (a, b) in enumerate(zip(res.beta_T, res.beta_T_lift))]
    _write(cfg, payload, ["k", "beta_T", "beta_T_lift"], rows)
    return EXIT_OK


def cmd_cost_sweep(cfg):
    grid = default_grid()
    if cfg.alpha is not None:
        grid = [p for p in grid if p.alpha == cfg.alpha]
    if cfg.mu is not None:
        grid = [p for p in grid if p.mu == cfg.mu]
    if not grid:
        raise ConfigError("alpha/mu filters select no point of the default grid")
    reports = sweep(grid, cfg.side, cfg.N, precision=cfg.precision, dps=cfg.dps, seed=cfg.seed, tol=cfg.tol,
                    left_trace=cfg.left_trace)
    payload = {
        "reports": [r.to_dict() for r in reports],
        "sandwich": sandwich_ratios(reports),
        "provenance": {"N": cfg.N, "precision": cfg.precision, "seed": cfg.seed,
                       "batch": [d.tag for d in default_batch(cfg.N, cfg.seed)]},
    }
    rows = []
    skipped = []
    for r in reports:
        if r.status == "skipped":
            skipped.append(f"skipped alpha={r.params.alpha!r} mu={r.params.mu!r} T={r.params.T!r}: {r.message}")
            continue
        row = r.row()
        rows.append([row[c] for c in CSV_COLUMNS])
    _write(cfg, payload, CSV_COLUMNS, rows, notes=skipped)
    n_err = sum(r.status == "error" for r in reports)
    return EXIT_NUMERIC if n_err else EXIT_OK


def verify_grid(cfg):
    """The point given by (alpha, mu), else the 3 x 3 grid alpha in {0, .3, .6}, mu in {0, -1, -5}."""
    if cfg.alpha is not None:
        return [ProblemParams(cfg.alpha, cfg.mu, cfg.T)]
    return [ProblemParams(a, m, cfg.T) for a in (0.0, 0.3, 0.6) for m in (0.0, -1.0, -5.0)]


def verify_point(params, cfg):
    """Run the property suite at one parameter point; returns a list of check dicts."""
    checks = []

    def add(name, value, tol, ok=None):
        ok = (value <= tol) if ok is None else ok
        checks.append({"check": name, "value": value, "tol": tol, "ok": bool(ok)})

    sys_ = eigen_system(params, cfg.N)
    gr = gap_report(sys_)
    add("gap_certificates", gr.gap_min, gr.lower_bound, ok=gr.ok)
    n_ortho = min(cfg.N, 20)
    G = eigen_gram(sys_.truncated(n_ortho) if n_ortho < cfg.N else sys_)
    add("orthonormality", float(np.max(np.abs(G - np.eye(n_ortho)))), ORTHO_TOL)
    worst_r, worst_l = 0.0, 0.0
    for k in range(1, min(VERIFY_MODES, cfg.N) + 1):
        r, l = projection_identities_check(sys_, k)
        worst_r = max(worst_r, abs(r))
        if l is not None:
            worst_l = max(worst_l, abs(l))
    add("projection_right", worst_r, PROJECTION_TOL)
    if sys_.flux_left is not None:
        add("projection_left", worst_l, PROJECTION_TOL)

    fam = build_family(ExponentSet.from_spectrum(sys_), tol=cfg.tol, precision=cfg.precision, dps=cfg.dps,
                       raise_on_failure=False)
    add("biorthogonality", fam.residual, cfg.tol)
    u0 = make_datum(cfg)
    sides = [RIGHT] + ([LEFT] if derive_params(params).root > 0 else [])
    for side in sides:
        sig = synthesize(sys_, fam, u0, side, n_grid=cfg.n_grid, left_trace=cfg.left_trace)
        res = moment_residuals(sys_, sig, u0, quadrature=False)
        add(f"moments_{side}", res.max_abs, MOMENT_TOL * u0.norm)
        traj = simulate(sys_, side, sig, u0, M=cfg.M)
        add(f"two_path_{side}", traj.path_disagreement, PATH_TOL)
    return checks


def cmd_verify(cfg):
    t0 = time.perf_counter()
    points = []
    all_ok = True
    for params in verify_grid(cfg):
        try:
            checks = verify_point(params, cfg)
            error = None
        except (IllConditioned, DuplicateExponent, BracketError, FloatingPointError, ArithmeticError) as exc:
            checks, error = [], f"{type(exc).__name__}: {exc}"
        ok = error is None and all(c["ok"] for c in checks)
        all_ok &= ok
        points.append({"alpha": params.alpha, "mu": params.mu, "T": params.T, "ok": ok, "error": error,
                       "checks": checks})
        status = "ok" if ok else "FAIL"
        failed = ", ".join(c["check"] for c in checks if not c["ok"]) or (error or "")
        print(f"verify alpha={params.alpha!r} mu={params.mu!r} T={params.T!r}: {status} {failed}".rstrip())
    elapsed = time.perf_counter() - t0
    rows = [
        (p["alpha"], p["mu"], p["T"], c["check"], c["value"], c["tol"], c["ok"]) for p in points for c in p["checks"]
    ]
    _write(cfg, {"ok": all_ok, "points": points, "elapsed_seconds": elapsed},
           ["alpha", "mu", "T", "check", "value", "tol", "ok"], rows)
    print(f"verify: {'PASS' if all_ok else 'FAIL'} ({len(points)} points, {elapsed:.1f} s)")
    return EXIT_OK if all_ok else EXIT_FAILED


COMMANDS = {
    "spectrum": cmd_spectrum,
    "gaps": cmd_gaps,
    "biortho": cmd_biortho,
    "control": cmd_control,
    "simulate": cmd_simulate,
    "cost-sweep": cmd_cost_sweep,
    "verify": cmd_verify,
}


# ---------------------------------------------------------------------------
# argument parsing


def build_parser():
    parser = argparse.ArgumentParser(prog="degenctrl", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"degenctrl {__version__}")
    sub = parser.add_subparsers(dest="subcommand", required=True)
    for name in SUBCOMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", help="flat key=value file; flags override its values")
        p.add_argument("--alpha", type=str)
        p.add_argument("--mu", type=str)
        p.add_argument("--T", type=str)
        p.add_argument("--side", choices=(RIGHT, LEFT))
        p.add_argument("--N", type=str)
        p.add_argument("--M", type=str)
        p.add_argument("--precision", choices=("base", "extended"))
        p.add_argument("--dps", type=str, help="decimal digits of the extended backend")
        p.add_argument("--tol", type=str, help="biorthogonality residual tolerance")
        p.add_argument("--seed", type=str)
        p.add_argument("--datum", help="'random' or 'mode:m'")
        p.add_argument("--left-trace", dest="left_trace", choices=("flux", "limit"))
        p.add_argument("--snapshots", help="comma-separated snapshot times (simulate)")
        p.add_argument("--n-grid", dest="n_grid", type=str)
        p.add_argument("--grid", help="sweep grid (cost-sweep); only 'default'")
        p.add_argument("--output", "-o")
        p.add_argument("--format", choices=("csv", "json"))
        p.add_argument("-v", "--verbose", action="store_true")
    return parser


def resolve_config(argv):
    """Parse ``argv`` into a resolved RunConfig (raises ConfigError / SystemExit)."""
    args = build_parser().parse_args(argv)
    values = {}
    if args.config:
        try:
            text = Path(args.config).read_text()
        except OSError as exc:
            raise ConfigError(f"cannot read config file: {exc}") from None
        values.update(parse_config_text(text))
    values.pop("subcommand", None)
    for key in _KEYS - {"subcommand"}:
        v = getattr(args, key, None)
        if v is not None:
            values[key] = _coerce(key, v)
    cfg = RunConfig(subcommand=args.subcommand, **values)
    return cfg.resolved(), args.verbose


def main(argv=None):
    argv = sys.argv[1:] if argv is None else list(argv)
    try:
        cfg, verbose = resolve_config(argv)
    except ConfigError as exc:
        print(f"degenctrl: invalid configuration: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except SystemExit as exc:  # argparse errors
        code = exc.code if isinstance(exc.code, int) else EXIT_CONFIG
        return EXIT_CONFIG if code not in (0,) else EXIT_OK
    logging.basicConfig(level=logging.INFO if verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return COMMANDS[cfg.subcommand](cfg)
    except (ConfigError, CriticalPotentialError) as exc:
        print(f"degenctrl: invalid configuration: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (IllConditioned, DuplicateExponent, BracketError, ArithmeticError) as exc:
        print(f"degenctrl: numerical failure: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
