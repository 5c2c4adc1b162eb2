"""Command-line driver: configs in, CSVs and a JSON manifest out.

Subcommands map to scenario kinds:

    steady  -> steady            sweep  -> blowup_scan
    linear  -> linear_decay      evolve -> nonlinear_decay
    audit   -> energy_audit      equiv  -> norm_equivalence

Exit status: 0 all checks pass, 1 a check failed, 2 numerical failure,
3 configuration error.
"""

from __future__ import annotations

import argparse
import concurrent.futures as cf
import csv
import json
import math
import os
import sys
import time
import warnings
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from . import __version__
from .analysis import (CSV_COLUMNS, DiagnosticsRecorder, decay_envelope_ratio,
                       fit_decay_rate, hypothesis_check, norm_equivalence_report,
                       small_data_monitor)
from .core import (ConvergenceError, NegativeDensityError, Params,
                   UnresolvedLayerError, make_grid)
from .dynamics import (default_dt, initial_state, make_initial_perturbation,
                       positivity_report, run)
from .steady import (boundary_asymptotics_sweep, check_steady_estimates,
                     check_theorem_a, solve_pb)

__all__ = ["ConfigError", "Scenario", "RunManifest", "parse_config",
           "run_scenario", "emit_diagnostics_csv", "main", "KINDS"]

KINDS = ("steady", "linear_decay", "nonlinear_decay", "blowup_scan",
         "energy_audit", "norm_equivalence")
SUBCOMMANDS = {"steady": "steady", "sweep": "blowup_scan",
               "linear": "linear_decay", "evolve": "nonlinear_decay",
               "audit": "energy_audit", "equiv": "norm_equivalence"}

EXIT_OK, EXIT_CHECK, EXIT_NUMERIC, EXIT_CONFIG = 0, 1, 2, 3

_PARAM_KEYS = ("epsilon", "m0", "phi0_plus", "phi0_minus", "gamma_eps",
               "gamma_max", "theta")
_KEYS = set(_PARAM_KEYS) | {
    "kind", "gamma_factor", "n_cells", "T", "dt", "amplitude", "n_modes",
    "seed", "fill", "sweep", "output_dir", "window", "audit_dynamics",
    "audit_skip", "samples", "doublings", "tol"}

_DEFAULT_T = {"linear_decay": 1.4, "nonlinear_decay": 1.4, "energy_audit": 0.1}
_DEFAULT_SWEEP = {"blowup_scan": [1e-2, 1e-3, 1e-4, 1e-5],
                  "steady": [1e-2, 1e-3, 1e-4],
                  "linear_decay": [1e-2, 1e-3, 1e-4],
                  "nonlinear_decay": [1e-2, 1e-3, 1e-4]}


class ConfigError(ValueError):
    """Invalid configuration; the message names the offending key."""


@dataclass
class Scenario:
    kind: str
    params: Params
    n_cells: int = 400
    T: float = 0.0
    dt: Optional[float] = None
    amplitude: float = 0.05
    n_modes: int = 4
    seed: int = 0
    fill: float = 0.75
    sweep: Optional[list] = None
    gamma_factor: Optional[float] = None
    output_dir: str = "."
    window: Optional[list] = None
    audit_dynamics: str = "linearized"
    audit_skip: float = 0.02
    samples: int = 100
    doublings: int = 3
    tol: float = 1e-12
    warnings: list = field(default_factory=list)

    @property
    def theta(self) -> float:
        return self.params.theta

    def eps_values(self) -> list:
        return list(self.sweep) if self.sweep else [self.params.epsilon]

    def params_for(self, eps: float) -> Params:
        if self.sweep is None:
            return self.params
        return self.params.replace(epsilon=eps,
                                   gamma_eps=self.gamma_factor * math.sqrt(eps))

    def dt_for(self, eps: float) -> float:
        return self.dt if self.dt is not None else default_dt(eps)

    def snapshot(self) -> dict:
        p = self.params
        out = {k: getattr(p, k) for k in _PARAM_KEYS}
        for k in ("kind", "n_cells", "T", "dt", "amplitude", "n_modes", "seed",
                  "fill", "sweep", "gamma_factor", "window", "audit_dynamics",
                  "audit_skip", "samples", "doublings", "tol"):
            out[k] = getattr(self, k)
        return out


def _num(cfg, key, typ=float, positive=True):
    v = cfg[key]
    if typ is int:
        if isinstance(v, bool) or not isinstance(v, int):
            raise ConfigError(f"{key}: expected an integer, got {v!r}")
    elif isinstance(v, bool) or not isinstance(v, (int, float)):
        raise ConfigError(f"{key}: expected a number, got {v!r}")
    if positive and not v > 0:
        raise ConfigError(f"{key}: must be > 0, got {v!r}")
    return typ(v)


def parse_config(text, kind: Optional[str] = None) -> Scenario:
    """Validate a JSON document (string or dict) into a :class:`Scenario`."""
    if isinstance(text, (str, bytes)):
        try:
            cfg = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"malformed JSON: {exc}") from None
    else:
        cfg = dict(text)
    if not isinstance(cfg, dict):
        raise ConfigError("top level must be an object")
    unknown = sorted(set(cfg) - _KEYS)
    if unknown:
        raise ConfigError(f"unknown key(s): {', '.join(unknown)}")
    if kind is not None:
        if "kind" in cfg and cfg["kind"] != kind:
            raise ConfigError(f"kind: config says {cfg['kind']!r}, command wants {kind!r}")
        cfg["kind"] = kind
    k = cfg.get("kind")
    if k not in KINDS:
        raise ConfigError(f"kind: must be one of {', '.join(KINDS)}, got {k!r}")

    sweep = cfg.get("sweep")
    if sweep is None and k in ("blowup_scan",):
        sweep = list(_DEFAULT_SWEEP[k])
    if sweep is not None:
        if (not isinstance(sweep, list) or not sweep
                or not all(isinstance(e, (int, float)) and not isinstance(e, bool)
                           and e > 0 for e in sweep)):
            raise ConfigError("sweep: expected a nonempty list of positive numbers")
        sweep = sorted((float(e) for e in sweep), reverse=True)
        if len(set(sweep)) != len(sweep):
            raise ConfigError("sweep: duplicate epsilon values")
        if k == "blowup_scan" and len(sweep) < 2:
            raise ConfigError("sweep: blowup_scan needs at least two values")
        if "gamma_eps" in cfg:
            raise ConfigError("gamma_eps: use gamma_factor with a sweep")
    if "epsilon" not in cfg and sweep is None:
        raise ConfigError("epsilon: required")
    eps = _num(cfg, "epsilon") if "epsilon" in cfg else sweep[0]

    gf = _num(cfg, "gamma_factor") if "gamma_factor" in cfg else 6.0
    pkw = {"epsilon": eps}
    for key in ("m0", "phi0_plus", "gamma_max", "theta"):
        if key in cfg:
            pkw[key] = _num(cfg, key, positive=key != "phi0_plus")
    if "phi0_minus" in cfg:
        pkw["phi0_minus"] = _num(cfg, "phi0_minus", positive=False)
    if "theta" in pkw and not 0 < pkw["theta"] < 1:
        raise ConfigError(f"theta: must lie in (0, 1), got {pkw['theta']}")
    pkw["gamma_eps"] = (_num(cfg, "gamma_eps") if "gamma_eps" in cfg
                        else gf * math.sqrt(eps))
    try:
        params = Params(**pkw)
        for e in sweep or ():
            params.replace(epsilon=e, gamma_eps=gf * math.sqrt(e))
    except ValueError as exc:
        raise ConfigError(f"params: {exc}") from None

    s = Scenario(kind=k, params=params, sweep=sweep, gamma_factor=gf)
    if "n_cells" in cfg:
        s.n_cells = _num(cfg, "n_cells", int)
        if s.n_cells < 32 or s.n_cells % 2:
            raise ConfigError("n_cells: must be even and >= 32")
    s.T = _num(cfg, "T") if "T" in cfg else _DEFAULT_T.get(k, 0.0)
    if "dt" in cfg:
        s.dt = _num(cfg, "dt")
    if s.T and s.dt is not None:
        for e in s.eps_values():
            n = round(s.T / s.dt)
            if abs(n * s.dt - s.T) > 1e-9 * s.T:
                raise ConfigError(f"dt: T={s.T} is not a whole number of steps")
    if "amplitude" in cfg:
        s.amplitude = _num(cfg, "amplitude", positive=False)
        if s.amplitude < 0:
            raise ConfigError("amplitude: must be >= 0")
    for key in ("n_modes", "samples", "doublings"):
        if key in cfg:
            setattr(s, key, _num(cfg, key, int))
    if "seed" in cfg:
        s.seed = _num(cfg, "seed", int, positive=False)
    if "fill" in cfg:
        s.fill = _num(cfg, "fill")
        if not s.fill < 1:
            raise ConfigError("fill: must lie in (0, 1)")
    if "tol" in cfg:
        s.tol = _num(cfg, "tol")
        if not 1e-14 <= s.tol <= 1e-6:
            raise ConfigError("tol: must lie in [1e-14, 1e-6]")
    if "window" in cfg:
        w = cfg["window"]
        if (not isinstance(w, list) or len(w) != 2
                or not all(isinstance(v, (int, float)) for v in w) or not w[0] < w[1]):
            raise ConfigError("window: expected [t_start, t_end] with t_start < t_end")
        s.window = [float(w[0]), float(w[1])]
    if "audit_dynamics" in cfg:
        if cfg["audit_dynamics"] not in ("linearized", "nonlinear"):
            raise ConfigError("audit_dynamics: expected 'linearized' or 'nonlinear'")
        s.audit_dynamics = cfg["audit_dynamics"]
    if "audit_skip" in cfg:
        s.audit_skip = _num(cfg, "audit_skip", positive=False)
    if "output_dir" in cfg:
        s.output_dir = str(cfg["output_dir"])

    if k in ("linear_decay", "nonlinear_decay"):
        for e in s.eps_values():
            hc = hypothesis_check(s.params_for(e))
            if not hc.robin_ok:
                s.warnings.append(
                    f"eps={e:g}: gamma_eps/sqrt(eps)={hc.gamma_ratio:.4g} below "
                    f"the Robin threshold {hc.threshold:.4g}; decay is not covered")
    return s


# -- outputs ------------------------------------------------------------------

def _fmt(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return str(int(v))
    return format(float(v), ".17g")


def emit_diagnostics_csv(records, path) -> Path:
    """Write one row per record with 17 significant digits."""
    path = Path(path)
    try:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(CSV_COLUMNS)
            for r in records:
                w.writerow([_fmt(getattr(r, c)) for c in CSV_COLUMNS])
    except OSError as exc:
        raise OSError(f"cannot write diagnostics to {path}: {exc}") from exc
    return path


def _write_rows(path: Path, header, rows) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([_fmt(v) for v in row])


def _jsonable(o):
    if isinstance(o, dict):
        return {str(k): _jsonable(v) for k, v in o.items()}
    if isinstance(o, (list, tuple)):
        return [_jsonable(v) for v in o]
    if isinstance(o, (np.bool_, bool)):
        return bool(o)
    if isinstance(o, (np.integer, int)):
        return int(o)
    if isinstance(o, (np.floating, float)):
        f = float(o)
        return f if math.isfinite(f) else str(f)
    return o


def _dump(obj) -> str:
    return json.dumps(_jsonable(obj), sort_keys=True, indent=2) + "\n"


@dataclass
class RunManifest:
    config: dict
    version: str
    resolutions: dict
    wall_clock: float = 0.0
    checks: dict = field(default_factory=dict)
    outputs: list = field(default_factory=list)
    results: dict = field(default_factory=dict)
    warnings: list = field(default_factory=list)
    errors: list = field(default_factory=list)
    exit_code: int = EXIT_OK

    @property
    def ok(self) -> bool:
        return self.exit_code == EXIT_OK

    def to_json(self) -> str:
        return _dump(asdict(self))


# -- per-epsilon jobs (module level so worker processes can pickle them) ------

def _steady_job(s: Scenario, eps: float) -> dict:
    prm = s.params_for(eps)
    grid = make_grid(s.n_cells, eps, prm.derived.M)
    t0 = time.perf_counter()
    ss = solve_pb(prm, grid, tol=s.tol)
    secs = time.perf_counter() - t0
    ta = check_theorem_a(ss)
    est = check_steady_estimates(ss)
    report = {
        "epsilon": eps, "gamma_eps": prm.gamma_eps, "residual": ss.residual,
        "iterations": ss.iterations, "solve_seconds": secs,
        "theorem_a": dict(asdict(ta), first_integral_ok=ta.first_integral_ok,
                          all_ok=ta.all_ok),
        "estimates": {c.name: {"lhs": c.lhs, "rhs": c.rhs, "margin": c.margin,
                               "ok": c.ok} for c in est.checks},
    }
    checks = {"residual": ss.residual <= max(s.tol, 1e-12),
              "theorem_a": ta.all_ok, "estimates": est.all_ok}
    return {"report": report, "checks": checks}


def _decay_job(s: Scenario, eps: float, mode: str) -> dict:
    prm = s.params_for(eps)
    grid = make_grid(s.n_cells, eps, prm.derived.M)
    ss = solve_pb(prm, grid, tol=s.tol)
    pert = make_initial_perturbation(ss, s.amplitude, s.n_modes, s.seed,
                                     theta=prm.theta, fill=s.fill)
    dt = s.dt_for(eps)
    rec = DiagnosticsRecorder()
    t0 = time.perf_counter()
    traj = run(initial_state(ss, pert, mode), s.T, dt, rec)
    secs = time.perf_counter() - t0
    recs = traj.records
    I = [r.I for r in recs]
    window = tuple(s.window) if s.window else (0.1 * s.T, s.T)
    fit = fit_decay_rate(traj.times, I, window)
    env = decay_envelope_ratio(traj.times, I, fit)
    ids_ok = all(r.identities.ok() for r in recs)
    hc = hypothesis_check(prm)
    res = {"epsilon": eps, "dt": dt, "run_seconds": secs, "I0": pert.I0,
           "alpha_fit": fit.alpha_fit, "r_squared": fit.r_squared,
           "window": list(fit.window), "envelope_ratio": env,
           "hypotheses_ok": hc.linear_ok if mode == "linearized" else hc.ok,
           "decay_bound_ok": all(r.decay_bound_ok for r in recs),
           "identities_ok": ids_ok}
    checks = {"r_squared": fit.r_squared >= 0.999, "envelope": env <= 1.05,
              "identities": ids_ok}
    if mode == "nonlinear":
        sd = small_data_monitor(recs, prm)
        pos = positivity_report(traj)
        m_n, m_p = np.asarray(traj.mass_n), np.asarray(traj.mass_p)
        drift = max(float(np.max(np.abs(m_n - m_n[0]))) / abs(m_n[0]),
                    float(np.max(np.abs(m_p - m_p[0]))) / abs(m_p[0]))
        res.update(small_data=dict(asdict(sd), ok=sd.ok), min_n=pos.min_n,
                   min_p=pos.min_p, mass_drift=drift)
        checks.update(small_data=sd.ok, positivity=pos.ok, conservation=drift <= 1e-13)
    return {"records": recs, "result": res, "checks": checks}


def _audit_job(s: Scenario, dt: float) -> dict:
    prm = s.params
    grid = make_grid(s.n_cells, prm.epsilon, prm.derived.M)
    ss = solve_pb(prm, grid, tol=s.tol)
    pert = make_initial_perturbation(ss, s.amplitude, s.n_modes, s.seed,
                                     theta=prm.theta, fill=s.fill)
    rec = DiagnosticsRecorder(dh_residual=True)
    traj = run(initial_state(ss, pert, s.audit_dynamics), s.T, dt, rec)
    return {"records": traj.records}


def _window_max(recs, t_min, attr):
    # interior records only: the end points use one-sided differences
    vals = [abs(getattr(r, attr)) for r in recs[1:-1] if r.t >= t_min - 1e-12]
    return max(vals) if vals else math.nan


def _workers() -> int:
    env = os.environ.get("PNP_LAYER_THREADS", "").strip()
    if not env:
        return 1
    try:
        return max(1, int(env))
    except ValueError:
        raise ConfigError(f"PNP_LAYER_THREADS: expected an integer, got {env!r}") from None


def _map_eps(fn, s: Scenario, eps_list, *args) -> list:
    """Run ``fn(s, eps, *args)`` per eps; results come back in input order."""
    n = min(_workers(), len(eps_list))
    if n <= 1:
        return [fn(s, e, *args) for e in eps_list]
    with cf.ProcessPoolExecutor(max_workers=n) as ex:
        futs = [ex.submit(fn, s, e, *args) for e in eps_list]
        return [f.result() for f in futs]


def _tag(eps: float) -> str:
    return f"eps{eps:.0e}".replace("+", "")


# -- scenario runners -----------------------------------------------------------

def _run_steady(s, out, m):
    eps_list = s.eps_values()
    for eps, job in zip(eps_list, _map_eps(_steady_job, s, eps_list)):
        name = f"steady_report_{_tag(eps)}.json"
        (out / name).write_text(_dump(job["report"]))
        m.outputs.append(name)
        m.results[_tag(eps)] = job["report"]
        for k, v in job["checks"].items():
            m.checks[f"{_tag(eps)}.{k}"] = v


def _run_blowup(s, out, m):
    rep = boundary_asymptotics_sweep(s.params, s.sweep,
                                     gamma_rule=lambda e: s.gamma_factor * math.sqrt(e),
                                     n_cells=s.n_cells, tol=s.tol)
    rows = zip(rep.eps, rep.psi_boundary, rep.grad_boundary, rep.scaled_gradient,
               rep.grad_sq_integral)
    _write_rows(out / "blowup.csv",
                ["epsilon", "psi_1", "psi_x_1", "sqrt_eps_psi_x_1", "int_psi_x_sq"], rows)
    m.outputs.append("blowup.csv")
    summary = dict(asdict(rep), extrapolation_defect=rep.extrapolation_defect,
                   conjecture_defect=rep.conjecture_defect)
    (out / "blowup_summary.json").write_text(_dump(summary))
    m.outputs.append("blowup_summary.json")
    m.results["blowup"] = summary
    m.checks["slope"] = abs(rep.slope + 0.5) <= 0.05
    m.checks["monotone"] = rep.monotone_ok
    m.checks["bounded"] = rep.bounded_ok


def _run_decay(s, out, m, mode):
    eps_list = s.eps_values()
    jobs = _map_eps(_decay_job, s, eps_list, mode)
    alphas = []
    for eps, job in zip(eps_list, jobs):
        name = f"decay_{_tag(eps)}.csv"
        emit_diagnostics_csv(job["records"], out / name)
        m.outputs.append(name)
        m.results[_tag(eps)] = job["result"]
        alphas.append(job["result"]["alpha_fit"])
        for k, v in job["checks"].items():
            m.checks[f"{_tag(eps)}.{k}"] = v
    spread = (max(alphas) - min(alphas)) / float(np.mean(alphas))
    _write_rows(out / "alpha_summary.csv", ["epsilon", "alpha_fit", "r_squared"],
                [(e, j["result"]["alpha_fit"], j["result"]["r_squared"])
                 for e, j in zip(eps_list, jobs)])
    m.outputs.append("alpha_summary.csv")
    m.results["alpha_spread"] = spread
    if len(alphas) > 1:
        m.checks["alpha_spread"] = spread < 0.2


def _run_audit(s, out, m):
    dt = s.dt_for(s.params.epsilon)
    coarse, fine = (_audit_job(s, d)["records"] for d in (dt, dt / 2))
    summary = {}
    for label, recs in (("dt", coarse), ("dt_half", fine)):
        name = f"audit_{label}.csv"
        emit_diagnostics_csv(recs, out / name)
        m.outputs.append(name)
        summary[label] = {
            "residual_bar": _window_max(recs, s.audit_skip, "elaw_residual"),
            "residual_dh": _window_max(recs, s.audit_skip, "elaw_residual_dh"),
            "dh_equation": max((r.dh_residual for r in recs[1:]
                                if r.t >= s.audit_skip - 1e-12), default=math.nan),
            "identities_ok": all(r.identities.ok() for r in recs),
            "decay_bound_ok": all(r.decay_bound_ok for r in recs),
        }
    for key in ("residual_bar", "residual_dh"):
        ratio = summary["dt_half"][key] / summary["dt"][key]
        summary[f"{key}_ratio"] = ratio
        m.checks[f"{key}_halves"] = 0.35 <= ratio <= 0.65
    nl = [r.nl_identity for r in coarse]
    summary["nl_identity_defect"] = max(abs(a - b) for a, b in nl)
    m.checks["identities"] = summary["dt"]["identities_ok"] and summary["dt_half"]["identities_ok"]
    m.results["audit"] = summary


def _run_equiv(s, out, m):
    prm = s.params
    rows = []
    lo, hi = math.inf, 0.0
    for j in range(s.doublings + 1):
        n = s.n_cells * 2 ** j
        grid = make_grid(n, prm.epsilon, prm.derived.M)
        x = grid.nodes
        for seed in range(s.samples):
            rng = np.random.default_rng([s.seed, seed])
            k = np.arange(1, s.n_modes + 1)
            f = []
            for _ in range(2):
                a = rng.standard_normal(len(k)) / k
                v = np.cos(0.5 * math.pi * np.outer(x + 1.0, k)) @ a
                v -= 0.5 * grid.trapezoid(v)
                v -= 0.5 * grid.trapezoid(v)
                f.append(v)
            rep = norm_equivalence_report(grid, f[0], f[1])
            rows.append((n, seed, rep.ratio_delta, rep.ratio_eta))
            lo = min(lo, rep.ratio_delta, rep.ratio_eta)
            hi = max(hi, rep.ratio_delta, rep.ratio_eta)
    _write_rows(out / "norm_equivalence.csv",
                ["n_cells", "seed", "ratio_delta", "ratio_eta"], rows)
    m.outputs.append("norm_equivalence.csv")
    m.results["equivalence"] = {"min_ratio": lo, "max_ratio": hi}
    m.checks["upper"] = hi <= 1.0 + 1e-9
    m.checks["lower_floor"] = lo >= 0.1


_RUNNERS = {"steady": _run_steady, "blowup_scan": _run_blowup,
            "linear_decay": lambda s, o, m: _run_decay(s, o, m, "linearized"),
            "nonlinear_decay": lambda s, o, m: _run_decay(s, o, m, "nonlinear"),
            "energy_audit": _run_audit, "norm_equivalence": _run_equiv}


def run_scenario(s: Scenario) -> RunManifest:
    """Execute a scenario, write its outputs and ``manifest.json``."""
    out = Path(s.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    res = {"n_cells": s.n_cells}
    if s.kind in _DEFAULT_T:
        res.update(T=s.T, dt={_tag(e): s.dt_for(e) for e in s.eps_values()})
    m = RunManifest(config=s.snapshot(), version=__version__, resolutions=res,
                    warnings=list(s.warnings))
    t0 = time.perf_counter()
    try:
        _RUNNERS[s.kind](s, out, m)
    except (ConvergenceError, NegativeDensityError, FloatingPointError) as exc:
        m.errors.append({"type": type(exc).__name__, "message": str(exc),
                         "t": getattr(exc, "t", None)})
        m.exit_code = EXIT_NUMERIC
    except (UnresolvedLayerError, ConfigError) as exc:
        m.errors.append({"type": type(exc).__name__, "message": str(exc)})
        m.exit_code = EXIT_CONFIG
    except ValueError as exc:
        m.errors.append({"type": type(exc).__name__, "message": str(exc)})
        m.exit_code = EXIT_NUMERIC
    m.wall_clock = time.perf_counter() - t0
    if m.exit_code == EXIT_OK and not all(m.checks.values()):
        m.exit_code = EXIT_CHECK
    (out / "manifest.json").write_text(m.to_json())
    return m


# -- entry point --------------------------------------------------------------

def _build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="pnplayer", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=f"pnplayer {__version__}")
    sub = p.add_subparsers(dest="command", required=True)
    for name, kind in SUBCOMMANDS.items():
        sp = sub.add_parser(name, help=f"run a {kind} scenario")
        sp.add_argument("--config", help="JSON config file")
        sp.add_argument("--out", help="output directory (overrides output_dir)")
        sp.add_argument("--epsilon", type=float, help="override epsilon")
        sp.add_argument("--seed", type=int, help="override the perturbation seed")
    return p


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    kind = SUBCOMMANDS[args.command]
    try:
        cfg = {}
        if args.config:
            try:
                cfg = json.loads(Path(args.config).read_text())
            except OSError as exc:
                raise ConfigError(f"cannot read config {args.config}: {exc}") from None
            except json.JSONDecodeError as exc:
                raise ConfigError(f"malformed JSON in {args.config}: {exc}") from None
            if not isinstance(cfg, dict):
                raise ConfigError("top level must be an object")
        if args.epsilon is not None:
            cfg["epsilon"] = args.epsilon
            cfg.pop("sweep", None)
            if kind == "blowup_scan":
                raise ConfigError("epsilon: sweep scenarios take a sweep list")
        if args.seed is not None:
            cfg["seed"] = args.seed
        if args.out is not None:
            cfg["output_dir"] = args.out
        if "sweep" not in cfg and "epsilon" not in cfg and kind in _DEFAULT_SWEEP:
            cfg["sweep"] = list(_DEFAULT_SWEEP[kind])
        scenario = parse_config(cfg, kind=kind)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    for w in scenario.warnings:
        warnings.warn(w, stacklevel=1)
        print(f"warning: {w}", file=sys.stderr)
    m = run_scenario(scenario)
    failed = sorted(k for k, v in m.checks.items() if not v)
    for e in m.errors:
        print(f"error: {e['type']}: {e['message']}", file=sys.stderr)
    status = {EXIT_OK: "all checks pass", EXIT_CHECK: f"failed: {', '.join(failed)}",
              EXIT_NUMERIC: "numerical failure", EXIT_CONFIG: "configuration error"}
    print(f"{kind}: {status[m.exit_code]} ({len(m.checks)} checks, "
          f"{m.wall_clock:.2f} s) -> {Path(scenario.output_dir) / 'manifest.json'}")
    return m.exit_code


if __name__ == "__main__":          # pragma: no cover
    sys.exit(main())
