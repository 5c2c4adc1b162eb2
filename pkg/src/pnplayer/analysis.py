"""Antiderivative transforms, energy-law audits, negative norms and decay fits.

For a perturbation (delta~, eta~) with zero mean, D and H are the running
integrals from -1, d and h their half-integrals and Dbar = D - d,
Hbar = H - h. The monitored energy is

    I = 1/2 int (Dbar^2 + Hbar^2) + d^2 + h^2  (= 1/2 int (D^2 + H^2)).

Energy laws come in two equivalent forms, one in (D, H) and one in the
mean-split variables. ``audit_energy_law`` compares a centered difference of
the energy along a trajectory with the right side assembled from one state.
The boundary slope of phi~ enters through the closed form -d / ((1 + gamma) eps).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np
from scipy import stats

from .core import (Grid, Params, box_gradient, box_load, cumulative_integral,
                   derivative, solve_tridiagonal, trapezoid)
from .dynamics import solve_poisson_robin

__all__ = [
    "DhDecomposition", "decompose", "energy", "energy_full", "h_minus1_norm",
    "NormEquivalenceReport", "norm_equivalence_report", "PerturbationFields",
    "perturbation_fields", "potential_consistency", "IdentityDefects", "identity_defects",
    "nonlinear_term_defect", "energy_law_rhs", "decay_bound", "EnergyAudit",
    "audit_energy_law", "dh_equation_residual", "DecayFit", "fit_decay_rate",
    "decay_envelope_ratio", "HypothesisReport", "hypothesis_check",
    "SmallDataReport", "small_data_monitor", "DiagnosticsRecord",
    "DiagnosticsRecorder", "CSV_COLUMNS", "MODES",
]

MODES = ("thm1", "thm2", "thm5_dh", "thm5_bar")
_LINEAR_MODES = ("thm1", "thm2")


# -- transforms ---------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class DhDecomposition:
    D: np.ndarray
    H: np.ndarray
    Dbar: np.ndarray
    Hbar: np.ndarray
    d: float
    h: float
    grid: Grid


def decompose(grid: Grid, delta_tilde, eta_tilde) -> DhDecomposition:
    D = cumulative_integral(grid, delta_tilde)
    H = cumulative_integral(grid, eta_tilde)
    d = 0.5 * trapezoid(grid, D)
    h = 0.5 * trapezoid(grid, H)
    return DhDecomposition(D, H, D - d, H - h, d, h, grid)


def energy(dh: DhDecomposition) -> float:
    """I = 1/2 int (Dbar^2 + Hbar^2) + d^2 + h^2."""
    g = dh.grid
    return (0.5 * (trapezoid(g, dh.Dbar ** 2) + trapezoid(g, dh.Hbar ** 2))
            + dh.d ** 2 + dh.h ** 2)


def energy_full(dh: DhDecomposition) -> float:
    """1/2 int (D^2 + H^2); equal to :func:`energy` when D(1) = H(1) = 0."""
    g = dh.grid
    return 0.5 * (trapezoid(g, dh.D ** 2) + trapezoid(g, dh.H ** 2))


# -- negative norm ------------------------------------------------------------

def h_minus1_norm(grid: Grid, f) -> float:
    """Dual H^1 norm through the Riesz representer of -w'' + w = f.

    Stiffness is the P1 form, the mass is lumped and f is paired with test
    functions by cell-averaged products (the load of the box scheme). With
    this pairing ||f||_{H^-1} <= ||D||_{L^2} holds exactly for zero-mean f,
    as in the continuum.
    """
    f = np.asarray(f, dtype=float)
    if not np.any(f):
        return 0.0
    k = 1.0 / grid.h
    diag = grid.weights.copy()
    diag[:-1] += k
    diag[1:] += k
    b = box_load(grid, f)
    w = solve_tridiagonal(-k, diag, -k, b)
    return math.sqrt(max(float(b @ w), 0.0))


@dataclass(frozen=True)
class NormEquivalenceReport:
    ratio_delta: Optional[float]
    ratio_eta: Optional[float]
    floor: float = 0.1
    upper: float = 1.0 + 1e-9

    def _in(self, r):
        return r is None or self.floor <= r <= self.upper

    @property
    def upper_ok(self) -> bool:
        return all(r is None or r <= self.upper
                   for r in (self.ratio_delta, self.ratio_eta))

    @property
    def ok(self) -> bool:
        return self._in(self.ratio_delta) and self._in(self.ratio_eta)


def _zero_mean_or_raise(grid, f, name):
    m = trapezoid(grid, f)
    scale = trapezoid(grid, np.abs(f))
    if abs(m) > 1e-12 * max(scale, 1e-300):
        raise ValueError(f"{name} must have zero mean (integral {m:.3e})")


def norm_equivalence_report(grid: Grid, delta_tilde, eta_tilde,
                            floor: float = 0.1) -> NormEquivalenceReport:
    """Ratios ||f||_{H^-1} / ||F||_{L^2} with F the running integral of f."""
    out = []
    for f, name in ((delta_tilde, "delta"), (eta_tilde, "eta")):
        f = np.asarray(f, dtype=float)
        if not np.any(f):
            out.append(None)
            continue
        _zero_mean_or_raise(grid, f, name)
        F = cumulative_integral(grid, f)
        out.append(h_minus1_norm(grid, f) / math.sqrt(trapezoid(grid, F ** 2)))
    return NormEquivalenceReport(out[0], out[1], floor)


# -- per-state fields ---------------------------------------------------------

@dataclass(frozen=True, eq=False)
class PerturbationFields:
    t: float
    delta: np.ndarray
    eta: np.ndarray
    phi: np.ndarray
    phi_x: np.ndarray
    dh: DhDecomposition
    eta_full: np.ndarray
    state: object

    @property
    def boundary_slope(self) -> float:
        """phi~_x(-1) from the closed form -d / ((1 + gamma) eps)."""
        prm = self.state.params
        return -self.dh.d / ((1.0 + prm.gamma_eps) * prm.epsilon)


def perturbation_fields(state) -> PerturbationFields:
    """Perturbation data of a state.

    In nonlinear mode phi~ is rebuilt from delta~ by the homogeneous Robin
    solve instead of taking phi - psi, whose difference inherits the absolute
    rounding of psi (about 1e-11 in the gradient); the two agree to that level,
    see :func:`potential_consistency`.
    """
    nt, pt, phit = state.perturbation()
    delta = nt - pt
    eta = nt + pt
    grid, prm = state.grid, state.params
    if state.mode == "nonlinear":
        phit = solve_poisson_robin(grid, delta, prm.epsilon, prm.gamma_eps)
    n, p = state.densities()
    return PerturbationFields(
        t=state.t, delta=delta, eta=eta, phi=phit,
        phi_x=box_gradient(grid, phit, delta, prm.epsilon),
        dh=decompose(grid, delta, eta), eta_full=n + p, state=state)


def potential_consistency(state) -> float:
    """max |(phi - psi) - phi~| relative to max |phi| (0 in linearized mode)."""
    if state.mode != "nonlinear":
        return 0.0
    prm = state.params
    _, _, diff = state.perturbation()
    nt, pt, _ = state.perturbation()
    rebuilt = solve_poisson_robin(state.grid, nt - pt, prm.epsilon, prm.gamma_eps)
    return float(np.max(np.abs(diff - rebuilt))) / float(np.max(np.abs(state.phi)))


# -- exact identities ---------------------------------------------------------

@dataclass(frozen=True)
class IdentityDefects:
    """Relative defects of the boundary and mean-split identities.

    The boundary relations are checked in their exact discrete form, which
    carries the (rounding-level) charge q = int delta~ as a correction term;
    with q = 0 they reduce to the zero-mean identities. ``charge`` reports q
    itself relative to int |delta~| + int |eta~|.
    """
    gradient_shift: float      # phi_x = D / eps + phi_x(-1) at every node
    slope_match: float         # phi_x(1) - phi_x(-1) = q / eps
    antisymmetry: float        # phi(1) + phi(-1) = -gamma q / eps
    boundary_slope: float      # phi_x(-1) = -(d + gamma q / 2) / ((1 + gamma) eps)
    mean_split: float          # int Dbar^2 = int D^2 - 2 d^2 (and H)
    charge: float

    def ok(self, tol_grad=1e-10, tol_bc=1e-11, tol_split=1e-12) -> bool:
        return (self.gradient_shift <= tol_grad and self.slope_match <= tol_bc
                and self.antisymmetry <= tol_bc
                and self.boundary_slope <= tol_grad
                and self.mean_split <= tol_split)


def _rel(a, b, scale):
    return abs(a - b) / max(scale, 1e-300)


def identity_defects(pf: PerturbationFields) -> IdentityDefects:
    prm = pf.state.params
    g = pf.state.grid
    eps, gam = prm.epsilon, prm.gamma_eps
    gx = pf.phi_x
    dh = pf.dh
    q = dh.D[-1]
    gscale = float(np.max(np.abs(gx)))
    pscale = float(np.max(np.abs(pf.phi)))
    gscale = gscale or 1.0
    pscale = pscale or 1.0
    shift = float(np.max(np.abs(gx - (dh.D / eps + gx[0])))) / gscale
    D2, H2 = trapezoid(g, dh.D ** 2), trapezoid(g, dh.H ** 2)
    split = 0.0
    if D2 > 0:
        split = _rel(trapezoid(g, dh.Dbar ** 2), D2 - 2 * dh.d ** 2, D2)
    if H2 > 0:
        split = max(split, _rel(trapezoid(g, dh.Hbar ** 2), H2 - 2 * dh.h ** 2, H2))
    dscale = trapezoid(g, np.abs(pf.delta)) + trapezoid(g, np.abs(pf.eta))
    return IdentityDefects(
        gradient_shift=shift,
        slope_match=_rel(gx[-1] - gx[0], q / eps, gscale),
        antisymmetry=_rel(pf.phi[-1] + pf.phi[0], -gam * q / eps, pscale),
        boundary_slope=_rel(gx[0], -(dh.d + 0.5 * gam * q) / ((1.0 + gam) * eps),
                            gscale),
        mean_split=split,
        charge=abs(q) / dscale if dscale > 0 else 0.0)


def nonlinear_term_defect(pf: PerturbationFields) -> tuple[float, float]:
    """(lhs, rhs) of int phi_x (H_x D + D_x H) = (1/2eps) int eta~ D^2."""
    g = pf.state.grid
    eps = pf.state.params.epsilon
    D, H = pf.dh.D, pf.dh.H
    lhs = trapezoid(g, pf.phi_x * (pf.eta * D + pf.delta * H))
    rhs = trapezoid(g, pf.eta * D ** 2) / (2.0 * eps)
    return lhs, rhs


# -- energy laws --------------------------------------------------------------

def _check_mode(mode, state_mode):
    if mode not in MODES:
        raise ValueError(f"unknown energy-law mode {mode!r}")
    linear = state_mode == "linearized"
    if linear != (mode in _LINEAR_MODES):
        raise ValueError(f"mode {mode} does not apply to a {state_mode} trajectory")


def energy_law_rhs(pf: PerturbationFields, mode: str) -> float:
    """Right side of the energy law ``mode`` evaluated on one state."""
    st = pf.state
    _check_mode(mode, st.mode)
    prm, g, ss = st.params, st.grid, st.steady
    eps, gam, m0 = prm.epsilon, prm.gamma_eps, prm.m0
    dh = pf.dh
    d = dh.d
    eta0, delta0 = ss.eta0, ss.delta0
    grad = trapezoid(g, pf.delta ** 2) + trapezoid(g, pf.eta ** 2)
    slope = pf.boundary_slope
    if mode == "thm1":
        return (-(grad + trapezoid(g, eta0 * dh.D ** 2) / eps)
                - slope * trapezoid(g, eta0 * dh.D + delta0 * dh.H))
    if mode == "thm5_dh":
        return (-(grad + trapezoid(g, (eta0 + pf.eta_full) * dh.D ** 2) / (2 * eps))
                - slope * trapezoid(g, eta0 * dh.D + delta0 * dh.H))
    c = 1.0 + gam
    tail = (-2.0 * m0 * gam * d ** 2 / (c * eps)
            - (1.0 + 2.0 * gam) * d / (c * eps) * trapezoid(g, eta0 * dh.Dbar)
            + d / (c * eps) * trapezoid(g, delta0 * dh.Hbar))
    if mode == "thm2":
        return -(grad + trapezoid(g, eta0 * dh.Dbar ** 2) / eps) + tail
    return (-(grad + trapezoid(g, (eta0 + pf.eta_full) * dh.Dbar ** 2) / (2 * eps))
            - d / eps * trapezoid(g, pf.eta * dh.Dbar) + tail)


def decay_bound(pf: PerturbationFields, mode: str) -> float:
    """Upper bound on dI/dt claimed under the Robin hypothesis (nan for thm1)."""
    st = pf.state
    prm, g = st.params, st.grid
    eps = prm.epsilon
    dc = prm.derived
    Db2 = trapezoid(g, pf.dh.Dbar ** 2)
    dx2, hx2 = trapezoid(g, pf.delta ** 2), trapezoid(g, pf.eta ** 2)
    if mode == "thm2":
        return -(dx2 + 0.5 * hx2) - dc.m0_eps / eps * Db2
    if mode in ("thm5_dh", "thm5_bar"):
        coef = 0.5 - pf.dh.d ** 2 / (prm.m0 * eps)
        return -(dx2 + coef * hx2) - dc.m0_eps_prime / (4.0 * eps) * Db2
    return math.nan


@dataclass(frozen=True)
class EnergyAudit:
    t: float
    I: float
    lhs: float
    rhs: float
    residual: float
    decay_bound_ok: bool
    mode: str
    bound: float = math.nan


def audit_energy_law(states: Sequence, mode: str) -> EnergyAudit:
    """Audit at the middle of three states (centered) or the last of two."""
    if len(states) not in (2, 3):
        raise ValueError("pass two or three consecutive states")
    pfs = [perturbation_fields(s) for s in states]
    for s in states:
        _check_mode(mode, s.mode)
    Is = [energy(pf.dh) for pf in pfs]
    ts = [pf.t for pf in pfs]
    if len(states) == 3:
        dts = (ts[1] - ts[0], ts[2] - ts[1])
        if not math.isclose(dts[0], dts[1], rel_tol=1e-9):
            raise ValueError("records must share one dt")
        lhs = (Is[2] - Is[0]) / (ts[2] - ts[0])
        ref = pfs[1]
        I = Is[1]
    else:
        lhs = (Is[1] - Is[0]) / (ts[1] - ts[0])
        ref = pfs[1]
        I = Is[1]
    rhs = energy_law_rhs(ref, mode)
    res = lhs - rhs
    bound = decay_bound(ref, mode)
    ok = True if math.isnan(bound) else bool(lhs <= bound + abs(res) + 1e-12 * max(I, 1e-300))
    return EnergyAudit(ref.t, I, lhs, rhs, res, ok, mode, bound)


def dh_equation_residual(prev, cur, nonlinear_terms: Optional[bool] = None) -> float:
    """Sup-norm defect of the D and H evolution equations at ``cur``.

    D_t is the backward difference between the two states; the right side
    D_xx - eta0 phi_x - psi_x H_x (- phi_x H_x) uses D_x = delta~ and H_x = eta~.
    """
    if nonlinear_terms is None:
        nonlinear_terms = cur.mode == "nonlinear"
    a, b = perturbation_fields(prev), perturbation_fields(cur)
    dt = b.t - a.t
    g = cur.grid
    ss = cur.steady
    psi_x = ss.psi_x
    Dt = (b.dh.D - a.dh.D) / dt
    Ht = (b.dh.H - a.dh.H) / dt
    rD = derivative(g, b.delta) - ss.eta0 * b.phi_x - psi_x * b.eta
    rH = derivative(g, b.eta) - ss.delta0 * b.phi_x - psi_x * b.delta
    if nonlinear_terms:
        rD = rD - b.phi_x * b.eta
        rH = rH - b.phi_x * b.delta
    return float(max(np.max(np.abs(Dt - rD)), np.max(np.abs(Ht - rH))))


# -- decay --------------------------------------------------------------------

@dataclass(frozen=True)
class DecayFit:
    alpha_fit: float
    window: tuple
    r_squared: float
    I0: float
    log_prefactor: float = 0.0
    n_points: int = 0


def fit_decay_rate(times, I_values, window: Optional[tuple] = None) -> DecayFit:
    """Least-squares slope of log I against t over ``window``."""
    t = np.asarray(times, dtype=float)
    I = np.asarray(I_values, dtype=float)
    if window is None:
        window = (0.1 * t[-1], t[-1])
    lo, hi = window
    if lo < t[0] - 1e-12 or hi > t[-1] + 1e-12 or hi <= lo:
        raise ValueError(f"window {window} outside records [{t[0]}, {t[-1]}]")
    sel = (t >= lo - 1e-12) & (t <= hi + 1e-12)
    if np.any(I[sel] <= 0):
        raise ValueError("nonpositive I inside the fit window; shrink it")
    fit = stats.linregress(t[sel], np.log(I[sel]))
    return DecayFit(alpha_fit=float(-fit.slope), window=(float(lo), float(hi)),
                    r_squared=float(fit.rvalue ** 2), I0=float(I[0]),
                    log_prefactor=float(fit.intercept), n_points=int(sel.sum()))


def decay_envelope_ratio(times, I_values, fit: DecayFit) -> float:
    """max over the window of I(t) / (I0 exp(-alpha t)); <= 1.05 is the target."""
    t = np.asarray(times, dtype=float)
    I = np.asarray(I_values, dtype=float)
    lo, hi = fit.window
    sel = (t >= lo - 1e-12) & (t <= hi + 1e-12)
    return float(np.max(I[sel] / (fit.I0 * np.exp(-fit.alpha_fit * t[sel]))))


# -- hypotheses ---------------------------------------------------------------

@dataclass(frozen=True)
class HypothesisReport:
    M: float
    K0: float
    gamma_ratio: float
    threshold: float
    m0_eps: float
    m0_eps_prime: float
    robin_ok: bool
    gamma_max_ok: bool
    m0_eps_ok: bool
    m0_eps_prime_ok: bool

    @property
    def linear_ok(self) -> bool:
        return self.robin_ok and self.gamma_max_ok and self.m0_eps_ok

    @property
    def ok(self) -> bool:
        return self.linear_ok and self.m0_eps_prime_ok


def hypothesis_check(params: Params) -> HypothesisReport:
    dc = params.derived
    ratio = params.gamma_eps / math.sqrt(params.epsilon)
    return HypothesisReport(
        M=dc.M, K0=dc.K0, gamma_ratio=ratio, threshold=dc.robin_threshold,
        m0_eps=dc.m0_eps, m0_eps_prime=dc.m0_eps_prime,
        robin_ok=ratio > dc.robin_threshold,
        gamma_max_ok=0 < params.gamma_eps <= params.gamma_max,
        m0_eps_ok=dc.m0_eps > params.m0 / 2,
        m0_eps_prime_ok=dc.m0_eps_prime > params.m0 / 2)


@dataclass(frozen=True)
class SmallDataReport:
    I0: float
    limit: float
    initial_ok: bool           # I(0) < theta m0 eps / 2
    nonincreasing_ok: bool
    d_bounded_ok: bool         # d^2 <= I
    coercive_ok: bool          # 1/2 - d^2/(m0 eps) > (1 - theta)/2
    min_coercivity: float

    @property
    def ok(self) -> bool:
        return (self.initial_ok and self.nonincreasing_ok and self.d_bounded_ok
                and self.coercive_ok)

    @property
    def flagged(self) -> tuple:
        names = ("initial_ok", "nonincreasing_ok", "d_bounded_ok", "coercive_ok")
        return tuple(n for n in names if not getattr(self, n))


def small_data_monitor(records: Sequence, params: Params,
                       theta: Optional[float] = None) -> SmallDataReport:
    """Check the invariant small-data region along recorded (I, d) values.

    Downstream conditions are always evaluated; when the initial condition
    fails they are informational only (the region is not claimed invariant).
    """
    theta = params.theta if theta is None else theta
    I = np.array([r.I for r in records], dtype=float)
    d = np.array([r.d for r in records], dtype=float)
    m0e = params.m0 * params.epsilon
    limit = theta * m0e / 2.0
    I0 = float(I[0]) if len(I) else 0.0
    steps = np.diff(I)
    # floor: a zero start still carries the equilibrium's solver residual
    slack = 1e-12 * max(I0, 1e-12 * limit)
    coerc = 0.5 - d ** 2 / m0e
    return SmallDataReport(
        I0=I0, limit=limit, initial_ok=I0 < limit or I0 == 0.0,
        nonincreasing_ok=bool(np.all(steps <= slack)),
        d_bounded_ok=bool(np.all(d ** 2 <= I * (1 + 1e-12) + 1e-300)),
        coercive_ok=bool(np.all(coerc > 0.5 * (1.0 - theta))),
        min_coercivity=float(np.min(coerc)) if len(coerc) else 0.5)


# -- per-step diagnostics -----------------------------------------------------

CSV_COLUMNS = ("t", "I", "d", "h", "L2_Dbar", "L2_Hbar", "Hm1_delta", "Hm1_eta",
               "elaw_lhs", "elaw_rhs", "elaw_residual", "mass_n", "mass_p",
               "min_n", "min_p")


@dataclass
class DiagnosticsRecord:
    t: float
    I: float
    d: float
    h: float
    L2_Dbar: float
    L2_Hbar: float
    Hm1_delta: float
    Hm1_eta: float
    elaw_lhs: float
    elaw_rhs: float
    elaw_residual: float
    mass_n: float
    mass_p: float
    min_n: float
    min_p: float
    # extras beyond the CSV columns
    elaw_rhs_dh: float = math.nan
    decay_bound: float = math.nan
    decay_bound_ok: bool = True
    identities: Optional[IdentityDefects] = None
    nl_identity: tuple = (0.0, 0.0)
    potential_consistency: float = 0.0
    dh_residual: float = math.nan

    @property
    def elaw_residual_dh(self) -> float:
        return self.elaw_lhs - self.elaw_rhs_dh

    def csv_row(self) -> list:
        return [getattr(self, c) for c in CSV_COLUMNS]


class DiagnosticsRecorder:
    """Streams states into :class:`DiagnosticsRecord` rows.

    ``mode`` picks the energy law in mean-split form (thm2 for linearized
    runs, thm5_bar for nonlinear ones); the matching (D, H) form is recorded
    alongside. The energy derivative is centered in the interior and one-sided
    at the two ends.
    """

    def __init__(self, mode: Optional[str] = None, hm1: bool = True,
                 identities: bool = True, dh_residual: bool = False):
        self.mode = mode
        self.hm1 = hm1
        self.identities = identities
        self.dh_residual = dh_residual
        self._rows: list = []
        self._prev = None

    def __call__(self, state) -> None:
        if self.mode is None:
            self.mode = "thm2" if state.mode == "linearized" else "thm5_bar"
        bar = self.mode
        dhm = "thm1" if bar == "thm2" else "thm5_dh"
        pf = perturbation_fields(state)
        g = state.grid
        n, p = state.densities()
        dh = pf.dh
        row = dict(
            t=state.t, I=energy(dh), d=dh.d, h=dh.h,
            L2_Dbar=math.sqrt(trapezoid(g, dh.Dbar ** 2)),
            L2_Hbar=math.sqrt(trapezoid(g, dh.Hbar ** 2)),
            Hm1_delta=h_minus1_norm(g, pf.delta) if self.hm1 else math.nan,
            Hm1_eta=h_minus1_norm(g, pf.eta) if self.hm1 else math.nan,
            elaw_rhs=energy_law_rhs(pf, bar), elaw_rhs_dh=energy_law_rhs(pf, dhm),
            decay_bound=decay_bound(pf, bar),
            mass_n=trapezoid(g, state.n), mass_p=trapezoid(g, state.p),
            min_n=float(np.min(n)), min_p=float(np.min(p)),
            identities=identity_defects(pf) if self.identities else None,
            nl_identity=nonlinear_term_defect(pf),
            potential_consistency=potential_consistency(state),
            dh_residual=(dh_equation_residual(self._prev, state)
                         if self.dh_residual and self._prev is not None else math.nan),
        )
        self._rows.append(row)
        self._prev = state

    def finish(self) -> list:
        rows = self._rows
        t = np.array([r["t"] for r in rows])
        I = np.array([r["I"] for r in rows])
        lhs = np.full(len(rows), math.nan)
        if len(rows) >= 3:
            lhs[1:-1] = (I[2:] - I[:-2]) / (t[2:] - t[:-2])
        if len(rows) >= 2:
            lhs[0] = (I[1] - I[0]) / (t[1] - t[0])
            lhs[-1] = (I[-1] - I[-2]) / (t[-1] - t[-2])
        out = []
        for r, l in zip(rows, lhs):
            res = l - r["elaw_rhs"]
            bound = r["decay_bound"]
            ok = True if math.isnan(bound) or math.isnan(l) else bool(
                l <= bound + abs(res) + 1e-12 * max(r["I"], 1e-300))
            out.append(DiagnosticsRecord(elaw_lhs=float(l), elaw_residual=float(res),
                                         decay_bound_ok=ok, **r))
        return out
