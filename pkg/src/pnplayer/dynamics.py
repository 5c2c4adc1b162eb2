"""Implicit time stepping of the PNP system and its linearization.

Densities live at grid nodes with dual control volumes of size ``grid.weights``
and exchange mass through exponentially fitted (Scharfetter-Gummel) face fluxes

    J_n = [B(dphi) n_{i+1} - B(-dphi) n_i] / h,   J_p = [B(-dphi) p_{i+1} - B(dphi) p_i] / h,

with B(x) = x / (e^x - 1). The end faces carry no flux, so mass telescopes.
The potential uses the same box scheme as the steady solver, which makes the
boundary-layer equilibrium an exact discrete fixed point.

A nonlinear step solves the coupled implicit-Euler system by Newton on the
interleaved unknowns (n_i, p_i, phi_i), then closes with one Gummel sweep
(transport with frozen phi, then a Poisson solve) that certifies the
increment, guarantees positivity through the M-matrix structure and restores
exact conservation through the flux form.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Any, Callable, Optional

import numpy as np
from scipy.linalg import solve_banded
from scipy.linalg.lapack import dgbtrf, dgbtrs

from .core import (ConvergenceError, Grid, NegativeDensityError, Params,
                   box_load, box_mass_bands, robin_constant, robin_laplacian,
                   solve_tridiagonal, trapezoid)
from .steady import SteadyState

__all__ = [
    "bernoulli", "bernoulli_prime", "sg_fluxes", "solve_poisson_robin",
    "PnpState", "StepOptions", "InitialPerturbation", "Trajectory",
    "initial_state", "step_nonlinear", "step_linearized",
    "make_initial_perturbation", "run", "positivity_report",
    "PositivityReport", "default_dt",
]

NONLINEAR = "nonlinear"
LINEARIZED = "linearized"
_KL = _KU = 5          # band half-width of the interleaved (n, p, phi) system


def bernoulli(x):
    """B(x) = x / (e^x - 1) with B(0) = 1."""
    x = np.asarray(x, dtype=float)
    small = np.abs(x) < 1e-5
    with np.errstate(divide="ignore", invalid="ignore"):
        big = x / np.expm1(x)
    return np.where(small, 1.0 - 0.5 * x + x * x / 12.0, big)


def bernoulli_prime(x):
    x = np.asarray(x, dtype=float)
    small = np.abs(x) < 1e-4
    with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
        em = np.expm1(x)
        big = (em - x * (em + 1.0)) / (em * em)
    return np.where(small, -0.5 + x / 6.0 - x ** 3 / 180.0, big)


def default_dt(epsilon: float) -> float:
    return min(1e-3, epsilon)


def sg_fluxes(grid: Grid, n, p, phi):
    """Face fluxes (J_n, J_p) of n_x - n phi_x and p_x + p phi_x."""
    d = np.diff(phi)
    bp, bm = bernoulli(d), bernoulli(-d)
    jn = (bp * n[1:] - bm * n[:-1]) / grid.h
    jp = (bm * p[1:] - bp * p[:-1]) / grid.h
    return jn, jp


def _divergence(J: np.ndarray) -> np.ndarray:
    """Net inflow per control volume; the end faces are closed."""
    out = np.zeros(len(J) + 1)
    out[:-1] += J
    out[1:] -= J
    return out


def solve_poisson_robin(grid: Grid, rho, epsilon: float, gamma_eps: float,
                        bc_plus: float = 0.0, bc_minus: float = 0.0) -> np.ndarray:
    """Box-scheme solve of eps phi'' = rho, phi(+-1) +- gamma phi'(+-1) = bc."""
    if not gamma_eps > 0:
        raise ValueError("gamma_eps must be positive")
    lo, di, up = robin_laplacian(grid, epsilon, gamma_eps)
    c = robin_constant(grid, epsilon, gamma_eps, bc_minus, bc_plus)
    return solve_tridiagonal(lo, di, up, box_load(grid, rho) - c)


# -- states -------------------------------------------------------------------

def _ro(a) -> np.ndarray:
    a = np.array(a, dtype=float)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class PnpState:
    """Snapshot at time t. In linearized mode n, p, phi hold the perturbations."""

    t: float
    n: np.ndarray
    p: np.ndarray
    phi: np.ndarray
    mode: str
    steady: SteadyState

    def __post_init__(self):
        if self.mode not in (NONLINEAR, LINEARIZED):
            raise ValueError(f"unknown mode {self.mode!r}")
        for name in ("n", "p", "phi"):
            object.__setattr__(self, name, _ro(getattr(self, name)))

    @property
    def grid(self) -> Grid:
        return self.steady.grid

    @property
    def params(self) -> Params:
        return self.steady.params

    def perturbation(self):
        """(n~, p~, phi~) relative to the attached steady state."""
        if self.mode == LINEARIZED:
            return self.n, self.p, self.phi
        ss = self.steady
        return self.n - ss.n0, self.p - ss.p0, self.phi - ss.psi

    def densities(self):
        """Full (n, p) fields in either mode."""
        if self.mode == NONLINEAR:
            return self.n, self.p
        return self.steady.n0 + self.n, self.steady.p0 + self.p


@dataclass(frozen=True)
class StepOptions:
    newton_tol: float = 1e-12
    gummel_tol: float = 1e-10
    max_iter: int = 40
    negativity_floor: float = -1e-14


@dataclass(frozen=True, eq=False)
class InitialPerturbation:
    delta0_tilde: np.ndarray
    eta0_tilde: np.ndarray
    amplitude: float
    seed: int
    I0: float = 0.0

    @property
    def n_tilde(self) -> np.ndarray:
        return 0.5 * (self.eta0_tilde + self.delta0_tilde)

    @property
    def p_tilde(self) -> np.ndarray:
        return 0.5 * (self.eta0_tilde - self.delta0_tilde)


def initial_state(ss: SteadyState, pert: Optional[InitialPerturbation] = None,
                  mode: str = NONLINEAR) -> PnpState:
    """State at t = 0 built from the equilibrium plus an optional perturbation."""
    grid, prm = ss.grid, ss.params
    zero = np.zeros(len(grid))
    nt = zero if pert is None else pert.n_tilde
    pt = zero if pert is None else pert.p_tilde
    if mode == LINEARIZED:
        phit = solve_poisson_robin(grid, nt - pt, prm.epsilon, prm.gamma_eps)
        return PnpState(0.0, nt, pt, phit, LINEARIZED, ss)
    n = ss.n0 + nt
    p = ss.p0 + pt
    if pert is None:
        phi = ss.psi
    else:
        phi = solve_poisson_robin(grid, n - p, prm.epsilon, prm.gamma_eps,
                                  prm.phi0_plus, prm.phi0_minus)
    return PnpState(0.0, n, p, phi, NONLINEAR, ss)


# -- banded assembly ----------------------------------------------------------

class _Banded:
    """Accumulates a (kl=ku=5) banded matrix in LAPACK gb storage."""

    def __init__(self, size: int, lapack: bool = False):
        self.size = size
        self.off = _KL if lapack else 0     # dgbtrf wants kl spare rows on top
        self.ab = np.zeros((self.off + _KL + _KU + 1, size))

    def add(self, rows, cols, vals):
        self.ab[self.off + _KU + rows - cols, cols] += vals


def _assemble(grid: Grid, prm: Params, n, p, phi, dt: float,
              lapack: bool = False) -> _Banded:
    """Jacobian of the implicit-Euler residual at (n, p, phi)."""
    N1 = len(grid)
    h = grid.h
    w = grid.weights
    d = np.diff(phi)
    bp, bm = bernoulli(d), bernoulli(-d)
    dbp, dbm = bernoulli_prime(d), bernoulli_prime(-d)
    i = np.arange(N1 - 1)
    j = i + 1
    ni, pi_, fi = 3 * i, 3 * i + 1, 3 * i + 2
    nj, pj, fj = 3 * j, 3 * j + 1, 3 * j + 2
    M = _Banded(3 * N1, lapack)
    nodes = np.arange(N1)
    M.add(3 * nodes, 3 * nodes, w / dt)
    M.add(3 * nodes + 1, 3 * nodes + 1, w / dt)

    # n rows: R_i = ... - J_f, R_j = ... + J_f
    gn = (dbp * n[1:] + dbm * n[:-1]) / h
    for rows, sgn in ((ni, -1.0), (nj, 1.0)):
        M.add(rows, nj, sgn * bp / h)
        M.add(rows, ni, -sgn * bm / h)
        M.add(rows, fj, sgn * gn)
        M.add(rows, fi, -sgn * gn)
    gp = (-dbm * p[1:] - dbp * p[:-1]) / h
    for rows, sgn in ((pi_, -1.0), (pj, 1.0)):
        M.add(rows, pj, sgn * bm / h)
        M.add(rows, pi_, -sgn * bp / h)
        M.add(rows, fj, sgn * gp)
        M.add(rows, fi, -sgn * gp)

    # Poisson rows: A phi + c - B (n - p)
    lo_a, di_a, up_a = robin_laplacian(grid, prm.epsilon, prm.gamma_eps)
    lo_b, di_b, up_b = box_mass_bands(grid)
    f = 3 * nodes + 2
    M.add(f, f, di_a)
    M.add(f[1:], f[:-1], lo_a)
    M.add(f[:-1], f[1:], up_a)
    M.add(f, 3 * nodes, -di_b)
    M.add(f[1:], 3 * nodes[:-1], -lo_b)
    M.add(f[:-1], 3 * nodes[1:], -up_b)
    M.add(f, 3 * nodes + 1, di_b)
    M.add(f[1:], 3 * nodes[:-1] + 1, lo_b)
    M.add(f[:-1], 3 * nodes[1:] + 1, up_b)
    return M


def _residual(grid: Grid, prm: Params, n, p, phi, n_old, p_old, dt):
    w = grid.weights
    jn, jp = sg_fluxes(grid, n, p, phi)
    rn = w * (n - n_old) / dt - _divergence(jn)
    rp = w * (p - p_old) / dt - _divergence(jp)
    lo, di, up = robin_laplacian(grid, prm.epsilon, prm.gamma_eps)
    Aphi = di * phi
    Aphi[1:] += lo * phi[:-1]
    Aphi[:-1] += up * phi[1:]
    c = robin_constant(grid, prm.epsilon, prm.gamma_eps,
                       prm.phi0_minus, prm.phi0_plus)
    rf = Aphi + c - box_load(grid, n - p)
    r = np.empty(3 * len(grid))
    r[0::3], r[1::3], r[2::3] = rn, rp, rf
    return r


def _transport_matrix(grid: Grid, phi, dt: float, sign: float):
    """Tridiagonal bands of w/dt - div J for frozen phi (sign=+1 for n)."""
    d = np.diff(phi)
    b_fwd, b_bwd = bernoulli(sign * d), bernoulli(-sign * d)
    h = grid.h
    diag = grid.weights / dt
    diag = diag.copy()
    diag[:-1] += b_bwd / h
    diag[1:] += b_fwd / h
    return -b_bwd / h, diag, -b_fwd / h


def _check_positive(n, p, floor: float, t: float):
    mn, mp = float(np.min(n)), float(np.min(p))
    if mn < floor or mp < floor:
        raise NegativeDensityError(
            f"negative density at t={t:.6g}: min n={mn:.3e}, min p={mp:.3e}")


def step_nonlinear(state: PnpState, dt: float,
                   opts: StepOptions = StepOptions()) -> PnpState:
    """One implicit-Euler step of the full system."""
    if state.mode != NONLINEAR:
        raise ValueError("step_nonlinear needs a nonlinear-mode state")
    if not dt > 0:
        raise ValueError("dt must be positive")
    grid, prm = state.grid, state.params
    n_old, p_old = state.n, state.p
    n, p, phi = n_old.copy(), p_old.copy(), state.phi.copy()
    nscale = max(float(np.max(np.abs(n_old))), float(np.max(np.abs(p_old))), 1e-300)
    fscale = max(float(np.max(np.abs(phi))), prm.phi0_plus, 1e-300) + 1.0

    for it in range(opts.max_iter):
        r = _residual(grid, prm, n, p, phi, n_old, p_old, dt)
        M = _assemble(grid, prm, n, p, phi, dt)
        du = solve_banded((_KL, _KU), M.ab, -r, check_finite=False)
        n += du[0::3]
        p += du[1::3]
        phi += du[2::3]
        upd = max(float(np.max(np.abs(du[0::3]))) / nscale,
                  float(np.max(np.abs(du[1::3]))) / nscale,
                  float(np.max(np.abs(du[2::3]))) / fscale)
        if not math.isfinite(upd):
            raise ConvergenceError(f"Newton blew up at t={state.t + dt:.6g}")
        if upd <= opts.newton_tol:
            break
    else:
        raise ConvergenceError(
            f"Newton stalled at t={state.t + dt:.6g} (update {upd:.2e}); "
            f"reduce dt={dt:g}")

    # closing Gummel sweep with phi frozen
    ng = solve_tridiagonal(*_transport_matrix(grid, phi, dt, 1.0),
                           grid.weights * n_old / dt)
    pg = solve_tridiagonal(*_transport_matrix(grid, phi, dt, -1.0),
                           grid.weights * p_old / dt)
    jn, jp = sg_fluxes(grid, ng, pg, phi)
    n_new = n_old + dt * _divergence(jn) / grid.weights
    p_new = p_old + dt * _divergence(jp) / grid.weights
    phi_new = solve_poisson_robin(grid, n_new - p_new, prm.epsilon, prm.gamma_eps,
                                  prm.phi0_plus, prm.phi0_minus)
    inc = max(float(np.max(np.abs(n_new - n))) / nscale,
              float(np.max(np.abs(p_new - p))) / nscale,
              float(np.max(np.abs(phi_new - phi))) / fscale)
    if inc > opts.gummel_tol:
        raise ConvergenceError(
            f"Gummel increment {inc:.2e} above {opts.gummel_tol:g} at "
            f"t={state.t + dt:.6g}; reduce dt={dt:g}")
    _check_positive(n_new, p_new, opts.negativity_floor, state.t + dt)
    return PnpState(state.t + dt, n_new, p_new, phi_new, NONLINEAR, state.steady)


class _LinearStepper:
    """Factorized implicit-Euler operator of the linearized system for one dt."""

    def __init__(self, ss: SteadyState, dt: float):
        self.ss, self.dt = ss, dt
        grid, prm = ss.grid, ss.params
        M = _assemble(grid, prm, ss.n0, ss.p0, ss.psi, dt, lapack=True)
        lu, piv, info = dgbtrf(M.ab, _KL, _KU)
        if info != 0:
            raise ConvergenceError(
                f"linearized operator singular (info={info}, dt={dt:g}, "
                f"min h={float(np.min(grid.h)):.3g})")
        self.lu, self.piv = lu, piv
        d = np.diff(ss.psi)
        self.bp, self.bm = bernoulli(d), bernoulli(-d)
        h = grid.h
        self.gn = (bernoulli_prime(d) * ss.n0[1:] + bernoulli_prime(-d) * ss.n0[:-1]) / h
        self.gp = (-bernoulli_prime(-d) * ss.p0[1:] - bernoulli_prime(d) * ss.p0[:-1]) / h

    def fluxes(self, nt, pt, phit):
        h = self.ss.grid.h
        dphi = np.diff(phit)
        jn = (self.bp * nt[1:] - self.bm * nt[:-1]) / h + self.gn * dphi
        jp = (self.bm * pt[1:] - self.bp * pt[:-1]) / h + self.gp * dphi
        return jn, jp

    def __call__(self, state: PnpState) -> PnpState:
        grid, prm = self.ss.grid, self.ss.params
        w, dt = grid.weights, self.dt
        rhs = np.zeros(3 * len(grid))
        rhs[0::3] = w * state.n / dt
        rhs[1::3] = w * state.p / dt
        u, info = dgbtrs(self.lu, _KL, _KU, rhs, self.piv)
        if info != 0:
            raise ConvergenceError(f"banded solve failed (info={info})")
        jn, jp = self.fluxes(u[0::3], u[1::3], u[2::3])
        nt = state.n + dt * _divergence(jn) / w
        pt = state.p + dt * _divergence(jp) / w
        phit = solve_poisson_robin(grid, nt - pt, prm.epsilon, prm.gamma_eps)
        return PnpState(state.t + dt, nt, pt, phit, LINEARIZED, self.ss)


# the most recent factorization; runs use one (steady state, dt) pair
_last_stepper: list = []


def step_linearized(state: PnpState, dt: float, opts: Any = None) -> PnpState:
    """One implicit-Euler step of the linearized perturbation system."""
    if state.mode != LINEARIZED:
        raise ValueError("step_linearized needs a linearized-mode state")
    if not dt > 0:
        raise ValueError("dt must be positive")
    if not (_last_stepper and _last_stepper[0].ss is state.steady
            and _last_stepper[0].dt == dt):
        _last_stepper[:] = [_LinearStepper(state.steady, dt)]
    return _last_stepper[0](state)


# -- initial data -------------------------------------------------------------

def _cosine_mix(x, rng, n_modes):
    # Neumann modes: zero mean and flat at both ends
    k = np.arange(1, n_modes + 1)
    a = rng.standard_normal(n_modes) / k
    return np.cos(0.5 * math.pi * np.outer(x + 1.0, k)) @ a


def _zero_mean(grid: Grid, f):
    f = f - 0.5 * trapezoid(grid, f)
    # one more pass mops up the rounding of the first
    return f - 0.5 * trapezoid(grid, f)


def make_initial_perturbation(ss: SteadyState, amplitude: float,
                              n_modes: int = 4, seed: int = 0,
                              theta: Optional[float] = None,
                              fill: float = 0.75) -> InitialPerturbation:
    """Random zero-mean perturbation of the equilibrium densities.

    Both fields are random combinations of the first ``n_modes`` Neumann
    cosines cos(k pi (x + 1) / 2), scaled to sup-norm
    ``amplitude``. With ``theta`` set, the pair is rescaled so that
    I0 = fill * theta m0 eps / 2, which places it inside the small-data region.
    """
    from .analysis import decompose, energy

    if amplitude < 0:
        raise ValueError("amplitude must be >= 0")
    grid, prm = ss.grid, ss.params
    rng = np.random.default_rng(seed)
    x = grid.nodes
    dlt = _zero_mean(grid, _cosine_mix(x, rng, n_modes))
    eta = _zero_mean(grid, _cosine_mix(x, rng, n_modes))
    if amplitude == 0:
        z = np.zeros(len(grid))
        return InitialPerturbation(_ro(z), _ro(z), 0.0, seed, 0.0)
    dlt *= amplitude / np.max(np.abs(dlt))
    eta *= amplitude / np.max(np.abs(eta))
    if theta is not None:
        if not 0 < theta < 1 or not 0 < fill < 1:
            raise ValueError("need 0 < theta < 1 and 0 < fill < 1")
        target = fill * theta * prm.m0 * prm.epsilon / 2.0
        I0 = energy(decompose(grid, dlt, eta))
        s = math.sqrt(target / I0)
        dlt, eta = s * dlt, s * eta
    n0 = ss.n0 + 0.5 * (eta + dlt)
    p0 = ss.p0 + 0.5 * (eta - dlt)
    if np.min(n0) < 0 or np.min(p0) < 0:
        # largest s with n0 + s (eta + dlt)/2 >= 0 and likewise for p
        lim = []
        for base, pert in ((ss.n0, 0.5 * (eta + dlt)), (ss.p0, 0.5 * (eta - dlt))):
            neg = pert < 0
            if np.any(neg):
                lim.append(float(np.min(base[neg] / -pert[neg])))
        smax = min(lim)
        amp_now = float(np.max(np.abs(dlt)))
        raise ValueError(
            f"perturbation makes a density negative; max feasible amplitude "
            f"is {smax * amp_now:.6g}")
    I0 = energy(decompose(grid, dlt, eta))
    return InitialPerturbation(_ro(dlt), _ro(eta), float(np.max(np.abs(dlt))),
                               seed, I0)


# -- driver -------------------------------------------------------------------

@dataclass
class Trajectory:
    dt: float
    mode: str
    records: list = field(default_factory=list)
    states: list = field(default_factory=list)
    times: list = field(default_factory=list)
    mass_n: list = field(default_factory=list)
    mass_p: list = field(default_factory=list)
    min_n: float = math.inf
    min_p: float = math.inf
    final: Optional[PnpState] = None

    def __len__(self):
        return len(self.times)


def run(initial: PnpState, T: float, dt: float,
        recorder: Optional[Callable] = None, opts: StepOptions = StepOptions(),
        keep_every: int = 0) -> Trajectory:
    """March to T with fixed dt, calling ``recorder(state)`` at every step.

    If the recorder has a ``finish()`` method its return value becomes the
    record list; otherwise the per-call return values are collected.
    ``keep_every=k`` stores every k-th state snapshot.
    """
    if not (T > 0 and dt > 0):
        raise ValueError("T and dt must be positive")
    n_steps = int(round(T / dt))
    if n_steps < 1 or abs(n_steps * dt - T) > 1e-9 * T:
        raise ValueError(f"T={T} is not a whole number of steps of dt={dt}")
    step = step_linearized if initial.mode == LINEARIZED else step_nonlinear
    traj = Trajectory(dt=dt, mode=initial.mode)
    grid = initial.grid

    def observe(k, s):
        nn, pp = s.densities()
        traj.times.append(s.t)
        traj.mass_n.append(trapezoid(grid, s.n))
        traj.mass_p.append(trapezoid(grid, s.p))
        traj.min_n = min(traj.min_n, float(np.min(nn)))
        traj.min_p = min(traj.min_p, float(np.min(pp)))
        if keep_every and k % keep_every == 0:
            traj.states.append(s)
        if recorder is not None:
            out = recorder(s)
            if out is not None:
                traj.records.append(out)

    state = initial
    observe(0, state)
    for k in range(1, n_steps + 1):
        try:
            state = step(state, dt, opts)
        except (ConvergenceError, NegativeDensityError) as exc:
            exc.t = state.t + dt
            raise
        # keep time on the exact grid k*dt
        state = PnpState(k * dt, state.n, state.p, state.phi, state.mode,
                         state.steady)
        observe(k, state)
    if recorder is not None and hasattr(recorder, "finish"):
        traj.records = list(recorder.finish())
    traj.final = state
    return traj


@dataclass(frozen=True)
class PositivityReport:
    min_n: float
    min_p: float
    floor: float = -1e-14

    @property
    def ok(self) -> bool:
        return self.min_n >= self.floor and self.min_p >= self.floor


def positivity_report(traj: Trajectory, floor: float = -1e-14) -> PositivityReport:
    if traj.mode != NONLINEAR:
        raise ValueError("positivity is reported for nonlinear trajectories")
    return PositivityReport(traj.min_n, traj.min_p, floor)
