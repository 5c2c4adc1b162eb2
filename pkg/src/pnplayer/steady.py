"""Boundary-layer equilibria of the charge-conserving Poisson-Boltzmann problem.

The unknown is the potential psi solving

    eps psi'' = m0 e^psi / Z+ - m0 e^-psi / Z-,   Z+- = int e^{+-psi},
    psi(+-1) +- gamma_eps psi'(+-1) = phi0(+-1),

discretized with the box scheme from :mod:`pnplayer.core`. The residual is
tridiagonal apart from the two normalization integrals, so Newton steps cost
one banded solve with three right-hand sides plus a 2x2 correction.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy.optimize import brentq

from .core import (ConvergenceError, Grid, Params, box_gradient, box_load,
                   box_mass_bands, make_grid, robin_constant, robin_laplacian,
                   solve_tridiagonal, trapezoid)

__all__ = [
    "SteadyState", "TheoremAReport", "SweepReport", "EstimateCheck",
    "EstimateReport", "solve_pb", "check_theorem_a", "solve_psi_star",
    "boundary_asymptotics_sweep", "check_steady_estimates", "pb_residual",
    "first_integral_scale",
]

# below this epsilon the solve walks down from here
_CONTINUATION_START = 1e-4
_CONTINUATION_FACTOR = 10.0 ** -0.5


def _freeze(a: np.ndarray) -> np.ndarray:
    a = np.array(a, dtype=float)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class SteadyState:
    psi: np.ndarray
    n0: np.ndarray
    p0: np.ndarray
    delta0: np.ndarray
    eta0: np.ndarray
    Zplus: float
    Zminus: float
    params: Params
    grid: Grid
    residual: float = 0.0
    iterations: int = 0

    @property
    def psi_x(self) -> np.ndarray:
        """Nodal gradient consistent with the box discretization."""
        return box_gradient(self.grid, self.psi, self.delta0, self.params.epsilon)

    @property
    def x(self) -> np.ndarray:
        return self.grid.nodes


def _densities(grid: Grid, psi: np.ndarray, m0: float):
    ep = np.exp(psi)
    em = np.exp(-psi)
    Zp = trapezoid(grid, ep)
    Zm = trapezoid(grid, em)
    return ep, em, Zp, Zm, m0 * ep / Zp, m0 * em / Zm


def pb_residual(params: Params, grid: Grid, psi) -> np.ndarray:
    """Pointwise defect of eps psi'' - delta0 in the box scheme.

    Rows are divided by the quadrature weights so the values have the units
    of the equation itself; the end rows include the Robin conditions.
    """
    psi = np.asarray(psi, dtype=float)
    eps, gam = params.epsilon, params.gamma_eps
    lo, di, up = robin_laplacian(grid, eps, gam)
    Apsi = di * psi
    Apsi[1:] += lo * psi[:-1]
    Apsi[:-1] += up * psi[1:]
    c = robin_constant(grid, eps, gam, params.phi0_minus, params.phi0_plus)
    *_, n, p = _densities(grid, psi, params.m0)
    return (Apsi + c - box_load(grid, n - p)) / grid.weights


def _initial_guess(params: Params, grid: Grid) -> np.ndarray:
    x = grid.nodes
    k = params.derived.M / math.sqrt(params.epsilon)
    # the envelope is capped at the boundary data
    return (params.phi0_plus * np.exp(-k * (1.0 - x))
            + params.phi0_minus * np.exp(-k * (1.0 + x)))


def _newton(params: Params, grid: Grid, psi: np.ndarray, tol: float,
            max_iter: int) -> tuple[np.ndarray, float, int]:
    eps, gam, m0 = params.epsilon, params.gamma_eps, params.m0
    lo_a, di_a, up_a = robin_laplacian(grid, eps, gam)
    lo_b, di_b, up_b = box_mass_bands(grid)
    w = grid.weights

    def residual(v):
        r = pb_residual(params, grid, v) * w
        return r, float(np.max(np.abs(r / w)))

    # backward-error floor: on very fine meshes eps/h^2 rounding exceeds tol
    ulp_rows = 16.0 * np.finfo(float).eps * (
        (np.abs(di_a) + np.pad(lo_a, (1, 0)) + np.pad(up_a, (0, 1)))
        * (params.phi0_plus + abs(params.phi0_minus)) + m0 * 4.0 * w) / w
    floor = float(np.max(ulp_rows))

    r, rnorm = residual(psi)
    for it in range(max_iter + 1):
        if not math.isfinite(rnorm):
            raise ConvergenceError(
                "non-finite PB residual: e^psi overflowed, psi left "
                "the range of the boundary data")
        if rnorm <= max(tol, floor):
            return psi, rnorm, it
        if it == max_iter:
            break
        ep, em, Zp, Zm, n, p = _densities(grid, psi, m0)
        eta = n + p
        # tridiagonal part: A - B diag(eta)
        lo = lo_a - lo_b * eta[:-1]
        di = di_a - di_b * eta
        up = up_a - up_b * eta[1:]
        # rank-2 part from dZ/dpsi: + (B n) a^T + (B p) b^T
        U = np.column_stack([box_load(grid, n), box_load(grid, p)])
        V = np.column_stack([w * ep / Zp, w * em / Zm])
        X = solve_tridiagonal(lo, di, up, np.column_stack([-r, U]))
        y, TU = X[:, 0], X[:, 1:]
        cap = np.eye(2) + V.T @ TU
        step = y - TU @ np.linalg.solve(cap, V.T @ y)

        lam = 1.0
        while True:
            trial = psi + lam * step
            with np.errstate(over="ignore", invalid="ignore"):
                r_new, rn_new = residual(trial)
            if math.isfinite(rn_new) and (rn_new < rnorm or lam < 1e-3):
                break
            lam *= 0.5
        psi, r, rnorm = trial, r_new, rn_new
    raise ConvergenceError(
        f"PB Newton did not converge in {max_iter} iterations "
        f"(residual {rnorm:.3e}, eps={eps:g})")


def solve_pb(params: Params, grid: Grid, tol: float = 1e-12,
             max_iter: int = 50, psi_init=None) -> SteadyState:
    """Newton solve of the charge-conserving Poisson-Boltzmann problem.

    ``tol`` bounds the sup-norm of :func:`pb_residual` unless the mesh is so
    fine that rounding in eps/h^2 sits above it. For eps < 1e-4 and no
    supplied guess the solve continues down from eps = 1e-4 on the same grid.
    """
    if not 1e-14 <= tol <= 1e-6:
        raise ValueError(f"tol must lie in [1e-14, 1e-6], got {tol}")
    if psi_init is not None:
        psi = np.array(psi_init, dtype=float)
        iters = 0
    elif params.epsilon < _CONTINUATION_START:
        chain = []
        e = _CONTINUATION_START
        while e > params.epsilon * (1 + 1e-9):
            chain.append(e)
            e *= _CONTINUATION_FACTOR
        psi = _initial_guess(params.replace(epsilon=chain[0]), grid)
        iters = 0
        for e in chain:
            # intermediate problems only need to land in the basin
            sub = params.replace(epsilon=e, gamma_eps=params.gamma_eps
                                 * math.sqrt(e / params.epsilon))
            psi, _, k = _newton(sub, grid, psi, 1e-8, max_iter)
            iters += k
    else:
        psi = _initial_guess(params, grid)
        iters = 0

    psi, rnorm, k = _newton(params, grid, psi, tol, max_iter)
    _, _, Zp, Zm, n, p = _densities(grid, psi, params.m0)
    return SteadyState(psi=_freeze(psi), n0=_freeze(n), p0=_freeze(p),
                       delta0=_freeze(n - p), eta0=_freeze(n + p),
                       Zplus=Zp, Zminus=Zm, params=params, grid=grid,
                       residual=rnorm, iterations=iters + k)


# -- Theorem A style checks ---------------------------------------------------

@dataclass(frozen=True)
class TheoremAReport:
    oddness_defect: float
    monotonicity_ok: bool
    convexity_ok: bool
    interior_bound_ok: bool
    psi_boundary: float
    scaled_gradient: float
    psi_star_pred: float
    first_integral_defect: float
    first_integral_scale: float = 0.0
    interior_bound_margin: float = 0.0
    bounded_ok: bool = True

    @property
    def first_integral_ok(self) -> bool:
        return self.first_integral_defect <= self.first_integral_scale

    @property
    def all_ok(self) -> bool:
        return (self.oddness_defect <= 1e-8 and self.monotonicity_ok
                and self.convexity_ok and self.interior_bound_ok
                and self.bounded_ok and self.first_integral_ok)


def first_integral_scale(ss: SteadyState, tol: float | None = None) -> float:
    """Allowed first-integral drift: 10 (tol + s).

    s = sum |dpsi|^3 max|delta0| / 12 is the trapezoid error of int rho dpsi
    over the cells, i.e. the O(h^2) term of the discrete first integral.
    """
    if tol is None:
        tol = max(ss.residual, 1e-14)
    dpsi = np.abs(np.diff(ss.psi))
    s = float(np.sum(dpsi ** 3)) * float(np.max(np.abs(ss.delta0))) / 12.0
    return 10.0 * (tol + s)


def check_theorem_a(ss: SteadyState, slack: float = 1e-9) -> TheoremAReport:
    prm, grid = ss.params, ss.grid
    x, psi = grid.nodes, ss.psi
    N = len(x) - 1
    mid = N // 2
    phi0 = prm.phi0_plus
    eps = prm.epsilon
    M = prm.derived.M

    odd = float(np.max(np.abs(psi + psi[::-1])))
    scale = max(phi0, float(np.max(np.abs(psi))), 1e-300)
    mono = bool(np.all(np.diff(psi) >= -1e-14 * scale))

    slope = np.diff(psi) / grid.h
    curv = np.diff(slope)                  # at interior nodes 1..N-1
    ctol = 1e-10 * max(float(np.max(np.abs(slope))), 1e-300)
    right = curv[mid:]                     # nodes mid..N-1
    left = curv[:mid - 1]                  # nodes 1..mid-1
    convex = bool(np.all(right >= -ctol) and np.all(left <= ctol))

    k = M / math.sqrt(eps)
    env = phi0 * (np.exp(-k * (1.0 + x)) + np.exp(-k * (1.0 - x)))
    margin = float(np.min(env + slack - np.abs(psi)))
    bounded = bool(np.all(np.abs(psi) <= phi0 + slack))

    gx = ss.psi_x
    E = 0.5 * eps * gx ** 2 - ss.eta0
    fi = float(np.max(np.abs(E - E[mid])))

    gamma = prm.gamma_eps / math.sqrt(eps)
    pstar = solve_psi_star(gamma, prm.m0, phi0) if phi0 > 0 else 0.0
    return TheoremAReport(
        oddness_defect=odd, monotonicity_ok=mono, convexity_ok=convex,
        interior_bound_ok=margin >= 0.0, psi_boundary=float(psi[-1]),
        scaled_gradient=float(math.sqrt(eps) * gx[-1]), psi_star_pred=pstar,
        first_integral_defect=fi, first_integral_scale=first_integral_scale(ss),
        interior_bound_margin=margin, bounded_ok=bounded)


def solve_psi_star(gamma: float, alpha: float, phi0: float,
                   tol: float = 1e-12) -> float:
    """Root in (0, phi0] of phi0 - s = gamma sqrt(alpha) (e^{s/2} - e^{-s/2})."""
    if gamma < 0 or alpha <= 0:
        raise ValueError("need gamma >= 0 and alpha > 0")
    if phi0 <= 0:
        return 0.0
    c = gamma * math.sqrt(alpha)

    def f(s):
        return phi0 - s - 2.0 * c * math.sinh(0.5 * s)

    # f(0) = phi0 > 0 and f is strictly decreasing, so [0, phi0] brackets the root
    if f(phi0) >= 0.0:
        return phi0
    return brentq(f, 0.0, phi0, xtol=tol, rtol=4 * np.finfo(float).eps)


# -- asymptotics in epsilon ---------------------------------------------------

@dataclass(frozen=True)
class SweepReport:
    eps: tuple
    psi_boundary: tuple
    grad_boundary: tuple
    scaled_gradient: tuple
    grad_sq_integral: tuple
    slope: float
    intercept: float
    grad_sq_exponent: float
    psi_boundary_limit: float
    scaled_gradient_limit: float
    gamma: float
    alpha_fit: float
    psi_star_fit: float
    psi_star_conjecture: float
    monotone_ok: bool
    bounded_ok: bool

    @property
    def extrapolation_defect(self) -> float:
        return abs(self.psi_boundary_limit - self.psi_star_fit)

    @property
    def conjecture_defect(self) -> float:
        return abs(self.psi_boundary_limit - self.psi_star_conjecture)


def _limit_in_sqrt_eps(eps, y) -> float:
    s = np.sqrt(np.asarray(eps))
    deg = min(2, len(s) - 1)
    return float(np.polyfit(s, y, deg)[-1])


def boundary_asymptotics_sweep(params_base: Params, eps_list: Sequence[float],
                               gamma_rule: Callable[[float], float] = math.sqrt,
                               n_cells: int = 400, tol: float = 1e-12) -> SweepReport:
    """Solve across ``eps_list`` and extract boundary asymptotics.

    Limits as eps -> 0 are extrapolated with a quadratic in sqrt(eps).
    alpha is fitted from the limits through
    lim sqrt(eps) psi'(1) = sqrt(alpha) (e^{psi*/2} - e^{-psi*/2}).
    """
    eps_list = [float(e) for e in eps_list]
    if len(eps_list) < 2 or any(b >= a for a, b in zip(eps_list, eps_list[1:])):
        raise ValueError("eps_list must be strictly decreasing with >= 2 entries")
    pb, gb, sg, g2 = [], [], [], []
    gammas = []
    for e in eps_list:
        prm = params_base.replace(epsilon=e, gamma_eps=gamma_rule(e))
        grid = make_grid(n_cells, e, prm.derived.M)
        ss = solve_pb(prm, grid, tol=tol)
        gx = ss.psi_x
        pb.append(float(ss.psi[-1]))
        gb.append(float(gx[-1]))
        sg.append(math.sqrt(e) * float(gx[-1]))
        g2.append(trapezoid(grid, gx ** 2))
        gammas.append(prm.gamma_eps / math.sqrt(e))

    le = np.log(eps_list)
    slope, intercept = np.polyfit(le, np.log(gb), 1)
    g2_exp = float(np.polyfit(le, np.log(g2), 1)[0])
    psi_lim = _limit_in_sqrt_eps(eps_list, pb)
    sg_lim = _limit_in_sqrt_eps(eps_list, sg)
    alpha = (sg_lim / (2.0 * math.sinh(0.5 * psi_lim))) ** 2
    gamma = gammas[-1]
    phi0 = params_base.phi0_plus
    return SweepReport(
        eps=tuple(eps_list), psi_boundary=tuple(pb), grad_boundary=tuple(gb),
        scaled_gradient=tuple(sg), grad_sq_integral=tuple(g2),
        slope=float(slope), intercept=float(intercept), grad_sq_exponent=g2_exp,
        psi_boundary_limit=psi_lim, scaled_gradient_limit=sg_lim, gamma=gamma,
        alpha_fit=alpha, psi_star_fit=solve_psi_star(gamma, alpha, phi0),
        psi_star_conjecture=solve_psi_star(gamma, params_base.m0, phi0),
        monotone_ok=bool(np.all(np.diff(pb) >= 0) or np.all(np.diff(pb) <= 0)),
        bounded_ok=bool(np.all(np.asarray(pb) <= phi0 + 1e-12)))


# -- integral estimates -------------------------------------------------------

@dataclass(frozen=True)
class EstimateCheck:
    name: str
    lhs: float
    rhs: float

    @property
    def margin(self) -> float:
        return self.rhs - self.lhs

    @property
    def ok(self) -> bool:
        # equality cases (psi = 0) must survive quadrature rounding
        return self.margin >= -1e-13 * max(1.0, abs(self.rhs))


@dataclass(frozen=True)
class EstimateReport:
    checks: tuple

    @property
    def all_ok(self) -> bool:
        return all(c.ok for c in self.checks)

    def __getitem__(self, name: str) -> EstimateCheck:
        for c in self.checks:
            if c.name == name:
                return c
        raise KeyError(name)


def check_steady_estimates(ss: SteadyState) -> EstimateReport:
    """Integral bounds on the equilibrium, each as (lhs, rhs) with lhs <= rhs."""
    prm, grid = ss.params, ss.grid
    dc = prm.derived
    eps, m0, phi0 = prm.epsilon, prm.m0, prm.phi0_plus
    r = dc.K0 * phi0 * math.sqrt(eps) / dc.M
    gx = ss.psi_x
    eta = ss.eta0
    mid = len(grid) // 2
    k = dc.M / math.sqrt(eps)
    checks = (
        EstimateCheck("exp_integral", max(ss.Zplus, ss.Zminus), 2.0 + r),
        EstimateCheck("eta_lower_deficit",
                      float(np.max(np.abs(eta - m0 - np.abs(eta - m0)))), m0 * r),
        EstimateCheck("eta_l1_deviation", trapezoid(grid, np.abs(eta - m0)),
                      2.0 * m0 * r),
        EstimateCheck("grad_at_center", float(gx[mid]),
                      2.0 * phi0 * (math.exp(-1.5 * k) + math.exp(-0.5 * k))),
        EstimateCheck("grad_sq_integral", trapezoid(grid, gx ** 2),
                      3.0 * m0 * dc.K0 * phi0 / (dc.M * math.sqrt(eps))),
    )
    return EstimateReport(checks)
