"""Mesh, parameters and discrete calculus shared by every solver.

Fields are plain ``numpy`` arrays sampled at the nodes of a :class:`Grid`.
All integrals use the composite trapezoid rule so that discrete identities
such as ``D(1) = 0`` for zero-mean data hold to rounding.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
from scipy.linalg import solve_banded
from scipy.optimize import brentq

__all__ = [
    "Params", "DerivedConstants", "Grid", "make_grid", "trapezoid",
    "cumulative_integral", "derivative", "UnresolvedLayerError",
    "ConvergenceError", "NegativeDensityError", "k0_closed_form",
    "k0_grid_search", "solve_tridiagonal", "box_load", "box_gradient",
    "robin_laplacian", "robin_constant", "box_mass_bands",
]

# nodes required inside one layer width next to each endpoint
LAYER_NODES = 12
# the graded part of each half-mesh holds this fraction of its cells
_GRADED_FRACTION = 0.5


class UnresolvedLayerError(ValueError):
    """The mesh cannot resolve a boundary layer of width sqrt(eps)/M."""


class ConvergenceError(RuntimeError):
    """An iterative solve did not reach its tolerance."""


class NegativeDensityError(RuntimeError):
    """A density dropped below the positivity floor."""


def k0_closed_form(phi0_plus: float) -> float:
    """sup over 0<|y|<=phi0 of |e^y - 1|/|y|, attained at y = phi0."""
    if phi0_plus <= 0.0:
        return 1.0
    return math.expm1(phi0_plus) / phi0_plus


def k0_grid_search(phi0_plus: float, n: int = 20001) -> float:
    """Brute-force the same supremum on a dense grid over both signs of y."""
    if phi0_plus <= 0.0:
        return 1.0
    y = np.linspace(-phi0_plus, phi0_plus, n)
    y = y[y != 0.0]
    return float(np.max(np.abs(np.expm1(y)) / np.abs(y)))


@dataclass(frozen=True)
class DerivedConstants:
    M: float
    K0: float
    m0_eps: float
    m0_eps_prime: float
    robin_threshold: float


@dataclass(frozen=True)
class Params:
    """Physical and asymptotic parameters of the scaled 1D PNP problem.

    ``phi0_minus`` defaults to ``-phi0_plus`` (antisymmetric electrode data).
    """

    epsilon: float
    m0: float = 2.0
    phi0_plus: float = 0.1
    phi0_minus: float | None = None
    gamma_eps: float | None = None
    gamma_max: float = 1.0
    theta: float = 0.5

    def __post_init__(self):
        if self.phi0_minus is None:
            object.__setattr__(self, "phi0_minus", -self.phi0_plus)
        if self.gamma_eps is None:
            object.__setattr__(self, "gamma_eps", 6.0 * math.sqrt(self.epsilon))
        if not self.epsilon > 0:
            raise ValueError(f"epsilon must be > 0, got {self.epsilon}")
        if not self.gamma_eps > 0:
            raise ValueError(f"gamma_eps must be > 0, got {self.gamma_eps}")
        if not self.m0 > 0:
            raise ValueError(f"m0 must be > 0, got {self.m0}")
        if not 0.0 < self.theta < 1.0:
            raise ValueError(f"theta must lie in (0, 1), got {self.theta}")
        if not self.gamma_max > 0:
            raise ValueError(f"gamma_max must be > 0, got {self.gamma_max}")
        if self.gamma_eps > self.gamma_max:
            raise ValueError(
                f"gamma_eps={self.gamma_eps} exceeds gamma_max={self.gamma_max}")

    def replace(self, **changes) -> "Params":
        kw = dict(epsilon=self.epsilon, m0=self.m0, phi0_plus=self.phi0_plus,
                  phi0_minus=self.phi0_minus, gamma_eps=self.gamma_eps,
                  gamma_max=self.gamma_max, theta=self.theta)
        kw.update(changes)
        return Params(**kw)

    @property
    def symmetric(self) -> bool:
        return self.phi0_minus == -self.phi0_plus

    @cached_property
    def derived(self) -> DerivedConstants:
        eps, m0, phi = self.epsilon, self.m0, self.phi0_plus
        M = math.sqrt(m0 / (2.0 * math.exp(phi)))
        K0 = k0_closed_form(phi)
        if __debug__ and phi > 0:
            # closed form must dominate the brute-force sup
            assert K0 >= k0_grid_search(phi) - 1e-12 * K0
        ratio = K0 * phi * math.sqrt(eps) / M
        thr = ((1.0 + 2.0 * self.gamma_max) ** 2 + 3.0) * K0 * phi / (4.0 * M)
        return DerivedConstants(M=M, K0=K0, m0_eps=m0 * (1.0 - ratio),
                                m0_eps_prime=m0 * (1.0 - 2.0 * ratio),
                                robin_threshold=thr)


@dataclass(frozen=True, eq=False)
class Grid:
    """Mirror-symmetric node set on [-1, 1]."""

    nodes: np.ndarray
    layer_width: float = math.inf
    h: np.ndarray = field(init=False, repr=False)
    weights: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        x = np.asarray(self.nodes, dtype=float)
        x.setflags(write=False)
        object.__setattr__(self, "nodes", x)
        h = np.diff(x)
        if np.any(h <= 0):
            raise ValueError("grid nodes must be strictly increasing")
        h.setflags(write=False)
        object.__setattr__(self, "h", h)
        w = np.zeros_like(x)
        w[:-1] += 0.5 * h
        w[1:] += 0.5 * h
        w.setflags(write=False)
        object.__setattr__(self, "weights", w)

    @property
    def n_cells(self) -> int:
        return len(self.h)

    @property
    def cell_widths(self) -> np.ndarray:
        return self.h

    def __len__(self):
        return len(self.nodes)

    def trapezoid(self, f) -> float:
        return trapezoid(self, f)

    def cumulative_integral(self, f) -> np.ndarray:
        return cumulative_integral(self, f)

    def derivative(self, f) -> np.ndarray:
        return derivative(self, f)


def _graded_half(K: int, slope0: float) -> np.ndarray:
    """Distances from the boundary of K+1 nodes covering [0, 1].

    Exponential stretching on the first half of the index range joined C^1
    to a uniform part. ``slope0`` is ds/dxi at the boundary; the mapping only
    depends on it, so doubling K nests the meshes.
    """
    xi = np.arange(K + 1) / K
    if slope0 >= 1.0:
        return xi
    t = _GRADED_FRACTION

    def amp(beta):
        eb = math.exp(beta * t)
        return 1.0 / (beta * eb * (1.0 - t) + math.expm1(beta * t))

    beta = brentq(lambda b: amp(b) * b - slope0, 1e-10, 700.0 / t, xtol=1e-14)
    A = amp(beta)
    s = np.where(xi <= t,
                 A * np.expm1(beta * np.minimum(xi, t)),
                 A * math.expm1(beta * t) + A * beta * math.exp(beta * t) * (xi - t))
    s[-1] = 1.0
    return s


def make_grid(n_cells: int, epsilon: float, M: float) -> Grid:
    """Symmetric graded mesh clustering nodes inside the sqrt(eps)/M layers.

    Raises :class:`UnresolvedLayerError` if fewer than 12 nodes fall in a layer
    or the boundary cell exceeds min(sqrt(eps)/(10 M), 2/n_cells).
    """
    if n_cells < 32 or n_cells % 2:
        raise UnresolvedLayerError(
            f"n_cells must be even and >= 32, got {n_cells}")
    L = math.sqrt(epsilon) / M
    K = n_cells // 2
    s = _graded_half(K, min(1.0, 4.0 * L))
    right = 1.0 - s[::-1]          # from 0 up to 1
    right[0] = 0.0
    right[-1] = 1.0
    x = np.concatenate([-right[:0:-1], right])
    grid = Grid(x, layer_width=L)

    h0 = grid.h[-1]
    limit = min(L / 10.0, 2.0 / n_cells)
    in_layer = int(np.sum(x >= 1.0 - L))
    if h0 > limit * (1 + 1e-12) or in_layer < LAYER_NODES:
        raise UnresolvedLayerError(
            f"n_cells={n_cells} cannot resolve layer width {L:.3g} "
            f"(boundary cell {h0:.3g}, {in_layer} nodes in layer)")
    return grid


def trapezoid(grid: Grid, f) -> float:
    """Composite trapezoid rule; equals ``cumulative_integral(f)[-1]`` bitwise."""
    return float(cumulative_integral(grid, f)[-1])


def cumulative_integral(grid: Grid, f) -> np.ndarray:
    """F(x_i) = int_{-1}^{x_i} f, accumulated cell by cell, F(-1) = 0."""
    f = np.asarray(f, dtype=float)
    out = np.empty_like(f)
    out[0] = 0.0
    np.cumsum(0.5 * grid.h * (f[:-1] + f[1:]), out=out[1:])
    return out


def derivative(grid: Grid, f) -> np.ndarray:
    """Second-order nonuniform central differences, one-sided at the ends."""
    return np.gradient(np.asarray(f, dtype=float), grid.nodes, edge_order=2)


# -- box scheme helpers -------------------------------------------------------
#
# The elliptic problems eps*u'' = rho are discretized by applying the trapezoid
# rule to the first-order system (u, g = u'):
#     u_{i+1} - u_i = h (g_i + g_{i+1}) / 2,  eps (g_{i+1} - g_i) = h (rho_i + rho_{i+1}) / 2.
# Eliminating g gives a tridiagonal system whose load is ``box_load(rho)``.

def box_load(grid: Grid, rho) -> np.ndarray:
    """Row loads [h_i rho_{i-1} + (h_i + h_{i+1}) rho_i + h_{i+1} rho_{i+1}] / 4."""
    rho = np.asarray(rho, dtype=float)
    q = 0.25 * grid.h * (rho[:-1] + rho[1:])
    out = np.zeros(len(rho))
    out[:-1] += q
    out[1:] += q
    return out


def box_gradient(grid: Grid, u, rho, epsilon: float) -> np.ndarray:
    """Nodal u' implied by the box relations, from purely local data."""
    u = np.asarray(u, dtype=float)
    rho = np.asarray(rho, dtype=float)
    h = grid.h
    slope = np.diff(u) / h
    corr = h * (rho[:-1] + rho[1:]) / (4.0 * epsilon)
    g = np.empty_like(u)
    g[:-1] = slope - corr
    g[-1] = slope[-1] + corr[-1]
    return g


def solve_tridiagonal(lower, diag, upper, rhs) -> np.ndarray:
    """Solve a tridiagonal system; ``rhs`` may have several columns."""
    n = len(diag)
    ab = np.zeros((3, n))
    ab[0, 1:] = upper
    ab[1] = diag
    ab[2, :-1] = lower
    return solve_banded((1, 1), ab, rhs, check_finite=False)


def robin_laplacian(grid: Grid, epsilon: float, gamma_eps: float):
    """Bands (lower, diag, upper) of the box-scheme operator for eps*u''.

    The first and last rows carry the Robin conditions u -+ gamma u' = bc.
    """
    a = epsilon / grid.h
    diag = np.zeros(len(grid))
    diag[:-1] -= a
    diag[1:] -= a
    diag[0] -= epsilon / gamma_eps
    diag[-1] -= epsilon / gamma_eps
    return a.copy(), diag, a.copy()


def robin_constant(grid: Grid, epsilon: float, gamma_eps: float,
                   bc_minus: float, bc_plus: float) -> np.ndarray:
    c = np.zeros(len(grid))
    c[0] = epsilon * bc_minus / gamma_eps
    c[-1] = epsilon * bc_plus / gamma_eps
    return c


def box_mass_bands(grid: Grid):
    """Bands of the matrix B with ``B @ rho == box_load(rho)``."""
    q = 0.25 * grid.h
    diag = np.zeros(len(grid))
    diag[:-1] += q
    diag[1:] += q
    return q.copy(), diag, q.copy()
