"""Independent reference solutions used by the tests."""

import math

import numpy as np
from scipy.integrate import solve_ivp
from scipy.optimize import brentq


def shoot_symmetric(eps, m0, phi0, gamma_eps, max_outer=40):
    """Odd equilibrium by shooting from x = 0 with psi(0) = 0.

    The unknown is log psi'(0); the normalization Z = int e^psi (equal to
    int e^-psi by oddness) is lagged and updated until it stops moving.
    Returns a dense solution on [0, 1] with components (psi, psi', int 2 cosh).
    """
    Z = 2.0
    sol = None
    for _ in range(max_outer):
        def rhs(x, y, Z=Z):
            return [y[1], (m0 / Z) * 2.0 * math.sinh(y[0]) / eps, 2.0 * math.cosh(y[0])]

        def integrate(ls, dense=False):
            return solve_ivp(rhs, (0.0, 1.0), [0.0, math.exp(ls), 0.0],
                             method="DOP853", rtol=1e-13, atol=1e-60,
                             dense_output=dense)

        def miss(ls):
            r = integrate(ls)
            if r.status != 0 or not np.all(np.isfinite(r.y[:, -1])):
                return 1.0
            return r.y[0, -1] + gamma_eps * r.y[1, -1] - phi0

        ls = brentq(miss, -400.0, math.log(phi0), xtol=1e-15, rtol=1e-15, maxiter=500)
        sol = integrate(ls, dense=True)
        Znew = sol.y[2, -1]
        if abs(Znew - Z) < 1e-15:
            break
        Z = Znew
    return sol


def cosine_series_hm1(coeffs):
    """Dual H^1 norm of sum c_k cos(k pi (x+1)/2) on [-1, 1]."""
    return math.sqrt(sum(c * c / (1.0 + (k * math.pi / 2) ** 2) for k, c in coeffs.items()))
