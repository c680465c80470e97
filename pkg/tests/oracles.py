"""Independent reference computations used to derive frozen test values.

Nothing here calls the package's threshold, Jacobian, root-finding or
integration code; only the model right-hand side is shared.
"""

from __future__ import annotations

import math

import numpy as np
from scipy.integrate import solve_ivp

from apis.model import Params, SystemId, rhs


def quad_roots(x: float, y: float, r: float, K_hat: float):
    """Positive roots of u^2 - (r/x) u + K_hat/y = 0 via numpy.roots, ascending."""
    rts = np.roots([1.0, -r / x, K_hat / y])
    if np.any(np.abs(rts.imag) > 1e-9 * np.abs(rts.real).max()):
        return None
    return tuple(sorted(float(v) for v in rts.real))


def richardson_jacobian(sys: SystemId, x, p: Params, h0: float = 1e-3) -> np.ndarray:
    """Central differences at steps h and h/2 combined by Richardson extrapolation."""
    x = np.asarray(x, dtype=float)
    n = x.size
    J = np.empty((n, n))
    for j in range(n):
        h = h0 * max(1.0, abs(x[j]))

        def d(step):
            e = np.zeros(n)
            e[j] = step
            return (rhs(sys, x + e, p) - rhs(sys, x - e, p)) / (2 * step)

        J[:, j] = (4 * d(h / 2) - d(h)) / 3
    return J


def reference_trajectory(sys: SystemId, x0, p: Params, t_end: float, t_eval):
    """Stiff Radau reference at tight tolerances."""
    sol = solve_ivp(lambda t, y: rhs(sys, np.maximum(y, 0.0), p), (0.0, t_end), np.asarray(x0, float),
                    method="Radau", rtol=1e-11, atol=1e-12, t_eval=t_eval)
    assert sol.success, sol.message
    return sol.y.T


def full_state_from_Sh(S: float, p: Params):
    """Interior candidate state for a given S_h, built from three equilibrium conditions.

    S_m' = 0 fixes the infected-bee fraction, N_h' = 0 fixes the mite total,
    N_m' = 0 fixes the infected-mite count.  Returns None outside the
    positive cone.
    """
    ca = p.c * p.alpha
    frac = (ca * S - p.d_m) / p.beta_hm_hat  # I_h / N_h
    if not 0 < frac < 1:
        return None
    Nh = S / (1 - frac)
    Ih = Nh - S
    u = S + p.rho * Ih
    rep = p.r * u * u / (p.K_hat + u * u)
    Nm = (rep - p.d_h * Nh - p.mu_h * Ih) / (p.alpha * Nh)
    Im = Nm * (ca * Nh - p.d_m) / p.mu_m
    Sm = Nm - Im
    if Nm <= 0 or Im <= 0 or Sm <= 0:
        return None
    return np.array([S, Ih, Sm, Im])


def infected_bee_residual(S: float, p: Params) -> float:
    x = full_state_from_Sh(S, p)
    if x is None:
        return math.nan
    return float(rhs(SystemId.FULL, x, p)[1])


def brute_force_full_roots(p: Params, samples: int = 100_000, iters: int = 200):
    """Dense sign scan of the infected-bee residual plus plain bisection."""
    ca = p.c * p.alpha
    lo = p.d_m / ca
    hi = (p.d_m + p.beta_hm_hat) / ca
    grid = np.linspace(lo, hi, samples + 2)[1:-1]
    vals = np.array([infected_bee_residual(s, p) for s in grid])
    roots = []
    for k in range(len(grid) - 1):
        a, b, fa, fb = grid[k], grid[k + 1], vals[k], vals[k + 1]
        if not (np.isfinite(fa) and np.isfinite(fb)) or fa == 0 or np.sign(fa) == np.sign(fb):
            continue
        for _ in range(iters):
            m = 0.5 * (a + b)
            fm = infected_bee_residual(m, p)
            if not np.isfinite(fm):
                break
            if np.sign(fm) == np.sign(fa):
                a, fa = m, fm
            else:
                b = m
            if b - a <= 1e-15 * b:
                break
        x = full_state_from_Sh(0.5 * (a + b), p)
        if x is not None and np.max(np.abs(rhs(SystemId.FULL, x, p))) <= 1e-6 * max(p.r, 1):
            roots.append(x)
    return roots


def hopf_dm(p: Params) -> float:
    """d_m at which H* = d_m/(alpha c) equals sqrt(K_hat)."""
    return p.alpha * p.c * math.sqrt(p.K_hat)


def dense_scan_g2_g4(p: Params, samples: int = 100_000, iters: int = 200):
    """Sign scan of g2 - g4 at ``samples`` points on the admissible interval plus bisection.

    Uses the reduction functions but none of the package's scanning or
    bracketing logic; states with a nonpositive coordinate are dropped.
    """
    from apis.equilibria import FullFunctions

    fn = FullFunctions(p)
    grid = np.linspace(fn.lower, fn.upper, samples + 2)[1:-1]
    with np.errstate(all="ignore"):
        vals = fn.diff(grid)
    roots = []
    for k in range(samples - 1):
        fa, fb = vals[k], vals[k + 1]
        if not (np.isfinite(fa) and np.isfinite(fb)) or np.sign(fa) == np.sign(fb):
            continue
        a, b = grid[k], grid[k + 1]
        if a < fn.pole < b:
            continue  # sign flip across the pole, not a root
        for _ in range(iters):
            m = 0.5 * (a + b)
            fm = fn.diff(m)
            if np.sign(fm) == np.sign(fa):
                a, fa = m, fm
            else:
                b = m
            if b - a <= 1e-15 * b:
                break
        x = fn.state(0.5 * (a + b))
        if np.all(x > 0):
            roots.append(x)
    return roots
