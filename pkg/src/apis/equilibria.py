"""Equilibria, Jacobians, stability classes and Hopf-boundary scans.

Closed forms are used wherever they exist (bee-only, virus-free and
mite-free systems).  Interior equilibria of the healthy-mite-free and full
systems are found by reducing the equilibrium equations to one unknown,
scanning for sign changes and refining each bracket with Brent's method.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import brentq

from .model import EPS_DENOM, Params, SystemId, _roots, rhs, thresholds

TAU_EIG = 1e-8
GUARD = 1e-9  # relative guard band for strict inequalities
SCAN_SAMPLES = 4096
SCAN_MAX_SAMPLES = 1 << 20
POLE_MARGIN = 1e-9

SINK, SOURCE, SADDLE, NONHYPERBOLIC = "sink", "source", "saddle", "nonhyperbolic"


def compare(lhs: float, rhs_: float, rel: float = GUARD) -> int:
    """Three-way comparison with a relative guard band: -1, 0 (boundary) or 1."""
    if lhs is None or rhs_ is None:
        raise ValueError("cannot compare undefined values")
    if math.isinf(lhs) or math.isinf(rhs_):
        return (lhs > rhs_) - (lhs < rhs_)
    if abs(lhs - rhs_) <= rel * max(abs(lhs), abs(rhs_)):
        return 0
    return 1 if lhs > rhs_ else -1


def classify_eigenvalues(eigs) -> str:
    eigs = np.asarray(eigs, dtype=complex)
    scale = float(np.max(np.abs(eigs))) if eigs.size else 0.0
    tau = TAU_EIG * scale
    re = eigs.real
    if scale == 0.0 or np.any(np.abs(re) <= tau):
        return NONHYPERBOLIC
    if np.all(re < 0):
        return SINK
    if np.all(re > 0):
        return SOURCE
    return SADDLE


@dataclass(frozen=True)
class ClassifiedEquilibrium:
    sys: SystemId
    location: np.ndarray
    eigenvalues: tuple
    stability: str
    existence_condition: str
    residual: float
    predicted: str | None = None  # class implied by the closed-form stability conditions
    name: str = ""

    def as_dict(self) -> dict:
        return {
            "sys": self.sys.value,
            "name": self.name,
            "location": [float(v) for v in self.location],
            "eigenvalues": [[float(z.real), float(z.imag)] for z in self.eigenvalues],
            "class": self.stability,
            "predicted_class": self.predicted,
            "existence_condition": self.existence_condition,
            "residual": float(self.residual),
        }


def residual(sys: SystemId, point, p: Params) -> float:
    return float(np.max(np.abs(rhs(sys, point, p))))


# ---------------------------------------------------------------------------
# Jacobians

_FREQUENCY_SYSTEMS = (SystemId.FULL, SystemId.MITE_FREE, SystemId.HEALTHY_MITE_FREE)


def _jac_virus_free(point, p: Params) -> np.ndarray:
    S, M = point
    K = p.K_hat
    return np.array([
        [2 * p.r * S * K / (K + S * S) ** 2 - p.d_h - p.alpha * M, -p.alpha * S],
        [p.c * p.alpha * M, p.c * p.alpha * S - p.d_m],
    ])


def _jac_mite_free_ray(point, p: Params) -> np.ndarray:
    th = thresholds(p)
    if th.a is None:
        raise ValueError("analytic mite-free Jacobian needs R0_V > 1")
    a = th.a
    S, I = point
    if I <= 0 or abs(S - a * I) > 1e-9 * max(abs(S), 1.0):
        raise ValueError("analytic mite-free Jacobian is only valid on the ray S_h = a I_h, I_h > 0")
    K, r, rho, b = p.K_hat, p.r, p.rho, p.beta_h
    u = (a + rho) * I
    common = 2 * r * K * (a + rho) * I / (u * u + K) ** 2
    q = b / (1 + a) ** 2
    return np.array([
        [common - p.d_h - q, rho * common - a * a * q],
        [q, -a * q],
    ])


def numeric_jacobian(sys: SystemId, point, p: Params) -> np.ndarray:
    """Central differences with steps ``max(1e-6, 1e-6 |x_i|)``."""
    x = np.asarray(point, dtype=float)
    n = sys.dim
    steps = np.maximum(1e-6, 1e-6 * np.abs(x))
    if sys in _FREQUENCY_SYSTEMS:
        nh = x[list(sys.host_indices)].sum()
        if nh <= EPS_DENOM or nh <= 10 * steps[list(sys.host_indices)].sum():
            raise ValueError("point lies on the singular boundary N_h = 0")
    J = np.empty((n, n))
    for j in range(n):
        e = np.zeros(n)
        e[j] = steps[j]
        J[:, j] = (rhs(sys, x + e, p) - rhs(sys, x - e, p)) / (2 * steps[j])
    return J


def jacobian(sys: SystemId, point, p: Params, mode: str = "numeric") -> np.ndarray:
    """Jacobian of ``rhs(sys, ., p)`` at ``point``.

    ``mode="analytic"`` is available for the virus-free system (anywhere)
    and the mite-free system on the ray ``S_h = a I_h`` where the closed
    form holds.
    """
    if mode == "numeric":
        return numeric_jacobian(sys, point, p)
    if mode != "analytic":
        raise ValueError(f"unknown Jacobian mode {mode!r}")
    if sys is SystemId.VIRUS_FREE:
        return _jac_virus_free(np.asarray(point, dtype=float), p)
    if sys is SystemId.MITE_FREE:
        return _jac_mite_free_ray(np.asarray(point, dtype=float), p)
    raise ValueError(f"no analytic Jacobian for {sys.value}")


def _classified(sys, loc, J, tag, p, predicted=None, name=""):
    eigs = tuple(complex(z) for z in np.linalg.eigvals(np.atleast_2d(J)))
    loc = np.asarray(loc, dtype=float)
    return ClassifiedEquilibrium(sys, loc, eigs, classify_eigenvalues(eigs), tag,
                                 residual(sys, loc, p), predicted, name)


def _origin(sys: SystemId, p: Params) -> ClassifiedEquilibrium:
    # The frequency-dependent ratios are not differentiable at the origin.
    # They only move individuals between the S and I compartments, so the
    # totals decay like the remaining linear part; its rates are reported.
    rates = {0: -p.d_h, 1: -(p.d_h + p.mu_h), 2: -p.d_m, 3: -(p.d_m + p.mu_m)}
    J = np.diag([rates[i] for i in sys.indices])
    tag = "always (origin)"
    if sys in _FREQUENCY_SYSTEMS:
        tag += "; linear part without frequency-dependent terms"
    return _classified(sys, np.zeros(sys.dim), J, tag, p, SINK, "E0")


def _bee_slope(u: float, p: Params) -> float:
    return 2 * p.r * u * p.K_hat / (p.K_hat + u * u) ** 2 - p.d_h


# ---------------------------------------------------------------------------
# closed-form equilibrium sets


def equilibria_bee_only(p: Params) -> list[ClassifiedEquilibrium]:
    th = thresholds(p)
    sys = SystemId.BEE_ONLY
    out = [_origin(sys, p)]
    lo, hi = th.Nbar_h_c, th.Nbar_h_star
    if lo is None:
        return out
    if lo == hi:
        out.append(_classified(sys, [lo], [[_bee_slope(lo, p)]], "double root r = 2 d_h sqrt(K_hat)",
                               p, NONHYPERBOLIC, "Nbar_h"))
        return out
    out.append(_classified(sys, [lo], [[_bee_slope(lo, p)]], "r/(2 sqrt(K_hat)) > d_h", p, SOURCE, "Nbar_h_c"))
    out.append(_classified(sys, [hi], [[_bee_slope(hi, p)]], "r/(2 sqrt(K_hat)) > d_h", p, SINK, "Nbar_h_star"))
    return out


def _split(sign: int, below: str, above: str) -> str:
    return {-1: below, 1: above, 0: NONHYPERBOLIC}[sign]


def equilibria_virus_free(p: Params) -> list[ClassifiedEquilibrium]:
    """Equilibria of the bee-mite system with closed-form stability predictions."""
    th = thresholds(p)
    sys = SystemId.VIRUS_FREE
    out = [_origin(sys, p)]
    J = lambda x: _jac_virus_free(np.asarray(x, dtype=float), p)  # noqa: E731
    lo, hi, H = th.Nbar_h_c, th.Nbar_h_star, th.H_star
    if lo is None:
        return out
    if lo == hi:
        out.append(_classified(sys, [lo, 0.0], J([lo, 0.0]), "double root r = 2 d_h sqrt(K_hat)",
                               p, NONHYPERBOLIC, "Nbar_h"))
        return out
    out.append(_classified(sys, [lo, 0.0], J([lo, 0.0]), "boundary (Nbar_h_c, 0): r/(2 sqrt(K_hat)) > d_h", p,
                           _split(compare(lo, H), SADDLE, SOURCE), "Nbar_h_c"))
    out.append(_classified(sys, [hi, 0.0], J([hi, 0.0]), "boundary (Nbar_h_star, 0): r/(2 sqrt(K_hat)) > d_h", p,
                           _split(compare(hi, H), SINK, SADDLE), "Nbar_h_star"))
    if compare(lo, H) < 0 and compare(H, hi) < 0 and th.M_star is not None:
        pred = _split(compare(H, math.sqrt(p.K_hat)), SOURCE, SINK)
        loc = [H, th.M_star]
        out.append(_classified(sys, loc, J(loc), "interior (H*, M*): Nbar_h_c < H* < Nbar_h_star",
                               p, pred, "interior"))
    return out


def equilibria_mite_free(p: Params) -> list[ClassifiedEquilibrium]:
    """Equilibria of the bee-virus system with closed-form stability predictions."""
    th = thresholds(p)
    sys = SystemId.MITE_FREE
    out = [_origin(sys, p)]
    lo, hi = th.Nbar_h_c, th.Nbar_h_star
    if lo is not None:
        if lo == hi:
            loc = [lo, 0.0]
            out.append(_classified(sys, loc, numeric_jacobian(sys, loc, p),
                                   "double root r = 2 d_h sqrt(K_hat)", p, NONHYPERBOLIC, "Nbar_h"))
        else:
            s = compare(th.R0_V, 1.0)
            for val, below, above, name in ((lo, SADDLE, SOURCE, "Nbar_h_c"), (hi, SINK, SADDLE, "Nbar_h_star")):
                loc = [val, 0.0]
                out.append(_classified(sys, loc, numeric_jacobian(sys, loc, p),
                                       f"boundary ({name}, 0): r/(2 sqrt(K_hat)) > d_h", p, _split(s, below, above), name))
    if th.a is not None and compare(th.R0_V, 1.0) > 0:
        a = th.a
        I1, I2 = _roots(th.d_tilde, (a + p.rho) ** 2, p.r, p.K_hat)
        if I1 is not None:
            tag = "interior (a I_h^k, I_h^k): R0_V > 1, r/(2 sqrt(K_hat)) > d_tilde/(a+rho)"
            if I1 == I2:
                loc = [a * I1, I1]
                out.append(_classified(sys, loc, _jac_mite_free_ray(loc, p), "double root of the interior pair",
                                       p, NONHYPERBOLIC, "interior"))
            else:
                for I, pred, name in ((I1, SADDLE, "interior_1"), (I2, SINK, "interior_2")):
                    loc = [a * I, I]
                    out.append(_classified(sys, loc, _jac_mite_free_ray(loc, p), tag, p, pred, name))
    return out


# ---------------------------------------------------------------------------
# interior solvers


@dataclass
class InteriorSolveReport:
    sys: SystemId
    interval: tuple | None
    branch: str
    roots: list = field(default_factory=list)
    brackets: list = field(default_factory=list)
    conditions: dict = field(default_factory=dict)
    failures: list = field(default_factory=list)
    inconsistencies: list = field(default_factory=list)
    samples: int = 0

    def as_dict(self) -> dict:
        return {
            "sys": self.sys.value,
            "interval": list(self.interval) if self.interval else None,
            "branch": self.branch,
            "roots": [r.as_dict() for r in self.roots],
            "brackets": [list(b) for b in self.brackets],
            "conditions": self.conditions,
            "failures": list(self.failures),
            "inconsistencies": list(self.inconsistencies),
            "samples": self.samples,
        }


def _sign_brackets(fun, lo: float, hi: float, n: int):
    x = np.linspace(lo, hi, n)
    with np.errstate(all="ignore"):
        y = fun(x)
    s = np.sign(y)
    s[~np.isfinite(y)] = np.nan
    with np.errstate(invalid="ignore"):
        change = np.nonzero(s[:-1] * s[1:] < 0)[0]
    zero = np.nonzero(s == 0)[0]
    out = [(float(x[i]), float(x[i + 1])) for i in change]
    out += [(float(x[i]), float(x[i])) for i in zero]
    return sorted(out)


def scan_sign_changes(fun, pieces, n0: int = SCAN_SAMPLES, n_max: int = SCAN_MAX_SAMPLES):
    """Brackets of sign changes of a vectorised ``fun`` over disjoint ``pieces``.

    The sample count starts at ``n0`` per piece and doubles until the number
    of sign changes stays the same for two consecutive doublings.
    Returns ``(brackets, samples_used)``.
    """
    n = n0
    history = []
    while True:
        br = [b for lo, hi in pieces for b in _sign_brackets(fun, lo, hi, n)]
        history.append(len(br))
        if len(history) >= 3 and history[-1] == history[-2] == history[-3]:
            return br, n
        if n >= n_max:
            return br, n
        n *= 2


def _refine(fun, a: float, b: float):
    if a == b:
        return a
    return brentq(lambda s: float(fun(np.array([s]))[0]), a, b, xtol=1e-300, rtol=4 * np.finfo(float).eps,
                  maxiter=500)


def _pieces(lo: float, hi: float, poles) -> list[tuple[float, float]]:
    margin = POLE_MARGIN * (hi - lo)
    cuts = sorted(q for q in poles if lo < q < hi)
    pieces, a = [], lo + margin
    for q in cuts:
        if q - margin > a:
            pieces.append((a, q - margin))
        a = q + margin
    if hi - margin > a:
        pieces.append((a, hi - margin))
    return pieces


class HvmiFunctions:
    """Reduction of the healthy-mite-free equilibrium equations to ``I_h``.

    With ``Q = (d_m + mu_m)/(c alpha)`` the infected-mite equation forces
    ``S_h + I_h = Q``.  The bee total equation gives ``I_m = f1(I_h)`` and the
    infected-bee equation gives ``I_m = f2(I_h)``.
    """

    def __init__(self, p: Params):
        self.p = p
        self.Q = (p.d_m + p.mu_m) / (p.c * p.alpha)
        self.B = p.c * p.alpha * p.beta_mh_hat / (p.d_m + p.mu_m) + p.beta_mh_tilde
        self.pole = self.Q * self.B / (p.alpha + self.B)

    def f1(self, I):
        p, Q = self.p, self.Q
        u = Q - I + p.rho * I
        return (p.r * u * u / (p.K_hat + u * u) - p.d_h * Q - p.mu_h * I) / (p.alpha * Q)

    def f2(self, I):
        p, Q = self.p, self.Q
        num = I * ((Q - I) * p.beta_h / Q - (p.d_h + p.mu_h))
        den = (p.alpha + self.B) * I - Q * self.B
        return num / den

    def diff(self, I):
        return self.f1(I) - self.f2(I)


def interior_healthy_mite_free(p: Params) -> InteriorSolveReport:
    """Interior equilibria of the healthy-mite-free (S_m = 0) system."""
    sys = SystemId.HEALTHY_MITE_FREE
    if p.alpha <= 0 or p.c <= 0:
        return InteriorSolveReport(sys, None, "no-interior: alpha * c = 0")
    lhs, rhs_ = p.r * p.c * p.alpha, p.d_h * (p.d_m + p.mu_m)
    cond = {"r*c*alpha": lhs, "d_h*(d_m+mu_m)": rhs_}
    if compare(lhs, rhs_) < 0:
        return InteriorSolveReport(sys, None, "no-interior: r*c*alpha < d_h*(d_m+mu_m)", conditions=cond)
    fn = HvmiFunctions(p)
    Q = fn.Q
    cond["pole"] = fn.pole
    rep = InteriorSolveReport(sys, (0.0, Q), "scan", conditions=cond)
    brackets, rep.samples = scan_sign_changes(fn.diff, _pieces(0.0, Q, [fn.pole]))
    scale_r = max(p.r, 1.0)
    for a, b in brackets:
        try:
            I = _refine(fn.diff, a, b)
        except (ValueError, RuntimeError) as exc:
            rep.failures.append(f"bracket [{a!r}, {b!r}]: {exc}")
            continue
        S, Im = Q - I, float(fn.f1(np.array([I]))[0])
        if not (S > 0 and I > 0 and Im > 0):
            continue
        loc = np.array([S, I, Im])
        res = residual(sys, loc, p)
        if res > 1e-9 * scale_r:
            rep.failures.append(f"bracket [{a!r}, {b!r}]: residual {res!r} at {loc.tolist()}")
            continue
        rep.brackets.append((a, b))
        rep.roots.append(_classified(sys, loc, numeric_jacobian(sys, loc, p), "root of f1 - f2", p,
                                     None, "interior"))
    rep.branch = "roots found" if rep.roots else "no root found"
    return rep


class FullFunctions:
    """Reduction of the full-system interior equations to ``S_h``.

    ``g1`` (bee total) comes from the susceptible-mite equation, ``g3`` is
    the infected fraction of mites from the mite total equation, and ``g2``
    and ``g4`` are the mite totals implied by the bee total and infected-bee
    equations respectively.
    """

    def __init__(self, p: Params):
        self.p = p
        b, ca = p.beta_hm_hat, p.c * p.alpha
        self.b, self.ca = b, ca
        self.lower = p.d_m / ca
        self.upper = (p.d_m + b) / ca * (p.d_m + p.mu_m) / (p.d_m + b + p.mu_m)
        self.slope = (p.alpha * p.mu_m * b + ca * p.beta_mh_hat * (b + p.d_m)
                      - p.beta_mh_tilde * b * (b + p.d_m))
        self.offset = p.beta_mh_hat * (b + p.d_m) ** 2
        self.pole = self.offset / self.slope if self.slope != 0 else math.inf

    def _D(self, S):
        return self.p.d_m + self.b - self.ca * S

    def g1(self, S):
        return self.b * S / self._D(S)

    def g2(self, S):
        p, b, ca = self.p, self.b, self.ca
        D = self._D(S)
        E = b + (p.d_m - ca * S) * (1 - p.rho)
        return (p.r * S * D * E * E / (p.alpha * b * (p.K_hat * D * D + S * S * E * E))
                - p.d_h / p.alpha - p.mu_h * (ca * S - p.d_m) / (p.alpha * b))

    def g3(self, S):
        p = self.p
        return (self.ca * S - p.d_m) * (self.b + p.d_m) / (p.mu_m * self._D(S))

    def g4(self, S):
        p, b = self.p, self.b
        num = p.mu_m * S * (p.beta_h * (p.d_m + b) - b * (p.d_h + p.mu_h) - self.ca * p.beta_h * S)
        return num / (self.slope * S - self.offset)

    def diff(self, S):
        return self.g2(S) - self.g4(S)

    def state(self, S: float) -> np.ndarray:
        Nh = float(self.g1(S))
        Nm = float(self.g2(S))
        Im = float(self.g3(S)) * Nm
        return np.array([S, Nh - S, Nm - Im, Im])


def no_interior_bundles(p: Params) -> dict:
    """The four inequality bundles stated as sufficient for no interior equilibrium.

    Each bundle maps to its inequalities (label, lhs, rhs, relation, holds)
    and an overall truth value.  The bundles are evaluated as stated without
    correction, although the second and fourth are not dimensionally
    consistent; :func:`interior_full` flags any bundle that holds while a
    verified interior root exists.
    """
    b, dm, mum, ca = p.beta_hm_hat, p.d_m, p.mu_m, p.c * p.alpha
    R0 = p.beta_h / (p.d_h + p.mu_h)
    rb = b / (dm + b)
    den = p.alpha * mum * b / (dm + b) + ca * p.beta_mh_hat - p.beta_mh_tilde * b
    ratio = (R0 - rb) / (p.beta_h * (dm + b) * (p.d_h + p.mu_h))
    left2 = p.alpha * mum * b / (b + dm)
    right2 = p.beta_mh_tilde * b - ca
    safe = lambda x, y: x / y if y != 0 else math.copysign(math.inf, x) if x != 0 else math.nan  # noqa: E731
    bundles = {
        "B1": [("R0_V vs beta_hm/(d_m+beta_hm)", R0, rb, ">"),
               ("beta_mh_hat/den vs (d_m+mu_m)/(c alpha (d_m+beta_hm+mu_m))", safe(p.beta_mh_hat, den),
                (dm + mum) / (ca * (dm + b + mum)), ">")],
        "B2": [("alpha mu_m beta_hm/(beta_hm+d_m) vs beta_mh_tilde beta_hm - c alpha", left2, right2, ">"),
               ("ratio vs 0", ratio, 0.0, ">"), ("ratio vs d_m", ratio, dm, "<")],
        "B3": [("R0_V vs beta_hm/(d_m+beta_hm)", R0, rb, "<"),
               ("beta_mh_hat (d_m+beta_hm)/den vs 0", safe(p.beta_mh_hat * (dm + b), den), 0.0, ">"),
               ("beta_mh_hat (d_m+beta_hm)/den vs d_m/(c alpha)", safe(p.beta_mh_hat * (dm + b), den), dm / ca, "<")],
        "B4": [("alpha mu_m beta_hm/(beta_hm+d_m) vs beta_mh_tilde beta_hm - c alpha", left2, right2, "<"),
               ("ratio vs (d_m+mu_m)(d_m+beta_hm)/(d_m+beta_hm+mu_m)", ratio,
                (dm + mum) * (dm + b) / (dm + b + mum), ">")],
    }
    out = {}
    for name, items in bundles.items():
        rows, ok = [], True
        for label, lhs, rhs_, rel in items:
            if math.isnan(lhs) or math.isnan(rhs_):
                holds = None
            else:
                c = compare(lhs, rhs_)
                holds = None if c == 0 else (c > 0) == (rel == ">")
            ok = ok and holds is True
            rows.append({"label": label, "lhs": lhs, "rhs": rhs_, "relation": rel, "holds": holds})
        out[name] = {"holds": ok, "inequalities": rows}
    return out


def interior_full(p: Params) -> InteriorSolveReport:
    """Interior equilibria of the full system plus the stated no-interior bundles."""
    sys = SystemId.FULL
    if p.alpha <= 0 or p.c <= 0 or p.beta_hm_hat <= 0 or p.mu_m <= 0:
        return InteriorSolveReport(sys, None, "no-interior: needs alpha, c, beta_hm_hat, mu_m > 0")
    fn = FullFunctions(p)
    bundles = no_interior_bundles(p)
    rep = InteriorSolveReport(sys, (fn.lower, fn.upper), "scan", conditions={"bundles": bundles, "pole": fn.pole})
    holding = [k for k, v in bundles.items() if v["holds"]]
    brackets, rep.samples = scan_sign_changes(fn.diff, _pieces(fn.lower, fn.upper, [fn.pole]))
    scale_r = max(p.r, 1.0)
    for a, b in brackets:
        try:
            S = _refine(fn.diff, a, b)
        except (ValueError, RuntimeError) as exc:
            rep.failures.append(f"bracket [{a!r}, {b!r}]: {exc}")
            continue
        loc = fn.state(S)
        if not np.all(loc > 0):
            continue
        res = residual(sys, loc, p)
        Sh, Ih, Sm, _ = loc
        sm_rate = abs(Sm * (fn.ca * Sh - p.beta_hm_hat * Ih / (Sh + Ih) - p.d_m))
        if res > 1e-9 * scale_r or sm_rate > 1e-9 * scale_r:
            rep.failures.append(f"bracket [{a!r}, {b!r}]: residual {res!r} at {loc.tolist()}")
            continue
        rep.brackets.append((a, b))
        rep.roots.append(_classified(sys, loc, numeric_jacobian(sys, loc, p), "root of g2 - g4", p,
                                     None, "interior"))
    if rep.roots and holding:
        rep.inconsistencies.append(f"interior root found while bundle(s) {', '.join(holding)} hold")
    if holding:
        rep.branch = f"no-interior bundle(s) {', '.join(holding)} hold"
        if rep.roots:
            rep.branch += "; roots found anyway"
    else:
        rep.branch = "roots found" if rep.roots else "no root found"
    return rep


# ---------------------------------------------------------------------------
# Hopf boundary of the virus-free system

HOPF_PARAMETERS = ("d_m", "alpha", "c", "K_hat")


@dataclass(frozen=True)
class HopfCrossing:
    value: float
    bracket: tuple
    trace_below: float | None
    trace_above: float | None

    def as_dict(self) -> dict:
        return {"value": self.value, "bracket": list(self.bracket),
                "trace_below": self.trace_below, "trace_above": self.trace_above}


@dataclass
class HopfScan:
    parameter: str
    values: np.ndarray
    gaps: np.ndarray  # H* - sqrt(K_hat) per grid value
    crossings: list
    missing_interior: list

    def as_dict(self) -> dict:
        return {"parameter": self.parameter, "crossings": [c.as_dict() for c in self.crossings],
                "missing_interior": list(self.missing_interior),
                "grid": [[float(v), float(g)] for v, g in zip(self.values, self.gaps)]}


def interior_trace(p: Params) -> float | None:
    """Trace of the virus-free Jacobian at (H*, M*), or None without an interior equilibrium."""
    th = thresholds(p)
    H = th.H_star
    if th.Nbar_h_c is None or th.M_star is None or not (th.Nbar_h_c < H < th.Nbar_h_star):
        return None
    K = p.K_hat
    return p.r * H * (K - H * H) / (K + H * H) ** 2


def _gap(p: Params) -> float:
    return thresholds(p).H_star - math.sqrt(p.K_hat)


def hopf_scan(p: Params, parameter: str, lo: float, hi: float, step: float,
              rel_tol: float = 1e-12) -> HopfScan:
    """Locate sign changes of ``H* - sqrt(K_hat)`` along a one-parameter sweep.

    Each crossing is bisected until the bracket is below ``rel_tol``
    relative, and the interior trace is reported at the neighbouring grid
    values on either side.
    """
    if parameter not in HOPF_PARAMETERS:
        raise ValueError(f"sweep parameter must be one of {HOPF_PARAMETERS}")
    if not (hi > lo and step > 0):
        raise ValueError("need hi > lo and step > 0")
    n = int(math.floor((hi - lo) / step + 1e-9))
    values = lo + step * np.arange(n + 1)
    if hi - values[-1] > 1e-9 * step:
        values = np.append(values, hi)
    at = lambda v: p.replace(**{parameter: float(v)})  # noqa: E731
    gaps = np.array([_gap(at(v)) for v in values])
    missing = [float(v) for v in values if interior_trace(at(v)) is None]

    crossings = []
    for i in range(len(values) - 1):
        g0, g1 = gaps[i], gaps[i + 1]
        if g0 == 0 and i > 0:
            continue  # counted when it was the right end
        if g0 * g1 > 0 or (g0 == 0 and g1 == 0):
            continue
        a, b = float(values[i]), float(values[i + 1])
        if g0 == 0 or g1 == 0:
            root = a if g0 == 0 else b
        else:
            ga = g0
            while b - a > rel_tol * max(abs(a), abs(b)):
                m = 0.5 * (a + b)
                gm = _gap(at(m))
                if gm == 0:
                    a = b = m
                    break
                if (gm > 0) == (ga > 0):
                    a, ga = m, gm
                else:
                    b = m
            root = 0.5 * (a + b)
        below = values[values < root]
        above = values[values > root]
        tb = interior_trace(at(below[-1])) if below.size else None
        ta = interior_trace(at(above[0])) if above.size else None
        crossings.append(HopfCrossing(root, (float(values[i]), float(values[i + 1])), tb, ta))
    return HopfScan(parameter, values, gaps, crossings, missing)
