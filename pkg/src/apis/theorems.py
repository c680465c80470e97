"""Hypothesis/conclusion checks of the model's analytic results.

Each ``check_theoremN`` function turns the clauses of one result into
:class:`TheoremVerdict` objects.  A verdict's hypothesis is decided from the
parameters, the thresholds and the initial state only.  Its predicted
conclusion is a tuple of :class:`Conclusion` predicates that
:func:`cross_validate` tests against simulated trajectories.

Result ids:

T1  boundedness, persistence and extinction of the full system
T2  persistence/extinction of mites and disease in the full system
T3  global dynamics of the virus-free (bee-mite) system
T4  global dynamics of the mite-free (bee-virus) system
T5  dynamics of the healthy-mite-free system
T6  persistence of bees in the full system (and the bee-only reduction)
"""

from __future__ import annotations

import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .equilibria import (
    GUARD, HvmiFunctions, compare, equilibria_mite_free, equilibria_virus_free,
    interior_full, interior_healthy_mite_free,
)
from .integrate import IntegrationConfig, IntegrationError, OutcomeLabel, Trajectory, integrate
from .model import Params, ParamsRaw, SystemId, Thresholds, thresholds

IC_MARGIN = 0.01  # initial conditions this close to a threshold are boundary cases
BOUND_SLACK = 0.05


@dataclass(frozen=True)
class Inequality:
    label: str
    lhs: float | None
    relation: str  # "<", ">", ">=", "<="
    rhs: float | None
    holds: bool | None  # None: undefined operand or inside the guard band

    def as_dict(self) -> dict:
        return {"label": self.label, "lhs": self.lhs, "relation": self.relation,
                "rhs": self.rhs, "holds": self.holds}


def ineq(label: str, lhs, relation: str, rhs_, band: float = GUARD) -> Inequality:
    if lhs is None or rhs_ is None or (isinstance(lhs, float) and math.isnan(lhs)):
        return Inequality(label, lhs, relation, rhs_, None)
    c = compare(float(lhs), float(rhs_), band)
    if c == 0:
        return Inequality(label, lhs, relation, rhs_, None)
    return Inequality(label, lhs, relation, rhs_, (c > 0) == (relation in (">", ">=")))


@dataclass(frozen=True)
class Conclusion:
    """A predicted long-run property.

    kind is one of ``bounded_above``, ``bounded_below``, ``extinct``,
    ``persists``, ``converges_to``, ``local_class``, ``no_interior``,
    ``interior_on_line``.
    """

    kind: str
    quantity: str = ""
    value: float | None = None
    points: tuple = ()
    expected: str = ""

    @property
    def tag(self) -> str:
        if self.kind == "bounded_above":
            return f"limsup {self.quantity} <= {self.value:.6g}"
        if self.kind == "bounded_below":
            return f"{self.quantity} persistent >= {self.value:.6g}"
        if self.kind == "extinct":
            return f"{self.quantity} -> 0"
        if self.kind == "persists":
            return f"{self.quantity} persists"
        if self.kind == "converges_to":
            pts = " or ".join("(" + ", ".join(f"{v:.6g}" for v in pt) + ")" for pt in self.points)
            return f"converges to {pts}"
        if self.kind == "local_class":
            return f"interior equilibrium is a {self.expected}"
        if self.kind == "no_interior":
            return f"no interior equilibrium ({self.quantity})"
        if self.kind == "interior_on_line":
            return f"interior equilibria satisfy S_h + I_h = {self.value:.6g}"
        return self.kind

    def as_dict(self) -> dict:
        return {"kind": self.kind, "quantity": self.quantity, "value": self.value,
                "points": [list(pt) for pt in self.points], "expected": self.expected, "tag": self.tag}


@dataclass(frozen=True)
class TheoremVerdict:
    theorem: str
    clause: str
    system: SystemId
    hypotheses: tuple  # disjunction of conjunctions of Inequality
    hypothesis_holds: bool
    conclusions: tuple
    notes: tuple = ()

    @property
    def id(self) -> str:
        return f"{self.theorem}.{self.clause}"

    @property
    def predicted_conclusion(self) -> str:
        return "; ".join(c.tag for c in self.conclusions)

    def as_dict(self) -> dict:
        return {
            "id": self.id, "theorem": self.theorem, "clause": self.clause, "system": self.system.value,
            "hypotheses": [[i.as_dict() for i in conj] for conj in self.hypotheses],
            "hypothesis_holds": self.hypothesis_holds,
            "predicted_conclusion": self.predicted_conclusion,
            "conclusions": [c.as_dict() for c in self.conclusions],
            "notes": list(self.notes),
        }


def _verdict(theorem, clause, system, groups, conclusions, notes=()) -> TheoremVerdict:
    groups = tuple(tuple(g) for g in groups)
    holds = any(all(i.holds is True for i in g) for g in groups)
    notes = list(notes)
    for g in groups:
        for i in g:
            if i.holds is None:
                if i.lhs is None or i.rhs is None:
                    notes.append(f"undefined threshold in '{i.label}'")
                else:
                    notes.append(f"boundary case in '{i.label}'")
    return TheoremVerdict(theorem, clause, system, groups, holds, tuple(conclusions), tuple(notes))


def _growth(p: Params) -> float:
    return p.r / (2.0 * math.sqrt(p.K_hat))


def _full_x0(x0) -> np.ndarray:
    x = np.asarray(x0, dtype=float)
    if x.shape != (4,) or np.any(x < 0) or not np.all(np.isfinite(x)):
        raise ValueError("x0 must be a nonnegative 4-vector (S_h, I_h, S_m, I_m)")
    return x


def _ic(label, value, relation, threshold) -> Inequality:
    return ineq(label, value, relation, threshold, IC_MARGIN)


def _div(a, b):
    if a is None or b is None or b == 0:
        return None
    return a / b


def _mul(*xs):
    if any(x is None for x in xs):
        return None
    out = 1.0
    for x in xs:
        out *= x
    return out


def _add(*xs):
    if any(x is None for x in xs):
        return None
    return float(sum(xs))


# ---------------------------------------------------------------------------
# the six results


def check_theorem1(p: Params, x0, raw: ParamsRaw | None = None) -> list[TheoremVerdict]:
    """Boundedness, bee persistence and extinction clauses for the full system."""
    x = _full_x0(x0)
    th = thresholds(p)
    g = _growth(p)
    Nh0, S0 = x[0] + x[1], x[0]
    N0 = p.c * Nh0 + x[2] + x[3]
    nstar = th.N_star
    load = _div(_add(p.d_h, p.mu_h, _mul(p.alpha, nstar)), p.rho)
    out = [
        _verdict("T1", "a", SystemId.FULL,
                 [[ineq("r/d vs 2 sqrt(K_hat)", p.r / th.d if th.d > 0 else math.inf, ">",
                        2 * math.sqrt(p.K_hat))]],
                 [Conclusion("bounded_above", "N", nstar)] if nstar is not None else []),
        _verdict("T1", "b", SystemId.FULL, [[ineq("r/(2 sqrt(K_hat)) vs d_h", g, ">", p.d_h)]],
                 [Conclusion("bounded_above", "N_h", th.Nbar_h_star)] if th.Nbar_h_star is not None else []),
        _verdict("T1", "c", SystemId.FULL,
                 [[ineq("r/(2 sqrt(K_hat)) vs (d_h+mu_h+alpha N*)/rho", g, ">", load),
                   _ic("N_h(0) vs Nund_h_c", Nh0, ">", th.Nund_h_c)]],
                 [Conclusion("bounded_below", "N_h", th.Nund_h_star)] if th.Nund_h_star is not None else []),
        _verdict("T1", "d", SystemId.FULL,
                 [[ineq("r/(2 sqrt(K_hat)) vs d_h+beta_h+beta_mh N*/Nund_h*+(beta_mh~+alpha)(N*-c Nund_h*)",
                        g, ">", th.D_s),
                   ineq("r/(2 sqrt(K_hat)) vs (d_h+mu_h+alpha N*)/rho", g, ">", load),
                   _ic("S_h(0) vs S_h_c", S0, ">", th.S_h_c)]],
                 [Conclusion("bounded_below", "S_h", th.S_h_star)] if th.S_h_star is not None else []),
        _verdict("T1", "e", SystemId.FULL, [[ineq("d_h vs r/(2 sqrt(K_hat))", p.d_h, ">", g)]],
                 [Conclusion("converges_to", points=((0.0, 0.0, 0.0, 0.0),))]),
        _verdict("T1", "f", SystemId.FULL,
                 [[_ic("N(0) vs N_c", N0, "<", th.N_c)], [_ic("N_h(0) vs Nbar_h_c", Nh0, "<", th.Nbar_h_c)]],
                 [Conclusion("converges_to", points=((0.0, 0.0, 0.0, 0.0),))]),
    ]
    if raw is not None:
        # Critical adult-fraction form of the growth condition of clause (c),
        # evaluated as stated (the mite total enters without the factor c).
        d = min(raw.d_h, raw.d_m)
        disc = (raw.r / d) ** 2 - 4 * raw.K / raw.xi_h**2 if d > 0 else -1.0
        lhs = (raw.r * raw.xi_h / (2 * math.sqrt(raw.K))
               - (p.alpha * math.sqrt(disc) / (2 * raw.rho) if disc >= 0 and raw.rho > 0 else math.nan))
        rhs_ = (raw.d_h + raw.mu_h + p.alpha * raw.r / (2 * d)) / raw.rho if raw.rho > 0 and d > 0 else None
        out.append(_verdict("T1", "xi", SystemId.FULL,
                            [[ineq("r xi_h/(2 sqrt K) - alpha sqrt((r/d)^2-4K/xi_h^2)/(2 rho) vs "
                                   "(d_h+mu_h+alpha r/(2d))/rho", None if math.isnan(lhs) else lhs, ">", rhs_),
                              _ic("N_h(0) vs Nund_h_c", Nh0, ">", th.Nund_h_c)]],
                            [Conclusion("bounded_below", "N_h", th.Nund_h_star)] if th.Nund_h_star else [],
                            notes=("mite total enters this form without the factor c",)))
    return out


def check_theorem2(p: Params, x0) -> list[TheoremVerdict]:
    """Mite extinction, healthy-mite extinction, disease persistence and extinction."""
    x = _full_x0(x0)
    th = thresholds(p)
    g = _growth(p)
    Nh0, S0 = x[0] + x[1], x[0]
    nstar, nund = th.N_star, th.Nund_h_star
    ac = p.alpha * p.c
    H = p.d_m / ac if ac > 0 else math.inf
    dm_over_a = p.d_m / p.alpha if p.alpha > 0 else math.inf
    out = [
        _verdict("T2", "mites_extinct", SystemId.FULL, [[ineq("N* vs d_m/alpha", nstar, "<", dm_over_a)]],
                 [Conclusion("extinct", "N_m")]),
        _verdict("T2", "healthy_mites_extinct", SystemId.FULL,
                 [[ineq("r/(2 sqrt(K_hat)) vs d_h", g, ">", p.d_h),
                   ineq("Nbar_h* vs d_m/(alpha c)", th.Nbar_h_star, "<", H),
                   _ic("S_h(0) vs S_h_c", S0, ">", th.S_h_c)]],
                 [Conclusion("persists", "N_h"), Conclusion("extinct", "S_m")]),
    ]
    # disease persistence; the load term uses (N* - Nund_h*) without c here
    load3 = None
    if nstar is not None and nund:
        load3 = (p.d_h + p.beta_h + p.beta_mh_hat * nstar / nund
                 + (p.beta_mh_tilde + p.alpha) * (nstar - nund))
    dmax = max(p.d_h + p.mu_h, p.d_m + p.mu_m)
    dmin = min(p.d_h + p.mu_h, p.d_m + p.mu_m)
    ratio3 = None
    if th.S_h_star is not None:
        ratio3 = min(p.beta_h, p.c * p.beta_mh_hat + p.c * p.beta_mh_tilde + p.c * p.alpha * th.S_h_star) / dmax
    out.append(_verdict(
        "T2", "disease_persists", SystemId.FULL,
        [[ineq("r/(2 sqrt(K_hat)) vs d_h+beta_h+beta_mh N*/Nund_h*+(beta_mh~+alpha)(N*-Nund_h*)", g, ">", load3),
          _ic("S_h(0) vs S_h_c", S0, ">", th.S_h_c),
          ineq("min{beta_h, c beta_mh + c beta_mh~ + c alpha S_h*}/max{d_h+mu_h, d_m+mu_m} vs 1",
               ratio3, ">=", 1.0)]],
        [Conclusion("persists", "I")]))
    load4 = _div(_add(p.d_h, p.mu_h, _mul(p.alpha, nstar)), p.rho)
    ratio4 = None
    if nstar is not None and nund and th.Nbar_h_star is not None:
        ratio4 = max(p.beta_h + p.beta_hm_hat * nstar / nund,
                     p.c * p.beta_mh_hat + p.c * p.beta_mh_tilde + p.c * p.alpha * th.Nbar_h_star) / dmin
    out.append(_verdict(
        "T2", "disease_extinct", SystemId.FULL,
        [[ineq("r/(2 sqrt(K_hat)) vs (d_h+mu_h+alpha N*)/rho", g, ">", load4),
          _ic("N_h(0) vs Nund_h_c", Nh0, ">", th.Nund_h_c),
          ineq("max{beta_h + beta_hm N*/Nund_h*, c beta_mh + c beta_mh~ + c alpha Nbar_h*}/min{...} vs 1",
               ratio4, "<", 1.0)]],
        [Conclusion("extinct", "I")]))
    return out


def check_theorem3_virus_free(p: Params, x0=None) -> list[TheoremVerdict]:
    """Global dynamics of the bee-mite system (initial state not needed)."""
    th = thresholds(p)
    g = _growth(p)
    H = th.H_star
    lo, hi = th.Nbar_h_c, th.Nbar_h_star
    out = [
        _verdict("T3", "1", SystemId.VIRUS_FREE,
                 [[ineq("r/(2 sqrt(K_hat)) vs d_h", g, "<", p.d_h)], [ineq("H* vs Nbar_h_c", H, "<", lo)]],
                 [Conclusion("converges_to", points=((0.0, 0.0),))]),
        _verdict("T3", "2", SystemId.VIRUS_FREE, [[ineq("Nbar_h* vs H*", hi, "<", H)]],
                 [Conclusion("converges_to", points=((0.0, 0.0), (hi, 0.0)))] if hi is not None else []),
    ]
    exist = [ineq("Nbar_h_c vs H*", lo, "<", H), ineq("H* vs Nbar_h*", H, "<", hi)]
    root_k = math.sqrt(p.K_hat)
    out.append(_verdict("T3", "3_sink", SystemId.VIRUS_FREE, [exist + [ineq("H* vs sqrt(K_hat)", H, ">", root_k)]],
                        [Conclusion("local_class", expected="sink")]))
    out.append(_verdict("T3", "3_source", SystemId.VIRUS_FREE, [exist + [ineq("H* vs sqrt(K_hat)", H, "<", root_k)]],
                        [Conclusion("local_class", expected="source")]))
    return out


def check_theorem4_mite_free(p: Params, x0=None) -> list[TheoremVerdict]:
    """Global dynamics of the bee-virus system (initial state not needed)."""
    th = thresholds(p)
    g = _growth(p)
    dt_ratio = _div(th.d_tilde, None if th.a is None else th.a + p.rho)
    out = [
        _verdict("T4", "1", SystemId.MITE_FREE,
                 [[ineq("r/(2 sqrt(K_hat)) vs d_h", g, "<", p.d_h)],
                  [ineq("R0_V vs 1", th.R0_V, ">", 1.0), ineq("d_h vs r/(2 sqrt(K_hat))", p.d_h, "<", g),
                   ineq("r/(2 sqrt(K_hat)) vs d_tilde/(a+rho)", g, "<", dt_ratio)]],
                 [Conclusion("converges_to", points=((0.0, 0.0),))]),
        _verdict("T4", "2", SystemId.MITE_FREE,
                 [[ineq("R0_V vs 1", th.R0_V, "<", 1.0), ineq("r/(2 sqrt(K_hat)) vs d_h", g, ">", p.d_h)]],
                 [Conclusion("converges_to", points=((0.0, 0.0), (th.Nbar_h_star, 0.0)))]
                 if th.Nbar_h_star is not None else []),
    ]
    pts = ()
    if th.a is not None:
        from .model import _roots
        _, I2 = _roots(th.d_tilde, (th.a + p.rho) ** 2, p.r, p.K_hat)
        if I2 is not None:
            pts = ((0.0, 0.0), (th.a * I2, I2))
    out.append(_verdict(
        "T4", "3", SystemId.MITE_FREE,
        [[ineq("R0_V vs 1", th.R0_V, ">", 1.0), ineq("r/(2 sqrt(K_hat)) vs d_h", g, ">", p.d_h),
          ineq("r/(2 sqrt(K_hat)) vs d_tilde/(a+rho)", g, ">", dt_ratio)]],
        [Conclusion("converges_to", points=pts)] if pts else []))
    return out


def check_theorem5_hvmi(p: Params, x0) -> list[TheoremVerdict]:
    """Clauses for the healthy-mite-free system."""
    x = _full_x0(x0)
    th = thresholds(p)
    g = _growth(p)
    Nh0 = x[0] + x[1]
    ac = p.c * p.alpha
    Q = (p.d_m + p.mu_m) / ac if ac > 0 else math.inf
    load = _div(_add(p.d_h, p.mu_h, _mul(p.alpha, th.N_star)), p.rho)
    sys = SystemId.HEALTHY_MITE_FREE
    return [
        _verdict("T5", "infected_mites_extinct", sys,
                 [[ineq("r/(2 sqrt(K_hat)) vs d_h", g, ">", p.d_h),
                   ineq("Nbar_h* vs (d_m+mu_m)/(c alpha)", th.Nbar_h_star, "<", Q)]],
                 [Conclusion("extinct", "I_m")]),
        _verdict("T5", "1", sys, [[ineq("c alpha vs 0", ac, ">", 0.0)]],
                 [Conclusion("interior_on_line", value=Q)]),
        _verdict("T5", "2", sys, [[ineq("r c alpha vs d_h (d_m+mu_m)", p.r * ac, "<", p.d_h * (p.d_m + p.mu_m))]],
                 [Conclusion("no_interior", "healthy-mite-free")]),
        _verdict("T5", "3", sys,
                 [[ineq("r/(2 sqrt(K_hat)) vs (d_h+mu_h+alpha N*)/rho", g, ">", load),
                   _ic("N_h(0) vs Nund_h_c", Nh0, ">", th.Nund_h_c),
                   ineq("Nbar_h* vs (d_m+mu_m)/(c alpha)", th.Nbar_h_star, ">", Q),
                   ineq("R0_V vs 1", th.R0_V, "<", 1.0)]],
                 [Conclusion("persists", "I_h"), Conclusion("persists", "I_m")]),
    ]


def check_theorem6_full(p: Params, x0) -> list[TheoremVerdict]:
    """Bee persistence in the full system, its bee-only reduction and the no-interior bundles."""
    x = _full_x0(x0)
    th = thresholds(p)
    g = _growth(p)
    Nh0, S0 = x[0] + x[1], x[0]
    base = ineq("r/(2 sqrt(K_hat)) vs d_h", g, ">", p.d_h)
    nstar, nund = th.N_star, th.Nund_h_star
    dm_over_a = p.d_m / p.alpha if p.alpha > 0 else math.inf
    ac = p.alpha * p.c
    H = p.d_m / ac if ac > 0 else math.inf
    Q = (p.d_m + p.mu_m) / ac if ac > 0 else math.inf
    load_nund = _div(_add(p.d_h, p.mu_h, _mul(p.alpha, nstar)), p.rho)
    out = [
        _verdict("T6", "reduction", SystemId.FULL,
                 [[base, ineq("N* vs d_m/alpha", nstar, "<", dm_over_a), ineq("R0_V vs 1", th.R0_V, "<", 1.0)]],
                 [Conclusion("extinct", "S_m"), Conclusion("extinct", "I_h"), Conclusion("extinct", "I_m")]),
        _verdict("T6", "H1", SystemId.BEE_ONLY, [[ineq("r/(2 sqrt(K_hat)) vs d_h", g, "<", p.d_h)]],
                 [Conclusion("converges_to", points=((0.0,),))]),
        _verdict("T6", "H2_upper", SystemId.BEE_ONLY, [[base, _ic("S_h(0) vs Nbar_h_c", S0, ">", th.Nbar_h_c)]],
                 [Conclusion("converges_to", points=((th.Nbar_h_star,),))] if th.Nbar_h_star else []),
        _verdict("T6", "H2_lower", SystemId.BEE_ONLY, [[base, _ic("S_h(0) vs Nbar_h_c", S0, "<", th.Nbar_h_c)]],
                 [Conclusion("converges_to", points=((0.0,),))]),
        _verdict("T6", "1", SystemId.FULL,
                 [[base,
                   ineq("r/(2 sqrt(K_hat)) vs d_h+beta_h+beta_mh N*/Nund_h*+(beta_mh~+alpha)(N*-c Nund_h*)",
                        g, ">", th.D_s),
                   ineq("r/(2 sqrt(K_hat)) vs (d_h+mu_h+alpha N*)/rho", g, ">", load_nund),
                   _ic("S_h(0) vs S_h_c", S0, ">", th.S_h_c)]],
                 [Conclusion("bounded_below", "S_h", th.S_h_star)] if th.S_h_star is not None else []),
    ]
    load2 = None
    if nstar is not None and nund:
        load2 = (p.d_h + p.beta_h + p.beta_mh_hat * nstar / nund
                 + (p.beta_mh_tilde + p.alpha) * (nstar - nund))
    ratio2 = None
    if th.Nbar_h_star is not None:
        ratio2 = (min(p.beta_h, p.c * p.beta_mh_hat + p.c * p.beta_mh_tilde + p.c * p.alpha * th.Nbar_h_star)
                  / max(p.d_h + p.mu_h, p.d_m + p.mu_m))
    out.append(_verdict(
        "T6", "2", SystemId.FULL,
        [[base,
          ineq("r/(2 sqrt(K_hat)) vs d_h+beta_h+beta_mh N*/Nund_h*+(beta_mh~+alpha)(N*-Nund_h*)", g, ">", load2),
          _ic("S_h(0) vs S_h_c", S0, ">", th.S_h_c),
          ineq("Nbar_h* vs d_m/(alpha c)", th.Nbar_h_star, "<", H),
          ineq("min{beta_h, c beta_mh + c beta_mh~ + c alpha Nbar_h*}/max{d_h+mu_h, d_m+mu_m} vs 1",
               ratio2, ">=", 1.0)]],
        [Conclusion("persists", "I")]))
    if p.alpha > 0 and p.c > 0 and p.beta_hm_hat > 0:
        from .equilibria import no_interior_bundles
        for name, bundle in no_interior_bundles(p).items():
            items = [Inequality(r["label"], r["lhs"], r["relation"], r["rhs"], r["holds"])
                     for r in bundle["inequalities"]]
            out.append(_verdict("T6", f"3_{name}", SystemId.FULL, [[base] + items],
                                [Conclusion("no_interior", "full")]))
    out.append(_verdict(
        "T6", "4", SystemId.FULL,
        [[base, ineq("r/(2 sqrt(K_hat)) vs (d_h+mu_h+alpha N*)/rho", g, ">", load_nund),
          _ic("N_h(0) vs Nund_h_c", Nh0, ">", th.Nund_h_c),
          ineq("Nbar_h* vs (d_m+mu_m)/(c alpha)", th.Nbar_h_star, ">", Q),
          ineq("R0_V vs 1", th.R0_V, "<", 1.0)]],
        [Conclusion("persists", "N_m")]))
    return out


CHECKS = {
    1: check_theorem1,
    2: check_theorem2,
    3: check_theorem3_virus_free,
    4: check_theorem4_mite_free,
    5: check_theorem5_hvmi,
    6: check_theorem6_full,
}


def check_all(p: Params, x0, which=None, raw: ParamsRaw | None = None) -> list[TheoremVerdict]:
    out = []
    for n, fn in CHECKS.items():
        if which is not None and n not in which:
            continue
        out.extend(fn(p, x0, raw) if n == 1 else fn(p, x0))
    return out


# ---------------------------------------------------------------------------
# cross-validation against trajectories

CONFIRMED, VACUOUS, VIOLATED, UNDETERMINED = "confirmed", "vacuous", "violated", "undetermined"


@dataclass(frozen=True)
class CrossValidation:
    verdict: TheoremVerdict
    outcome: OutcomeLabel | None
    agreement: str
    diagnostics: dict = field(default_factory=dict)

    def as_dict(self) -> dict:
        return {"verdict": self.verdict.as_dict(),
                "outcome": self.outcome.label.value if self.outcome else None,
                "agreement": self.agreement, "diagnostics": self.diagnostics}


def horizon(p: Params) -> float:
    """Ten slowest natural lifetimes, the default analysis horizon."""
    return 10.0 / min(p.d_h, p.d_m)


def subsystem_x0(sys: SystemId, x0) -> np.ndarray:
    return sys.project(_full_x0(x0))


def simulate_for(verdicts, p: Params, x0, cfg: IntegrationConfig | None = None) -> dict:
    """One trajectory per system referenced by ``verdicts``."""
    cfg = cfg or IntegrationConfig(t_end=horizon(p))
    out = {}
    for sys in {v.system for v in verdicts}:
        out[sys] = integrate(sys, subsystem_x0(sys, x0), p, cfg)
    return out


def _window(tr: Trajectory):
    cfg = tr.config
    t_lo = cfg.t0 + 0.8 * (cfg.t_end - cfg.t0)
    return tr.t >= t_lo - 1e-9


def _series(tr: Trajectory, q: str):
    try:
        return tr.column(q)
    except KeyError:
        return None


def _trend_down(y) -> bool:
    """True if the series is still clearly decreasing at the end of the window."""
    return y[-1] < 0.5 * y[0] or (y.size > 2 and y[-1] < y[-2] < y[-3] and y[-1] < 0.999 * y[0])


def _trend_up(y) -> bool:
    return y.size > 2 and y[-1] > y[-2] > y[-3] and y[-1] > 1.001 * y[0]


def _host_doomed(tr: Trajectory, th: Thresholds) -> bool:
    nh = tr.column("N_h")[-1]
    thr = 10 * tr.config.extinction_eps
    if tr.terminated == "total-extinct" or nh <= thr:
        return True
    return th.Nbar_h_c is None or nh < th.Nbar_h_c


def _check_conclusion(c: Conclusion, tr: Trajectory, th: Thresholds, p: Params, cache: dict):
    """Return (agreement, diagnostics) for one predicted property."""
    thr = 10 * tr.config.extinction_eps
    mask = _window(tr)
    diag: dict = {"conclusion": c.tag}
    if c.kind in ("bounded_above", "bounded_below", "extinct", "persists"):
        y = _series(tr, c.quantity)
        if y is None:
            return UNDETERMINED, diag | {"reason": f"{c.quantity} not in {tr.sys.value}"}
        if tr.terminated == "total-extinct":
            w = np.array([y[-1]])
        else:
            w = y[mask]
            if w.size < 2:
                return UNDETERMINED, diag | {"reason": "window too short"}
        diag.update(window_min=float(w.min()), window_max=float(w.max()), end=float(w[-1]))
        if c.kind == "bounded_above":
            if w.max() <= (1 + BOUND_SLACK) * c.value:
                return CONFIRMED, diag
            return (UNDETERMINED if _trend_down(w) else VIOLATED), diag
        if c.kind == "bounded_below":
            if w.min() >= (1 - BOUND_SLACK) * c.value:
                return CONFIRMED, diag
            return (UNDETERMINED if _trend_up(w) else VIOLATED), diag
        if c.kind == "extinct":
            if w[-1] <= thr:
                return CONFIRMED, diag
            if c.quantity in ("N_h", "S_h", "I_h") or _host_doomed(tr, th):
                # everything dies with the bees
                if _host_doomed(tr, th):
                    return CONFIRMED, diag | {"reason": "bee population below survival threshold"}
            return (UNDETERMINED if _trend_down(w) else VIOLATED), diag
        if c.kind == "persists":
            if w.min() > thr:
                return CONFIRMED, diag
            if w[-1] <= thr:
                return VIOLATED, diag
            return UNDETERMINED, diag
    if c.kind == "converges_to":
        end = tr.x[-1]
        dists = []
        for pt in c.points:
            pt = np.asarray(pt, dtype=float)
            if not np.any(pt):
                ok = bool(np.all(end <= thr)) or _host_doomed(tr, th)
            else:
                scale = max(float(np.max(np.abs(pt))), 1.0)
                ok = bool(np.max(np.abs(end - pt)) <= 0.01 * scale)
            dists.append(float(np.max(np.abs(end - pt))))
            if ok:
                return CONFIRMED, diag | {"end": end.tolist(), "distances": dists}
        diag.update(end=end.tolist(), distances=dists)
        w = tr.x[mask]
        scale = np.maximum(np.abs(w).max(axis=0), 1.0)
        moving = float(np.max((w.max(axis=0) - w.min(axis=0)) / scale))
        diag["window_variation"] = moving
        return (UNDETERMINED if moving > 0.01 else VIOLATED), diag
    if c.kind == "local_class":
        eqs = cache.setdefault("vf_eq", equilibria_virus_free(p))
        interior = [e for e in eqs if e.name == "interior"]
        if not interior:
            return VIOLATED, diag | {"reason": "no interior equilibrium found"}
        e = interior[0]
        diag.update(eigen_class=e.stability, eigenvalues=[[z.real, z.imag] for z in e.eigenvalues])
        if e.stability == "nonhyperbolic":
            return UNDETERMINED, diag
        if e.stability != c.expected:
            return VIOLATED, diag
        if c.expected == "source":
            # a trajectory must not settle on a source
            w = tr.x[mask]
            if w.size and np.max(np.abs(w - e.location)) <= 1e-3 * np.max(np.abs(e.location)):
                return VIOLATED, diag | {"reason": "trajectory settled on the source"}
        return CONFIRMED, diag
    if c.kind == "no_interior":
        if c.quantity == "full":
            rep = cache.setdefault("full_interior", interior_full(p))
        else:
            rep = cache.setdefault("hvmi_interior", interior_healthy_mite_free(p))
        diag["solver_roots"] = [e.location.tolist() for e in rep.roots]
        if rep.roots:
            return VIOLATED, diag | {"reason": "verified interior root exists"}
        w = tr.x[mask]
        if w.size and np.all(w.min(axis=0) > thr):
            scale = np.abs(w).max(axis=0)
            if np.max((w.max(axis=0) - w.min(axis=0)) / scale) < 1e-6:
                return VIOLATED, diag | {"reason": "trajectory settled at an interior point"}
        return CONFIRMED, diag
    if c.kind == "interior_on_line":
        rep = cache.setdefault("hvmi_interior", interior_healthy_mite_free(p))
        fn = HvmiFunctions(p) if p.alpha > 0 and p.c > 0 else None
        bad = []
        for e in rep.roots:
            S, I, Im = e.location
            if abs(S + I - fn.Q) > 1e-9 * fn.Q or abs(Im - fn.f1(I)) > 1e-9 * max(abs(Im), 1.0):
                bad.append(e.location.tolist())
        diag["roots"] = [e.location.tolist() for e in rep.roots]
        return (VIOLATED if bad else CONFIRMED), diag
    raise ValueError(f"unknown conclusion kind {c.kind!r}")


_RANK = {VIOLATED: 3, UNDETERMINED: 2, CONFIRMED: 1}


def cross_validate(verdicts, trajectories: dict, min_horizon: float = 0.0) -> list[CrossValidation]:
    """Compare each verdict's predicted conclusion with its trajectory.

    ``trajectories`` maps :class:`SystemId` to a trajectory started from the
    same initial state (projected).  Vacuous verdicts are never tested.
    """
    cache: dict = {}
    out = []
    for v in verdicts:
        tr = trajectories.get(v.system)
        outcome = tr.outcome if tr is not None else None
        if not v.hypothesis_holds:
            out.append(CrossValidation(v, outcome, VACUOUS, {}))
            continue
        if tr is None or not v.conclusions:
            out.append(CrossValidation(v, outcome, UNDETERMINED, {"reason": "nothing to compare"}))
            continue
        if tr.config.t_end - tr.config.t0 < min_horizon:
            out.append(CrossValidation(v, outcome, UNDETERMINED, {"reason": "horizon too short"}))
            continue
        th = cache.setdefault("th", thresholds(tr.params))
        worst, diags = CONFIRMED, []
        for c in v.conclusions:
            agreement, d = _check_conclusion(c, tr, th, tr.params, cache)
            diags.append(d | {"agreement": agreement})
            if _RANK[agreement] > _RANK[worst]:
                worst = agreement
        out.append(CrossValidation(v, outcome, worst, {"checks": diags}))
    return out


# ---------------------------------------------------------------------------
# randomized campaign

# log-uniform ranges for campaign draws
DRAW_RANGES = {
    "r": (500.0, 3000.0),
    "K_hat": (1e5, 4e6),
    "rho": (0.5, 1.0),
    "d_h": (0.02, 0.3),
    "d_m": (0.03, 0.3),
    "mu_h": (0.01, 0.3),
    "mu_m": (0.005, 0.1),
    "alpha": (1e-4, 0.05),
    "c": (1e-3, 0.05),
    "beta_h": (0.01, 0.6),
    "beta_mh_hat": (1e-3, 0.1),
    "beta_mh_tilde": (1e-4, 0.01),
    "beta_hm_hat": (1e-3, 0.1),
}
_LINEAR = {"rho"}


def _draw_params(rng: np.random.Generator) -> Params:
    vals = {}
    for k, (lo, hi) in DRAW_RANGES.items():
        if k in _LINEAR:
            vals[k] = float(rng.uniform(lo, hi))
        else:
            vals[k] = float(math.exp(rng.uniform(math.log(lo), math.log(hi))))
    return Params(**vals)


def well_conditioned(p: Params) -> bool:
    """All discriminant-based thresholds defined and all closed-form equilibria hyperbolic."""
    th = thresholds(p)
    needed = (th.N_star, th.Nbar_h_star, th.Nund_h_star, th.S_h_star)
    if any(v is None for v in needed):
        return False
    if th.R0_V is not None and compare(th.R0_V, 1.0) == 0:
        return False
    for e in equilibria_virus_free(p) + equilibria_mite_free(p):
        if e.stability == "nonhyperbolic" or e.predicted == "nonhyperbolic":
            return False
    return True


def _draw_x0(p: Params, rng: np.random.Generator) -> np.ndarray:
    th = thresholds(p)
    nstar, nbar = th.N_star, th.Nbar_h_star
    Nh = float(rng.uniform(0.02, 1.2)) * nbar
    Nh = min(Nh, 0.99 * nstar / p.c)
    fi = float(rng.uniform(0.01, 0.5))
    room = nstar - p.c * Nh
    Nm = float(rng.uniform(0.01, 0.99)) * room
    fm = float(rng.uniform(0.05, 0.95))
    return np.array([Nh * (1 - fi), Nh * fi, Nm * (1 - fm), Nm * fm])


def draw_case(seed, relaxed: bool = False, max_tries: int = 100000):
    """Draw one ``(params, x0)`` pair; ``relaxed`` only requires N* and Nbar_h* to exist."""
    rng = np.random.default_rng(seed)
    for _ in range(max_tries):
        p = _draw_params(rng)
        if relaxed:
            th = thresholds(p)
            if th.N_star is None or th.Nbar_h_star is None:
                continue
            hyper = all(e.stability != "nonhyperbolic" for e in equilibria_virus_free(p) + equilibria_mite_free(p))
            if not hyper:
                continue
        elif not well_conditioned(p):
            continue
        return p, _draw_x0(p, rng)
    raise RuntimeError("no admissible draw found")


@dataclass(frozen=True)
class CampaignRow:
    draw: int
    clause: str
    hypothesis_holds: bool
    agreement: str
    diagnostics: dict = field(default_factory=dict, compare=False)


def run_case(draw: int, p: Params, x0, cfg: IntegrationConfig | None = None) -> list[CampaignRow]:
    verdicts = check_all(p, x0)
    try:
        trajs = simulate_for(verdicts, p, x0, cfg)
    except IntegrationError as exc:
        return [CampaignRow(draw, v.id, v.hypothesis_holds,
                            VACUOUS if not v.hypothesis_holds else UNDETERMINED, {"error": str(exc)})
                for v in verdicts]
    return [CampaignRow(draw, cv.verdict.id, cv.verdict.hypothesis_holds, cv.agreement, cv.diagnostics)
            for cv in cross_validate(verdicts, trajs)]


def _campaign_worker(args):
    draw, seed, relaxed = args
    p, x0 = draw_case(seed, relaxed)
    return run_case(draw, p, x0)


def worker_count(requested: int | None = None) -> int:
    n = requested or os.cpu_count() or 1
    cap = os.environ.get("APIS_THREADS")
    if cap:
        try:
            n = min(n, max(1, int(cap)))
        except ValueError:
            raise ValueError(f"APIS_THREADS must be an integer, got {cap!r}") from None
    return max(1, n)


def campaign_seeds(n: int, seed: int) -> list:
    return np.random.SeedSequence(seed).spawn(n)


def run_campaign(n: int, seed: int = 0, workers: int | None = None, relaxed: bool = False) -> list[CampaignRow]:
    """Randomized soundness campaign; results do not depend on the worker count."""
    tasks = [(i, s, relaxed) for i, s in enumerate(campaign_seeds(n, seed))]
    nw = worker_count(workers)
    if nw == 1:
        chunks = [_campaign_worker(t) for t in tasks]
    else:
        with ProcessPoolExecutor(max_workers=nw) as ex:
            chunks = list(ex.map(_campaign_worker, tasks, chunksize=8))
    return [row for chunk in chunks for row in chunk]


def campaign_summary(rows) -> dict:
    summary: dict = {}
    for r in rows:
        s = summary.setdefault(r.clause, {CONFIRMED: 0, VACUOUS: 0, VIOLATED: 0, UNDETERMINED: 0})
        s[r.agreement] += 1
    return summary
