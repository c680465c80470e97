import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from apis.equilibria import (
    NONHYPERBOLIC, SADDLE, SINK, SOURCE, FullFunctions, HvmiFunctions, classify_eigenvalues, compare,
    equilibria_bee_only, equilibria_mite_free, equilibria_virus_free, hopf_scan, interior_full,
    interior_healthy_mite_free, interior_trace, jacobian, no_interior_bundles, numeric_jacobian,
)
from apis.model import Params, SystemId, rhs, thresholds
from apis.theorems import _draw_params
from conftest import FIG1, FIG2, FIG3
from oracles import brute_force_full_roots, hopf_dm, richardson_jacobian

# Campaign draws (seed 0) whose full system has a verified interior root.
DRAW_133 = dict(r=1770.9915466426924, K_hat=2400221.3714232766, rho=0.7989033113803488, d_h=0.08594994682867245,
                d_m=0.10181454698949108, mu_h=0.16391664244839999, mu_m=0.04864537052354817,
                alpha=0.0037767499292274964, c=0.0017183766274535294, beta_h=0.2352918319381633,
                beta_mh_hat=0.001805972540447146, beta_mh_tilde=0.0044962402812890835,
                beta_hm_hat=0.03735096321631174)
DRAW_158 = dict(r=2909.8381834421984, K_hat=1899120.0029984443, rho=0.7838047072136631, d_h=0.07285416932011993,
                d_m=0.05769252999294253, mu_h=0.09408685160817264, mu_m=0.08756299173135092,
                alpha=0.00010095611492717044, c=0.0364161644504462, beta_h=0.18026445881829842,
                beta_mh_hat=0.04178204610701648, beta_mh_tilde=0.00010641029047074498,
                beta_hm_hat=0.02667698226715987)


def by_name(eqs):
    return {e.name: e for e in eqs}


# --- helpers ---------------------------------------------------------------

def test_compare_guard_band():
    assert compare(1.0, 1.0 + 1e-10) == 0
    assert compare(1.0, 1.0 + 1e-8) == -1
    assert compare(2.0, 1.0) == 1
    with pytest.raises(ValueError):
        compare(None, 1.0)


def test_classify_eigenvalues():
    assert classify_eigenvalues([-1, -2]) == SINK
    assert classify_eigenvalues([1 + 1j, 1 - 1j]) == SOURCE
    assert classify_eigenvalues([-1, 2]) == SADDLE
    assert classify_eigenvalues([1j, -1j]) == NONHYPERBOLIC
    assert classify_eigenvalues([0.0]) == NONHYPERBOLIC


# --- closed-form sets ------------------------------------------------------

def test_bee_only_fig2(p2):
    eqs = equilibria_bee_only(p2)
    assert [round(float(e.location[0]), 2) for e in eqs] == [0.0, 101.02, 9898.98]
    assert [e.stability for e in eqs] == [SINK, SOURCE, SINK]


def test_bee_only_no_roots(p2):
    eqs = equilibria_bee_only(p2.replace(d_h=1.0))
    assert len(eqs) == 1 and eqs[0].stability == SINK


def test_bee_only_double_root(p2):
    eqs = equilibria_bee_only(p2.replace(r=2 * p2.d_h * math.sqrt(p2.K_hat)))
    assert len(eqs) == 2
    assert eqs[1].location[0] == pytest.approx(math.sqrt(p2.K_hat), rel=1e-12)
    assert eqs[1].stability == NONHYPERBOLIC


def test_virus_free_fig2(p2):
    e = by_name(equilibria_virus_free(p2))["interior"]
    assert e.location == pytest.approx([4000.0, 40.58823529411765], rel=1e-12)
    assert e.stability == SINK == e.predicted


def test_virus_free_fig3(p3):
    e = by_name(equilibria_virus_free(p3))["interior"]
    assert e.location[0] == pytest.approx(400.0, rel=1e-12)
    assert e.stability == SOURCE == e.predicted


def test_virus_free_without_interior(p2):
    names = by_name(equilibria_virus_free(p2.replace(d_m=1.0)))
    assert "interior" not in names
    # H* above Nbar_h_star: the upper boundary equilibrium becomes the sink
    assert names["Nbar_h_star"].stability == SINK


def test_mite_free_fig3(p3):
    eqs = by_name(equilibria_mite_free(p3))
    lo, hi = eqs["interior_1"], eqs["interior_2"]
    assert lo.location[1] == pytest.approx(31.3, abs=0.05)
    assert hi.location == pytest.approx([7343.5, 1468.7], abs=0.05)
    assert hi.location[0] == pytest.approx(5 * hi.location[1], rel=1e-12)
    assert (lo.stability, hi.stability) == (SADDLE, SINK)


def test_mite_free_fig2(p2):
    eqs = by_name(equilibria_mite_free(p2))
    assert not any(k.startswith("interior") for k in eqs)
    assert eqs["Nbar_h_star"].stability == SINK


def test_mite_free_threshold_equality(p2):
    eqs = equilibria_mite_free(p2.replace(beta_h=p2.d_h + p2.mu_h))
    assert not any(e.name.startswith("interior") for e in eqs)
    assert thresholds(p2.replace(beta_h=p2.d_h + p2.mu_h)).a is None


# --- Jacobians -------------------------------------------------------------

def test_trace_and_determinant_formula(p2):
    th = thresholds(p2)
    H, M = th.H_star, th.M_star
    J = jacobian(SystemId.VIRUS_FREE, [H, M], p2, "analytic")
    K = p2.K_hat
    assert np.trace(J) == pytest.approx(p2.r * H * (K - H * H) / (K + H * H) ** 2, rel=1e-10)
    assert np.linalg.det(J) == pytest.approx(p2.c * p2.alpha ** 2 * H * M, rel=1e-10)
    assert np.trace(J) < 0 < np.linalg.det(J)


def test_jacobian_mode_errors(p2, p3):
    with pytest.raises(ValueError):
        jacobian(SystemId.FULL, [1, 1, 1, 1], p2, "analytic")
    with pytest.raises(ValueError):
        jacobian(SystemId.VIRUS_FREE, [1, 1], p2, "symbolic")
    with pytest.raises(ValueError, match="ray"):
        jacobian(SystemId.MITE_FREE, [100.0, 1.0], p3, "analytic")
    with pytest.raises(ValueError, match="singular"):
        numeric_jacobian(SystemId.FULL, [0, 0, 1, 1], p2)


def test_virus_free_analytic_vs_richardson():
    rng = np.random.default_rng(5)
    worst = 0.0
    for _ in range(100):
        p = _draw_params(rng)
        x = rng.uniform([10, 0.1], [2e4, 500])
        Ja = jacobian(SystemId.VIRUS_FREE, x, p, "analytic")
        Jo = richardson_jacobian(SystemId.VIRUS_FREE, x, p)
        worst = max(worst, np.max(np.abs(Ja - Jo)) / np.max(np.abs(Jo)))
    assert worst < 1e-8


def test_mite_free_analytic_vs_richardson():
    rng = np.random.default_rng(6)
    checked = 0
    while checked < 100:
        p = _draw_params(rng).replace(beta_h=rng.uniform(0.3, 0.9))
        th = thresholds(p)
        if th.a is None:
            continue
        x = np.array([th.a, 1.0]) * rng.uniform(1, 5000)
        Ja = jacobian(SystemId.MITE_FREE, x, p, "analytic")
        Jo = richardson_jacobian(SystemId.MITE_FREE, x, p)
        assert np.max(np.abs(Ja - Jo)) / np.max(np.abs(Jo)) < 1e-8
        checked += 1


# --- healthy-mite-free interior ----------------------------------------------

def test_hvmi_no_interior_branch(p2):
    rep = interior_healthy_mite_free(p2.replace(r=1.0))
    assert rep.roots == [] and rep.branch.startswith("no-interior")


def test_hvmi_fig2_roots_on_line(p2):
    rep = interior_healthy_mite_free(p2)
    Q = (p2.d_m + p2.mu_m) / (p2.c * p2.alpha)
    assert Q == pytest.approx(4400.0)
    assert rep.roots, rep.branch
    for e in rep.roots:
        S, I, Im = e.location
        assert (S + I) == pytest.approx(Q, rel=1e-9)
        assert e.residual < 1e-9 * p2.r
        assert np.max(np.abs(rhs(SystemId.HEALTHY_MITE_FREE, e.location, p2))) < 1e-9 * p2.r
        assert 0 < I < Q
    fn = HvmiFunctions(p2)
    for lo, hi in rep.brackets:
        assert not lo < fn.pole < hi


# --- full interior -----------------------------------------------------------

@pytest.mark.parametrize("params", [DRAW_133, DRAW_158])
def test_full_interior_against_brute_force(params):
    p = Params(**params)
    rep = interior_full(p)
    oracle = brute_force_full_roots(p)
    assert len(rep.roots) == len(oracle) >= 1
    for e, ref in zip(rep.roots, oracle):
        assert np.max(np.abs(e.location - ref) / np.abs(ref)) < 1e-6
        assert e.residual < 1e-9 * p.r
        Sh, Ih, Sm, _ = e.location
        assert abs(Sm * (p.c * p.alpha * Sh - p.beta_hm_hat * Ih / (Sh + Ih) - p.d_m)) < 1e-9 * p.r
        lo, hi = rep.interval
        assert lo < Sh < hi


def test_full_interior_fig2_has_no_root(p2):
    rep = interior_full(p2)
    assert rep.roots == [] and rep.failures == []
    assert rep.branch in ("no root found",) or rep.branch.startswith("no-interior")


def test_bundle_inconsistency_is_flagged():
    # B1 holds here but the interior root is genuine (residual at round-off)
    p = Params(**DRAW_158)
    rep = interior_full(p)
    assert no_interior_bundles(p)["B1"]["holds"]
    assert rep.roots and rep.inconsistencies
    assert "B1" in rep.branch and "roots found anyway" in rep.branch


def test_full_function_identities():
    p = Params(**DRAW_133)
    fn = FullFunctions(p)
    S = float(interior_full(p).roots[0].location[0])
    assert fn.g2(S) == pytest.approx(fn.g4(S), rel=1e-9)
    x = fn.state(S)
    assert x[0] + x[1] == pytest.approx(fn.g1(S), rel=1e-12)


# --- Hopf scan -----------------------------------------------------------------

def test_hopf_fig1_crossing():
    p = Params(**FIG1)
    scan = hopf_scan(p, "d_m", 0.05, 0.2, 0.01)
    assert len(scan.crossings) == 1
    cr = scan.crossings[0]
    target = hopf_dm(p)
    assert abs(cr.value - target) / target < 1e-6
    assert cr.trace_below > 0 > cr.trace_above


def test_hopf_no_crossing(p2):
    assert hopf_scan(p2, "d_m", 0.11, 0.2, 0.01).crossings == []


def test_hopf_bad_parameter(p2):
    with pytest.raises(ValueError):
        hopf_scan(p2, "rho", 0.1, 0.2, 0.01)
    with pytest.raises(ValueError):
        hopf_scan(p2, "d_m", 0.2, 0.1, 0.01)


def test_hopf_reports_missing_interior(p2):
    scan = hopf_scan(p2, "d_m", 0.05, 1.0, 0.05)
    assert scan.missing_interior and max(scan.missing_interior) == pytest.approx(1.0)


def test_interior_trace_none_without_interior(p2):
    assert interior_trace(p2.replace(d_m=1.0)) is None


# --- properties ----------------------------------------------------------------

seeds = st.integers(0, 2**32 - 1)


@settings(max_examples=100)
@given(seeds)
def test_residual_bound_and_embedding(seed):
    p = _draw_params(np.random.default_rng(seed))
    tol = 1e-9 * max(p.r, 1.0)
    for eqs, sys in ((equilibria_virus_free(p), SystemId.VIRUS_FREE), (equilibria_mite_free(p), SystemId.MITE_FREE)):
        for e in eqs:
            assert e.residual <= tol
            full = np.zeros(4)
            full[list(sys.indices)] = e.location
            assert np.max(np.abs(rhs(SystemId.FULL, full, p))) <= tol
    for e in equilibria_bee_only(p):
        assert e.residual <= tol


@settings(max_examples=200)
@given(seeds)
def test_R0M_reformulation(seed):
    p = _draw_params(np.random.default_rng(seed))
    th = thresholds(p)
    if th.Nbar_h_c is None or th.Nbar_h_c == th.Nbar_h_star:
        return
    direct = th.Nbar_h_c < th.H_star < th.Nbar_h_star
    via_R0 = 1 < th.R0_M < th.Nbar_h_star / th.Nbar_h_c
    assert direct == via_R0


@settings(max_examples=100)
@given(seeds)
def test_table_conformance(seed):
    p = _draw_params(np.random.default_rng(seed))
    for e in equilibria_virus_free(p) + equilibria_mite_free(p) + equilibria_bee_only(p):
        if e.predicted is not None and e.stability != NONHYPERBOLIC:
            assert e.predicted == e.stability, (e.sys, e.name)


def test_fig3_table_classes(p3):
    vf = by_name(equilibria_virus_free(p3))
    mf = by_name(equilibria_mite_free(p3))
    assert vf["Nbar_h_c"].stability == SADDLE
    # R0_V > 1: both boundary points become unstable in the mite-free plane
    assert mf["Nbar_h_star"].stability == SADDLE
    assert Params(**FIG3).K_hat == 1600001.0
