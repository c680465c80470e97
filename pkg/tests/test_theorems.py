import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from apis.integrate import IntegrationConfig, Trajectory, classify_outcome, integrate
from apis.model import Params, ParamsRaw, SystemId, derive_params, thresholds
from apis.theorems import (
    CONFIRMED, UNDETERMINED, VACUOUS, VIOLATED, _draw_params, campaign_summary, check_all, check_theorem1,
    check_theorem2, check_theorem3_virus_free, check_theorem4_mite_free, check_theorem5_hvmi,
    check_theorem6_full, cross_validate, draw_case, ineq, run_campaign, simulate_for, well_conditioned,
    worker_count,
)
from conftest import FIG2
from oracles import brute_force_full_roots
from test_equilibria import DRAW_133, DRAW_158

X2 = (4001, 10, 5, 10)


def by_id(verdicts):
    return {v.id: v for v in verdicts}


def test_ineq_guard_band_and_undefined():
    assert ineq("x", 1.0, "<", 2.0).holds is True
    assert ineq("x", 1.0, ">", 2.0).holds is False
    assert ineq("x", 1.0, "<", 1.0 + 1e-12).holds is None
    assert ineq("x", None, "<", 1.0).holds is None


# --- examples ------------------------------------------------------------------

def test_theorem1_global_extinction(p2):
    v = by_id(check_theorem1(p2.replace(d_h=1.0), X2))["T1.e"]
    assert v.hypothesis_holds
    assert v.conclusions[0].kind == "converges_to" and v.conclusions[0].points == ((0, 0, 0, 0),)


def test_theorem1_fig2_bound(p2):
    v = by_id(check_theorem1(p2, X2))["T1.b"]
    assert v.hypothesis_holds
    assert v.conclusions[0].value == pytest.approx(9898.98, abs=0.01)


def test_theorem1_origin(p2):
    assert by_id(check_theorem1(p2, (0, 0, 0, 0)))["T1.f"].hypothesis_holds


def test_theorem1_xi_note_needs_raw(p2):
    assert "T1.xi" not in by_id(check_theorem1(p2, X2))
    raw = ParamsRaw(r=1500.0, K=250000.0, xi_h=0.5, xi_m=0.5, rho=0.9, d_h=0.15, d_m=0.1, mu_h=0.1,
                    mu_m=0.01, alpha_hat=0.02, c=0.005, beta_h=0.24, beta_mh=0.06, beta_mh2=0.5, beta_hm=0.06)
    vs = by_id(check_theorem1(derive_params(raw), X2, raw))
    assert "T1.xi" in vs and vs["T1.xi"].notes


def test_theorem2_weak_parasitism(p2):
    assert by_id(check_theorem2(p2.replace(alpha=1e-7), X2))["T2.mites_extinct"].hypothesis_holds


def test_theorem2_fig2_healthy_mite_clause_vacuous(p2):
    v = by_id(check_theorem2(p2, X2))["T2.healthy_mites_extinct"]
    assert not v.hypothesis_holds
    assert thresholds(p2).Nbar_h_star > p2.d_m / (p2.alpha * p2.c) == pytest.approx(4000.0)


def test_theorem2_disease_extinction(p2):
    q = p2.replace(beta_h=1e-4, beta_mh_hat=1e-4, beta_mh_tilde=1e-4, beta_hm_hat=1e-4, mu_m=0.5)
    v = by_id(check_theorem2(q, X2))["T2.disease_extinct"]
    assert v.hypothesis_holds
    assert [c.quantity for c in v.conclusions] == ["I"]


def test_theorem3_fig3_source(p3):
    v = by_id(check_theorem3_virus_free(p3))
    assert v["T3.3_source"].hypothesis_holds and not v["T3.3_sink"].hypothesis_holds


def test_theorem4_bistability(p2):
    v = by_id(check_theorem4_mite_free(p2))["T4.2"]
    assert v.hypothesis_holds
    assert v.conclusions[0].points == ((0.0, 0.0), (pytest.approx(9898.979485566357), 0.0))


def test_theorem5_fig2_line(p2):
    v = by_id(check_theorem5_hvmi(p2, X2))["T5.1"]
    assert v.hypothesis_holds and v.conclusions[0].value == pytest.approx(4400.0)


def test_theorem6_fig2_mite_persistence(p2):
    v = by_id(check_theorem6_full(p2, X2))["T6.4"]
    assert v.hypothesis_holds
    assert [c.tag for c in v.conclusions] == ["N_m persists"]


def test_theorem6_bundles_reported_separately(p2):
    ids = [v.id for v in check_theorem6_full(p2, X2)]
    assert [i for i in ids if i.startswith("T6.3")] == ["T6.3_B1", "T6.3_B2", "T6.3_B3", "T6.3_B4"]


def test_check_all_selection(p2):
    assert {v.theorem for v in check_all(p2, X2, which=[3, 4])} == {"T3", "T4"}
    assert len({v.id for v in check_all(p2, X2)}) == len(check_all(p2, X2))


def test_verdicts_are_pure(p2):
    a = [v.as_dict() for v in check_all(p2, X2)]
    b = [v.as_dict() for v in check_all(p2, X2)]
    assert a == b


def test_undefined_threshold_gives_note(p2):
    v = by_id(check_theorem2(p2.replace(mu_h=0.5), X2))["T2.disease_extinct"]
    assert not v.hypothesis_holds and any("undefined" in n for n in v.notes)


# --- cross-validation --------------------------------------------------------------

def _constant(sys, p, value, t_end=100.0):
    cfg = IntegrationConfig(t_end=t_end)
    n = int(t_end) + 1
    tr = Trajectory(sys, p, np.linspace(0, t_end, n), np.tile(value, (n, 1)), (), cfg)
    return Trajectory(sys, p, tr.t, tr.x, (), cfg, outcome=classify_outcome(tr))


def test_extinction_confirmed_on_decay(p2):
    p = p2.replace(d_h=1.0)
    v = by_id(check_theorem1(p, X2))["T1.e"]
    tr = integrate(SystemId.FULL, X2, p, IntegrationConfig(t_end=100))
    assert cross_validate([v], {SystemId.FULL: tr})[0].agreement == CONFIRMED


def test_vacuous_clause(p2):
    v = by_id(check_theorem6_full(p2, X2))["T6.H1"]
    tr = _constant(SystemId.BEE_ONLY, p2, [5000.0])
    assert cross_validate([v], {SystemId.BEE_ONLY: tr})[0].agreement == VACUOUS


def test_violated_detected(p2):
    v = by_id(check_theorem6_full(p2, X2))["T6.H2_upper"]
    tr = _constant(SystemId.BEE_ONLY, p2, [5000.0])
    assert cross_validate([v], {SystemId.BEE_ONLY: tr})[0].agreement == VIOLATED


def test_short_horizon_is_undetermined(p2):
    v = by_id(check_theorem6_full(p2, X2))["T6.H2_upper"]
    tr = _constant(SystemId.BEE_ONLY, p2, [5000.0])
    cv = cross_validate([v], {SystemId.BEE_ONLY: tr}, min_horizon=500.0)[0]
    assert cv.agreement == UNDETERMINED and cv.diagnostics["reason"] == "horizon too short"


def test_fig2_all_clauses_agree(p2):
    verdicts = check_all(p2, X2)
    cvs = cross_validate(verdicts, simulate_for(verdicts, p2, X2))
    got = {cv.verdict.id: cv.agreement for cv in cvs}
    assert VIOLATED not in got.values()
    for cid in ("T1.a", "T1.b", "T3.3_sink", "T4.2", "T6.H2_upper", "T6.4"):
        assert got[cid] == CONFIRMED, cid


# --- documented counterexamples to the stated no-interior bundles ---------------------

@pytest.mark.parametrize("params,bundle", [(DRAW_158, "T6.3_B1"), (DRAW_133, "T6.3_B4")])
def test_no_interior_bundle_counterexample(params, bundle):
    """The bundle holds, yet an independent dense scan finds a genuine interior equilibrium."""
    p = Params(**params)
    v = by_id(check_theorem6_full(p, X2))[bundle]
    assert v.hypothesis_holds
    roots = brute_force_full_roots(p)
    assert len(roots) == 1 and np.all(roots[0] > 0)
    tr = integrate(SystemId.FULL, roots[0] * 1.001, p, IntegrationConfig(t_end=200))
    assert cross_validate([v], {SystemId.FULL: tr})[0].agreement == VIOLATED


# --- properties --------------------------------------------------------------------

@settings(max_examples=200)
@given(st.integers(0, 2**32 - 1), st.floats(1.0, 3.0))
def test_mite_extinction_monotone_in_dm(seed, factor):
    p = _draw_params(np.random.default_rng(seed))
    q = p.replace(d_m=min(p.d_m * factor, 10.0))
    if not (p.d_h <= p.d_m and p.d_h <= q.d_m):
        return
    x0 = (1000, 10, 10, 10)
    before = by_id(check_theorem2(p, x0))["T2.mites_extinct"].hypothesis_holds
    after = by_id(check_theorem2(q, x0))["T2.mites_extinct"].hypothesis_holds
    assert not (before and not after)


def test_draws_are_well_conditioned():
    for i in range(20):
        p, x0 = draw_case(np.random.SeedSequence(i))
        assert well_conditioned(p)
        assert np.all(x0 > 0)


def test_campaign_independent_of_workers():
    a = run_campaign(6, seed=3, workers=1)
    b = run_campaign(6, seed=3, workers=2)
    key = lambda rows: [(r.draw, r.clause, r.hypothesis_holds, r.agreement) for r in rows]  # noqa: E731
    assert key(a) == key(b)
    summary = campaign_summary(a)
    assert sum(sum(s.values()) for s in summary.values()) == len(a)


def test_worker_cap(monkeypatch):
    monkeypatch.setenv("APIS_THREADS", "2")
    assert worker_count(8) == 2
    monkeypatch.setenv("APIS_THREADS", "many")
    with pytest.raises(ValueError):
        worker_count(8)
    monkeypatch.delenv("APIS_THREADS")
    assert worker_count(3) == 3
