import dataclasses

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from tariffdesign import reformulate as rf
from tariffdesign.evaluation import SURROGATE, true_objective
from tariffdesign.milp import LE, OPTIMAL, MilpModel, MilpParams, solve_milp
from tariffdesign.mpc import solve_surrogate_mpc
from tariffdesign.reformulate import (
    DesignSpec, add_mccormick, add_participation, add_price_structure, build_design_milp, compute_big_m,
    design_tariff, embed_kkt, flat_start, mccormick_bounds, resolve_big_m,
)
from tariffdesign.thermal import GlobalConstants, TimeGrid
from tariffdesign.verify import kkt_recovery_error, micro_instances, random_consumer

from .conftest import room_consumer, tracking_consumer

K = GlobalConstants()
BOX = (7.0, 20.0, 0.0, 3.0)


def _product_model(c_val, u_val):
    m = MilpModel()
    c = m.add_var("c", c_val, c_val)
    u = m.add_var("u", u_val, u_val)
    r = add_mccormick(m, c, u, BOX)
    return m, r


def _r_range(c_val, u_val):
    out = []
    for sign in (1.0, -1.0):
        m, r = _product_model(c_val, u_val)
        m.add_objective({r: sign})
        s = solve_milp(m, MilpParams(backend="native"))
        out.append(s.x[r])
    return tuple(out)


def test_mccormick_numeric_example():
    lo, hi = mccormick_bounds(13.5, 1.5, BOX)
    assert (lo, hi) == pytest.approx((10.5, 30.0))
    assert lo <= 13.5 * 1.5 <= hi
    assert _r_range(13.5, 1.5) == pytest.approx((10.5, 30.0))


@pytest.mark.parametrize("c,u", [(7, 0), (7, 3), (20, 0), (20, 3), (7, 1.7), (20, 0.4), (11.2, 0), (9.9, 3)])
def test_mccormick_tight_on_facets(c, u):
    lo, hi = _r_range(c, u)
    assert lo == pytest.approx(c * u, abs=1e-9) and hi == pytest.approx(c * u, abs=1e-9)


@given(st.floats(7, 20), st.floats(0, 3))
def test_mccormick_sandwich(c, u):
    lo, hi = mccormick_bounds(c, u, BOX)
    assert lo - 1e-9 <= c * u <= hi + 1e-9


def _fixed_prices(structure, values, window=(2, 3), rho=1.0):
    m = MilpModel()
    c = m.add_vars("c", len(values), 0.0, 100.0)
    add_price_structure(m, c, structure, GlobalConstants(rho=rho), window)
    return m.max_violation(np.asarray(values, dtype=float))


def test_price_structure_pp_two_free_levels():
    assert _fixed_prices("pp", [8, 8, 15, 15]) == 0.0
    assert _fixed_prices("pp", [8, 9, 15, 15]) > 0.5
    assert _fixed_prices("pp", [8, 8, 15, 14]) > 0.5


def test_price_structure_rp_ramp_rows():
    assert _fixed_prices("rp", [7, 8, 7]) <= 1e-12
    assert _fixed_prices("rp", [7, 9, 7]) == pytest.approx(1.0)


def test_price_structure_rp_zero_ramp_is_flat():
    m = MilpModel()
    c = m.add_vars("c", 4, 7.0, 20.0)
    add_price_structure(m, c, "rp", GlobalConstants(rho=1e-12), (0, 0))
    m.add_objective({c[2]: -1.0})
    m.lb[c[0]] = m.ub[c[0]] = 9.0
    s = solve_milp(m, MilpParams(backend="native"))
    np.testing.assert_allclose(s.x[c], 9.0, atol=1e-9)


def test_big_m_geometric_series():
    th = dataclasses.replace(room_consumer(n=24), gamma=0.0)
    M = compute_big_m(th, K, 3.0)
    assert M.nu == pytest.approx(3.0 * np.sum(0.63 ** np.arange(24)))


def test_big_m_single_step_covers_kappa():
    assert compute_big_m(room_consumer(n=1), K, 3.0).xi >= 3.0


@given(st.floats(7.5, 40.0))
def test_big_m_monotone_in_price_cap(c_hi):
    th = room_consumer(n=6)
    a = compute_big_m(th, GlobalConstants(c_hi=c_hi), 3.0)
    b = compute_big_m(th, GlobalConstants(c_hi=2 * c_hi), 3.0)
    assert b.mu >= a.mu


def test_derived_big_m_dominates_observed_multipliers():
    rng = np.random.default_rng(2)
    for _ in range(10):
        th = random_consumer(rng, 6)
        M = resolve_big_m(th, K, 3.0, "derived", 10.0)
        for price in np.linspace(7, 20, 6):
            s = solve_surrogate_mpc(th, np.full(6, price))
            assert np.abs(s.nu).max() <= M.nu
            assert max(s.mu_hi.max(), s.mu_lo.max()) <= M.mu
            assert max(s.xi_hi.max(), s.xi_lo.max()) <= M.xi


def _participation_model(theta, price):
    m = MilpModel()
    c = m.add_vars("c", theta.n_steps, price, price)
    h = embed_kkt(m, theta, c, resolve_big_m(theta, K, 3.0, "derived", 10.0))
    h.r = np.array([add_mccormick(m, c[j], h.u[j], (7.0, 20.0, 0.0, theta.u_max)) for j in range(len(h.u))])
    jf = solve_surrogate_mpc(theta, np.full(theta.n_steps, 10.0)).J
    row = add_participation(m, theta, h, jf)
    return m, h, row, jf


def test_participation_holds_at_flat_price():
    th = room_consumer(n=5)
    m, h, row, jf = _participation_model(th, 10.0)
    s = solve_milp(m, MilpParams(backend="highs"))
    assert s.status == OPTIMAL
    r = m.rows[row]
    assert r.val @ s.x[r.idx] <= r.rhs + 1e-7


def test_participation_tracking_scenario_both_sides_zero():
    th = tracking_consumer(n=4)
    m, h, row, jf = _participation_model(th, 12.0)
    assert jf == pytest.approx(0.0, abs=1e-9)
    assert m.rows[row].rhs == pytest.approx(0.0, abs=1e-9)


def test_participation_row_coefficients_two_steps():
    th = room_consumer(n=2, gamma=0.4)
    m, h, row, jf = _participation_model(th, 10.0)
    r = m.rows[row]
    coef = dict(zip(r.idx.tolist(), r.val.tolist()))
    assert coef == {h.dev_pos[0]: 3.0, h.dev_neg[0]: 3.0, h.r[0]: 0.4}
    assert r.sense == LE and r.rhs == pytest.approx(jf)


def test_kkt_interior_input_has_zero_bound_multipliers():
    th = room_consumer(n=4)
    c = np.full(4, 10.0)
    s = solve_surrogate_mpc(th, c)
    inner = (s.u_star[:-1] > 1e-7) & (s.u_star[:-1] < th.u_max - 1e-7)
    assert np.all(s.mu_hi[:-1][inner] == 0) and np.all(s.mu_lo[:-1][inner] == 0)


@settings(max_examples=15)
@given(st.integers(0, 2**32 - 1))
def test_kkt_block_recovers_oracle(seed):
    rng = np.random.default_rng(seed)
    th = random_consumer(rng, int(rng.integers(2, 7)))
    assert kkt_recovery_error(th, rng.uniform(7, 20, th.n_steps)) <= 1e-4


def _spec(**kw):
    rng = np.random.default_rng(5)
    scen = [random_consumer(rng, 6) for _ in range(2)]
    base = dict(scenarios=scen, grid=TimeGrid(6, 60, 600), peak_window=(3, 4))
    base.update(kw)
    return DesignSpec(**base)


def test_binary_count_close_to_formula():
    spec = _spec()
    rm = build_design_milp(spec)
    S, N = 2, 6
    target = 4 * S * (N - 1) + 2 * S * N
    assert abs(rm.model.n_binaries - target) <= 0.1 * target
    assert rm.model.n_binaries == 6 * (N - 1) * S


def test_zero_lambda_peak_objective_only_on_window_inputs():
    spec = _spec(lam=0.0)
    rm = build_design_milp(spec)
    t1, t2 = spec.peak_window
    allowed = {int(j) for h in rm.scenarios for j in h.u[t1 : t2 + 1]}
    assert set(rm.model.objective) <= allowed


def test_tracking_scenario_design_trivial():
    th = tracking_consumer(n=5)
    spec = DesignSpec(scenarios=[th], grid=TimeGrid(5, 60, 720), peak_window=(1, 2), lam=0.0)
    res = design_tariff(spec)
    assert res.surrogate_objective == pytest.approx(0.0, abs=1e-9)


def test_flat_start_is_feasible():
    for structure, mode in (("pp", "peak"), ("rp", "variance")):
        rm = build_design_milp(_spec(structure=structure, objective_mode=mode))
        x = flat_start(rm)
        assert rm.model.max_violation(x) <= 1e-7
        assert rm.model.integrality_violation(x) == 0.0


@pytest.mark.parametrize("structure,mode", [("pp", "peak"), ("rp", "variance"), ("pp", "variance")])
def test_design_invariants(structure, mode):
    spec = _spec(structure=structure, objective_mode=mode)
    res = design_tariff(spec)
    assert res.price.structure_violation(K.rho) == 0.0
    assert K.c_lo <= res.price.c.min() and res.price.c.max() <= K.c_hi
    a = res.audits
    assert a["mccormick_envelope_violation"] <= 1e-7
    assert a["mccormick_bound_product_error"] <= 1e-7
    assert max(a["participation_row_excess"]) <= 1e-7
    _, ok, _ = true_objective(spec, res.price, lower_level=SURROGATE)
    assert ok


def test_doubling_big_m_does_not_move_optimum(monkeypatch):
    spec = micro_instances(1, 3)[0]
    params = MilpParams(backend="highs", gap_tol=1e-6)
    base = design_tariff(spec, params, polish=False).milp.objective_value
    orig = rf.resolve_big_m
    monkeypatch.setattr(rf, "resolve_big_m", lambda *a, **k: orig(*a, **k).scaled(2.0))
    doubled = design_tariff(spec, params, polish=False).milp.objective_value
    assert abs(doubled - base) <= 1e-4 * max(1.0, abs(base))


def test_tie_polish_never_worse_and_keeps_structure():
    spec = micro_instances(1, 0)[0]
    raw = design_tariff(spec, polish=False)
    price, info = rf.tie_polish(spec, raw.price)
    assert price.structure_violation() == 0.0
    assert info["objective_after"] <= info["objective_before"] + 1e-12
    assert np.abs(price.c - raw.price.c).max() <= 1e-4 + 1e-12


def test_scenario_rejected_when_flat_infeasible():
    hot = room_consumer(n=6, w=60.0, q=15.0, u_max=0.5)
    spec = DesignSpec(scenarios=[hot], grid=TimeGrid(6, 60), peak_window=(2, 3))
    with pytest.raises(rf.ScenarioRejected):
        build_design_milp(spec)


def test_spec_round_trip():
    spec = _spec()
    back = DesignSpec.from_dict(spec.to_dict())
    assert back.to_dict() == spec.to_dict()


def test_clean_price_rp_respects_ramp_exactly():
    spec = _spec(structure="rp")
    noisy = np.array([9.0, 10.0000001, 11.0000003, 10.5, 9.7, 9.0000002])
    p = rf.clean_price(noisy, spec)
    assert p.structure_violation(1.0) == 0.0
    assert np.abs(p.c - noisy).max() <= 1e-6
