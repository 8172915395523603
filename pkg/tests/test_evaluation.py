import numpy as np
import pytest

from tariffdesign.evaluation import (
    EXACT, SURROGATE, EnumerationTooLarge, EvaluationError, brute_force_design, candidate_tariffs,
    evaluate_rates, export_report, rebound_profile, true_objective,
)
from tariffdesign.mpc import evaluate_cost, solve_mpc
from tariffdesign.reformulate import DesignSpec
from tariffdesign.scenarios import ScenarioConfig, sample_population
from tariffdesign.thermal import GlobalConstants, PriceSignal, TimeGrid
from tariffdesign.verify import micro_instances

from .conftest import room_consumer, tracking_consumer


@pytest.fixture(scope="module")
def population():
    return sample_population(ScenarioConfig(p_flexible=0.5), 6, seed=21)


def test_zero_input_population():
    pop = [tracking_consumer(n=8), tracking_consumer(n=8, T_d=23.0)]
    rep = evaluate_rates(PriceSignal.flat(12.0, 8), pop, window=(2, 4))
    m = rep.classes["inflexible"]
    assert m.peak_load == pytest.approx(0.0, abs=1e-9)
    assert m.load_variance == pytest.approx(np.mean([th.b.var() for th in pop]))


def test_single_scenario_peak_is_hand_sum():
    th = room_consumer(n=8)
    c = PriceSignal.peak(8.0, 16.0, 8, (3, 5))
    rep = evaluate_rates(c, [th], window=(3, 5))
    u = solve_mpc(th, c.c).u_star
    assert rep.classes["inflexible"].peak_load == pytest.approx(u[3] + u[4] + u[5])
    assert rep.classes["flexible"].count == 0


def test_costs_match_oracle(population):
    c = PriceSignal.peak(8.0, 14.0, 96, (52, 63))
    for th in population:
        sol = solve_mpc(th, c.c)
        assert evaluate_cost(th, c.c, sol.u_star) == pytest.approx(sol.J, abs=1e-9)


def test_flat_report_is_the_baseline(population):
    rep = evaluate_rates(PriceSignal.flat(10.0, 96), population)
    np.testing.assert_allclose(rep.participation_margin, 0.0, atol=1e-12)
    for _, m in rep.metrics_rows():
        assert m.revenue_loss == pytest.approx(0.0, abs=1e-12)


def test_empty_population_rejected():
    with pytest.raises(EvaluationError):
        evaluate_rates(PriceSignal.flat(10.0, 4), [])


def test_infeasible_scenarios_are_flagged():
    pop = [room_consumer(n=6), room_consumer(n=6, w=60.0, q=15.0, u_max=0.5)]
    rep = evaluate_rates(PriceSignal.flat(10.0, 6), pop, window=(2, 3))
    assert [d["scenario"] for d in rep.infeasible] == [1]
    assert rep.classes["inflexible"].count == 1


def _reports(population):
    flat = evaluate_rates(PriceSignal.flat(10.0, 96), population, name="flat", grid=TimeGrid())
    pp = evaluate_rates(PriceSignal.peak(8.5, 15.0, 96, (52, 63)), population, name="pp", grid=TimeGrid())
    return [flat, pp]


def test_export_layout_and_determinism(population, tmp_path):
    reps = _reports(population)
    a = export_report(reps, tmp_path / "a")
    b = export_report(reps, tmp_path / "b")
    assert [p.split("/")[-1] for p in a] == ["metrics.csv", "trajectory_flat.csv", "trajectory_pp.csv"]
    for pa, pb in zip(a, b):
        assert open(pa, "rb").read() == open(pb, "rb").read()
        assert b"\r" not in open(pa, "rb").read()
    traj = open(a[1]).read().splitlines()
    assert len(traj) == 97
    assert traj[0] == "step,clock_time,price,mean_u_inflexible,mean_u_flexible,mean_total_load"
    assert traj[53].startswith("52,13:00,")
    metrics = open(a[0]).read().splitlines()
    assert metrics[0] == "type_class,tariff,peak_load,load_variance,revenue_loss"
    assert len(metrics) == 1 + 2 * 2


def test_rebound_profile_zero_and_truncation():
    pop = [tracking_consumer(n=8)]
    rep = evaluate_rates(PriceSignal.flat(10.0, 8), pop, window=(2, 4))
    r = rebound_profile(rep, (2, 4), steps_per_hour=2)["inflexible"]
    assert (r["pre"], r["in"], r["post"]) == pytest.approx((0.0, 0.0, 0.0), abs=1e-9)
    assert not r["truncated"]
    edge = rebound_profile(rep, (0, 1), steps_per_hour=2)["inflexible"]
    assert edge["truncated"] and np.isnan(edge["pre"])


def test_pp_window_mean_below_flat(population):
    flat, pp = _reports(population)
    for cls, _ in flat.metrics_rows():
        assert rebound_profile(pp)[cls]["in"] < rebound_profile(flat)[cls]["in"]


def test_candidate_count_pp():
    spec = DesignSpec(scenarios=[room_consumer(n=4)], grid=TimeGrid(4, 60), peak_window=(1, 2))
    assert len(candidate_tariffs(spec, 0.5)) == 27**2


def test_candidate_rp_respects_ramp_and_cap():
    spec = DesignSpec(structure="rp", scenarios=[room_consumer(n=4)], grid=TimeGrid(4, 60),
                      peak_window=(1, 2))
    cands = candidate_tariffs(spec, 1.0)
    assert cands and all(p.is_valid(rho=1.0) for p in cands)
    big = DesignSpec(structure="rp", scenarios=[room_consumer(n=6)], grid=TimeGrid(6, 60), peak_window=(1, 2))
    with pytest.raises(EnumerationTooLarge):
        candidate_tariffs(big, 0.5)


def test_grid_step_must_divide_range():
    spec = DesignSpec(scenarios=[room_consumer(n=4)], grid=TimeGrid(4, 60), peak_window=(1, 2))
    with pytest.raises(ValueError):
        candidate_tariffs(spec, 0.7)


@pytest.mark.parametrize("lower_level", [EXACT, SURROGATE])
def test_brute_force_dominates_hand_picked(lower_level):
    spec = micro_instances(1, 4)[0]
    best, obj, n = brute_force_design(spec, 0.5, lower_level=lower_level)
    assert n == 729
    _, ok, margins = true_objective(spec, best, lower_level=lower_level)
    assert ok and np.all(margins >= -1e-9)
    for off, on in [(10, 10), (8, 15), (7, 20), (9.5, 12)]:
        cand = PriceSignal.peak(off, on, 4, spec.peak_window)
        o, ok, _ = true_objective(spec, cand, lower_level=lower_level)
        if ok:
            assert obj <= o + 1e-12


def test_brute_force_on_two_level_grid_includes_flat():
    k = GlobalConstants(c_lo=7.0, c_hi=13.0)
    spec = micro_instances(1, 6)[0]
    spec.constants = k
    _, obj, n = brute_force_design(spec, 3.0)
    assert n == 9
    flat_obj, ok, _ = true_objective(spec, PriceSignal.peak(10.0, 10.0, 4, spec.peak_window))
    assert ok and obj <= flat_obj + 1e-12
