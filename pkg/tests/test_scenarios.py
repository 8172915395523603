import dataclasses
import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from tariffdesign.mpc import solve_mpc
from tariffdesign.scenarios import (
    ScenarioConfig, ScenarioConfigError, Weather, check_scenario, occupancy_shape, population_from_json,
    population_to_json, sample_population, sample_type, weather_profile,
)
from tariffdesign.thermal import ROOM_1

from .conftest import room_consumer, tracking_consumer


def test_no_flexible_consumers_when_probability_zero():
    pop = sample_population(ScenarioConfig(p_flexible=0.0), 20, seed=1)
    assert all((th.T_lo, th.T_hi) == (22.0, 26.0) for th in pop)


def test_room1_mean_occupancy_load():
    cfg = ScenarioConfig(room_table=[(ROOM_1, 6.78)])
    for th in sample_population(cfg, 10, seed=2):
        assert abs(th.q.mean() / 6.78 - 1.0) <= 0.1


def test_same_seed_same_population():
    a = population_to_json(sample_population(ScenarioConfig(), 5, seed=9))
    b = population_to_json(sample_population(ScenarioConfig(), 5, seed=9))
    assert a == b
    assert a != population_to_json(sample_population(ScenarioConfig(), 5, seed=10))


def test_population_json_round_trip():
    pop = sample_population(ScenarioConfig(), 3, seed=4)
    text = json.dumps(population_to_json(pop))
    back = population_from_json(json.loads(text))
    assert population_to_json(back) == population_to_json(pop)


def test_check_scenario_tracking_consumer():
    rep = check_scenario(tracking_consumer(), 10.0)
    assert rep.feasible
    assert rep.binding["u_at_max"] == rep.binding["T_at_lo"] == rep.binding["T_at_hi"] == 0


def test_check_scenario_hot_room_infeasible():
    rep = check_scenario(room_consumer(n=6, w=60.0, q=15.0, u_max=0.5), 10.0)
    assert not rep.feasible and rep.first_infeasible_step is not None


def test_check_scenario_mean_input():
    th = room_consumer(n=6)
    rep = check_scenario(th, 10.0)
    assert rep.mean_input == pytest.approx(solve_mpc(th, np.full(6, 10.0)).u_star.mean())


def test_flexibility_fraction():
    cfg = ScenarioConfig(p_flexible=0.3)
    pop = sample_population(cfg, 10_000, seed=0)
    assert abs(np.mean([th.flexible for th in pop]) - 0.3) <= 0.02


def test_weather_peak_noiseless():
    for peak in (9 * 60, 14 * 60, 17 * 60 + 30):
        cfg = ScenarioConfig(weather=Weather(peak_clock=peak, noise_sd=0.0))
        w = weather_profile(cfg)
        step = cfg.grid.step_minutes
        assert abs(int(np.argmax(w)) - peak // step) <= 2


def test_occupancy_unit_mean_higher_at_night():
    shape = occupancy_shape(ScenarioConfig())
    assert shape.mean() == pytest.approx(1.0)
    assert shape[8] > shape[48]  # 02:00 versus 12:00


def test_emitted_types_are_flat_feasible():
    for th in sample_population(ScenarioConfig(), 12, seed=3):
        solve_mpc(th, np.full(th.n_steps, 10.0))


def test_hot_climate_exhausts_retries():
    cfg = ScenarioConfig(weather=Weather(mean=80.0), u_max=0.1, retry_limit=3)
    with pytest.raises(ScenarioConfigError):
        sample_type(cfg, np.random.default_rng(0))


@pytest.mark.parametrize("kw", [dict(p_flexible=1.5), dict(room_table=[]), dict(gamma_range=(2.0, 1.0))])
def test_config_invariants(kw):
    with pytest.raises(ScenarioConfigError):
        ScenarioConfig(**kw)


def test_config_round_trip():
    cfg = ScenarioConfig(p_flexible=0.4, gamma_range=(0.2, 0.3))
    assert ScenarioConfig.from_dict(cfg.to_dict()).to_dict() == cfg.to_dict()


@settings(max_examples=20)
@given(st.integers(0, 2**32 - 1), st.floats(0.0, 1.0))
def test_sampled_types_satisfy_invariants(seed, p):
    cfg = dataclasses.replace(ScenarioConfig(), p_flexible=p)
    th = sample_type(cfg, np.random.default_rng(seed))
    assert th.n_steps == cfg.grid.n_steps
    assert np.all(th.b >= 0) and cfg.gamma_range[0] <= th.gamma <= cfg.gamma_range[1]
    assert th.T_hi - th.T_lo in (4.0, 6.0)
