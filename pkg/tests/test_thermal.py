import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from tariffdesign.thermal import (
    ROOM_1, ROOM_2, ConsumerType, DimensionError, GlobalConstants, PriceSignal, ThermalParams, TimeGrid,
    comfort_bounds, reachable_band, simulate_trajectory, step_temperature, total_energy,
)

from .conftest import room_consumer


def test_step_temperature_room1():
    assert step_temperature(25.0, 1.0, 30.0, 6.78, ROOM_1) == pytest.approx(22.89, abs=1e-9)


def test_step_temperature_room2():
    # 0.43 * 25 + 0.18 * 30 + 9.44 with no input
    assert step_temperature(25.0, 0.0, 30.0, 9.44, ROOM_2) == pytest.approx(25.59, abs=1e-9)
    # the same room reaches 21.59 with u = 4 / 1.95
    assert step_temperature(25.0, 4.0 / 1.95, 30.0, 9.44, ROOM_2) == pytest.approx(21.59, abs=1e-9)


def test_step_temperature_zero():
    assert step_temperature(0.0, 0.0, 0.0, 0.0, ROOM_1) == 0.0


def test_simulate_room1_second_temperature_and_limit():
    th = room_consumer(n=200, w=30.0, q=6.78)
    T = simulate_trajectory(th, np.zeros(200), T_init=25.0)
    assert T[1] == pytest.approx(25.53, abs=1e-9)
    assert T[-1] == pytest.approx((0.1 * 30 + 6.78) / (1 - 0.63), abs=1e-9)
    assert T[-1] == pytest.approx(26.43, abs=5e-3)


def test_simulate_two_steps_keeps_initial():
    th = room_consumer(n=2)
    T = simulate_trajectory(th, [1.0, 0.0], T_init=23.0)
    assert T.shape == (2,) and T[0] == 23.0


def test_simulate_defaults_to_setpoint():
    th = room_consumer(n=3)
    assert simulate_trajectory(th, np.zeros(3))[0] == th.T_d


def test_simulate_rejects_wrong_length():
    with pytest.raises(DimensionError):
        simulate_trajectory(room_consumer(n=4), np.zeros(3))


@pytest.mark.parametrize("b,u,p,expected", [
    ([1.0, 1.0], [2.0, 0.0], 1.0, 4.0),
    ([0.0] * 4, [1.0] * 4, 2.0, 8.0),
])
def test_total_energy(b, u, p, expected):
    n = len(b)
    th = ConsumerType.make(ROOM_1, np.full(n, 30.0), np.full(n, 6.78), b, 0.1, 24.0, 3.0)
    assert total_energy(th, u, GlobalConstants(p=p)) == pytest.approx(expected)


def test_total_energy_zero_input_is_base_load():
    th = room_consumer(n=5, b=0.7)
    assert total_energy(th, np.zeros(5), GlobalConstants()) == pytest.approx(3.5)


@pytest.mark.parametrize("T_d,flexible,expected", [(24, False, (22, 26)), (24, True, (21, 27)),
                                                    (0, False, (-2, 2))])
def test_comfort_bounds(T_d, flexible, expected):
    assert comfort_bounds(T_d, flexible) == expected


def test_consumer_rejects_mismatched_band():
    with pytest.raises(ValueError):
        ConsumerType(ROOM_1, [30.0] * 3, [6.0] * 3, [0.0] * 3, 0.1, 24.0, 21.0, 27.0, 3.0, False)


def test_consumer_rejects_negative_base_load():
    with pytest.raises(ValueError):
        room_consumer(b=-0.1)


@pytest.mark.parametrize("kw", [dict(k_r=1.0, k_c=1.0, k_w=0.1), dict(k_r=0.5, k_c=0.0, k_w=0.1),
                                dict(k_r=0.5, k_c=1.0, k_w=1.5)])
def test_thermal_params_invariants(kw):
    with pytest.raises(ValueError):
        ThermalParams(**kw)


def test_consumer_round_trip():
    th = room_consumer(n=3, flexible=True)
    back = ConsumerType.from_dict(th.to_dict())
    assert back.to_dict() == th.to_dict()


def test_coarsen_matches_every_fourth_fine_temperature():
    rng = np.random.default_rng(3)
    th = ConsumerType.make(ROOM_2, rng.uniform(25, 33, 16), rng.uniform(8, 10, 16), rng.uniform(0, 1, 16),
                           1.0, 24.0, 3.0)
    uc = rng.uniform(0, 3, 4)
    fine = simulate_trajectory(th, np.repeat(uc, 4))
    coarse = simulate_trajectory(th.coarsen(4), uc)
    np.testing.assert_allclose(coarse, fine[::4], atol=1e-9)


def test_time_grid_window_maps_clock_interval():
    assert TimeGrid(96, 15).window(780, 960) == (52, 63)
    assert TimeGrid(24, 60).window(780, 960) == (13, 15)


def test_price_signal_structure():
    pp = PriceSignal.peak(8.0, 15.0, 6, (2, 3))
    assert pp.structure_violation() == 0.0
    assert PriceSignal([7.0, 8.0, 7.0], "rp").is_valid(rho=1.0, c_lo=7.0, c_hi=20.0)
    assert not PriceSignal([7.0, 9.0, 7.0], "rp").is_valid(rho=1.0)
    up = pp.upsample(4)
    assert up.peak_window == (8, 15) and up.structure_violation() == 0.0


def test_reachable_band_flags_hot_room():
    th = room_consumer(n=5, w=60.0, q=15.0, u_max=0.5)
    assert reachable_band(th)[2] is not None


# ---------------------------------------------------------------------------
# properties

floats = st.floats(-5.0, 5.0, allow_nan=False)
vec4 = st.lists(floats, min_size=4, max_size=4)


@given(vec4, vec4, vec4, vec4, vec4, vec4)
def test_superposition(du1, dw1, dq1, du2, dw2, dq2):
    base = room_consumer(n=4)

    def sim(du, dw, dq):
        th = ConsumerType.make(ROOM_1, base.w + dw, base.q + dq, base.b, 0.1, 24.0, 3.0)
        return simulate_trajectory(th, np.array(du), 24.0)

    zero = [0.0] * 4
    ref = sim(zero, np.zeros(4), np.zeros(4))
    d1 = sim(du1, np.array(dw1), np.array(dq1)) - ref
    d2 = sim(du2, np.array(dw2), np.array(dq2)) - ref
    d12 = sim(np.add(du1, du2), np.add(dw1, dw2), np.add(dq1, dq2)) - ref
    np.testing.assert_allclose(d12, d1 + d2, atol=1e-9)


@given(st.floats(15.0, 35.0), st.floats(20.0, 40.0), st.floats(0.0, 12.0),
       st.sampled_from([ROOM_1, ROOM_2]))
def test_free_response_monotone_to_fixed_point(T0, w, q, room):
    n = 40
    th = ConsumerType.make(room, np.full(n, w), np.full(n, q), np.zeros(n), 0.1, 24.0, 3.0)
    T = simulate_trajectory(th, np.zeros(n), T0)
    fixed = (room.k_w * w + q) / (1 - room.k_r)
    gap = np.abs(T - fixed)
    assert np.all(np.diff(gap) <= 1e-12)
    assert np.all(np.sign(T - fixed) * np.sign(T0 - fixed) >= 0)


@given(st.lists(st.floats(0.0, 3.0), min_size=5, max_size=5), st.integers(0, 4), st.floats(0.0, 2.0))
def test_energy_monotone_in_each_input(u, k, bump):
    th = room_consumer(n=5)
    u2 = list(u)
    u2[k] += bump
    c = GlobalConstants()
    assert total_energy(th, u2, c) >= total_energy(th, u, c)
