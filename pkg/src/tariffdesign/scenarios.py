"""Synthetic consumer populations.

Outside temperature is a noisy diurnal sinusoid, occupancy heat load a smooth
two-level day/night schedule scaled to the room's average load, and the nondeferrable
load a base level with morning and evening bumps.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .mpc import MpcInfeasible, solve_mpc
from .thermal import ROOM_TABLE, ConsumerType, ThermalParams, TimeGrid, reachable_band

log = logging.getLogger(__name__)


class ScenarioConfigError(ValueError):
    pass


@dataclass
class Weather:
    mean: float = 28.0
    amplitude: float = 4.0
    peak_clock: int = 14 * 60
    noise_sd: float = 0.5


@dataclass
class Occupancy:
    day_level: float = 0.95
    night_level: float = 1.05
    day_start_clock: int = 8 * 60
    day_end_clock: int = 18 * 60
    transition_minutes: float = 45.0
    noise_sd: float = 0.02


@dataclass
class BaseLoad:
    base: float = 0.5
    morning_amplitude: float = 0.3
    evening_amplitude: float = 0.6
    morning_clock: int = 7 * 60 + 30
    evening_clock: int = 19 * 60 + 30
    width_minutes: float = 90.0
    noise_sd: float = 0.05


@dataclass
class ScenarioConfig:
    seed: int = 0
    room_table: list = field(default_factory=lambda: [(p, q) for p, q in ROOM_TABLE])
    p_flexible: float = 0.2
    T_d: float = 24.0
    gamma_range: tuple[float, float] = (0.5, 1.5)
    u_max: float = 3.0
    p: float = 1.0
    weather: Weather = field(default_factory=Weather)
    occupancy: Occupancy = field(default_factory=Occupancy)
    base_load: BaseLoad = field(default_factory=BaseLoad)
    grid: TimeGrid = field(default_factory=TimeGrid)
    flat_price: float = 10.0
    retry_limit: int = 50

    def __post_init__(self):
        if not 0.0 <= self.p_flexible <= 1.0:
            raise ScenarioConfigError("p_flexible must lie in [0, 1]")
        if not self.room_table:
            raise ScenarioConfigError("room_table must be nonempty")
        for sd in (self.weather.noise_sd, self.occupancy.noise_sd, self.base_load.noise_sd):
            if sd < 0:
                raise ScenarioConfigError("noise standard deviations must be nonnegative")
        lo, hi = self.gamma_range
        if not 0 <= lo <= hi:
            raise ScenarioConfigError("gamma_range must satisfy 0 <= lo <= hi")

    @classmethod
    def from_dict(cls, d: dict) -> ScenarioConfig:
        d = dict(d)
        rooms = d.pop("room_table", None)
        kw = {}
        if rooms is not None:
            kw["room_table"] = [(ThermalParams(**r["thermal"]), float(r["mean_q"])) for r in rooms]
        for key, typ in (("weather", Weather), ("occupancy", Occupancy), ("base_load", BaseLoad),
                         ("grid", TimeGrid)):
            if key in d:
                kw[key] = typ(**d.pop(key))
        if "gamma_range" in d:
            kw["gamma_range"] = tuple(d.pop("gamma_range"))
        return cls(**d, **kw)

    def to_dict(self) -> dict:
        return {
            "seed": self.seed,
            "room_table": [{"thermal": vars(p).copy(), "mean_q": q} for p, q in self.room_table],
            "p_flexible": self.p_flexible,
            "T_d": self.T_d,
            "gamma_range": list(self.gamma_range),
            "u_max": self.u_max,
            "p": self.p,
            "weather": vars(self.weather).copy(),
            "occupancy": vars(self.occupancy).copy(),
            "base_load": vars(self.base_load).copy(),
            "grid": vars(self.grid).copy(),
            "flat_price": self.flat_price,
            "retry_limit": self.retry_limit,
        }


def _circular_minutes(t, center):
    d = (t - center) % 1440
    return np.minimum(d, 1440 - d)


def weather_profile(cfg: ScenarioConfig, rng=None) -> np.ndarray:
    wc = cfg.weather
    t = cfg.grid.clock_times().astype(float)
    w = wc.mean + wc.amplitude * np.sin(2 * np.pi * (t - wc.peak_clock + 360.0) / 1440.0)
    if rng is not None and wc.noise_sd > 0:
        w = w + rng.normal(0.0, wc.noise_sd, w.shape)
    return w


def occupancy_shape(cfg: ScenarioConfig) -> np.ndarray:
    """Unit-mean occupancy schedule with smooth day/night transitions."""
    oc = cfg.occupancy
    t = cfg.grid.clock_times().astype(float) + cfg.grid.step_minutes / 2.0
    s = max(oc.transition_minutes / 4.0, 1e-6)
    day = 1.0 / (1.0 + np.exp(-(t - oc.day_start_clock) / s)) - 1.0 / (1.0 + np.exp(-(t - oc.day_end_clock) / s))
    shape = oc.night_level + (oc.day_level - oc.night_level) * day
    return shape / shape.mean()


def base_load_profile(cfg: ScenarioConfig, rng=None) -> np.ndarray:
    bl = cfg.base_load
    t = cfg.grid.clock_times().astype(float)
    b = (bl.base
         + bl.morning_amplitude * np.exp(-0.5 * (_circular_minutes(t, bl.morning_clock) / bl.width_minutes) ** 2)
         + bl.evening_amplitude * np.exp(-0.5 * (_circular_minutes(t, bl.evening_clock) / bl.width_minutes) ** 2))
    if rng is not None and bl.noise_sd > 0:
        b = b + rng.normal(0.0, bl.noise_sd, b.shape)
    return np.maximum(b, 0.0)


def sample_type(cfg: ScenarioConfig, rng: np.random.Generator) -> ConsumerType:
    """Draw one flat-rate-feasible consumer type."""
    n = cfg.grid.n_steps
    shape = occupancy_shape(cfg)
    for _ in range(cfg.retry_limit):
        k = int(rng.integers(len(cfg.room_table)))
        params, mean_q = cfg.room_table[k]
        flexible = bool(rng.random() < cfg.p_flexible)
        gamma = float(rng.uniform(*cfg.gamma_range))
        w = weather_profile(cfg, rng)
        q = mean_q * shape
        if cfg.occupancy.noise_sd > 0:
            q = q * (1.0 + rng.normal(0.0, cfg.occupancy.noise_sd, n))
        b = base_load_profile(cfg, rng)
        theta = ConsumerType.make(params, w, q, b, gamma, cfg.T_d, cfg.u_max, flexible)
        if reachable_band(theta)[2] is None:
            return theta
    raise ScenarioConfigError(
        f"no flat-rate-feasible consumer after {cfg.retry_limit} draws; comfort band too tight for the climate"
    )


def sample_population(cfg: ScenarioConfig, size: int, seed: int | None = None) -> list:
    """``size`` consumers; sample ``i`` uses its own child seed so draws are order independent."""
    root = np.random.SeedSequence(cfg.seed if seed is None else seed)
    return [sample_type(cfg, np.random.default_rng(s)) for s in root.spawn(size)]


@dataclass
class ScenarioReport:
    feasible: bool
    first_infeasible_step: int | None = None
    binding: dict = field(default_factory=dict)
    mean_input: float | None = None
    total_input: float | None = None
    u_star: np.ndarray | None = None


def check_scenario(theta: ConsumerType, f: float, tol: float = 1e-7) -> ScenarioReport:
    try:
        sol = solve_mpc(theta, np.full(theta.n_steps, float(f)))
    except MpcInfeasible as exc:
        return ScenarioReport(False, exc.step)
    u, T = sol.u_star[:-1], sol.T[1:]
    # idle steps (u = 0) are reported but do not count as binding
    binding = {
        "u_at_max": int(np.sum(u >= theta.u_max - tol)),
        "T_at_lo": int(np.sum(T <= theta.T_lo + tol)),
        "T_at_hi": int(np.sum(T >= theta.T_hi - tol)),
        "idle_steps": int(np.sum(u <= tol)),
    }
    return ScenarioReport(True, None, binding, float(sol.u_star.mean()), float(sol.u_star.sum()),
                          sol.u_star)


def population_to_json(population) -> list:
    return [th.to_dict() for th in population]


def population_from_json(data) -> list:
    return [ConsumerType.from_dict(d) for d in data]
