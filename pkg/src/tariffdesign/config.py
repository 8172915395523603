"""Run configuration: one JSON document, strictly validated."""

from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .reformulate import DesignSpec
from .scenarios import BaseLoad, Occupancy, ScenarioConfig, ScenarioConfigError, Weather
from .thermal import GlobalConstants, ThermalParams, TimeGrid


class ConfigError(ValueError):
    """Malformed configuration; ``where`` names the offending field or line."""

    def __init__(self, where: str, message: str):
        self.where = where
        super().__init__(f"{where}: {message}")


@dataclass
class DesignSettings:
    objective_mode: str = "peak"
    structure: str = "pp"
    lam: float = 0.01
    constants: GlobalConstants = field(default_factory=GlobalConstants)
    peak_window_minutes: tuple[int, int] = (13 * 60, 16 * 60)
    flat_price: float = 10.0
    kappa: float = 3.0
    bigM_policy: str | float = "derived"
    n_scenarios: int = 8
    coarsen_factor: int = 4
    duality_cut: bool = True
    variance_center: str = "total"


@dataclass
class EvaluationSettings:
    population_size: int = 64
    out_dir: str = "out"


@dataclass
class SolverSettings:
    backend: str = "highs"
    gap_tol: float = 1e-4
    time_limit: float | None = None
    node_limit: int | None = None


@dataclass
class RunConfig:
    seed: int = 0
    scenario: ScenarioConfig = field(default_factory=ScenarioConfig)
    design: DesignSettings = field(default_factory=DesignSettings)
    evaluation: EvaluationSettings = field(default_factory=EvaluationSettings)
    solver: SolverSettings = field(default_factory=SolverSettings)

    def design_grid(self) -> TimeGrid:
        return self.scenario.grid.coarsen(self.design.coarsen_factor)

    def design_window(self) -> tuple[int, int]:
        return self.design_grid().window(*self.design.peak_window_minutes)

    def eval_window(self) -> tuple[int, int]:
        return self.scenario.grid.window(*self.design.peak_window_minutes)

    def eval_seed(self) -> int:
        """Seed of the evaluation population, independent of the design draw."""
        return int(np.random.SeedSequence([self.seed, 1]).generate_state(1)[0])

    def design_spec(self, scenarios) -> DesignSpec:
        d = self.design
        return DesignSpec(
            objective_mode=d.objective_mode,
            structure=d.structure,
            lam=d.lam,
            constants=d.constants,
            peak_window=self.design_window(),
            flat_price=d.flat_price,
            scenarios=list(scenarios),
            kappa=d.kappa,
            bigM_policy=d.bigM_policy,
            grid=self.design_grid(),
            duality_cut=d.duality_cut,
            variance_center=d.variance_center,
        )

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self.design)
        d["lambda"] = d.pop("lam")
        d["peak_window_minutes"] = list(d["peak_window_minutes"])
        return {
            "seed": self.seed,
            "scenario": self.scenario.to_dict(),
            "design": d,
            "evaluation": dataclasses.asdict(self.evaluation),
            "solver": dataclasses.asdict(self.solver),
        }


# ---------------------------------------------------------------------------


def _check_keys(d, allowed, where):
    if not isinstance(d, dict):
        raise ConfigError(where, f"expected an object, got {type(d).__name__}")
    unknown = sorted(set(d) - set(allowed))
    if unknown:
        raise ConfigError(f"{where}.{unknown[0]}" if where else unknown[0],
                          f"unknown key (allowed: {', '.join(sorted(allowed))})")


def _names(cls):
    return [f.name for f in dataclasses.fields(cls)]


def _build(cls, d, where, rename=None):
    rename = rename or {}
    allowed = [rename.get(n, n) for n in _names(cls)]
    _check_keys(d, allowed, where)
    inverse = {v: k for k, v in rename.items()}
    kw = {inverse.get(k, k): v for k, v in d.items()}
    try:
        return cls(**kw)
    except (TypeError, ValueError) as exc:
        raise ConfigError(where, str(exc)) from exc


def _scenario(d, where) -> ScenarioConfig:
    _check_keys(d, _names(ScenarioConfig), where)
    d = dict(d)
    for key, typ in (("weather", Weather), ("occupancy", Occupancy), ("base_load", BaseLoad),
                     ("grid", TimeGrid)):
        if key in d:
            _check_keys(d[key], _names(typ), f"{where}.{key}")
    for i, room in enumerate(d.get("room_table") or []):
        _check_keys(room, ["thermal", "mean_q"], f"{where}.room_table[{i}]")
        _check_keys(room.get("thermal", {}), _names(ThermalParams), f"{where}.room_table[{i}].thermal")
    try:
        return ScenarioConfig.from_dict(d)
    except (TypeError, ValueError, KeyError, ScenarioConfigError) as exc:
        raise ConfigError(where, str(exc)) from exc


def config_from_dict(d: dict) -> RunConfig:
    _check_keys(d, _names(RunConfig), "")
    seed = d.get("seed", 0)
    if not isinstance(seed, int) or isinstance(seed, bool) or seed < 0:
        raise ConfigError("seed", "must be a nonnegative integer")
    scen = _scenario(d.get("scenario", {}), "scenario")

    dd = dict(d.get("design", {}))
    _check_keys(dd, [n if n != "lam" else "lambda" for n in _names(DesignSettings)], "design")
    if "constants" in dd:
        dd["constants"] = _build(GlobalConstants, dd["constants"], "design.constants")
    if "peak_window_minutes" in dd:
        pw = dd["peak_window_minutes"]
        if not (isinstance(pw, list) and len(pw) == 2):
            raise ConfigError("design.peak_window_minutes", "expected [start_minute, end_minute]")
        dd["peak_window_minutes"] = (int(pw[0]), int(pw[1]))
    design = _build(DesignSettings, dd, "design", {"lam": "lambda"})
    evaluation = _build(EvaluationSettings, d.get("evaluation", {}), "evaluation")
    solver = _build(SolverSettings, d.get("solver", {}), "solver")
    cfg = RunConfig(seed, scen, design, evaluation, solver)
    _validate(cfg)
    return cfg


def _validate(cfg: RunConfig):
    d = cfg.design
    if d.n_scenarios < 1:
        raise ConfigError("design.n_scenarios", "must be at least 1")
    if cfg.evaluation.population_size < 1:
        raise ConfigError("evaluation.population_size", "must be at least 1")
    if d.objective_mode not in ("peak", "variance"):
        raise ConfigError("design.objective_mode", "must be 'peak' or 'variance'")
    if d.structure not in ("pp", "rp"):
        raise ConfigError("design.structure", "must be 'pp' or 'rp'")
    if d.coarsen_factor < 1 or cfg.scenario.grid.n_steps % d.coarsen_factor:
        raise ConfigError("design.coarsen_factor", "must be a positive divisor of scenario.grid.n_steps")
    if cfg.solver.backend not in ("highs", "native"):
        raise ConfigError("solver.backend", "must be 'highs' or 'native'")
    try:
        cfg.design_window()
        cfg.eval_window()
        cfg.design_spec([]).validate()
    except ValueError as exc:
        msg = str(exc)
        if "at least one scenario" not in msg:
            raise ConfigError("design", msg) from exc


def load_config(path) -> RunConfig:
    p = Path(path)
    try:
        text = p.read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(str(p), f"cannot read config ({exc.strerror})") from exc
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{p}:{exc.lineno}:{exc.colno}", exc.msg) from exc
    return config_from_dict(data)
