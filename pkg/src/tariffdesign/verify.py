"""Seeded consistency suites shared by ``tariffdesign verify`` and the test suite."""

from __future__ import annotations

import itertools
import math
import time
from dataclasses import dataclass

import numpy as np
from scipy.optimize import linprog

from .evaluation import SURROGATE, brute_force_design, true_objective
from .milp import EQ, GE, INFEASIBLE, LE, OPTIMAL, MilpModel, MilpParams, solve_milp
from .mpc import solve_surrogate_mpc
from .reformulate import DesignSpec, design_tariff, embed_kkt, resolve_big_m
from .scenarios import ScenarioConfig, sample_population
from .thermal import ROOM_TABLE, ConsumerType, GlobalConstants, TimeGrid, reachable_band


@dataclass
class SuiteResult:
    name: str
    passed: bool
    detail: str
    seconds: float = 0.0

    def line(self) -> str:
        return f"{'PASS' if self.passed else 'FAIL'}  {self.name}: {self.detail} ({self.seconds:.1f}s)"


def random_consumer(rng: np.random.Generator, n: int, flexible: bool | None = None) -> ConsumerType:
    """A flat-rate-feasible consumer with iid random disturbances."""
    while True:
        params, mean_q = ROOM_TABLE[int(rng.integers(len(ROOM_TABLE)))]
        flex = bool(rng.random() < 0.5) if flexible is None else flexible
        th = ConsumerType.make(params, rng.uniform(26, 34, n), mean_q * rng.uniform(0.7, 1.3, n),
                               rng.uniform(0, 2, n), float(rng.uniform(0.2, 3.0)), 24.0, 3.0, flex)
        if reachable_band(th)[2] is None:
            return th


# ---------------------------------------------------------------------------
# 1. embedded optimality system vs surrogate oracle


def kkt_recovery_error(theta: ConsumerType, c, backend: str = "highs") -> float:
    """Inf-norm gap between the KKT-embedded input and the surrogate oracle.

    The price is fixed, so the MILP is a feasibility system; minimizing total
    input selects the same optimal point as the oracle's tie-break.
    """
    c = np.asarray(c, dtype=float)
    n = theta.n_steps
    model = MilpModel()
    cv = model.add_vars("c", n, c, c)
    M = resolve_big_m(theta, GlobalConstants(), 3.0, "derived", 10.0)
    h = embed_kkt(model, theta, cv, M)
    model.add_objective({j: 1.0 for j in h.u})
    sol = solve_milp(model, MilpParams(backend=backend, gap_tol=1e-9))
    if sol.incumbent is None:
        return math.inf
    oracle = solve_surrogate_mpc(theta, c)
    return float(np.abs(sol.incumbent[h.u] - oracle.u_star[: n - 1]).max())


def suite_oracle_kkt(n_instances: int = 100, seed: int = 0, tol: float = 1e-4,
                     backend: str = "highs") -> SuiteResult:
    t0 = time.perf_counter()
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(n_instances):
        n = int(rng.integers(2, 9))
        theta = random_consumer(rng, n)
        worst = max(worst, kkt_recovery_error(theta, rng.uniform(7, 20, n), backend))
    return SuiteResult("oracle-kkt", worst <= tol, f"{n_instances} instances, worst |u_kkt - u_oracle| = {worst:.2e}",
                       time.perf_counter() - t0)


# ---------------------------------------------------------------------------
# 2. branch-and-bound vs exhaustive enumeration


def random_milp(rng: np.random.Generator, max_binaries: int = 12) -> MilpModel:
    nb = int(rng.integers(1, max_binaries + 1))
    nc = int(rng.integers(0, 4))
    model = MilpModel()
    xb = model.add_vars("b", nb, binary=True)
    xc = model.add_vars("x", nc, 0.0, 10.0)
    cols = list(xb) + list(xc)
    for r in range(int(rng.integers(1, 7))):
        coef = rng.integers(-5, 6, len(cols)).astype(float)
        sense = (LE, GE, EQ)[int(rng.choice(3, p=[0.6, 0.3, 0.1]))]
        rhs = float(rng.integers(-3, 10))
        if sense == EQ:
            # equalities over continuous columns only keep feasibility common
            coef[:nb] = 0.0
            if nc == 0:
                sense = LE
        model.add_constr({j: v for j, v in zip(cols, coef) if v}, sense, rhs, f"r{r}")
    model.add_objective({j: float(v) for j, v in zip(cols, rng.integers(-9, 10, len(cols)))})
    return model


def enumerate_milp(model: MilpModel) -> tuple[str, float]:
    """Exhaustive binary enumeration; each continuous subproblem goes to HiGHS LP."""
    bins = np.flatnonzero(model.integrality())
    lb, ub = model.bounds()
    c = model.cost_vector()
    A = model.matrix().toarray()
    senses, rhs = model.senses(), model.rhs()
    A_ub = np.vstack([A[senses == -1], -A[senses == 1]])
    b_ub = np.concatenate([rhs[senses == -1], -rhs[senses == 1]])
    A_eq, b_eq = A[senses == 0], rhs[senses == 0]
    best = math.inf
    for combo in itertools.product((0.0, 1.0), repeat=bins.size):
        l, u = lb.copy(), ub.copy()
        l[bins] = u[bins] = combo
        res = linprog(c, A_ub=A_ub if len(b_ub) else None, b_ub=b_ub if len(b_ub) else None,
                      A_eq=A_eq if len(b_eq) else None, b_eq=b_eq if len(b_eq) else None,
                      bounds=list(zip(l, u)), method="highs")
        if res.status == 0:
            best = min(best, float(res.fun) + model.obj_const)
    return (OPTIMAL, best) if math.isfinite(best) else (INFEASIBLE, math.inf)


def suite_milp(n_instances: int = 100, seed: int = 0, tol: float = 1e-6,
               backend: str = "native") -> SuiteResult:
    t0 = time.perf_counter()
    rng = np.random.default_rng(seed)
    mismatches = 0
    worst = 0.0
    for _ in range(n_instances):
        model = random_milp(rng)
        status, obj = enumerate_milp(model)
        sol = solve_milp(model, MilpParams(backend=backend, gap_tol=1e-9))
        if sol.status != status:
            mismatches += 1
            continue
        if status == OPTIMAL:
            err = abs(sol.objective_value - obj)
            worst = max(worst, err)
            if err > tol:
                mismatches += 1
    return SuiteResult("milp-enumeration", mismatches == 0,
                       f"{n_instances} instances, {mismatches} mismatches, worst objective error {worst:.1e}",
                       time.perf_counter() - t0)


# ---------------------------------------------------------------------------
# 3. MILP design vs brute-force grid search


def micro_instances(n_instances: int = 10, seed: int = 0, n_steps: int = 4, n_scenarios: int = 2):
    """Short-horizon slices of sampled consumers, starting in the early afternoon."""
    cfg = ScenarioConfig(seed=seed, p_flexible=0.5)
    start = 12
    out = []
    for i in range(n_instances):
        pop = sample_population(cfg, n_scenarios, seed=seed * 1000 + i)
        scen = []
        for th in pop:
            h = th.coarsen(4)
            s = slice(start, start + n_steps)
            scen.append(ConsumerType(h.thermal, h.w[s], h.q[s], h.b[s], h.gamma, h.T_d, h.T_lo, h.T_hi,
                                     h.u_max, h.flexible))
        out.append(DesignSpec(objective_mode="peak", structure="pp", scenarios=scen,
                              peak_window=(1, 2), grid=TimeGrid(n_steps, 60, start * 60)))
    return out


def brute_force_gap(spec: DesignSpec, params: MilpParams | None = None, step: float = 0.5,
                    lower_level: str = SURROGATE):
    """(relative gap, MILP objective, brute-force objective) with exact products ``c u``.

    Both sides evaluate consumers with the same lower-level model.
    """
    res = design_tariff(spec, params)
    milp_obj, _, _ = true_objective(spec, res.price, lower_level=lower_level)
    _, bf_obj, _ = brute_force_design(spec, step, lower_level=lower_level)
    gap = (milp_obj - bf_obj) / max(abs(bf_obj), 1e-9)
    return gap, milp_obj, bf_obj


def suite_brute_force(n_instances: int = 10, seed: int = 0, rel_tol: float = 0.10,
                      backend: str = "highs", lower_level: str = SURROGATE) -> SuiteResult:
    t0 = time.perf_counter()
    worst = -math.inf
    for spec in micro_instances(n_instances, seed):
        gap, _, _ = brute_force_gap(spec, MilpParams(backend=backend), lower_level=lower_level)
        worst = max(worst, gap)
    return SuiteResult(f"brute-force ({lower_level} consumers)", worst <= rel_tol,
                       f"{n_instances} micro-instances, worst relative excess over grid optimum {worst:+.3%}",
                       time.perf_counter() - t0)


# ---------------------------------------------------------------------------
# 4. envelope audit, 5. surrogate inequality


def suite_mccormick(n_instances: int = 3, seed: int = 0, tol: float = 1e-7) -> SuiteResult:
    t0 = time.perf_counter()
    worst_env = worst_corner = worst_part = 0.0
    for spec in micro_instances(n_instances, seed + 17):
        a = design_tariff(spec).audits
        worst_env = max(worst_env, a["mccormick_envelope_violation"])
        worst_corner = max(worst_corner, a["mccormick_bound_product_error"])
        worst_part = max(worst_part, max(a["participation_row_excess"]))
    ok = worst_env <= tol and worst_corner <= tol and worst_part <= tol
    return SuiteResult("mccormick", ok, f"envelope {worst_env:.1e}, corner product {worst_corner:.1e}, "
                                        f"participation excess {worst_part:.1e}", time.perf_counter() - t0)


def surrogate_violations(n_points: int = 1000, seed: int = 0, kappa: float = 3.0,
                         T_d: float = 24.0, half_width: float = 3.0) -> int:
    rng = np.random.default_rng(seed)
    e = rng.uniform(T_d - half_width, T_d + half_width, n_points) - T_d
    return int(np.sum(e * e > kappa * np.abs(e)))


def suite_surrogate(n_points: int = 1000, seed: int = 0) -> SuiteResult:
    t0 = time.perf_counter()
    bad = surrogate_violations(n_points, seed)
    return SuiteResult("surrogate-bound", bad == 0, f"{bad} of {n_points} points violate (T-T_d)^2 <= 3|T-T_d|",
                       time.perf_counter() - t0)


def run_all(quick: bool = True, seed: int = 0) -> list:
    k = 20 if quick else 100
    return [
        suite_oracle_kkt(k, seed),
        suite_milp(k, seed),
        suite_mccormick(2 if quick else 5, seed),
        suite_brute_force(2 if quick else 10, seed),
        suite_surrogate(1000, seed),
    ]
