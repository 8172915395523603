"""Single-level MILP for the utility's tariff design problem.

Each sampled consumer contributes its surrogate-MPC optimality system
(dynamics, stationarity, big-M complementarity), McCormick rows for the
price-times-input products, a participation row, and its share of the sample
average objective.  Prices are shared by all scenarios.

Indexing is 0-based: inputs ``u[0..N-2]`` drive temperatures ``T[1..N-1]``;
``T[0]`` is the fixed initial temperature and ``u[N-1]`` is zero.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .milp import EQ, GE, LE, MilpModel, MilpParams, MilpSolution, solve_milp
from .mpc import MpcInfeasible, solve_mpc, solve_surrogate_mpc
from .thermal import PP, RP, ConsumerType, GlobalConstants, PriceSignal, TimeGrid

PEAK, VARIANCE = "peak", "variance"


class ScenarioRejected(ValueError):
    def __init__(self, index: int, reason: str):
        self.index = index
        super().__init__(f"scenario {index} rejected: {reason}")


@dataclass
class DesignSpec:
    objective_mode: str = PEAK
    structure: str = PP
    lam: float = 0.01
    constants: GlobalConstants = field(default_factory=GlobalConstants)
    peak_window: tuple[int, int] = (13, 15)
    flat_price: float = 10.0
    scenarios: list = field(default_factory=list)
    kappa: float = 3.0
    bigM_policy: str | float = "derived"
    grid: TimeGrid = field(default_factory=lambda: TimeGrid(24, 60))
    duality_cut: bool = True
    variance_center: str = "total"

    def validate(self):
        n = self.grid.n_steps
        t1, t2 = self.peak_window
        if not 0 <= t1 <= t2 < n:
            raise ValueError(f"peak window {self.peak_window} outside 0..{n - 1}")
        k = self.constants
        if not k.c_lo <= self.flat_price <= k.c_hi:
            raise ValueError("flat price outside [c_lo, c_hi]")
        if not self.scenarios:
            raise ValueError("at least one scenario is required")
        if self.objective_mode not in (PEAK, VARIANCE):
            raise ValueError(f"unknown objective mode {self.objective_mode!r}")
        if self.structure not in (PP, RP):
            raise ValueError(f"unknown structure {self.structure!r}")
        if self.lam < 0:
            raise ValueError("lambda must be nonnegative")
        if self.variance_center not in ("total", "input"):
            raise ValueError("variance_center must be 'total' or 'input'")
        for i, th in enumerate(self.scenarios):
            if th.n_steps != n:
                raise ValueError(f"scenario {i} has {th.n_steps} steps, grid has {n}")
            if self.kappa < th.T_hi - th.T_d or self.kappa < th.T_d - th.T_lo:
                raise ValueError(f"kappa {self.kappa} below the comfort half-width of scenario {i}")
        if not isinstance(self.bigM_policy, str) and self.bigM_policy <= 0:
            raise ValueError("big-M must be positive")

    def to_dict(self) -> dict:
        return {
            "objective_mode": self.objective_mode,
            "structure": self.structure,
            "lambda": self.lam,
            "constants": vars(self.constants).copy(),
            "peak_window": list(self.peak_window),
            "flat_price": self.flat_price,
            "kappa": self.kappa,
            "bigM_policy": self.bigM_policy,
            "grid": vars(self.grid).copy(),
            "duality_cut": self.duality_cut,
            "variance_center": self.variance_center,
            "scenarios": [th.to_dict() for th in self.scenarios],
        }

    @classmethod
    def from_dict(cls, d: dict) -> DesignSpec:
        return cls(
            objective_mode=d.get("objective_mode", PEAK),
            structure=d.get("structure", PP),
            lam=float(d.get("lambda", 0.01)),
            constants=GlobalConstants(**d.get("constants", {})),
            peak_window=tuple(d.get("peak_window", (13, 15))),
            flat_price=float(d.get("flat_price", 10.0)),
            scenarios=[ConsumerType.from_dict(s) for s in d.get("scenarios", [])],
            kappa=float(d.get("kappa", 3.0)),
            bigM_policy=d.get("bigM_policy", "derived"),
            grid=TimeGrid(**d.get("grid", {"n_steps": 24, "step_minutes": 60})),
            duality_cut=bool(d.get("duality_cut", True)),
            variance_center=d.get("variance_center", "total"),
        )


@dataclass(frozen=True)
class BigM:
    nu: float
    mu: float
    xi: float

    def scaled(self, factor: float) -> BigM:
        return BigM(self.nu * factor, self.mu * factor, self.xi * factor)


@dataclass
class ScenarioHandles:
    u: np.ndarray
    T: np.ndarray  # T[1..N-1]
    nu: np.ndarray
    mu_hi: np.ndarray
    mu_lo: np.ndarray
    xi_hi: np.ndarray
    xi_lo: np.ndarray
    eta: np.ndarray
    zeta: np.ndarray
    x: np.ndarray
    y: np.ndarray
    g: np.ndarray
    dev_pos: np.ndarray
    dev_neg: np.ndarray
    sel_pos: np.ndarray
    sel_neg: np.ndarray
    r: np.ndarray | None = None
    load_dev: np.ndarray | None = None
    T0: float = 0.0


@dataclass
class ReformulatedModel:
    model: MilpModel
    c: np.ndarray
    scenarios: list
    m_theta: np.ndarray
    centers: np.ndarray
    J_flat_surrogate: np.ndarray
    big_m: list
    spec: DesignSpec


@dataclass
class DesignResult:
    price: PriceSignal
    milp: MilpSolution
    surrogate_objective: float
    true_metrics: dict = field(default_factory=dict)
    audits: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "price": self.price.to_dict(),
            "milp": self.milp.to_dict(),
            "surrogate_objective": float(self.surrogate_objective),
            "true_metrics": self.true_metrics,
            "audits": self.audits,
        }


# ---------------------------------------------------------------------------


def compute_big_m(theta: ConsumerType, constants: GlobalConstants, kappa: float = 3.0,
                  n_steps: int | None = None) -> BigM:
    """Closed-form multiplier bounds for one scenario's surrogate KKT block.

    Without temperature-bound multipliers the costate recursion
    ``nu[k-1] = k_r nu[k] - g[k]`` with ``|g| <= kappa`` gives
    ``|nu| <= kappa * sum_{i<N} k_r^i``; an interior input pins
    ``|nu| = gamma c / k_c``.  The input and temperature multipliers then follow
    from their stationarity rows.
    """
    n = theta.n_steps if n_steps is None else n_steps
    th = theta.thermal
    series = float(np.sum(th.k_r ** np.arange(n)))
    price_term = theta.gamma * constants.c_hi
    nu = kappa * series + price_term / th.k_c
    mu = th.k_c * nu + price_term
    xi = kappa + (1.0 + th.k_r) * nu
    return BigM(nu, mu, xi)


def _observed_multipliers(theta, constants, kappa, flat):
    """Largest surrogate multipliers over a few constant tariffs."""
    big = np.zeros(3)
    for price in (constants.c_lo, flat, constants.c_hi):
        try:
            s = solve_surrogate_mpc(theta, np.full(theta.n_steps, price), kappa)
        except MpcInfeasible:
            continue
        big = np.maximum(big, [np.abs(s.nu).max(), max(s.mu_hi.max(), s.mu_lo.max()),
                               max(s.xi_hi.max(), s.xi_lo.max())])
    return big


def resolve_big_m(theta, constants, kappa, policy, flat, safety: float = 2.0) -> BigM:
    if not isinstance(policy, str):
        M = float(policy)
        return BigM(M, M, M)
    if policy != "derived":
        raise ValueError(f"unknown big-M policy {policy!r}")
    base = compute_big_m(theta, constants, kappa)
    seen = _observed_multipliers(theta, constants, kappa, flat)
    return BigM(max(base.nu, safety * seen[0]), max(base.mu, safety * seen[1]),
                max(base.xi, safety * seen[2]))


def embed_kkt(model: MilpModel, theta: ConsumerType, c_vars, M: BigM, kappa: float = 3.0,
              T_init: float | None = None, tag: str = "") -> ScenarioHandles:
    """Add one consumer's surrogate-MPC optimality system; returns its handles."""
    if min(M.nu, M.mu, M.xi) <= 0:
        raise ValueError("big-M values must be positive")
    n = theta.n_steps
    m = n - 1
    th = theta.thermal
    gain = th.input_gain
    k_r = th.k_r
    T0 = theta.T_d if T_init is None else float(T_init)
    u_max = theta.u_max
    width = theta.T_hi - theta.T_lo
    d_hi, d_lo = theta.T_hi - theta.T_d, theta.T_d - theta.T_lo
    drive = theta.drive

    mv = model.add_vars
    u = mv(f"{tag}u", m, 0.0, u_max)
    T = mv(f"{tag}T", m, theta.T_lo, theta.T_hi)
    nu = mv(f"{tag}nu", m, -M.nu, M.nu)
    mu_hi = mv(f"{tag}mu_hi", m, 0.0, M.mu)
    mu_lo = mv(f"{tag}mu_lo", m, 0.0, M.mu)
    xi_hi = mv(f"{tag}xi_hi", m, 0.0, M.xi)
    xi_lo = mv(f"{tag}xi_lo", m, 0.0, M.xi)
    g = mv(f"{tag}g", m, -kappa, kappa)
    dp = mv(f"{tag}dev_pos", m, 0.0, d_hi)
    dn = mv(f"{tag}dev_neg", m, 0.0, d_lo)
    eta = mv(f"{tag}eta", m, binary=True)
    zeta = mv(f"{tag}zeta", m, binary=True)
    xb = mv(f"{tag}x", m, binary=True)
    yb = mv(f"{tag}y", m, binary=True)
    sp = mv(f"{tag}sel_pos", m, binary=True)
    sn = mv(f"{tag}sel_neg", m, binary=True)

    add = model.add_constr
    for k in range(m):
        # dynamics T[k+1] = k_r T[k] + g u[k] + d[k]
        terms = {T[k]: 1.0, u[k]: -gain}
        rhs = drive[k]
        if k == 0:
            rhs += k_r * T0
        else:
            terms[T[k - 1]] = -k_r
        add(terms, EQ, rhs, f"{tag}dyn[{k}]")

        # input stationarity: gamma c - g nu + mu_hi - mu_lo = 0
        add({c_vars[k]: theta.gamma, nu[k]: -gain, mu_hi[k]: 1.0, mu_lo[k]: -1.0}, EQ, 0.0,
            f"{tag}stat_u[{k}]")
        add({mu_hi[k]: 1.0, eta[k]: -M.mu}, LE, 0.0)
        add({mu_lo[k]: 1.0, zeta[k]: -M.mu}, LE, 0.0)
        add({u[k]: 1.0, eta[k]: -u_max}, GE, 0.0)
        add({u[k]: 1.0, zeta[k]: u_max}, LE, u_max)
        add({eta[k]: 1.0, zeta[k]: 1.0}, LE, 1.0)

        # temperature stationarity at T[k+1]: g + nu[k] - k_r nu[k+1] + xi_hi - xi_lo = 0
        terms = {g[k]: 1.0, nu[k]: 1.0, xi_hi[k]: 1.0, xi_lo[k]: -1.0}
        if k + 1 < m:
            terms[nu[k + 1]] = -k_r
        add(terms, EQ, 0.0, f"{tag}stat_T[{k + 1}]")
        add({xi_hi[k]: 1.0, xb[k]: -M.xi}, LE, 0.0)
        add({xi_lo[k]: 1.0, yb[k]: -M.xi}, LE, 0.0)
        add({T[k]: 1.0, xb[k]: -width}, GE, theta.T_lo)
        add({T[k]: 1.0, yb[k]: width}, LE, theta.T_hi)
        add({xb[k]: 1.0, yb[k]: 1.0}, LE, 1.0)

        # tracking subgradient: g = kappa where T > T_d, -kappa where T < T_d
        add({T[k]: 1.0, dp[k]: -1.0, dn[k]: 1.0}, EQ, theta.T_d)
        add({dp[k]: 1.0, sp[k]: -d_hi}, LE, 0.0)
        add({dn[k]: 1.0, sn[k]: -d_lo}, LE, 0.0)
        add({g[k]: 1.0, sp[k]: -2.0 * kappa}, GE, -kappa)
        add({g[k]: 1.0, sn[k]: 2.0 * kappa}, LE, kappa)
        add({sp[k]: 1.0, sn[k]: 1.0}, LE, 1.0)

    return ScenarioHandles(u, T, nu, mu_hi, mu_lo, xi_hi, xi_lo, eta, zeta, xb, yb, g, dp, dn,
                           sp, sn, T0=T0)


def add_mccormick(model: MilpModel, c_n: int, u_n: int, bounds: tuple, name: str = "r") -> int:
    """Envelope variable ``r`` for the product ``c_n * u_n`` over a box."""
    c_lo, c_hi, u_lo, u_hi = bounds
    lo = min(c_lo * u_lo, c_lo * u_hi, c_hi * u_lo, c_hi * u_hi)
    hi = max(c_lo * u_lo, c_lo * u_hi, c_hi * u_lo, c_hi * u_hi)
    r = model.add_var(name, lo, hi)
    model.add_constr({r: 1.0, u_n: -c_lo, c_n: -u_lo}, GE, -u_lo * c_lo)
    model.add_constr({r: 1.0, u_n: -c_hi, c_n: -u_hi}, GE, -c_hi * u_hi)
    model.add_constr({r: 1.0, u_n: -c_hi, c_n: -u_lo}, LE, -c_hi * u_lo)
    model.add_constr({r: 1.0, u_n: -c_lo, c_n: -u_hi}, LE, -c_lo * u_hi)
    return r


def mccormick_bounds(c, u, bounds) -> tuple[float, float]:
    """(lower, upper) envelope values at a point."""
    c_lo, c_hi, u_lo, u_hi = bounds
    lower = max(c_lo * u + u_lo * c - u_lo * c_lo, c_hi * u + u_hi * c - c_hi * u_hi)
    upper = min(c_hi * u + u_lo * c - c_hi * u_lo, c_lo * u + u_hi * c - c_lo * u_hi)
    return lower, upper


def add_price_structure(model: MilpModel, c_vars, structure: str, constants: GlobalConstants,
                        peak_window: tuple[int, int]):
    n = len(c_vars)
    for k in c_vars:
        model.lb[k] = max(model.lb[k], constants.c_lo)
        model.ub[k] = min(model.ub[k], constants.c_hi)
    if structure == PP:
        t1, t2 = peak_window
        inside = [k for k in range(n) if t1 <= k <= t2]
        outside = [k for k in range(n) if not t1 <= k <= t2]
        for group in (inside, outside):
            for k in group[1:]:
                model.add_constr({c_vars[k]: 1.0, c_vars[group[0]]: -1.0}, EQ, 0.0, f"pp[{k}]")
    elif structure == RP:
        model.add_constr({c_vars[0]: 1.0, c_vars[n - 1]: -1.0}, EQ, 0.0, "rp_wrap")
        for k in range(n - 1):
            model.add_constr({c_vars[k + 1]: 1.0, c_vars[k]: -1.0}, LE, constants.rho, f"ramp_up[{k}]")
            model.add_constr({c_vars[k + 1]: 1.0, c_vars[k]: -1.0}, GE, -constants.rho, f"ramp_dn[{k}]")
    else:
        raise ValueError(f"unknown structure {structure!r}")


def add_participation(model: MilpModel, theta: ConsumerType, h: ScenarioHandles,
                      J_flat_surrogate: float, kappa: float = 3.0, tag: str = "") -> int:
    """Surrogate cost under the new tariff must not exceed the flat-rate one."""
    terms = {}
    for k in range(len(h.T)):
        terms[h.dev_pos[k]] = kappa
        terms[h.dev_neg[k]] = kappa
        terms[h.r[k]] = theta.gamma
    rhs = J_flat_surrogate - kappa * abs(h.T0 - theta.T_d)
    return model.add_constr(terms, LE, rhs, f"{tag}participation")


def add_duality_cut(model: MilpModel, theta: ConsumerType, h: ScenarioHandles, kappa: float,
                    tag: str = "") -> int:
    """Sum of envelope variables equals the exact payment implied by the KKT point.

    At any point of the embedded optimality system, ``gamma * sum c u`` is a
    linear function of the multipliers (strong duality of the surrogate LP), so
    this row is valid and removes the envelope slack in aggregate.
    """
    m = len(h.u)
    th = theta.thermal
    terms = {}
    for k in range(m):
        terms[h.r[k]] = terms.get(h.r[k], 0.0) + theta.gamma
        terms[h.dev_pos[k]] = kappa
        terms[h.dev_neg[k]] = kappa
        terms[h.g[k]] = theta.T_d
        terms[h.xi_hi[k]] = theta.T_hi
        terms[h.xi_lo[k]] = -theta.T_lo
        terms[h.nu[k]] = terms.get(h.nu[k], 0.0) + theta.drive[k]
        terms[h.mu_hi[k]] = theta.u_max
    terms[h.nu[0]] = terms.get(h.nu[0], 0.0) + th.k_r * h.T0
    return model.add_constr(terms, EQ, 0.0, f"{tag}duality")


def _flat_reference(spec: DesignSpec, i: int, theta: ConsumerType):
    flat = np.full(theta.n_steps, spec.flat_price)
    try:
        exact = solve_mpc(theta, flat)
        sur = solve_surrogate_mpc(theta, flat, spec.kappa)
    except MpcInfeasible as exc:
        raise ScenarioRejected(i, f"infeasible under the flat rate ({exc})") from exc
    return exact, sur


def build_design_milp(spec: DesignSpec) -> ReformulatedModel:
    spec.validate()
    n = spec.grid.n_steps
    m = n - 1
    S = len(spec.scenarios)
    k = spec.constants
    model = MilpModel()
    c = model.add_vars("c", n, k.c_lo, k.c_hi)
    add_price_structure(model, c, spec.structure, k, spec.peak_window)

    t1, t2 = spec.peak_window
    handles, m_theta, centers, j_flat, bigms = [], [], [], [], []
    for i, theta in enumerate(spec.scenarios):
        tag = f"s{i}."
        exact, sur = _flat_reference(spec, i, theta)
        M = resolve_big_m(theta, k, spec.kappa, spec.bigM_policy, spec.flat_price)
        h = embed_kkt(model, theta, c, M, spec.kappa, tag=tag)
        h.r = np.array([add_mccormick(model, c[j], h.u[j], (k.c_lo, k.c_hi, 0.0, theta.u_max),
                                      f"{tag}r[{j}]") for j in range(m)], dtype=int)
        add_participation(model, theta, h, sur.J, spec.kappa, tag)
        if spec.duality_cut and theta.gamma > 0:
            add_duality_cut(model, theta, h, spec.kappa, tag)

        mt = float(exact.u_star.mean())
        center = mt + (float(theta.b.mean()) if spec.variance_center == "total" else 0.0)
        if spec.objective_mode == PEAK:
            model.add_objective({h.u[j]: 1.0 / S for j in range(t1, min(t2, m - 1) + 1)})
        else:
            bound = max(abs(theta.b - center).max() + theta.u_max, 1.0)
            devs = []
            for j in range(m):
                t = model.add_var(f"{tag}load_dev[{j}]", 0.0, bound)
                model.add_constr({t: 1.0, h.u[j]: -1.0}, GE, theta.b[j] - center)
                model.add_constr({t: 1.0, h.u[j]: 1.0}, GE, center - theta.b[j])
                devs.append(t)
            h.load_dev = np.array(devs, dtype=int)
            model.add_objective({t: 1.0 / (S * n) for t in devs},
                                const=abs(theta.b[-1] - center) / (S * n))
        if spec.lam:
            model.add_objective({h.r[j]: -spec.lam / S for j in range(m)})
        handles.append(h)
        m_theta.append(mt)
        centers.append(center)
        j_flat.append(sur.J)
        bigms.append(M)
    return ReformulatedModel(model, c, handles, np.array(m_theta), np.array(centers),
                             np.array(j_flat), bigms, spec)


# ---------------------------------------------------------------------------


def clean_price(values, spec: DesignSpec) -> PriceSignal:
    """Snap solver output onto the exact structural pattern."""
    k = spec.constants
    c = np.clip(np.asarray(values, dtype=float), k.c_lo, k.c_hi)
    n = c.shape[0]
    if spec.structure == PP:
        t1, t2 = spec.peak_window
        inside = np.zeros(n, dtype=bool)
        inside[t1 : t2 + 1] = True
        off = float(np.round(c[~inside][0], 9)) if (~inside).any() else float(np.round(c[t1], 9))
        return PriceSignal.peak(off, float(np.round(c[t1], 9)), n, (t1, t2))
    # ramp-limited: work on an integer nano-PhP lattice so checks are exact
    scale = 1e9
    q = np.round(c * scale).astype(np.int64)
    step = int(round(k.rho * scale))
    q[-1] = q[0]
    for _ in range(2 * n):
        changed = False
        for j in range(n - 1):
            if q[j + 1] - q[j] > step:
                q[j + 1] = q[j] + step
                changed = True
            elif q[j] - q[j + 1] > step:
                q[j + 1] = q[j] - step
                changed = True
        if q[-1] != q[0]:
            q[-1] = q[0]
            changed = True
        if not changed:
            break
    return PriceSignal(q / scale, RP)


def audit_design(rm: ReformulatedModel, x: np.ndarray, tol: float = 1e-7) -> dict:
    """McCormick and participation audits on an incumbent."""
    spec = rm.spec
    k = spec.constants
    c = x[rm.c]
    worst_env = 0.0
    worst_corner = 0.0
    participation = []
    for theta, h, jf in zip(spec.scenarios, rm.scenarios, rm.J_flat_surrogate):
        bounds = (k.c_lo, k.c_hi, 0.0, theta.u_max)
        for j in range(len(h.u)):
            cj, uj, rj = c[j], x[h.u[j]], x[h.r[j]]
            lo, hi = mccormick_bounds(cj, uj, bounds)
            worst_env = max(worst_env, lo - rj, rj - hi)
            at_bound = (min(abs(cj - k.c_lo), abs(cj - k.c_hi)) <= tol
                        or min(abs(uj), abs(uj - theta.u_max)) <= tol)
            if at_bound:
                worst_corner = max(worst_corner, abs(rj - cj * uj))
        lhs = (spec.kappa * (abs(h.T0 - theta.T_d) + x[h.dev_pos].sum() + x[h.dev_neg].sum())
               + theta.gamma * x[h.r].sum())
        participation.append(float(lhs - jf))
    return {
        "mccormick_envelope_violation": float(max(worst_env, 0.0)),
        "mccormick_bound_product_error": float(worst_corner),
        "participation_row_excess": participation,
    }


def flat_start(rm: ReformulatedModel, tol: float = 1e-9) -> np.ndarray:
    """The flat tariff with every consumer's surrogate optimality point: always feasible."""
    spec = rm.spec
    f = spec.flat_price
    x = np.zeros(rm.model.n_vars)
    x[rm.c] = f
    for theta, h, center in zip(spec.scenarios, rm.scenarios, rm.centers):
        s = solve_surrogate_mpc(theta, np.full(theta.n_steps, f), spec.kappa)
        m = len(h.u)
        dev = s.T[1:] - theta.T_d
        x[h.u] = s.u_star[:m]
        x[h.T] = s.T[1:]
        x[h.nu] = s.nu[:m]
        x[h.mu_hi] = s.mu_hi[:m]
        x[h.mu_lo] = s.mu_lo[:m]
        x[h.xi_hi] = s.xi_hi[1:]
        x[h.xi_lo] = s.xi_lo[1:]
        x[h.g] = s.g[1:]
        x[h.dev_pos] = np.maximum(dev, 0.0)
        x[h.dev_neg] = np.maximum(-dev, 0.0)
        x[h.sel_pos] = dev > tol
        x[h.sel_neg] = dev < -tol
        x[h.eta] = s.u_star[:m] >= theta.u_max - tol
        x[h.zeta] = s.u_star[:m] <= tol
        x[h.x] = s.T[1:] >= theta.T_hi - tol
        x[h.y] = s.T[1:] <= theta.T_lo + tol
        x[h.r] = f * s.u_star[:m]
        if h.load_dev is not None:
            x[h.load_dev] = np.abs(theta.b[:m] + s.u_star[:m] - center)
    return x


def _tie_candidates(price: PriceSignal, spec: DesignSpec, eps: float):
    k = spec.constants
    c = price.c
    n = c.shape[0]
    if spec.structure == PP:
        t1, t2 = spec.peak_window
        off = float(c[0]) if t1 > 0 or t2 < n - 1 else float(c[t1])
        on = float(c[t1])
        for d_off in (-eps, 0.0, eps):
            for d_on in (-eps, 0.0, eps):
                o, p = off + d_off, on + d_on
                if k.c_lo <= o <= k.c_hi and k.c_lo <= p <= k.c_hi:
                    yield PriceSignal.peak(o, p, n, (t1, t2))
        return
    moves = [np.ones(n)]
    for j in range(1, n - 1):
        e = np.zeros(n)
        e[j] = 1.0
        moves.append(e)
    e = np.zeros(n)
    e[0] = e[-1] = 1.0
    moves.append(e)
    yield price
    for mv in moves:
        for d in (-eps, eps):
            cand = PriceSignal(c + d * mv, RP)
            if cand.c.min() >= k.c_lo and cand.c.max() <= k.c_hi and cand.structure_violation(k.rho) <= 1e-9:
                yield cand


def tie_polish(spec: DesignSpec, price: PriceSignal, eps: float = 1e-4):
    """Step off indifference prices the MILP may sit on.

    The embedded optimality system lets the MILP choose, among a consumer's
    optimal responses, the one best for the utility.  At such a price an
    epsilon move makes that response strict.  Candidates are scored with the
    surrogate consumers and exact products ``c u``; the first best wins.
    """
    from .evaluation import SURROGATE, true_objective

    flat = np.full(spec.grid.n_steps, spec.flat_price)
    flat_solutions = [solve_surrogate_mpc(th, flat, spec.kappa) for th in spec.scenarios]
    best, best_obj = price, math.inf
    before = math.nan
    for i, cand in enumerate(_tie_candidates(price, spec, eps)):
        obj, ok, _ = true_objective(spec, cand, flat_solutions, tol=1e-9, lower_level=SURROGATE)
        if np.array_equal(cand.c, price.c):
            before = obj
        if ok and obj < best_obj - 1e-12:
            best, best_obj = cand, obj
    return best, {"eps": eps, "moved": not np.array_equal(best.c, price.c),
                  "objective_before": None if not math.isfinite(before) else float(before),
                  "objective_after": None if not math.isfinite(best_obj) else float(best_obj)}


def design_tariff(spec: DesignSpec, params: MilpParams | None = None,
                  polish: bool = True) -> DesignResult:
    params = params or MilpParams(backend="highs")
    rm = build_design_milp(spec)
    start = flat_start(rm) if params.backend == "highs" else None
    sol = solve_milp(rm.model, params, start)
    if sol.incumbent is None:
        raise DesignFailed(sol)
    price = clean_price(sol.incumbent[rm.c], spec)
    audits = audit_design(rm, sol.incumbent)
    if polish:
        price, audits["tie_polish"] = tie_polish(spec, price)
    audits["structure_violation"] = price.structure_violation(spec.constants.rho)
    audits["n_binaries"] = rm.model.n_binaries
    audits["n_vars"] = rm.model.n_vars
    audits["n_rows"] = rm.model.n_rows
    return DesignResult(price, sol, sol.objective_value, audits=audits)


class DesignFailed(RuntimeError):
    def __init__(self, sol: MilpSolution):
        self.solution = sol
        super().__init__(f"design MILP returned no incumbent (status {sol.status})")
