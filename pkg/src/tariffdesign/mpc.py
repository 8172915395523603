"""The consumer's HVAC controller and its optimality conditions.

Two lower-level problems live here:

* the exact MPC, a strictly convex QP in the first N-1 inputs (the last input
  never reaches a temperature inside the horizon, so it is zero at optimum);
* the surrogate MPC, where squared tracking error is replaced by
  ``kappa * |T - T_d|``, which is an LP and is what the design MILP embeds.

Multiplier conventions follow the Lagrangian

    L = J + sum_n nu_n (T_{n+1} - k_r T_n - g u_n - d_n)
          + mu_hi (u - u_max) - mu_lo u + xi_hi (T - T_hi) + xi_lo (T_lo - T)

with ``g = cooling_sign * k_c`` and ``d_n = k_w w_n + q_n``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import quadprog
from scipy.optimize import linprog
from scipy.sparse import coo_matrix, vstack

from .thermal import ConsumerType, PriceSignal, reachable_band, simulate_trajectory


class MpcInfeasible(ValueError):
    def __init__(self, step: int, message: str | None = None):
        self.step = step
        super().__init__(message or f"no input keeps the room in its comfort band at step {step}")


class MpcSolverError(RuntimeError):
    def __init__(self, residual: float, message: str = ""):
        self.residual = residual
        super().__init__(f"{message} (KKT residual {residual:.3e})".strip())


class FeasibilityError(ValueError):
    def __init__(self, violations: list[str]):
        self.violations = violations
        super().__init__("; ".join(violations[:8]) + (" ..." if len(violations) > 8 else ""))


@dataclass(frozen=True, eq=False)
class MpcSolution:
    u_star: np.ndarray
    T: np.ndarray
    J: float
    nu: np.ndarray
    mu_hi: np.ndarray
    mu_lo: np.ndarray
    xi_hi: np.ndarray
    xi_lo: np.ndarray

    def to_dict(self) -> dict:
        out = {k: getattr(self, k).tolist() for k in
               ("u_star", "T", "nu", "mu_hi", "mu_lo", "xi_hi", "xi_lo")}
        out["J"] = float(self.J)
        return out


@dataclass(frozen=True, eq=False)
class SurrogateSolution(MpcSolution):
    """Surrogate MPC optimum; ``g`` is the tracking subgradient in [-kappa, kappa]."""

    e: np.ndarray = None
    g: np.ndarray = None
    kappa: float = 3.0


@dataclass(frozen=True)
class KKTResidual:
    stationarity_u: float
    stationarity_T: float
    primal: float
    complementarity: float

    @property
    def max(self) -> float:
        return max(self.stationarity_u, self.stationarity_T, self.primal, self.complementarity)


def _prices(c, n):
    arr = c.c if isinstance(c, PriceSignal) else np.asarray(c, dtype=float)
    if arr.shape != (n,):
        raise ValueError(f"price vector has shape {arr.shape}, expected ({n},)")
    return arr


def _condensed(theta: ConsumerType, T0: float):
    """Free response F[1..N-1] and input-to-state matrix G (lower triangular)."""
    n = theta.n_steps
    m = n - 1
    k_r = theta.thermal.k_r
    free = simulate_trajectory(theta, np.zeros(n), T0)[1:]
    lag = np.arange(m)[:, None] - np.arange(m)[None, :]
    G = np.where(lag >= 0, theta.thermal.input_gain * k_r ** np.clip(lag, 0, None), 0.0)
    return free, G


def _costates(theta, T, xi_hi, xi_lo, tracking_grad):
    """Backward costate recursion from the temperature stationarity rows."""
    n = theta.n_steps
    k_r = theta.thermal.k_r
    nu = np.zeros(n)
    for k in range(n - 1, 0, -1):
        nu[k - 1] = k_r * nu[k] - tracking_grad[k] - xi_hi[k] + xi_lo[k]
    return nu


def _check_feasible(theta, T0):
    _, _, bad = reachable_band(theta, T0)
    if bad is not None:
        raise MpcInfeasible(bad)


def _polish_active_set(H, lin, C, rhs, x, lam, act_tol: float = 1e-9):
    """Re-solve the KKT equations on the detected active set.

    Returns the refined pair when it stays primal and dual feasible, else the input.
    """
    slack = C.T @ x - rhs
    active = np.flatnonzero((lam > act_tol) | (slack < act_tol))
    m, k = x.size, active.size
    Ca = C[:, active]
    K = np.zeros((m + k, m + k))
    K[:m, :m] = H
    K[:m, m:] = -Ca
    K[m:, :m] = Ca.T
    sol = np.linalg.lstsq(K, np.concatenate([-lin, rhs[active]]), rcond=None)[0]
    x2 = sol[:m]
    lam2 = np.zeros_like(lam)
    lam2[active] = sol[m:]
    if np.min(C.T @ x2 - rhs, initial=0.0) < -1e-10 or np.min(lam2, initial=0.0) < -1e-10:
        return x, lam
    return x2, np.maximum(lam2, 0.0)


def solve_mpc(theta: ConsumerType, c, tol: float = 1e-6, T_init: float | None = None) -> MpcSolution:
    """Exact MPC optimum with its KKT multipliers."""
    n = theta.n_steps
    c = _prices(c, n)
    T0 = theta.T_d if T_init is None else float(T_init)
    _check_feasible(theta, T0)
    m = n - 1
    u_max = theta.u_max
    if m == 0:
        u = np.zeros(1)
        T = np.array([T0])
        mu_lo = theta.gamma * c
        z = np.zeros(1)
        return MpcSolution(u, T, float((T0 - theta.T_d) ** 2), z, z.copy(), mu_lo, z.copy(), z.copy())

    free, G = _condensed(theta, T0)
    H = 2.0 * G.T @ G
    lin = 2.0 * G.T @ (free - theta.T_d) + theta.gamma * c[:m]
    eye = np.eye(m)
    C = np.hstack([eye, -eye, G.T, -G.T])
    rhs = np.concatenate([np.zeros(m), -np.full(m, u_max), theta.T_lo - free, free - theta.T_hi])
    try:
        x, *_, lam, _ = quadprog.solve_qp(H, -lin, C, rhs, 0)
    except ValueError as exc:  # inconsistent constraints despite the band check
        raise MpcSolverError(np.inf, f"QP solver failed: {exc}") from exc
    x, lam = _polish_active_set(H, lin, C, rhs, x, lam)

    x = np.clip(x, 0.0, u_max)
    u = np.append(x, 0.0)
    T = simulate_trajectory(theta, u, T0)
    mu_lo = np.append(lam[:m], theta.gamma * c[-1])
    mu_hi = np.append(lam[m : 2 * m], 0.0)
    xi_lo = np.concatenate([[0.0], lam[2 * m : 3 * m]])
    xi_hi = np.concatenate([[0.0], lam[3 * m :]])
    nu = _costates(theta, T, xi_hi, xi_lo, 2.0 * (T - theta.T_d))
    J = float(np.sum((T - theta.T_d) ** 2) + theta.gamma * c @ u)
    sol = MpcSolution(u, T, J, nu, mu_hi, mu_lo, xi_hi, xi_lo)
    res = kkt_residual(theta, c, sol, T_init=T0)
    if res.max > tol:
        raise MpcSolverError(res.max, "MPC solve did not reach tolerance")
    return sol


def kkt_residual(theta: ConsumerType, c, sol: MpcSolution, T_init: float | None = None,
                 tracking_grad: np.ndarray | None = None) -> KKTResidual:
    """Max-norm residual of each KKT block at ``sol``.

    ``tracking_grad`` overrides the tracking-term gradient ``2 (T - T_d)``; the
    surrogate passes its subgradient ``g`` here.
    """
    n = theta.n_steps
    c = _prices(c, n)
    u, T, nu = sol.u_star, sol.T, sol.nu
    if any(len(v) != n for v in (u, T, nu, sol.mu_hi, sol.mu_lo, sol.xi_hi, sol.xi_lo)):
        raise ValueError("solution trajectories must have length N")
    k_r = theta.thermal.k_r
    gain = theta.thermal.input_gain
    grad = 2.0 * (T - theta.T_d) if tracking_grad is None else np.asarray(tracking_grad)

    nu_full = nu.copy()
    nu_full[-1] = 0.0  # no dynamics row after the last step
    st_u = theta.gamma * c - gain * nu_full + sol.mu_hi - sol.mu_lo
    st_T = grad[1:] + nu_full[:-1] - k_r * nu_full[1:] + sol.xi_hi[1:] - sol.xi_lo[1:]

    T0 = theta.T_d if T_init is None else T_init
    primal = [
        np.abs(T - simulate_trajectory(theta, u, T0)).max(),
        max(0.0, -u.min(), (u - theta.u_max).max()),
        max(0.0, (theta.T_lo - T).max(), (T - theta.T_hi).max()),
        max(0.0, -min(sol.mu_hi.min(), sol.mu_lo.min(), sol.xi_hi.min(), sol.xi_lo.min())),
    ]
    comp = max(
        np.abs(sol.mu_hi * (theta.u_max - u)).max(),
        np.abs(sol.mu_lo * u).max(),
        np.abs(sol.xi_hi[1:] * (theta.T_hi - T[1:])).max(initial=0.0),
        np.abs(sol.xi_lo[1:] * (T[1:] - theta.T_lo)).max(initial=0.0),
    )
    return KKTResidual(
        float(np.abs(st_u).max()),
        float(np.abs(st_T).max(initial=0.0)),
        float(max(primal)),
        float(comp),
    )


def _feasibility_violations(theta, u, T, tol):
    out = []
    for i in np.flatnonzero(u < -tol):
        out.append(f"u[{i}]={u[i]:.6g} < 0")
    for i in np.flatnonzero(u > theta.u_max + tol):
        out.append(f"u[{i}]={u[i]:.6g} > u_max={theta.u_max:g}")
    for i in np.flatnonzero(T < theta.T_lo - tol):
        out.append(f"T[{i}]={T[i]:.6g} < T_lo={theta.T_lo:g}")
    for i in np.flatnonzero(T > theta.T_hi + tol):
        out.append(f"T[{i}]={T[i]:.6g} > T_hi={theta.T_hi:g}")
    return out


def evaluate_cost(theta: ConsumerType, c, u, T_init: float | None = None, tol: float = 1e-7) -> float:
    """MPC objective at input trajectory ``u``; raises if ``u`` is infeasible."""
    n = theta.n_steps
    c = _prices(c, n)
    u = np.asarray(u, dtype=float)
    T = simulate_trajectory(theta, u, T_init)
    bad = _feasibility_violations(theta, u, T, tol)
    if bad:
        raise FeasibilityError(bad)
    return float(np.sum((T - theta.T_d) ** 2) + theta.gamma * c @ u)


# ---------------------------------------------------------------------------
# surrogate MPC


def surrogate_cost(theta: ConsumerType, c, u, kappa: float = 3.0, T_init: float | None = None,
                   tol: float = 1e-7) -> float:
    n = theta.n_steps
    c = _prices(c, n)
    u = np.asarray(u, dtype=float)
    T = simulate_trajectory(theta, u, T_init)
    bad = _feasibility_violations(theta, u, T, tol)
    if bad:
        raise FeasibilityError(bad)
    return float(kappa * np.abs(T - theta.T_d).sum() + theta.gamma * c @ u)


def _surrogate_lp(theta, c, kappa, T0):
    n = theta.n_steps
    m = n - 1
    k_r = theta.thermal.k_r
    gain = theta.thermal.input_gain
    iu, iT, ie = np.arange(m), m + np.arange(m), 2 * m + np.arange(m)
    nv = 3 * m
    cost = np.zeros(nv)
    cost[iu] = theta.gamma * c[:m]
    cost[ie] = kappa

    # dynamics: T_{k+1} - k_r T_k - g u_k = d_k   (T_0 constant)
    rows, cols, vals = [], [], []
    for k in range(m):
        rows += [k, k]
        cols += [iT[k], iu[k]]
        vals += [1.0, -gain]
        if k > 0:
            rows.append(k)
            cols.append(iT[k - 1])
            vals.append(-k_r)
    A_eq = coo_matrix((vals, (rows, cols)), shape=(m, nv)).tocsr()
    b_eq = theta.drive[:m].copy()
    b_eq[0] += k_r * T0

    # epigraph rows: T - e <= T_d, -T - e <= -T_d
    r = np.concatenate([np.arange(m), np.arange(m), m + np.arange(m), m + np.arange(m)])
    cc = np.concatenate([iT, ie, iT, ie])
    v = np.concatenate([np.ones(m), -np.ones(m), -np.ones(m), -np.ones(m)])
    A_ub = coo_matrix((v, (r, cc)), shape=(2 * m, nv)).tocsr()
    b_ub = np.concatenate([np.full(m, theta.T_d), np.full(m, -theta.T_d)])

    bounds = [(0.0, theta.u_max)] * m + [(theta.T_lo, theta.T_hi)] * m + [(0.0, None)] * m
    return cost, A_ub, b_ub, A_eq, b_eq, bounds, (iu, iT, ie)


def solve_surrogate_mpc(theta: ConsumerType, c, kappa: float = 3.0,
                        T_init: float | None = None) -> SurrogateSolution:
    """Surrogate MPC optimum; among optimal inputs, the one with least energy."""
    n = theta.n_steps
    c = _prices(c, n)
    T0 = theta.T_d if T_init is None else float(T_init)
    _check_feasible(theta, T0)
    m = n - 1
    base = kappa * abs(T0 - theta.T_d)
    if m == 0:
        z = np.zeros(1)
        return SurrogateSolution(z.copy(), np.array([T0]), base, z.copy(), z.copy(),
                                 theta.gamma * c, z.copy(), z.copy(), e=np.array([abs(T0 - theta.T_d)]),
                                 g=z.copy(), kappa=kappa)

    cost, A_ub, b_ub, A_eq, b_eq, bounds, (iu, iT, ie) = _surrogate_lp(theta, c, kappa, T0)
    res = linprog(cost, A_ub=A_ub, b_ub=b_ub, A_eq=A_eq, b_eq=b_eq, bounds=bounds, method="highs")
    if res.status != 0:
        raise MpcSolverError(np.inf, f"surrogate LP failed: {res.message}")
    opt = res.fun

    # lexicographic tie-break: least total input among optimal points
    energy = np.zeros_like(cost)
    energy[iu] = 1.0
    A2 = vstack([A_ub, cost[None, :]]).tocsr()
    b2 = np.append(b_ub, opt + 1e-9 * max(1.0, abs(opt)))
    res2 = linprog(energy, A_ub=A2, b_ub=b2, A_eq=A_eq, b_eq=b_eq, bounds=bounds, method="highs")
    x = res2.x if res2.status == 0 else res.x

    u = np.append(np.clip(x[iu], 0.0, theta.u_max), 0.0)
    T = simulate_trajectory(theta, u, T0)
    e = np.abs(T - theta.T_d)

    # multipliers from the first solve (valid for every optimal primal point)
    nu = np.append(-res.eqlin.marginals, 0.0)
    mu_lo = np.append(np.maximum(res.lower.marginals[iu], 0.0), theta.gamma * c[-1])
    mu_hi = np.append(np.maximum(-res.upper.marginals[iu], 0.0), 0.0)
    xi_lo = np.concatenate([[0.0], np.maximum(res.lower.marginals[iT], 0.0)])
    xi_hi = np.concatenate([[0.0], np.maximum(-res.upper.marginals[iT], 0.0)])
    alpha = -res.ineqlin.marginals[:m]
    beta = -res.ineqlin.marginals[m:]
    g = np.concatenate([[0.0], alpha - beta])
    J = float(kappa * e.sum() + theta.gamma * c @ u)
    return SurrogateSolution(u, T, J, nu, mu_hi, mu_lo, xi_hi, xi_lo, e=e, g=g, kappa=kappa)
