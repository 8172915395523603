"""Dense two-phase primal simplex.

Problems are brought to ``min c'x, A x = b, x >= 0, b >= 0`` by shifting
bounded variables, splitting free ones and appending one row per finite upper
bound.  The pivoting loop itself lives in :mod:`tariffdesign.kernels`.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .. import kernels
from .model import MilpModel

OPTIMAL = "optimal"
INFEASIBLE = "infeasible"
UNBOUNDED = "unbounded"


class LPNumericalError(RuntimeError):
    def __init__(self, message: str, diagnostics: dict | None = None):
        self.diagnostics = diagnostics or {}
        super().__init__(f"{message} {self.diagnostics}" if diagnostics else message)


@dataclass
class LPResult:
    status: str
    x: np.ndarray | None = None
    objective: float = math.nan
    iterations: int = 0
    # Farkas vector y over the standard-form rows: A_s' y <= 0 and b_s' y > 0
    farkas: np.ndarray | None = None
    # recession direction in the original variables: A d (sense-)feasible, c'd < 0
    ray: np.ndarray | None = None
    std_A: np.ndarray | None = field(default=None, repr=False)
    std_b: np.ndarray | None = field(default=None, repr=False)
    min_reduced_cost: float = 0.0

    def farkas_ok(self, tol: float = 1e-7) -> bool:
        y = self.farkas
        return bool(np.max(self.std_A.T @ y) <= tol and self.std_b @ y > tol)


@dataclass
class LPParams:
    feas_tol: float = 1e-7
    opt_tol: float = 1e-9
    piv_tol: float = 1e-9
    max_iter: int = 50_000
    bland_after: int = 50


class _StandardForm:
    """Map between original variables and nonnegative standard-form columns."""

    def __init__(self, c, A, senses, rhs, lb, ub):
        n = c.shape[0]
        col_of = []  # (orig var, sign) per standard column
        upper = []  # (std col, width) for finite two-sided bounds
        const = np.zeros(n)
        for j in range(n):
            lo, hi = lb[j], ub[j]
            if lo == hi:
                const[j] = lo
            elif math.isfinite(lo):
                const[j] = lo
                col_of.append((j, 1.0))
                if math.isfinite(hi):
                    upper.append((len(col_of) - 1, hi - lo))
            elif math.isfinite(hi):
                const[j] = hi
                col_of.append((j, -1.0))
            else:
                col_of.append((j, 1.0))
                col_of.append((j, -1.0))
        k = len(col_of)
        S = np.zeros((n, k))
        for col, (j, s) in enumerate(col_of):
            S[j, col] = s
        self.S, self.const = S, const

        A_s = A @ S
        b_s = rhs - A @ const
        m0 = A_s.shape[0]
        nb = len(upper)
        rows = np.zeros((m0 + nb, k))
        rows[:m0] = A_s
        b = np.concatenate([b_s, np.array([w for _, w in upper])])
        for r, (col, _) in enumerate(upper):
            rows[m0 + r, col] = 1.0
        sense = np.concatenate([senses, -np.ones(nb, dtype=int)])

        # slacks: <= rows get +s, >= rows get -s
        slack_rows = np.flatnonzero(sense != 0)
        ns = slack_rows.size
        full = np.zeros((m0 + nb, k + ns))
        full[:, :k] = rows
        for t, r in enumerate(slack_rows):
            full[r, k + t] = -float(sense[r])
        neg = b < 0
        full[neg] *= -1.0
        b = np.where(neg, -b, b)
        self.A = full
        self.b = b
        self.c = np.concatenate([c @ S, np.zeros(ns)])
        self.obj_const = float(c @ const)
        self.n_struct = k

    def to_original(self, xs):
        return self.const + self.S @ xs[: self.n_struct]


def solve_lp_arrays(c, A, senses, rhs, lb, ub, params: LPParams | None = None) -> LPResult:
    """Solve ``min c'x`` subject to ``A x (senses) rhs`` and ``lb <= x <= ub``.

    ``senses`` holds -1 for <=, 0 for ==, +1 for >=.
    """
    params = params or LPParams()
    c = np.asarray(c, dtype=float)
    A = np.asarray(A, dtype=float).reshape(-1, c.shape[0])
    lb = np.asarray(lb, dtype=float)
    ub = np.asarray(ub, dtype=float)
    if np.any(lb > ub + params.feas_tol):
        sf = _StandardForm(c, A, np.asarray(senses), np.asarray(rhs, dtype=float),
                           np.minimum(lb, ub), np.maximum(lb, ub))
        return LPResult(INFEASIBLE, std_A=sf.A, std_b=sf.b)
    sf = _StandardForm(c, A, np.asarray(senses, dtype=int), np.asarray(rhs, dtype=float), lb, ub)
    m, n = sf.A.shape
    if m == 0:
        if np.any(sf.c < -params.opt_tol):
            j = int(np.argmin(sf.c))
            d = np.zeros(n)
            d[j] = 1.0
            return LPResult(UNBOUNDED, ray=sf.S @ d[: sf.n_struct], std_A=sf.A, std_b=sf.b)
        x = sf.to_original(np.zeros(n))
        return LPResult(OPTIMAL, x, float(c @ x), std_A=sf.A, std_b=sf.b)

    # initial basis: a +1 slack where one exists, else an artificial
    basis = np.full(m, -1, dtype=int)
    for r in range(m):
        hits = np.flatnonzero((sf.A[r, sf.n_struct :] == 1.0))
        for h in hits:
            col = sf.n_struct + h
            if np.count_nonzero(sf.A[:, col]) == 1:
                basis[r] = col
                break
    art_rows = np.flatnonzero(basis < 0)
    na = art_rows.size
    T = np.zeros((m + 1, n + na + 1))
    T[:m, :n] = sf.A
    T[:m, -1] = sf.b
    for t, r in enumerate(art_rows):
        T[r, n + t] = 1.0
        basis[r] = n + t
    init_basis = basis.copy()

    # phase I
    T[m, :] = 0.0
    T[m, n : n + na] = 1.0
    for r in art_rows:
        T[m] -= T[r]
    allowed = np.ones(n + na, dtype=bool)
    iters = 0
    status, it, _ = kernels.simplex_loop(T, basis, allowed, params.max_iter, params.opt_tol,
                                         params.piv_tol, params.bland_after)
    iters += it
    if status == kernels.ITER_LIMIT:
        raise LPNumericalError("phase I iteration limit", {"iterations": iters, "rows": m, "cols": n})
    infeas = -T[m, -1]
    scale = max(1.0, float(np.abs(sf.b).max(initial=0.0)))
    if infeas > params.feas_tol * scale:
        cost1 = np.zeros(n + na)
        cost1[n:] = 1.0
        y = cost1[init_basis] - T[m, init_basis]
        return LPResult(INFEASIBLE, iterations=iters, farkas=y, std_A=sf.A, std_b=sf.b)

    # drive zero-level artificials out of the basis, dropping redundant rows
    keep = np.ones(m, dtype=bool)
    for r in range(m):
        if basis[r] >= n:
            cand = np.flatnonzero(np.abs(T[r, :n]) > params.piv_tol)
            if cand.size:
                col = cand[np.argmax(np.abs(T[r, cand]))]
                T[r] /= T[r, col]
                for i in range(m + 1):
                    if i != r and T[i, col] != 0.0:
                        T[i] -= T[i, col] * T[r]
                basis[r] = col
            else:
                keep[r] = False
    if not keep.all():
        T = np.vstack([T[:m][keep], T[m:]])
        basis = basis[keep]
        m = basis.size
    T = np.ascontiguousarray(np.delete(T, np.s_[n : n + na], axis=1))

    # phase II
    T[m, :n] = sf.c - sf.c[basis] @ T[:m, :n]
    T[m, -1] = -(sf.c[basis] @ T[:m, -1])
    allowed = np.ones(n, dtype=bool)
    status, it, col = kernels.simplex_loop(T, basis, allowed, params.max_iter, params.opt_tol,
                                           params.piv_tol, params.bland_after)
    iters += it
    if status == kernels.ITER_LIMIT:
        raise LPNumericalError("phase II iteration limit", {"iterations": iters, "rows": m, "cols": n})
    if status == kernels.UNBOUNDED:
        d = np.zeros(n)
        d[col] = 1.0
        d[basis] = -T[:m, col]
        return LPResult(UNBOUNDED, iterations=iters, ray=sf.S @ d[: sf.n_struct],
                        std_A=sf.A, std_b=sf.b)

    # recompute the basic solution from a fresh factorization
    xs = np.zeros(n)
    B = sf.A[keep][:, basis] if not keep.all() else sf.A[:, basis]
    b = sf.b[keep] if not keep.all() else sf.b
    try:
        xb = np.linalg.solve(B, b)
    except np.linalg.LinAlgError:
        xb = T[:m, -1]
    if np.any(xb < -1e-6 * scale):
        xb = T[:m, -1]
    xs[basis] = np.maximum(xb, 0.0)
    x = sf.to_original(xs)
    resid = float(np.abs(sf.A @ xs - sf.b).max(initial=0.0))
    if resid > params.feas_tol * scale * 10:
        raise LPNumericalError(
            "basic solution violates equality rows",
            {"residual": resid, "cond(B)": float(np.linalg.cond(B)), "iterations": iters},
        )
    return LPResult(OPTIMAL, x, float(c @ x), iters, std_A=sf.A, std_b=sf.b,
                    min_reduced_cost=float(T[m, :n].min(initial=0.0)))


def solve_lp(model: MilpModel, lb=None, ub=None, params: LPParams | None = None) -> LPResult:
    """LP relaxation of ``model`` (integrality dropped), optionally with bound overrides."""
    model.validate()
    m_lb, m_ub = model.bounds()
    lb = m_lb if lb is None else np.asarray(lb, dtype=float)
    ub = m_ub if ub is None else np.asarray(ub, dtype=float)
    A = model.matrix().toarray()
    res = solve_lp_arrays(model.cost_vector(), A, model.senses(), model.rhs(), lb, ub, params)
    if res.status == OPTIMAL:
        res.objective += model.obj_const
    return res
