"""Best-first branch-and-bound over dense-simplex LP relaxations.

A second backend hands the same model to HiGHS through ``highspy`` for design
problems that outgrow the dense tableau.
"""

from __future__ import annotations

import heapq
import math
import time
from dataclasses import dataclass, field

import highspy
import numpy as np

from .model import MilpModel
from .simplex import INFEASIBLE, OPTIMAL, UNBOUNDED, LPParams, solve_lp_arrays

FEASIBLE_GAP = "feasible-gap"
NODE_LIMIT = "node-limit"


@dataclass
class MilpParams:
    gap_tol: float = 1e-4
    int_tol: float = 1e-6
    feas_tol: float = 1e-7
    node_limit: int | None = None
    time_limit: float | None = None
    backend: str = "native"


@dataclass
class MilpSolution:
    status: str
    incumbent: np.ndarray | None
    objective_value: float
    best_bound: float
    gap: float
    stats: dict = field(default_factory=dict)

    @property
    def x(self):
        return self.incumbent

    def to_dict(self) -> dict:
        return {
            "status": self.status,
            "objective_value": _num(self.objective_value),
            "best_bound": _num(self.best_bound),
            "gap": _num(self.gap),
            "stats": {k: v for k, v in self.stats.items() if k not in ("wall_time", "bound_history")},
        }


def _num(v):
    return None if v is None or not math.isfinite(v) else float(v)


def _gap(obj, bound):
    if not math.isfinite(obj):
        return math.inf
    return max(0.0, (obj - bound) / max(1.0, abs(obj)))


class _Relaxation:
    """LP relaxation of a fixed model under varying bounds."""

    def __init__(self, model: MilpModel, params: MilpParams):
        self.c = model.cost_vector()
        self.A = model.matrix().toarray()
        self.senses = model.senses()
        self.rhs = model.rhs()
        self.const = model.obj_const
        self.lp = LPParams(feas_tol=params.feas_tol)
        self.iterations = 0
        self.solves = 0

    def solve(self, lb, ub):
        res = solve_lp_arrays(self.c, self.A, self.senses, self.rhs, lb, ub, self.lp)
        self.iterations += res.iterations
        self.solves += 1
        if res.status == OPTIMAL:
            res.objective += self.const
        return res


def solve_milp(model: MilpModel, params: MilpParams | None = None, start=None) -> MilpSolution:
    """Solve ``model``; ``start`` is an optional feasible point handed to HiGHS."""
    params = params or MilpParams()
    model.validate()
    if params.backend == "highs":
        return _solve_highs(model, params, start)
    if params.backend != "native":
        raise ValueError(f"unknown MILP backend {params.backend!r}")
    return _branch_and_bound(model, params)


def _branch_and_bound(model: MilpModel, params: MilpParams) -> MilpSolution:
    t0 = time.perf_counter()
    relax = _Relaxation(model, params)
    lb0, ub0 = model.bounds()
    bins = np.flatnonzero(model.integrality())
    abs_tol = 1e-9

    def stats(nodes, history):
        return {"nodes": nodes, "lp_solves": relax.solves, "lp_pivots": relax.iterations,
                "wall_time": time.perf_counter() - t0, "bound_history": history}

    root = relax.solve(lb0, ub0)
    if root.status == INFEASIBLE:
        return MilpSolution(INFEASIBLE, None, math.inf, math.inf, math.inf, stats(1, []))
    if root.status == UNBOUNDED:
        return MilpSolution(UNBOUNDED, None, -math.inf, -math.inf, math.inf, stats(1, []))

    inc_x, inc_obj = None, math.inf
    heap = [(root.objective, 0, lb0, ub0, root.x)]
    counter = 1
    nodes = 1
    history = []
    status = OPTIMAL
    best_bound = root.objective

    while heap:
        best_bound = min(heap[0][0], inc_obj)
        if history and best_bound < history[-1] - 1e-7 * max(1.0, abs(best_bound)):
            raise AssertionError("global bound decreased during search")
        history.append(best_bound)
        if inc_x is not None and _gap(inc_obj, best_bound) <= params.gap_tol:
            break
        if params.node_limit is not None and nodes >= params.node_limit:
            status = NODE_LIMIT
            break
        if params.time_limit is not None and time.perf_counter() - t0 > params.time_limit:
            status = NODE_LIMIT
            break

        bound, _, lb, ub, x = heapq.heappop(heap)
        if bound >= inc_obj - abs_tol:
            continue
        xb = x[bins]
        frac = np.minimum(xb - np.floor(xb), np.ceil(xb) - xb)
        if frac.size == 0 or frac.max() <= params.int_tol:
            cand = _polish(relax, lb, ub, bins, x)
            if cand is not None and cand[1] < inc_obj:
                inc_x, inc_obj = cand
            continue
        # most fractional binary, lowest index on ties
        j = bins[int(np.argmax(frac))]
        for v in (0.0, 1.0):
            clb, cub = lb.copy(), ub.copy()
            clb[j] = cub[j] = v
            child = relax.solve(clb, cub)
            nodes += 1
            if child.status != OPTIMAL:
                continue
            scale = max(1.0, abs(bound))
            if child.objective < bound - 1e-6 * scale:
                raise AssertionError("child LP bound below its parent's")
            if child.objective < inc_obj - abs_tol:
                heapq.heappush(heap, (child.objective, counter, clb, cub, child.x))
                counter += 1
    else:
        best_bound = inc_obj

    if inc_x is None:
        if status == OPTIMAL:
            return MilpSolution(INFEASIBLE, None, math.inf, math.inf, math.inf, stats(nodes, history))
        return MilpSolution(NODE_LIMIT, None, math.inf, best_bound, math.inf, stats(nodes, history))
    gap = _gap(inc_obj, best_bound)
    if status != OPTIMAL:
        status = FEASIBLE_GAP if inc_x is not None else NODE_LIMIT
    return MilpSolution(status, inc_x, inc_obj, min(best_bound, inc_obj), gap, stats(nodes, history))


def _polish(relax, lb, ub, bins, x):
    """Fix binaries at their rounded values and re-solve the continuous part."""
    flb, fub = lb.copy(), ub.copy()
    r = np.round(x[bins])
    flb[bins] = fub[bins] = r
    res = relax.solve(flb, fub)
    if res.status != OPTIMAL:
        return None
    res.x[bins] = r
    return res.x, res.objective


def _solve_highs(model: MilpModel, params: MilpParams, start=None) -> MilpSolution:
    t0 = time.perf_counter()
    c = model.cost_vector()
    lb, ub = model.bounds()
    lo, hi = model.row_bounds()
    A = model.matrix().tocsc()
    h = highspy.Highs()
    h.setOptionValue("output_flag", False)
    h.setOptionValue("mip_rel_gap", float(params.gap_tol))
    h.setOptionValue("mip_feasibility_tolerance", float(params.feas_tol))
    h.setOptionValue("random_seed", 0)
    if params.time_limit is not None:
        h.setOptionValue("time_limit", float(params.time_limit))
    if params.node_limit is not None:
        h.setOptionValue("mip_max_nodes", int(params.node_limit))
    lp = highspy.HighsLp()
    lp.num_col_ = model.n_vars
    lp.num_row_ = model.n_rows
    lp.col_cost_ = c
    lp.col_lower_ = lb
    lp.col_upper_ = ub
    lp.row_lower_ = lo
    lp.row_upper_ = hi
    lp.offset_ = float(model.obj_const)
    lp.a_matrix_.format_ = highspy.MatrixFormat.kColwise
    lp.a_matrix_.start_ = A.indptr
    lp.a_matrix_.index_ = A.indices
    lp.a_matrix_.value_ = A.data
    kinds = (highspy.HighsVarType.kContinuous, highspy.HighsVarType.kInteger)
    lp.integrality_ = [kinds[int(b)] for b in model.integrality()]
    h.passModel(lp)
    if start is not None:
        sol = highspy.HighsSolution()
        sol.col_value = [float(v) for v in start]
        sol.value_valid = True
        h.setSolution(sol)
    h.run()

    ms = h.getModelStatus()
    info = h.getInfo()
    st = {"nodes": int(info.mip_node_count), "lp_pivots": None,
          "wall_time": time.perf_counter() - t0, "backend": "highs"}
    M = highspy.HighsModelStatus
    has_x = info.primal_solution_status == 2
    if ms == M.kOptimal:
        status = OPTIMAL
    elif ms == M.kInfeasible:
        status = INFEASIBLE
    elif ms in (M.kUnbounded, M.kUnboundedOrInfeasible) and not has_x:
        status = UNBOUNDED if ms == M.kUnbounded else INFEASIBLE
    else:
        status = NODE_LIMIT
    if not has_x:
        if status == OPTIMAL:
            status = NODE_LIMIT
        obj = -math.inf if status == UNBOUNDED else math.inf
        return MilpSolution(status, None, obj, obj, math.inf, st)
    x = np.array(h.getSolution().col_value, dtype=float)
    bins = model.integrality().astype(bool)
    x[bins] = np.round(x[bins])
    obj = float(c @ x + model.obj_const)
    bound = float(info.mip_dual_bound)
    bound = obj if not math.isfinite(bound) else min(bound, obj)
    gap = _gap(obj, bound)
    if status != OPTIMAL or gap > params.gap_tol:
        status = FEASIBLE_GAP
    return MilpSolution(status, x, obj, bound, gap, st)
