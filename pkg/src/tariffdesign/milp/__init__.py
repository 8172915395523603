"""Generic mixed-integer linear programming core."""

from .bnb import FEASIBLE_GAP, NODE_LIMIT, MilpParams, MilpSolution, solve_milp
from .model import EQ, GE, LE, MilpModel, ModelError, encode_abs
from .simplex import INFEASIBLE, OPTIMAL, UNBOUNDED, LPNumericalError, LPParams, LPResult, solve_lp, solve_lp_arrays

__all__ = [
    "EQ", "GE", "LE", "FEASIBLE_GAP", "INFEASIBLE", "NODE_LIMIT", "OPTIMAL", "UNBOUNDED",
    "LPNumericalError", "LPParams", "LPResult", "MilpModel", "MilpParams", "MilpSolution",
    "ModelError", "encode_abs", "solve_lp", "solve_lp_arrays", "solve_milp",
]
