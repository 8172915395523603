"""Sparse MILP container (minimization, continuous or binary variables)."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.sparse import csr_matrix

LE, EQ, GE = "<=", "==", ">="
_SENSES = {"<=": LE, "=<": LE, "==": EQ, "=": EQ, ">=": GE, "=>": GE}


class ModelError(ValueError):
    pass


@dataclass
class Row:
    idx: np.ndarray
    val: np.ndarray
    sense: str
    rhs: float
    name: str = ""


@dataclass
class MilpModel:
    names: list = field(default_factory=list)
    lb: list = field(default_factory=list)
    ub: list = field(default_factory=list)
    binary: list = field(default_factory=list)
    rows: list = field(default_factory=list)
    objective: dict = field(default_factory=dict)
    obj_const: float = 0.0

    @property
    def n_vars(self) -> int:
        return len(self.names)

    @property
    def n_rows(self) -> int:
        return len(self.rows)

    @property
    def n_binaries(self) -> int:
        return int(sum(self.binary))

    def add_var(self, name: str, lb: float = 0.0, ub: float = math.inf, binary: bool = False) -> int:
        if binary:
            lb, ub = max(0.0, lb), min(1.0, ub)
        if lb > ub:
            raise ModelError(f"variable {name}: lb {lb} > ub {ub}")
        self.names.append(name)
        self.lb.append(float(lb))
        self.ub.append(float(ub))
        self.binary.append(bool(binary))
        return len(self.names) - 1

    def add_vars(self, prefix: str, n: int, lb=0.0, ub=math.inf, binary=False) -> np.ndarray:
        lbs = np.broadcast_to(np.asarray(lb, dtype=float), (n,))
        ubs = np.broadcast_to(np.asarray(ub, dtype=float), (n,))
        return np.array([self.add_var(f"{prefix}[{k}]", lbs[k], ubs[k], binary) for k in range(n)],
                        dtype=int)

    def add_constr(self, terms, sense: str, rhs: float, name: str = "") -> int:
        """Add ``sum(coef * x[idx]) <sense> rhs``; ``terms`` is a dict or (idx, coef) pairs."""
        if sense not in _SENSES:
            raise ModelError(f"unknown sense {sense!r}")
        items = terms.items() if isinstance(terms, dict) else terms
        acc: dict[int, float] = {}
        for i, v in items:
            acc[int(i)] = acc.get(int(i), 0.0) + float(v)
        idx = np.fromiter(acc.keys(), dtype=int, count=len(acc))
        val = np.fromiter(acc.values(), dtype=float, count=len(acc))
        keep = val != 0.0
        self.rows.append(Row(idx[keep], val[keep], _SENSES[sense], float(rhs), name))
        return len(self.rows) - 1

    def add_objective(self, terms, const: float = 0.0):
        items = terms.items() if isinstance(terms, dict) else terms
        for i, v in items:
            self.objective[int(i)] = self.objective.get(int(i), 0.0) + float(v)
        self.obj_const += const

    def fix(self, var: int, value: float):
        self.lb[var] = self.ub[var] = float(value)

    def validate(self):
        n = self.n_vars
        for k, row in enumerate(self.rows):
            if row.idx.size and (row.idx.min() < 0 or row.idx.max() >= n):
                raise ModelError(f"row {row.name or k} references an unknown variable")
            if not (np.all(np.isfinite(row.val)) and math.isfinite(row.rhs)):
                raise ModelError(f"row {row.name or k} has non-finite data")
        for i, v in self.objective.items():
            if not 0 <= i < n:
                raise ModelError(f"objective references unknown variable {i}")
            if not math.isfinite(v):
                raise ModelError(f"objective coefficient of {self.names[i]} is not finite")
        for j in range(n):
            if self.binary[j] and (self.lb[j] < 0 or self.ub[j] > 1):
                raise ModelError(f"binary {self.names[j]} has bounds outside [0, 1]")

    # -- array views --------------------------------------------------------

    def cost_vector(self) -> np.ndarray:
        c = np.zeros(self.n_vars)
        for i, v in self.objective.items():
            c[i] = v
        return c

    def matrix(self) -> csr_matrix:
        if not self.rows:
            return csr_matrix((0, self.n_vars))
        indptr = np.cumsum([0] + [r.idx.size for r in self.rows])
        idx = np.concatenate([r.idx for r in self.rows])
        val = np.concatenate([r.val for r in self.rows])
        return csr_matrix((val, idx, indptr), shape=(self.n_rows, self.n_vars))

    def row_bounds(self) -> tuple[np.ndarray, np.ndarray]:
        lo = np.array([-np.inf if r.sense == LE else r.rhs for r in self.rows])
        hi = np.array([np.inf if r.sense == GE else r.rhs for r in self.rows])
        return lo, hi

    def senses(self) -> np.ndarray:
        code = {LE: -1, EQ: 0, GE: 1}
        return np.array([code[r.sense] for r in self.rows], dtype=int)

    def rhs(self) -> np.ndarray:
        return np.array([r.rhs for r in self.rows])

    def bounds(self) -> tuple[np.ndarray, np.ndarray]:
        return np.array(self.lb), np.array(self.ub)

    def integrality(self) -> np.ndarray:
        return np.array(self.binary, dtype=int)

    # -- checks -------------------------------------------------------------

    def objective_value(self, x) -> float:
        return float(self.cost_vector() @ x + self.obj_const)

    def max_violation(self, x) -> float:
        x = np.asarray(x, dtype=float)
        lb, ub = self.bounds()
        v = max(0.0, float(np.max(lb - x, initial=0.0)), float(np.max(x - ub, initial=0.0)))
        if self.rows:
            ax = self.matrix() @ x
            lo, hi = self.row_bounds()
            v = max(v, float(np.max(lo - ax, initial=0.0)), float(np.max(ax - hi, initial=0.0)))
        return v

    def integrality_violation(self, x) -> float:
        mask = np.array(self.binary, dtype=bool)
        if not mask.any():
            return 0.0
        xb = np.asarray(x)[mask]
        return float(np.max(np.abs(xb - np.round(xb))))

    # -- debug dump ---------------------------------------------------------

    def to_lp(self) -> str:
        """CPLEX LP text, for cross-checking against an external solver."""

        def name(j):
            return "".join(ch if ch.isalnum() or ch in "_." else "_" for ch in self.names[j]) + f"_{j}"

        def expr(pairs):
            parts = []
            for j, v in pairs:
                sign = "-" if v < 0 else "+"
                parts.append(f"{sign} {abs(v):.17g} {name(j)}")
            s = " ".join(parts) or "0 " + name(0)
            return s[2:] if s.startswith("+ ") else s

        lines = ["\\ generated by tariffdesign", "Minimize", " obj: " + expr(sorted(self.objective.items()))]
        lines.append("Subject To")
        for k, r in enumerate(self.rows):
            op = {LE: "<=", EQ: "=", GE: ">="}[r.sense]
            lines.append(f" r{k}: {expr(zip(r.idx.tolist(), r.val.tolist()))} {op} {r.rhs:.17g}")
        lines.append("Bounds")
        for j in range(self.n_vars):
            lo = "-inf" if self.lb[j] == -math.inf else f"{self.lb[j]:.17g}"
            hi = "+inf" if self.ub[j] == math.inf else f"{self.ub[j]:.17g}"
            lines.append(f" {lo} <= {name(j)} <= {hi}")
        bins = [name(j) for j in range(self.n_vars) if self.binary[j]]
        if bins:
            lines.append("Binaries")
            lines.append(" " + " ".join(bins))
        lines.append("End")
        return "\n".join(lines) + "\n"


def encode_abs(model: MilpModel, x: int, bound: float, name: str | None = None) -> int:
    """Add ``t`` with ``t >= |x|`` and ``t <= bound``; minimizing ``t`` makes it ``|x|``."""
    t = model.add_var(name or f"abs({model.names[x]})", 0.0, float(bound))
    model.add_constr({t: 1.0, x: -1.0}, GE, 0.0)
    model.add_constr({t: 1.0, x: 1.0}, GE, 0.0)
    return t
