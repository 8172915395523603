"""Exact-oracle evaluation of tariffs over a consumer population."""

from __future__ import annotations

import csv
import itertools
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .mpc import MpcInfeasible, solve_mpc, solve_surrogate_mpc
from .thermal import PP, RP, GlobalConstants, PriceSignal, TimeGrid

INFLEXIBLE, FLEXIBLE = "inflexible", "flexible"
CLASSES = (INFLEXIBLE, FLEXIBLE)

# Reference (peak load, load variance) rows from a field-data study; context only,
# never compared against synthetic runs.
REFERENCE_TABLES = {
    "peak": {
        INFLEXIBLE: {"flat": (28.3, 0.49), "pp": (27.0, 0.54), "rp": (27.6, 0.42)},
        FLEXIBLE: {"flat": (19.1, 0.25), "pp": (15.3, 0.28), "rp": (17.5, 0.17)},
    },
    "variance": {
        INFLEXIBLE: {"flat": (28.3, 0.49), "pp": (27.3, 0.49), "rp": (27.6, 0.41)},
        FLEXIBLE: {"flat": (19.1, 0.25), "pp": (17.7, 0.26), "rp": (17.8, 0.17)},
    },
}


class EvaluationError(ValueError):
    pass


@dataclass
class ClassMetrics:
    count: int
    peak_load: float
    load_variance: float
    revenue_loss: float
    mean_u: np.ndarray
    mean_total_load: np.ndarray


@dataclass
class EvaluationReport:
    tariff: str
    price: PriceSignal
    window: tuple[int, int]
    flat_price: float
    classes: dict
    participation_margin: np.ndarray
    infeasible: list = field(default_factory=list)
    grid: TimeGrid | None = None

    def metrics_rows(self):
        for cls in CLASSES:
            m = self.classes.get(cls)
            if m is None or m.count == 0:
                continue
            yield cls, m

    def all_mean_u(self) -> np.ndarray:
        total = sum(m.count for _, m in self.metrics_rows())
        return sum(m.mean_u * m.count for _, m in self.metrics_rows()) / total


def _class_of(theta):
    return FLEXIBLE if theta.flexible else INFLEXIBLE


def evaluate_rates(c: PriceSignal, population, constants: GlobalConstants | None = None,
                   window: tuple[int, int] = (52, 63), flat_price: float = 10.0,
                   name: str | None = None, grid: TimeGrid | None = None) -> EvaluationReport:
    """Solve every consumer's exact MPC under ``c`` and the flat rate and aggregate."""
    if not population:
        raise EvaluationError("population is empty")
    constants = constants or GlobalConstants()
    n = population[0].n_steps
    if len(c) != n:
        raise EvaluationError(f"tariff has {len(c)} steps, population has {n}")
    flat = np.full(n, float(flat_price))
    t1, t2 = window
    per_class = {cls: {"peak": [], "var": [], "rev": [], "u": [], "load": []} for cls in CLASSES}
    margins = np.full(len(population), np.nan)
    infeasible = []
    for i, theta in enumerate(population):
        try:
            sc = solve_mpc(theta, c.c)
            sf = solve_mpc(theta, flat)
        except MpcInfeasible as exc:
            infeasible.append({"scenario": i, "step": exc.step})
            continue
        load = theta.b + sc.u_star
        acc = per_class[_class_of(theta)]
        acc["peak"].append(sc.u_star[t1 : t2 + 1].sum())
        acc["var"].append(load.var())
        acc["rev"].append(flat @ sf.u_star - c.c @ sc.u_star)
        acc["u"].append(sc.u_star)
        acc["load"].append(load)
        margins[i] = sf.J - sc.J

    classes = {}
    for cls, acc in per_class.items():
        k = len(acc["peak"])
        if k == 0:
            classes[cls] = ClassMetrics(0, math.nan, math.nan, math.nan, np.full(n, np.nan), np.full(n, np.nan))
            continue
        classes[cls] = ClassMetrics(
            k,
            float(np.mean(acc["peak"])),
            float(np.mean(acc["var"])),
            float(np.mean(acc["rev"])),
            np.mean(acc["u"], axis=0),
            np.mean(acc["load"], axis=0),
        )
    return EvaluationReport(name or c.kind, c, (t1, t2), float(flat_price), classes, margins,
                            infeasible, grid)


def rebound_profile(report: EvaluationReport, window: tuple[int, int] | None = None,
                    steps_per_hour: int = 4) -> dict:
    """Mean input over the hour before, the window itself, and the hour after."""
    t1, t2 = window or report.window
    out = {}
    for cls, m in report.metrics_rows():
        u = m.mean_u
        n = u.shape[0]
        pre = u[max(0, t1 - steps_per_hour) : t1]
        post = u[t2 + 1 : min(n, t2 + 1 + steps_per_hour)]
        out[cls] = {
            "pre": float(pre.mean()) if pre.size else math.nan,
            "in": float(u[t1 : t2 + 1].mean()),
            "post": float(post.mean()) if post.size else math.nan,
            "truncated": bool(pre.size < steps_per_hour or post.size < steps_per_hour),
        }
    return out


def _fmt(x: float) -> str:
    return "nan" if not np.isfinite(x) else f"{x:.10g}"


def export_report(reports, out_dir) -> list:
    """Write the metrics table and one trajectory CSV per tariff; returns the paths."""
    out = Path(out_dir)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise OSError(f"cannot create {out}: {exc}") from exc
    written = []
    metrics = out / "metrics.csv"
    with open(metrics, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["type_class", "tariff", "peak_load", "load_variance", "revenue_loss"])
        for rep in reports:
            for cls in CLASSES:
                m = rep.classes.get(cls)
                if m is None:
                    continue
                w.writerow([cls, rep.tariff, _fmt(m.peak_load), _fmt(m.load_variance), _fmt(m.revenue_loss)])
    written.append(str(metrics))

    for rep in reports:
        path = out / f"trajectory_{rep.tariff}.csv"
        n = len(rep.price)
        grid = rep.grid or TimeGrid(n, 1440 // n if 1440 % n == 0 else 15)
        clock = grid.clock_times()
        inf = rep.classes.get(INFLEXIBLE)
        flx = rep.classes.get(FLEXIBLE)
        counts = [m.count for m in (inf, flx) if m is not None and m.count]
        loads = [m.mean_total_load * m.count for m in (inf, flx) if m is not None and m.count]
        total = sum(loads) / sum(counts)
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["step", "clock_time", "price", "mean_u_inflexible", "mean_u_flexible", "mean_total_load"])
            for k in range(n):
                w.writerow([
                    k,
                    f"{clock[k] // 60:02d}:{clock[k] % 60:02d}",
                    _fmt(rep.price.c[k]),
                    _fmt(inf.mean_u[k]) if inf is not None else "nan",
                    _fmt(flx.mean_u[k]) if flx is not None else "nan",
                    _fmt(total[k]),
                ])
        written.append(str(path))
    return written


# ---------------------------------------------------------------------------
# brute-force design oracle


class EnumerationTooLarge(ValueError):
    pass


def _grid_levels(c_lo, c_hi, step):
    k = (c_hi - c_lo) / step
    if abs(k - round(k)) > 1e-9:
        raise ValueError(f"grid step {step} does not divide [{c_lo}, {c_hi}]")
    return c_lo + step * np.arange(int(round(k)) + 1)


def candidate_tariffs(spec, price_grid_step: float, cap: int = 200_000):
    """All structurally valid tariffs on the price grid."""
    k = spec.constants
    n = spec.grid.n_steps
    levels = _grid_levels(k.c_lo, k.c_hi, price_grid_step)
    if spec.structure == PP:
        if len(levels) ** 2 > cap:
            raise EnumerationTooLarge(f"{len(levels) ** 2} candidates exceed cap {cap}")
        return [PriceSignal.peak(off, on, n, spec.peak_window) for off, on in itertools.product(levels, levels)]
    if spec.structure == RP:
        if n > 5:
            raise EnumerationTooLarge("ramp-limited enumeration is restricted to N <= 5")
        reach = int(math.floor(k.rho / price_grid_step + 1e-9))
        out = []

        def extend(seq):
            if len(out) > cap:
                raise EnumerationTooLarge(f"more than {cap} candidates")
            if len(seq) == n:
                if seq[-1] == seq[0]:
                    out.append(PriceSignal(levels[np.array(seq)], RP))
                return
            j = seq[-1]
            for nxt in range(max(0, j - reach), min(len(levels), j + reach + 1)):
                extend(seq + [nxt])

        for start in range(len(levels)):
            extend([start])
        return out
    raise ValueError(f"unknown structure {spec.structure!r}")


EXACT, SURROGATE = "exact", "surrogate"


def _lower_level(spec, lower_level):
    if lower_level == EXACT:
        return lambda theta, c: solve_mpc(theta, c)
    if lower_level == SURROGATE:
        return lambda theta, c: solve_surrogate_mpc(theta, c, spec.kappa)
    raise ValueError(f"unknown lower level {lower_level!r}")


def true_objective(spec, price: PriceSignal, flat_solutions=None, tol: float = 1e-9,
                   lower_level: str = EXACT):
    """Principal objective of one tariff with every consumer at its MPC optimum.

    Peak load, true variance and revenue loss use exact products ``c_n u_n``.
    ``lower_level`` picks the consumer model: the exact MPC or the absolute-value
    surrogate that the design MILP embeds.  Returns ``(objective, participation_ok,
    margins)``.
    """
    solve = _lower_level(spec, lower_level)
    n = spec.grid.n_steps
    flat = np.full(n, spec.flat_price)
    t1, t2 = spec.peak_window
    S = len(spec.scenarios)
    total = 0.0
    margins = []
    for i, theta in enumerate(spec.scenarios):
        sf = flat_solutions[i] if flat_solutions is not None else solve(theta, flat)
        try:
            sc = solve(theta, price.c)
        except MpcInfeasible:
            return math.inf, False, None
        if spec.objective_mode == "peak":
            v = sc.u_star[t1 : t2 + 1].sum()
        else:
            v = (theta.b + sc.u_star).var()
        total += v + spec.lam * (flat @ sf.u_star - price.c @ sc.u_star)
        margins.append(sf.J - sc.J)
    margins = np.array(margins)
    return total / S, bool(np.all(margins >= -tol)), margins


def brute_force_design(spec, price_grid_step: float = 0.5, cap: int = 200_000,
                       lower_level: str = EXACT):
    """Enumerate grid tariffs, drop participation violators, return the best.

    Returns ``(price, objective, n_candidates)``.
    """
    cands = candidate_tariffs(spec, price_grid_step, cap)
    solve = _lower_level(spec, lower_level)
    flat = np.full(spec.grid.n_steps, spec.flat_price)
    flat_solutions = [solve(theta, flat) for theta in spec.scenarios]
    best, best_obj = None, math.inf
    for price in cands:
        obj, ok, _ = true_objective(spec, price, flat_solutions, lower_level=lower_level)
        if ok and obj < best_obj - 1e-12:
            best, best_obj = price, obj
    if best is None:
        raise EvaluationError("no grid tariff satisfies participation")
    return best, best_obj, len(cands)
