"""Command-line front end: ``sample``, ``design``, ``evaluate`` and ``verify``."""

from __future__ import annotations

import argparse
import csv
import json
import logging
import math
import sys
from pathlib import Path

import numpy as np

from .config import ConfigError, RunConfig, load_config
from .evaluation import REFERENCE_TABLES, EvaluationError, evaluate_rates, export_report, rebound_profile
from .milp import MilpParams
from .mpc import MpcInfeasible
from .reformulate import DesignFailed, ScenarioRejected, design_tariff
from .scenarios import ScenarioConfigError, population_to_json, sample_population
from .thermal import PriceSignal
from .verify import run_all

log = logging.getLogger("tariffdesign")

EXIT_OK, EXIT_DOMAIN, EXIT_USAGE = 0, 1, 2


class UsageError(Exception):
    pass


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [_jsonable(v) for v in obj.tolist()]
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, (np.integer, int)):
        return int(obj)
    if isinstance(obj, (np.floating, float)):
        return float(obj) if math.isfinite(obj) else None
    return obj


def _write_json(path: Path, data) -> str:
    path.write_text(json.dumps(_jsonable(data), sort_keys=True, indent=2) + "\n", encoding="utf-8")
    return str(path)


def _parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="tariffdesign", description=__doc__)
    sub = p.add_subparsers(dest="command", required=True)
    for name, help_ in (("sample", "draw design and evaluation populations"),
                        ("design", "solve the tariff design MILP"),
                        ("evaluate", "score flat and designed tariffs with exact consumers"),
                        ("verify", "run the consistency suites")):
        s = sub.add_parser(name, help=help_)
        s.add_argument("--config", required=True, help="JSON run configuration")
        s.add_argument("--seed", type=int, help="root seed (overrides the config)")
        s.add_argument("--out", default="out", help="output directory (default ./out)")
        s.add_argument("--objective", choices=("peak", "variance"))
        s.add_argument("--structure", choices=("pp", "rp"))
        if name == "evaluate":
            s.add_argument("--tariff", action="append", default=[],
                           help="design_result.json or price CSV; repeatable (default: OUT/design_result.json)")
        if name == "verify":
            s.add_argument("--full", action="store_true", help="full-size suites instead of the quick set")
    return p


def _configure(args) -> RunConfig:
    path = Path(args.config)
    if not path.is_file():
        raise ConfigError(str(path), "config file not found")
    cfg = load_config(path)
    if args.seed is not None:
        if args.seed < 0:
            raise ConfigError("--seed", "must be nonnegative")
        cfg.seed = args.seed
    if args.objective:
        cfg.design.objective_mode = args.objective
    if args.structure:
        cfg.design.structure = args.structure
    cfg.scenario.seed = cfg.seed
    return cfg


def _design_population(cfg: RunConfig):
    return sample_population(cfg.scenario, cfg.design.n_scenarios, seed=cfg.seed)


def _eval_population(cfg: RunConfig):
    return sample_population(cfg.scenario, cfg.evaluation.population_size, seed=cfg.eval_seed())


def cmd_sample(cfg: RunConfig, out: Path) -> list:
    design = _design_population(cfg)
    evaluation = _eval_population(cfg)
    return [
        _write_json(out / "population_design.json", population_to_json(design)),
        _write_json(out / "population_eval.json", population_to_json(evaluation)),
    ]


def _price_rows(price: PriceSignal, grid):
    clock = grid.clock_times()
    for k in range(len(price)):
        yield [k, f"{clock[k] // 60:02d}:{clock[k] % 60:02d}", f"{price.c[k]:.10g}"]


def cmd_design(cfg: RunConfig, out: Path) -> list:
    pop = _design_population(cfg)
    spec = cfg.design_spec([th.coarsen(cfg.design.coarsen_factor) for th in pop])
    spec.validate()
    s = cfg.solver
    params = MilpParams(gap_tol=s.gap_tol, time_limit=s.time_limit, node_limit=s.node_limit, backend=s.backend)
    res = design_tariff(spec, params)
    print(f"design {spec.objective_mode}/{spec.structure}: MILP {res.milp.status}, "
          f"objective {res.surrogate_objective:.6g}, {res.audits['n_binaries']} binaries")
    doc = {"config": cfg.to_dict(), "design_grid": vars(spec.grid).copy(),
           "peak_window_steps": list(spec.peak_window), **res.to_dict()}
    paths = [_write_json(out / "design_result.json", doc)]
    price_csv = out / "price.csv"
    with open(price_csv, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["step", "clock_time", "price"])
        w.writerows(_price_rows(res.price, spec.grid))
    paths.append(str(price_csv))
    return paths


def _load_tariff(path: Path, n_fine: int) -> tuple[str, PriceSignal]:
    if not path.is_file():
        raise UsageError(f"{path}: tariff file not found")
    if path.suffix == ".json":
        try:
            doc = json.loads(path.read_text(encoding="utf-8"))
            price = PriceSignal.from_dict(doc["price"])
        except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
            raise UsageError(f"{path}: not a design result ({exc})") from exc
    else:
        try:
            with open(path, newline="", encoding="utf-8") as fh:
                rows = list(csv.DictReader(fh))
            price = PriceSignal([float(r["price"]) for r in rows], "rp")
        except (KeyError, ValueError) as exc:
            raise UsageError(f"{path}: expected a CSV with a 'price' column ({exc})") from exc
    if n_fine % len(price):
        raise UsageError(f"{path}: {len(price)} prices do not divide the {n_fine}-step evaluation grid")
    return price.kind, price.upsample(n_fine // len(price))


def cmd_evaluate(cfg: RunConfig, out: Path, tariffs: list) -> list:
    grid = cfg.scenario.grid
    paths = [Path(t) for t in tariffs]
    if not paths and (out / "design_result.json").is_file():
        paths = [out / "design_result.json"]
    named = [("flat", PriceSignal.flat(cfg.design.flat_price, grid.n_steps))]
    for p in paths:
        kind, price = _load_tariff(p, grid.n_steps)
        name, k = kind, 2
        while name in {n for n, _ in named}:
            name, k = f"{kind}{k}", k + 1
        named.append((name, price))
    pop = _eval_population(cfg)
    window = cfg.eval_window()
    steps_per_hour = max(1, 60 // grid.step_minutes)
    reports = []
    for name, price in named:
        rep = evaluate_rates(price, pop, cfg.design.constants, window, cfg.design.flat_price, name, grid)
        reports.append(rep)
        for cls, m in rep.metrics_rows():
            print(f"{name:>6} {cls:<10} n={m.count:<3d} peak {m.peak_load:.4f}  var {m.load_variance:.5f}  "
                  f"revenue loss {m.revenue_loss:.4f}")
        if name == "flat":
            ref = REFERENCE_TABLES[cfg.design.objective_mode]
            print("  reference rows (field data, context only): " + ", ".join(
                f"{cls} {t} {p:g}/{v:g}" for cls, rows in ref.items() for t, (p, v) in rows.items()))
        if rep.infeasible:
            print(f"{name:>6} {len(rep.infeasible)} scenarios infeasible")
        if name != "flat":
            margin = rep.participation_margin[np.isfinite(rep.participation_margin)]
            print(f"{name:>6} exact participation margin >= 0 in {np.mean(margin >= -1e-7):.1%} of scenarios")
            for cls, r in rebound_profile(rep, window, steps_per_hour).items():
                print(f"{name:>6} {cls:<10} hour before {r['pre']:.4f}  window {r['in']:.4f}  after {r['post']:.4f}")
    written = export_report(reports, out)
    part = out / "participation.csv"
    with open(part, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["scenario", "type_class", "tariff", "margin"])
        for rep in reports[1:]:
            for i, (th, m) in enumerate(zip(pop, rep.participation_margin)):
                w.writerow([i, "flexible" if th.flexible else "inflexible", rep.tariff,
                            "nan" if not np.isfinite(m) else f"{m:.10g}"])
    written.append(str(part))
    return written


def cmd_verify(cfg: RunConfig, full: bool) -> bool:
    results = run_all(quick=not full, seed=cfg.seed)
    for r in results:
        print(r.line())
    ok = all(r.passed for r in results)
    print(f"{sum(r.passed for r in results)}/{len(results)} suites passed")
    return ok


def run_command(argv=None) -> int:
    parser = _parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_USAGE
    try:
        cfg = _configure(args)
        out = Path(args.out)
        if args.command != "verify":
            out.mkdir(parents=True, exist_ok=True)
        if args.command == "sample":
            manifest = cmd_sample(cfg, out)
        elif args.command == "design":
            manifest = cmd_design(cfg, out)
        elif args.command == "evaluate":
            manifest = cmd_evaluate(cfg, out, args.tariff)
        else:
            return EXIT_OK if cmd_verify(cfg, args.full) else EXIT_DOMAIN
    except (ConfigError, UsageError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except DesignFailed as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DOMAIN
    except (ScenarioRejected, ScenarioConfigError, EvaluationError, MpcInfeasible) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DOMAIN
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DOMAIN
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DOMAIN
    for path in manifest:
        print(f"wrote {path}")
    return EXIT_OK


def main():
    logging.basicConfig(level=logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    sys.exit(run_command())


if __name__ == "__main__":
    main()
