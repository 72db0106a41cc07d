"""Command-line entry point: single runs, refinement sweeps and result files.

Outputs written to the output directory:

* ``solution.csv`` (or ``solution_<i>.csv`` per sweep entry), one row per
  node with ``x,v,in_intervention,delta_star,impulse_target,residual``;
* ``report.json`` with one record per run;
* ``sweep.csv`` in sweep mode, one row per step size.
"""
from __future__ import annotations

import argparse
import csv
import json
import math
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import replace

import numpy as np

from .assumptions import check_A0_doubleprime_sampled
from .config import DIAGNOSTIC_LEVELS, ConfigError, RunConfig, parse_config
from .diagnostics import StructuralMonitor, symmetry_report, uip_check, verify_solution_characterization
from .discretization import NonPositiveCostError, discretize
from .game_driver import Outcome, OutcomeKind, run
from .impulse_solver import FPPI, HOWARD

EXIT_CODES = {
    OutcomeKind.CONVERGED_EXACT: 0,
    OutcomeKind.CONVERGED_TOL: 0,
    OutcomeKind.CYCLED: 2,
    OutcomeKind.STAGNATED: 3,
    OutcomeKind.MAX_ITERS: 4,
}
CSV_HEADER = ["x", "v", "in_intervention", "delta_star", "impulse_target", "residual"]


def fmt(x: float, precision: int = 17) -> str:
    return format(float(x) + 0.0, f".{precision}g")


def _none_or(x, precision=17):
    return None if x is None else float(fmt(x, precision))


def emit_solution_csv(outcome: Outcome, game, path: str, precision: int = 17) -> None:
    """Write the reported iterate; ``delta_star`` and the target use the
    strategy impulse on ``I`` and ``0`` (target ``x``) elsewhere."""
    x = game.x
    delta = np.where(outcome.I, outcome.delta, 0.0)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(CSV_HEADER)
        for i in range(game.n):
            w.writerow([
                fmt(x[i], precision),
                fmt(outcome.v[i], precision),
                int(outcome.I[i]),
                fmt(delta[i], precision),
                fmt(x[i] + delta[i], precision),
                fmt(outcome.residual.residual[i], precision),
            ])


def run_record(cfg: RunConfig, h: str, diagnostics: str, seed: int) -> tuple[dict, Outcome, object]:
    game = discretize(cfg.spec, cfg.grid(h), cfg.boundary, cfg.impulse_mode, cfg.allow_nonpositive_cost)
    monitor = StructuralMonitor(game) if diagnostics == "full" else None
    outcome = run(game, cfg.driver, cfg.solver, on_step=monitor)
    res = outcome.residual
    rec = {
        "h": float(game.h),
        "h_text": h,
        "N": game.grid.N,
        "x_max": float(game.grid.N * game.h),
        "impulse_mode": game.impulse_mode,
        "solver": cfg.solver.variant,
        "kind": outcome.kind.value,
        "period": outcome.period,
        "outer_iterations": outcome.iters,
        "final_iteration": outcome.final_iter,
        "diff": outcome.diff,
        "max_res_qvis": res.max_res,
        "max_res_qvis_excluding_spikes": res.max_res_excluding_spikes,
        "spike_nodes": [float(game.x[p]) for p in res.spike_nodes],
        "boundary": outcome.ne.boundary,
        "target": outcome.ne.target,
        "uniform_target": outcome.ne.uniform_target,
        "opponent_boundary": outcome.ne.opponent_boundary,
        "opponent_target": outcome.ne.opponent_target,
        "max_sup_norm": outcome.max_sup_norm,
        "boundary_conditions": {"lbc": game.bc.lbc, "rbc": game.bc.rbc, "heuristic": game.bc.heuristic},
        "degenerate": {
            "alternated": outcome.degenerate.alternated,
            "one_sided": outcome.degenerate.one_sided,
            "flagged": outcome.degenerate.flagged,
        },
    }
    if cfg.reference is not None and outcome.ne.boundary is not None:
        rec["boundary_error"] = abs(outcome.ne.boundary - cfg.reference[0])
        rec["target_error"] = abs(outcome.ne.target - cfg.reference[1])
        rec["within_step"] = rec["boundary_error"] <= game.h and rec["target_error"] <= game.h
    if diagnostics in ("basic", "full"):
        uip = uip_check(game, outcome.v)
        rec["uip"] = {"holds": uip.holds, "violations": uip.violations}
        rec["symmetric_gain_consistent"] = symmetry_report(game, outcome.v, outcome.delta).consistent
        if not outcome.ne.uniform_target:
            rec["note"] = "impulse targets differ across the intervention region"
    if diagnostics == "full":
        rec["structural"] = {
            "steps": len(monitor.records),
            "violations": [r.k for r in monitor.violations],
            "max_relation_residual": monitor.max_relation_residual,
        }
        try:
            rec["characterization_gap"] = verify_solution_characterization(game, outcome.v).gap
        except np.linalg.LinAlgError as exc:
            rec["characterization_gap"] = None
            rec["characterization_error"] = str(exc)
        if game.impulse_mode == "constrained":
            chk = check_A0_doubleprime_sampled(game, trials=100, seed=seed)
            rec["sampled_connectivity"] = {"ok": chk.ok, "max_con": chk.max_con, "trials": chk.trials}
    return _clean(rec), outcome, game


def _clean(obj):
    """Make a record JSON-safe and deterministic (no NaN/inf, plain floats)."""
    if isinstance(obj, dict):
        return {k: _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        x = float(obj)
        if math.isinf(x):
            return "inf" if x > 0 else "-inf"
        if math.isnan(x):
            return None
        return x
    return obj


def emit_run_report(records: list[dict], path: str) -> None:
    with open(path, "w") as fh:
        json.dump({"runs": records}, fh, indent=2, sort_keys=True)
        fh.write("\n")


SWEEP_COLUMNS = [
    "h", "outer_iterations", "kind", "period", "diff", "max_res_qvis",
    "max_res_qvis_excluding_spikes", "boundary", "target", "boundary_error", "target_error",
]


def emit_sweep_csv(records: list[dict], path: str, precision: int = 17) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(SWEEP_COLUMNS)
        for rec in records:
            row = []
            for col in SWEEP_COLUMNS:
                val = rec.get(col)
                if isinstance(val, float):
                    val = fmt(val, precision)
                row.append("" if val is None else val)
            w.writerow(row)


def _job(args):
    cfg, h, diagnostics, seed, path = args
    rec, outcome, game = run_record(cfg, h, diagnostics, seed)
    emit_solution_csv(outcome, game, path, cfg.precision)
    return rec, outcome.kind


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="impulsegames", description="Solve a symmetric impulse game.")
    p.add_argument("--config", required=True, help="run configuration file")
    p.add_argument("--output", help="output directory (overrides [output] dir)")
    p.add_argument("--sweep", action="store_true", help="run every step size listed in [sweep]")
    p.add_argument("--solver", choices=(FPPI, HOWARD), help="inner solver")
    p.add_argument("--diagnostics", choices=DIAGNOSTIC_LEVELS, help="report detail")
    p.add_argument("--seed", type=int, default=0, help="seed for sampled validators")
    p.add_argument("--jobs", type=int, default=1, help="parallel sweep jobs")
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return 0 if exc.code == 0 else 1
    try:
        with open(args.config) as fh:
            cfg = parse_config(fh.read())
    except OSError as exc:
        print(f"error: cannot read config: {exc}", file=sys.stderr)
        return 1
    except ConfigError as exc:
        print(f"error: {args.config}: {exc}", file=sys.stderr)
        return 1
    if args.solver:
        cfg = replace(cfg, solver=replace(cfg.solver, variant=args.solver))
    diagnostics = args.diagnostics or cfg.diagnostics
    out_dir = args.output or cfg.output_dir
    if args.sweep and not cfg.sweep:
        print("error: --sweep needs a [sweep] section with h values", file=sys.stderr)
        return 1
    os.makedirs(out_dir, exist_ok=True)

    if args.sweep:
        jobs = [
            (cfg, h, diagnostics, args.seed, os.path.join(out_dir, f"solution_{i}.csv"))
            for i, h in enumerate(cfg.sweep)
        ]
    else:
        jobs = [(cfg, cfg.h, diagnostics, args.seed, os.path.join(out_dir, "solution.csv"))]
    try:
        if args.jobs > 1 and len(jobs) > 1:
            with ProcessPoolExecutor(max_workers=args.jobs) as pool:
                results = list(pool.map(_job, jobs))
        else:
            results = [_job(j) for j in jobs]
    except NonPositiveCostError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    records = [r for r, _ in results]
    emit_run_report(records, os.path.join(out_dir, "report.json"))
    if args.sweep:
        emit_sweep_csv(records, os.path.join(out_dir, "sweep.csv"), cfg.precision)
    for rec in records:
        print(
            f"h={rec['h_text']}: {rec['kind']}"
            + (f"({rec['period']})" if rec["period"] else "")
            + f" after {rec['outer_iterations']} iterations, maxResQVIs={rec['max_res_qvis']:.3g},"
            f" boundary={rec['boundary']}, target={rec['target']}"
        )
    return max(EXIT_CODES[k] for _, k in results)


if __name__ == "__main__":
    sys.exit(main())
