"""Command line: ``pathinv {simulate,plan,check,sweep}``.

Exit codes: 0 success, 2 scenario validation failure, 3 simulation error,
4 planner budget exhausted. ``PATHINV_LOG`` sets the log level (e.g. ``INFO``).
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import os
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from .errors import BudgetExhausted, PathInvError, ScenarioError
from .planner import plan as run_planner
from .planner import validate_plan
from .scenario import Scenario, bundled, bundled_names, load, validate
from .supervisor import HybridTrace, run_algorithm1, summarize

log = logging.getLogger("pathinv")

EXIT_OK, EXIT_INVALID, EXIT_SIM, EXIT_BUDGET = 0, 2, 3, 4

SIGNALS = {
    "xi.csv": ("t", "j", "xi1", "xi2", "xi3"),
    "eta2.csv": ("t", "j", "eta2", "eta2_ref"),
    "dist.csv": ("t", "j", "dist"),
    "q.csv": ("t", "j", "q"),
}


def resolve_scenario(name: str) -> Scenario:
    """A file path, or the name of a bundled scenario (``.json`` optional)."""
    p = Path(name)
    if p.is_file():
        return load(p)
    stem = p.name[:-5] if p.name.endswith(".json") else p.name
    if stem in bundled_names():
        return bundled(stem)
    raise ScenarioError(f"no scenario file {name!r} and no bundled scenario of that name ({', '.join(bundled_names())})")


def _overrides(sc: Scenario, args) -> Scenario:
    kw = {}
    if getattr(args, "seed", None) is not None:
        kw["seed"] = args.seed
    if getattr(args, "dt", None) is not None:
        kw["dt"] = args.dt
    if getattr(args, "horizon", None) is not None:
        kw["horizon"] = args.horizon
    if getattr(args, "noise", None) is not None:
        nb = sc.neighborhood
        kw["noise"] = args.noise * (nb.c0 - nb.c10) * nb.n_c
    return sc.with_(**kw) if kw else sc


def _write_signals(trace: HybridTrace, out: Path) -> None:
    for fname, cols in SIGNALS.items():
        with open(out / fname, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(cols + (("xi_norm",) if fname == "xi.csv" else ()))
            A = np.stack([trace[c] for c in cols], axis=1)
            extra = trace.xi_norm[:, None] if fname == "xi.csv" else np.empty((len(A), 0))
            for r in np.hstack([A, extra]):
                w.writerow([f"{v:.17g}" for v in r])


def simulate_to(sc: Scenario, out: Path, signals: bool = True) -> dict:
    """Run one scenario and write its artifacts into ``out``; returns the summary."""
    out.mkdir(parents=True, exist_ok=True)
    t0 = time.perf_counter()
    trace = run_algorithm1(sc.initial, sc)
    summary = summarize(trace)
    summary.update(scenario=sc.name, seed=sc.seed, plans=len(trace.plans), wall_time=time.perf_counter() - t0)
    trace.to_csv(out / "trace.csv")
    for k, p in enumerate(trace.plans):
        p.to_csv(out / f"plan_{k}.csv")
    if signals:
        _write_signals(trace, out)
    with open(out / "summary.json", "w") as fh:
        json.dump(summary, fh, indent=2)
    return summary


def cmd_check(args) -> int:
    sc = resolve_scenario(args.scenario)
    rep = sc.check()
    for line in rep.lines():
        print(line)
    print("ok" if rep.ok else "invalid")
    return EXIT_OK if rep.ok else EXIT_INVALID


def cmd_simulate(args) -> int:
    sc = validate(_overrides(resolve_scenario(args.scenario), args))
    try:
        s = simulate_to(sc, Path(args.out))
    except PathInvError as exc:
        print(f"simulation failed: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_SIM
    print(json.dumps({k: s[k] for k in ("jump_count", "switch_time", "settle_time", "T_star", "min_eta2", "final_dist")}))
    return EXIT_OK


def cmd_plan(args) -> int:
    sc = validate(_overrides(resolve_scenario(args.scenario), args))
    goal = sc.goal_set()
    try:
        p = run_planner(sc.initial[:4], goal, sc.obstacles, sc.car, seed=sc.seed, config=sc.planner, budget=args.budget)
    except BudgetExhausted as exc:
        print(f"planner: {exc}", file=sys.stderr)
        return EXIT_BUDGET
    except PathInvError as exc:
        print(f"planner failed: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_SIM
    rep = validate_plan(p, sc.initial[:4], goal, sc.obstacles, sc.car)
    for it in rep.items:
        print(f"{'ok  ' if it.ok else 'FAIL'} {it.name}: margin {it.margin:.6g} {it.detail}")
    out = Path(args.out)
    if out.suffix != ".csv":
        out.mkdir(parents=True, exist_ok=True)
        out = out / "plan.csv"
    else:
        out.parent.mkdir(parents=True, exist_ok=True)
    p.to_csv(out)
    print(f"{len(p)} states, end time {p.end_time:.4g} s -> {out}")
    return EXIT_OK if rep.ok else EXIT_SIM


def parse_seeds(text: str) -> range:
    """``"a..b"`` (inclusive) or a single integer."""
    try:
        if ".." in text:
            a, b = text.split("..", 1)
            a, b = int(a), int(b)
        else:
            a = b = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"seeds must look like 0..99, got {text!r}") from None
    if b < a:
        raise argparse.ArgumentTypeError("empty seed range")
    return range(a, b + 1)


def _sweep_one(job):
    sc, out, traces = job
    try:
        if traces:
            s = simulate_to(sc, out, signals=False)
        else:
            t0 = time.perf_counter()
            s = summarize(run_algorithm1(sc.initial, sc))
            s.update(scenario=sc.name, seed=sc.seed, wall_time=time.perf_counter() - t0)
            out.mkdir(parents=True, exist_ok=True)
            with open(out / "summary.json", "w") as fh:
                json.dump(s, fh, indent=2)
        return sc.seed, s, None
    except PathInvError as exc:
        return sc.seed, None, f"{type(exc).__name__}: {exc}"


def cmd_sweep(args) -> int:
    base = validate(_overrides(resolve_scenario(args.scenario), args))
    out = Path(args.out)
    jobs = [(base.with_(seed=s), out / f"seed_{s:04d}", args.traces) for s in args.seeds]
    workers = args.jobs or os.cpu_count() or 1
    if workers > 1:
        with ProcessPoolExecutor(workers) as ex:
            results = list(ex.map(_sweep_one, jobs))
    else:
        results = [_sweep_one(j) for j in jobs]
    rows = []
    for seed, s, err in results:
        if err is not None:
            rows.append({"seed": seed, "error": err})
            print(f"seed {seed}: {err}")
            continue
        after = None if s["settle_time"] is None or s["switch_time"] is None else s["settle_time"] - s["switch_time"]
        rows.append({"seed": seed, "jump_count": s["jump_count"], "reached_local": s["reached_local"], "switch_time": s["switch_time"], "settle_after_switch": after})
        print(f"seed {seed}: jumps {s['jump_count']} reached_local {s['reached_local']} settle_after_switch {after}")
    ok = [r for r in rows if "error" not in r]
    agg = {
        "scenario": base.name,
        "runs": len(rows),
        "errors": len(rows) - len(ok),
        "max_jumps": max((r["jump_count"] for r in ok), default=None),
        "all_reached_local": all(r["reached_local"] for r in ok),
        "worst_settle_after_switch": max((r["settle_after_switch"] if r["settle_after_switch"] is not None else float("inf") for r in ok), default=None),
        "runs_detail": rows,
    }
    out.mkdir(parents=True, exist_ok=True)
    with open(out / "sweep.json", "w") as fh:
        json.dump(agg, fh, indent=2)
    print(json.dumps({k: v for k, v in agg.items() if k != "runs_detail"}))
    return EXIT_OK if not agg["errors"] else EXIT_SIM


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="pathinv", description="Path-invariant hybrid control of a car-like robot.")
    sub = ap.add_subparsers(dest="command", required=True)

    def common(p, out_default=None):
        p.add_argument("--scenario", required=True, help="scenario JSON file or bundled name (" + ", ".join(bundled_names()) + ")")
        if out_default is not None:
            p.add_argument("--out", default=out_default, help="output directory")
        p.add_argument("--seed", type=int, help="override the scenario RNG seed")
        p.add_argument("--dt", type=float, help="override the integration step [s]")
        p.add_argument("--horizon", type=float, help="override the simulated horizon [s]")
        p.add_argument("--noise", type=float, help="set-membership noise radius as a fraction of (c0 - c10) n_c")

    p = sub.add_parser("simulate", help="run the hybrid closed loop and write traces")
    common(p, "out")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("plan", help="run the motion planner alone and validate the plan")
    common(p, "out")
    p.add_argument("--budget", type=int, help="override the planner iteration budget")
    p.set_defaults(func=cmd_plan)

    p = sub.add_parser("check", help="validate a scenario")
    p.add_argument("--scenario", required=True)
    p.set_defaults(func=cmd_check)

    p = sub.add_parser("sweep", help="run many seeds of one scenario")
    common(p, "sweep_out")
    p.add_argument("--seeds", type=parse_seeds, default=range(0, 10), help="inclusive seed range a..b")
    p.add_argument("--jobs", type=int, default=0, help="worker processes (default: CPU count)")
    p.add_argument("--traces", action="store_true", help="also write trace.csv per seed")
    p.set_defaults(func=cmd_sweep)
    return ap


def main(argv=None) -> int:
    level = os.environ.get("PATHINV_LOG", "WARNING").upper()
    logging.basicConfig(level=getattr(logging, level, logging.WARNING), format="%(levelname)s %(name)s: %(message)s")
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ScenarioError, PathInvError, ValueError) as exc:
        # everything raised before the run starts is a scenario problem
        print(f"invalid scenario: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_INVALID


if __name__ == "__main__":
    sys.exit(main())
