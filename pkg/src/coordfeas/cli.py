"""Command-line front end.

Exit codes::

    0  success / Feasible
    1  parse or validation error (field path on stderr)
    2  EqualityInconsistent (check, or a run stopped by it)
    3  NoFeasibleDirection at check time
    4  NoFeasibleDirection during a run (partial CSV kept)
    5  analytic benchmark mismatch
"""
from __future__ import annotations

import argparse
import hashlib
import json
import logging
import math
import os
import sys
import time
from typing import Optional, Sequence

import numpy as np

from . import __version__
from . import analytic
from . import constraints as cons
from . import feasibility as feas
from . import scenario_file as sf
from . import sim

log = logging.getLogger("coordfeas")

EXIT_OK = 0
EXIT_INVALID = 1
EXIT_INCONSISTENT = 2
EXIT_NO_DIRECTION = 3
EXIT_RUN_NO_DIRECTION = 4
EXIT_BENCH = 5

_STATUS_EXIT = {
    feas.FEASIBLE: EXIT_OK,
    feas.EQUALITY_INCONSISTENT: EXIT_INCONSISTENT,
    feas.NO_FEASIBLE_DIRECTION: EXIT_NO_DIRECTION,
}
_LEVELS = {"error": logging.ERROR, "warn": logging.WARNING, "info": logging.INFO, "debug": logging.DEBUG}


def _setup_logging():
    level = os.environ.get("COORDFEAS_LOG", "warn").lower()
    logging.basicConfig(level=_LEVELS.get(level, logging.WARNING), stream=sys.stderr,
                        format="%(levelname)s %(name)s: %(message)s")


def _fmt(x) -> str:
    return "%.17g" % x


def _load(path: str) -> Optional[sf.ScenarioDoc]:
    try:
        doc = sf.load(path)
    except OSError as exc:
        print(f"error: cannot read {path}: {exc.strerror}", file=sys.stderr)
        return None
    except sf.ScenarioError as exc:
        print(f"error: {path}: {exc}", file=sys.stderr)
        return None
    errs = sim.validate(doc.scenario)
    if errs:
        for e in errs:
            print(f"error: {path}: {e}", file=sys.stderr)
        return None
    return doc


def _worst(statuses: Sequence[str]) -> str:
    for st in (feas.EQUALITY_INCONSISTENT, feas.NO_FEASIBLE_DIRECTION):
        if st in statuses:
            return st
    return feas.FEASIBLE


# ------------------------------------------------------------------ check


def check_report(s: sim.Scenario, t: float) -> dict:
    p = s.initial_state()
    opts = s.options()
    if s.tree is None:
        opts.cruise = s.cruise
        return feas.check(s.kinds, s.constraints, p, t, opts).to_dict()
    cruise = s.cruise if isinstance(s.cruise, dict) else None
    reports = feas.check_leader_follower(s.tree, s.kinds, s.constraints, p, t, opts, cruise=cruise)
    return {
        "status": _worst([r.status for _, r in reports]),
        "vehicles": [{"vehicle": v + 1, **r.to_dict()} for v, r in reports],
    }


def cmd_check(args) -> int:
    doc = _load(args.file)
    if doc is None:
        return EXIT_INVALID
    rep = check_report(doc.scenario, args.at)
    json.dump(rep, sys.stdout, indent=2, sort_keys=True)
    sys.stdout.write("\n")
    if rep["status"] != feas.FEASIBLE:
        print(f"{args.file}: {rep['status']} at t={args.at}", file=sys.stderr)
    return _STATUS_EXIT[rep["status"]]


# -------------------------------------------------------------------- run


def csv_rows(s: sim.Scenario, lg: sim.TrajectoryLog):
    m = sf.weight_count(s)
    for k, t in enumerate(lg.times):
        row = [_fmt(t)]
        row += [_fmt(x) for x in lg.states[k]]
        for u in lg.controls[k]:
            row += [_fmt(x) for x in u]
        row += [_fmt(g) for g in lg.residuals[k]]
        row += ["1" if a else "0" for a in lg.active[k]]
        w = [_fmt(x) for x in lg.weights[k][:m]]
        row += w + [""] * (m - len(w))
        yield row


def write_csv(path: str, s: sim.Scenario, lg: sim.TrajectoryLog):
    with open(path, "w", encoding="ascii", newline="\n") as fh:
        fh.write(",".join(sf.csv_header(s)) + "\n")
        for row in csv_rows(s, lg):
            fh.write(",".join(row) + "\n")


def _pair_stats(s: sim.Scenario, lg: sim.TrajectoryLog) -> dict:
    """Distance range for distance constraints and the visibility cosine
    ratio ``<a, b_j> / |a|`` for visibility constraints."""
    out = {}
    if not lg.states:
        return out
    states = np.array(lg.states)
    offs = sim.offsets_for(s.kinds)
    for c in s.constraints:
        if isinstance(c, (cons.DistanceEq, cons.DistanceBand, cons.Visibility)):
            oi, oj = offs[c.i], offs[c.j]
            a = states[:, oi:oi + 2] - states[:, oj:oj + 2]
            dist = np.hypot(a[:, 0], a[:, 1])
            key = f"{c.i + 1}_{c.j + 1}"
            if isinstance(c, cons.Visibility):
                th = states[:, oj + 2]
                with np.errstate(invalid="ignore", divide="ignore"):
                    ratio = (a[:, 0] * np.cos(th) + a[:, 1] * np.sin(th)) / dist
                out[f"cos_ratio_{key}"] = {"min": float(np.min(ratio)), "max": float(np.max(ratio))}
            else:
                out[f"distance_{key}"] = {"min": float(np.min(dist)), "max": float(np.max(dist))}
    return out


def run_report(doc: sf.ScenarioDoc, lg: sim.TrajectoryLog, wall: float) -> dict:
    s = doc.scenario
    cols = sf.residual_columns(s)
    res = np.array(lg.residuals, dtype=float).reshape(len(lg.residuals), len(cols))
    per = {}
    for m, name in enumerate(cols):
        col = res[:, m]
        per[name] = ({"min": float(np.min(col)), "max": float(np.max(col))} if col.size
                     else {"min": None, "max": None})
    return {
        "status": lg.status,
        "message": lg.message,
        "samples": len(lg.times),
        "residuals": per,
        "pairs": _pair_stats(s, lg),
        "events": len(lg.events),
        "reselections": lg.reselections,
        "wall_time": wall,
        "version": __version__,
        "digest": hashlib.sha256(sf.canonical(doc.source)).hexdigest(),
    }


def cmd_run(args) -> int:
    doc = _load(args.file)
    if doc is None:
        return EXIT_INVALID
    s = doc.scenario
    t0 = time.perf_counter()
    lg = sim.run(s)
    wall = time.perf_counter() - t0
    csv_path = args.csv or doc.csv
    report_path = args.report or doc.report
    if csv_path:
        write_csv(csv_path, s, lg)
    rep = run_report(doc, lg, wall)
    text = json.dumps(rep, indent=2, sort_keys=True) + "\n"
    if report_path:
        with open(report_path, "w", encoding="ascii", newline="\n") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)
    if lg.status == feas.FEASIBLE:
        return EXIT_OK
    print(f"{args.file}: run stopped: {lg.message}", file=sys.stderr)
    return EXIT_INCONSISTENT if lg.status == feas.EQUALITY_INCONSISTENT else EXIT_RUN_NO_DIRECTION


# ------------------------------------------------------------------ bench


CASES = (analytic.TwoUnicycles(), analytic.UnicycleConstantSpeed(1.0), analytic.UnicycleCar(0.5))


def bench(seed: int = 0, states: int = 100) -> list[tuple[str, int, int, float]]:
    """``(case, passed, total, worst residual)`` for each analytic case."""
    rng = np.random.default_rng(seed)
    rows = []
    for case in CASES:
        ok, worst = 0, 0.0
        for _ in range(states):
            r = analytic.verify_against_engine(case, analytic.random_state(case, rng))
            ok += r.ok
            worst = max(worst, r.k_bar_residual, r.basis_residual)
        rows.append((case.name, ok, states, worst))
    return rows


def cmd_bench(args) -> int:
    rows = bench(args.seed)
    print(f"{'case':<24} {'pass':>9} {'max residual':>14}")
    for name, ok, total, worst in rows:
        print(f"{name:<24} {ok:>4}/{total:<4} {worst:>14.3e}")
    failed = any(ok != total for _, ok, total, _ in rows)
    if failed:
        print("analytic families disagree with the engine", file=sys.stderr)
    return EXIT_BENCH if failed else EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="coordfeas", description=__doc__.splitlines()[0])
    ap.add_argument("--version", action="version", version=__version__)
    sub = ap.add_subparsers(dest="command", required=True)
    c = sub.add_parser("check", help="feasibility of a scenario's initial state")
    c.add_argument("file")
    c.add_argument("--at", type=float, default=0.0, metavar="T", help="time for references")
    c.set_defaults(func=cmd_check)
    r = sub.add_parser("run", help="simulate a scenario, writing CSV and a JSON report")
    r.add_argument("file")
    r.add_argument("--csv", help="trajectory CSV path (overrides outputs.csv)")
    r.add_argument("--report", help="report JSON path (overrides outputs.report; default stdout)")
    r.set_defaults(func=cmd_run)
    b = sub.add_parser("bench", help="closed-form motion families vs the numerical engine")
    b.add_argument("--seed", type=int, default=0)
    b.set_defaults(func=cmd_bench)
    return ap


def main(argv: Optional[Sequence[str]] = None) -> int:
    _setup_logging()
    ap = build_parser()
    try:
        args = ap.parse_args(argv)
    except SystemExit as exc:
        # argparse uses 2 for usage errors; keep 2 for EqualityInconsistent
        return EXIT_OK if exc.code == 0 else EXIT_INVALID
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
