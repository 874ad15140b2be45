"""nilstab command line: classify, ergodic, holonomy, tau, experiment.

Every command writes its tables and JSON into --out-dir and, unless
--no-plots is given, PNG figures beside them.  Exit codes: 0 success,
1 finished with component failures, 2 invalid configuration or family.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import math
import sys
from pathlib import Path

import numpy as np

from .actions import FamilyError
from .config import SCENARIOS, ConfigError, RunConfig, build_family, build_fields, load_config, load_scenario
from .ergodic import nilflow_samples
from .holonomy import check_pseudogroup_relations, default_grid, holonomy_maps
from .nilmanifold import MPoint, NilPoint
from .heis import E1, E3
from .stability import jsonable, tau_entry, classify, ergodic_rows, run_experiment

log = logging.getLogger("nilstab")

EXIT_OK, EXIT_FAILURES, EXIT_INVALID = 0, 1, 2


def _write_json(path, obj):
    path.write_text(json.dumps(jsonable(obj), sort_keys=True, indent=2) + "\n")


def _write_rows(path, header, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for r in rows:
            w.writerow([repr(x) if isinstance(x, float) else x for x in r])


def _trend_rows(entries):
    for name in sorted(entries):
        for t, (a1, a2) in entries[name]["trend"]:
            yield (name, float(t), float(a1), float(a2))


# -- commands ----------------------------------------------------------------

def cmd_classify(cfg: RunConfig, out: Path, args) -> int:
    verdict = classify(build_family(cfg)).as_dict()
    _write_json(out / "verdict.json", verdict)
    print(json.dumps(jsonable(verdict), sort_keys=True))
    return EXIT_OK


def cmd_ergodic(cfg: RunConfig, out: Path, args) -> int:
    cfg = cfg.override(discrepancy=True)
    rows = ergodic_rows(cfg)
    _write_rows(out / "ergodic.csv", ["test", "parameter", "size", "value", "passed"], rows)
    rng = np.random.default_rng(cfg.seed + 1)
    pts = nilflow_samples((1.0, math.sqrt(2.0), 0.0), rng.random(3), min(cfg.discrepancy_t, 2000))
    t = (np.arange(len(pts)) + 0.5) / 8
    _write_rows(out / "nilflow_trajectory.csv", ["t", "y1", "y2", "y3"],
                [(float(a), *map(float, p)) for a, p in zip(t, pts)])
    if not args.no_plots:
        from .plotting import plot_birkhoff, plot_points
        plot_birkhoff(rows, out / "birkhoff.png")
        plot_points(pts, out / "nilflow.png", "flow of (1, sqrt 2, 0)")
    w = csv.writer(sys.stdout, lineterminator="\n")
    w.writerow(["test", "parameter", "size", "value", "passed"])
    for r in rows:
        w.writerow(r)
    return EXIT_OK if all(r[4] for r in rows) else EXIT_FAILURES


def cmd_holonomy(cfg: RunConfig, out: Path, args) -> int:
    fields = build_fields(cfg)
    maps = holonomy_maps(fields, default_grid(cfg.eps, cfg.grid), dt=cfg.dt)
    maps.to_csv(out / "holonomy.csv")
    pg = check_pseudogroup_relations(maps, cfg.pseudogroup_tol).as_dict()
    summary = {"scenario": cfg.scenario, "distance_from_identity": maps.distance_from_identity,
               "near_identity": maps.near_identity, "pseudogroup": pg}
    _write_json(out / "pseudogroup.json", summary)
    if not args.no_plots:
        from .plotting import plot_holonomy
        plot_holonomy(maps, out / "holonomy.png", cfg.scenario)
    print(json.dumps(jsonable(summary), sort_keys=True))
    return EXIT_OK if pg["passed"] else EXIT_FAILURES


def cmd_tau(cfg: RunConfig, out: Path, args) -> int:
    fields = build_fields(cfg)
    p0 = MPoint(NilPoint(0.0, 0.0, 0.0), 0.0)
    entries = {"E3": tau_entry(fields, p0, E3, cfg)[0], "E1": tau_entry(fields, p0, E1, cfg)[0]}
    _write_json(out / "tau.json", entries)
    _write_rows(out / "tau_trend.csv", ["v", "t", "tau1", "tau2"], _trend_rows(entries))
    if not args.no_plots:
        from .plotting import plot_tau_trend
        plot_tau_trend(entries, out / "tau_trend.png")
    print(json.dumps(jsonable(entries), sort_keys=True))
    return EXIT_OK


def cmd_experiment(cfg: RunConfig, out: Path, args) -> int:
    report = run_experiment(cfg)
    (out / "report.json").write_text(report.to_json(indent=2) + "\n")
    _write_rows(out / "summary.csv", ["key", "value"], report.summary_rows())
    if report.maps is not None:
        report.maps.to_csv(out / "holonomy.csv")
    if report.tau:
        entries = {k: v for k, v in report.tau.items() if isinstance(v, dict)}
        _write_rows(out / "tau_trend.csv", ["v", "t", "tau1", "tau2"], _trend_rows(entries))
    if not args.no_plots:
        from .plotting import plot_holonomy, plot_tau_trend
        if report.maps is not None:
            plot_holonomy(report.maps, out / "holonomy.png", cfg.scenario)
        if report.tau:
            plot_tau_trend({k: v for k, v in report.tau.items() if isinstance(v, dict)}, out / "tau_trend.png")
    v = report.verdict
    print(f"{cfg.scenario}: {v['l_status']}, {v['t_status']}; "
          f"compact@0={report.leaves and report.leaves['compact']}; "
          f"tau_Ab(E3)={report.tau and report.tau.get('E3', {}).get('value')}")
    for k, msg in sorted(report.failures.items()):
        print(f"failure in {k}: {msg}", file=sys.stderr)
    return EXIT_OK if report.ok else EXIT_FAILURES


COMMANDS = {"classify": cmd_classify, "ergodic": cmd_ergodic, "holonomy": cmd_holonomy,
            "tau": cmd_tau, "experiment": cmd_experiment}


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="nilstab", description="Heisenberg-action stability lab")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        s = sub.add_parser(name)
        src = s.add_mutually_exclusive_group()
        src.add_argument("--config", help="INI run configuration")
        src.add_argument("--scenario", choices=SCENARIOS, help="canned scenario (default: identity)")
        s.add_argument("--seed", type=int)
        s.add_argument("--jobs", type=int)
        s.add_argument("--out-dir")
        s.add_argument("--dt", type=float, help="lift step size")
        s.add_argument("--horizon", type=float, help="tau_Ab averaging time")
        s.add_argument("--no-plots", action="store_true", help="skip PNG figures")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = load_config(args.config) if args.config else load_scenario(args.scenario or "identity")
        cfg = cfg.override(seed=args.seed, jobs=args.jobs, out_dir=args.out_dir, dt=args.dt,
                           horizon=args.horizon)
        if args.command != "ergodic":
            build_family(cfg)
    except (ConfigError, FamilyError, OSError) as exc:
        print(f"nilstab: invalid configuration: {exc}", file=sys.stderr)
        return EXIT_INVALID
    out = Path(cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    try:
        return COMMANDS[args.command](cfg, out, args)
    except FamilyError as exc:
        print(f"nilstab: invalid family: {exc}", file=sys.stderr)
        return EXIT_INVALID


if __name__ == "__main__":
    sys.exit(main())
