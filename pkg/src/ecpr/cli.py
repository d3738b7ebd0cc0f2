"""Command-line entry points: run, compare, metrics."""

from __future__ import annotations

import argparse
import csv
import logging
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

from .channel import EventLog
from .core import ALGORITHMS, ConfigError, SimConfig
from .engine import build_scenario, run, write_trace
from .io import (DECISION_COLUMNS, RunManifest, format_summary, load_config, write_metrics_csv,
                 write_summary_csv)
from .metrics import recompute_awareness

log = logging.getLogger("ecpr")

LOG_ENV = "ECPR_LOG_LEVEL"


def _setup_logging():
    level = os.environ.get(LOG_ENV, "WARNING").upper()
    logging.basicConfig(level=getattr(logging, level, logging.WARNING),
                        format="%(levelname)s %(name)s: %(message)s")


def _run_one(cfg: SimConfig, out: Path | None, workers: int, events: bool):
    manifest = RunManifest.for_config(cfg)
    scenario = build_scenario(cfg)
    ev = dec_fh = None
    if events and out is not None:
        ev = EventLog(out / "events.csv", manifest.header())
        dec_fh = open(out / "decisions.csv", "w", newline="")
        dec_fh.write(manifest.header() + "\n")
        dec = csv.writer(dec_fh, lineterminator="\n")
        dec.writerow(DECISION_COLUMNS)
        write_trace(scenario.trace, out / "positions.csv", manifest.header())
        manifest.outputs.update(events="events.csv", decisions="decisions.csv", positions="positions.csv")
    try:
        result = run(scenario, cfg, workers=workers, event_log=ev,
                     decision_log=dec if dec_fh else None)
    finally:
        if ev:
            ev.close()
        if dec_fh:
            dec_fh.close()
    return manifest, result


def _compare_job(args):
    cfg, workers = args
    return _run_one(cfg, None, workers, False)


def cmd_run(ns) -> int:
    cfg = load_config(ns.config)
    out = Path(ns.out)
    out.mkdir(parents=True, exist_ok=True)
    manifest, result = _run_one(cfg, out, ns.workers, ns.events)
    write_metrics_csv(out / "metrics.csv", [(result.algorithm, m) for m in result.metrics],
                      manifest.header())
    manifest.outputs["metrics"] = "metrics.csv"
    manifest.write_json(out / "manifest.json", cfg)
    summary = result.summary(cfg.warmup)
    print(format_summary([summary]))
    return 0


def cmd_compare(ns) -> int:
    algs = [a.strip() for a in ns.algorithms.split(",") if a.strip()]
    unknown = [a for a in algs if a not in ALGORITHMS]
    if unknown:
        raise ConfigError(f"unknown algorithm(s) {unknown}; choose from {list(ALGORITHMS)}")
    if len(set(algs)) < 2:
        raise ConfigError("compare needs at least two distinct algorithms")
    base = load_config(ns.config)
    cfgs = [base.replace(**{"scenario.algorithm": a}) for a in algs]
    if ns.parallel > 1:
        with ProcessPoolExecutor(max_workers=ns.parallel) as pool:
            results = list(pool.map(_compare_job, [(c, ns.workers) for c in cfgs]))
    else:
        results = [_run_one(c, None, ns.workers, False) for c in cfgs]
    out = Path(ns.out)
    out.mkdir(parents=True, exist_ok=True)
    joint = RunManifest.for_config(base, algorithm="+".join(algs))
    rows = []
    by_second = [r.metrics for _, r in results]
    for sec in range(max(len(m) for m in by_second)):
        for (_, r), ms in zip(results, by_second):
            if sec < len(ms):
                rows.append((r.algorithm, ms[sec]))
    write_metrics_csv(out / "compare.csv", rows, joint.header())
    summaries = [r.summary(base.warmup) for _, r in results]
    write_summary_csv(out / "summary.csv", summaries, joint.header())
    joint.outputs.update(compare="compare.csv", summary="summary.csv")
    joint.write_json(out / "manifest.json", base)
    print(format_summary(summaries))
    return 0


def cmd_metrics(ns) -> int:
    log_path = Path(ns.log)
    positions = Path(ns.positions) if ns.positions else log_path.with_name("positions.csv")
    if not positions.exists():
        raise ConfigError(f"position log {positions} not found; pass --positions")
    sps = int(round(1.0 / ns.control_step))
    rows = recompute_awareness(log_path, positions, ns.range, sps)
    w = csv.writer(sys.stdout, lineterminator="\n")
    w.writerow(("second", "mean_nar", "mean_rnar"))
    for sec, nar, rnar in rows:
        w.writerow((sec, f"{nar:.6f}", f"{rnar:.6f}"))
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="ecpr", description=__doc__)
    sub = p.add_subparsers(dest="command", required=True)

    r = sub.add_parser("run", help="simulate one scenario")
    r.add_argument("--config", required=True)
    r.add_argument("--out", required=True)
    r.add_argument("--events", action="store_true", help="also write event, decision and position logs")
    r.add_argument("--workers", type=int, default=1)
    r.set_defaults(func=cmd_run)

    c = sub.add_parser("compare", help="run several algorithms on one scenario")
    c.add_argument("--config", required=True)
    c.add_argument("--algorithms", required=True, help="comma separated, e.g. ecpr,rate_only")
    c.add_argument("--out", required=True)
    c.add_argument("--parallel", type=int, default=1, help="algorithm runs in parallel processes")
    c.add_argument("--workers", type=int, default=1)
    c.set_defaults(func=cmd_compare)

    m = sub.add_parser("metrics", help="recompute NAR/RNAR from an event log")
    m.add_argument("--log", required=True)
    m.add_argument("--range", type=float, required=True)
    m.add_argument("--positions")
    m.add_argument("--control-step", type=float, default=0.2)
    m.set_defaults(func=cmd_metrics)
    return p


def main(argv=None) -> int:
    _setup_logging()
    ns = build_parser().parse_args(argv)
    try:
        return ns.func(ns)
    except (ConfigError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
