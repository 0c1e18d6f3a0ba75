"""Command line entry point: ``bench run | density | replay | report``."""
from __future__ import annotations

import argparse
import json
import logging
import os
import sys
import time

import yaml

from .sim.bench import BenchConfig, density_table, load_spec, replay, run_benchmark
from .sim.trial import STAGES

FULL_GRID = [10, 20, 30, 40, 50]

# keys a config file may set for ``bench run``; names mirror the flags
RUN_KEYS = ("task", "env", "obstacles", "trials", "seed", "agents", "out", "time_limit", "latency", "drop",
            "workers", "full", "figures")


def _int_list(text) -> list[int]:
    if isinstance(text, int):
        return [text]
    if isinstance(text, list):
        return [int(x) for x in text]
    return [int(x) for x in str(text).split(",") if x.strip()]


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="bench", description="Multi-agent planning benchmark in moving-obstacle worlds.")
    p.add_argument("-v", "--verbose", action="store_true", help="log one JSON line per planning cycle")
    sub = p.add_subparsers(dest="command", required=True)

    r = sub.add_parser("run", help="run a benchmark grid", argument_default=argparse.SUPPRESS)
    r.add_argument("--config", help="YAML file with any of the flags below; flags override it")
    r.add_argument("--task", choices=["bilateral", "unilateral", "cross", "all"])
    r.add_argument("--env", choices=["mixed", "pure"])
    r.add_argument("--obstacles", type=_int_list, help="count or comma list, e.g. 10,20")
    r.add_argument("--trials", type=int, help="trials per cell; seeds are seed..seed+trials-1")
    r.add_argument("--seed", type=int)
    r.add_argument("--agents", type=int)
    r.add_argument("--out", help="output directory")
    r.add_argument("--time-limit", dest="time_limit", type=float, help="simulated seconds before timeout")
    r.add_argument("--latency", type=float, help="message latency [s]")
    r.add_argument("--drop", type=float, help="message drop probability")
    r.add_argument("--workers", type=int, help="parallel worker processes")
    r.add_argument("--full", action="store_true", help="all tasks, 10..50 obstacles, both kinds unless --env")
    r.add_argument("--no-figures", dest="figures", action="store_false", help="skip the matplotlib figures")

    d = sub.add_parser("density", help="Monte Carlo obstacle density")
    d.add_argument("--env", choices=["mixed", "pure"], default="pure")
    d.add_argument("--obstacles", type=_int_list, default=FULL_GRID)
    d.add_argument("--samples", type=int, default=1000)
    d.add_argument("--seed", type=int, default=0)

    y = sub.add_parser("replay", help="re-run one trial and dump planner snapshots")
    y.add_argument("--record", required=True, help="record .json or records.jsonl from a run")
    y.add_argument("--index", type=int, default=0, help="line of a records.jsonl")
    y.add_argument("--out", default="replay")
    y.add_argument("--every", type=int, default=1, help="keep every n-th planning tick")

    f = sub.add_parser("report", help="redraw figures for a run directory")
    f.add_argument("--out", required=True)
    return p


def resolve_run(args, parser) -> dict:
    """Defaults, then the config file, then explicit flags."""
    opts = {"task": "all", "env": None, "obstacles": [20], "trials": 1, "seed": 0, "agents": 4, "out": "bench_out",
            "time_limit": 60.0, "latency": 0.0, "drop": 0.0, "workers": 1, "full": False, "figures": True}
    cli = vars(args)
    if "config" in cli:
        try:
            with open(cli["config"]) as fh:
                data = yaml.safe_load(fh) or {}
        except (OSError, yaml.YAMLError) as e:
            parser.error(f"cannot read config {cli['config']}: {e}")
        if not isinstance(data, dict):
            parser.error("config file must be a mapping of flag names to values")
        data = {k.replace("-", "_"): v for k, v in data.items()}
        unknown = sorted(set(data) - set(RUN_KEYS))
        if unknown:
            parser.error(f"unknown config keys: {', '.join(unknown)}")
        if "obstacles" in data:
            data["obstacles"] = _int_list(data["obstacles"])
        opts.update(data)
    opts.update({k: v for k, v in cli.items() if k in RUN_KEYS})
    return opts


def _configs(opts) -> list[tuple[str, BenchConfig]]:
    common = dict(trials=opts["trials"], seed=opts["seed"], agents=opts["agents"], time_limit=opts["time_limit"],
                  latency=opts["latency"], drop=opts["drop"], workers=opts["workers"])
    if opts["full"]:
        envs = [opts["env"]] if opts["env"] else ["mixed", "pure"]
        return [(os.path.join(opts["out"], e), BenchConfig("all", e, FULL_GRID, **common)) for e in envs]
    return [(opts["out"], BenchConfig(opts["task"], opts["env"] or "mixed", opts["obstacles"], **common))]


def _print_summary(summary) -> None:
    print("---- summary ----")
    for c in summary["cells"]:
        rates = " ".join(f"{k}={v:.2f}" for k, v in c["rates"].items())
        ft = c["flight_time"]
        fts = "n/a" if ft["mean"] is None else f"{ft['mean']:.2f}+-{ft['std']:.2f}s"
        tm = " ".join(f"{s}={c['timing_ms'][s]['mean']:.1f}" for s in STAGES if c["timing_ms"][s]["mean"] is not None)
        print(f"{c['task']:<10} {c['env']:<11} n={c['obstacles']:<3} trials={c['trials']:<3} {rates} "
              f"flight={fts} ms[{tm}]")
    print("---- end ----")


def cmd_run(args, parser) -> int:
    opts = resolve_run(args, parser)
    try:
        runs = _configs(opts)
    except (ValueError, TypeError) as e:
        parser.error(str(e))
    for out, cfg in runs:
        t0 = time.time()

        def progress(rec):
            print(f"{rec.task:<10} {rec.kind:<11} n={rec.obstacles:<3} seed={rec.seed:<4} {rec.outcome:<9} "
                  f"t={rec.sim_time:.2f}s stops={rec.stops} conflicts={rec.conflicts}", flush=True)

        summary = run_benchmark(cfg, out, progress)
        _print_summary(summary)
        print(f"wrote {out}/trials.csv, summary.json in {time.time() - t0:.1f}s")
        if opts["figures"]:
            from .sim.report import render

            for path in render(out):
                print(f"figure {path}")
    return 0


def cmd_density(args, parser) -> int:
    if args.samples < 1:
        parser.error("--samples must be >= 1")
    print("env          obstacles  samples  mean_pct  std_pct")
    for r in density_table(args.env, args.obstacles, args.samples, args.seed):
        print(f"{r['env']:<12} {r['obstacles']:>9} {r['samples']:>8} {r['mean_pct']:>9.3f} {r['std_pct']:>8.3f}")
    return 0


def cmd_replay(args, parser) -> int:
    try:
        spec = load_spec(args.record, args.index)
    except (OSError, ValueError, TypeError, json.JSONDecodeError) as e:
        parser.error(f"bad record: {e}")
    rec = replay(spec, args.out, max(1, args.every))
    print(json.dumps({"task": rec.task, "seed": rec.seed, "outcome": rec.outcome, "sim_time": rec.sim_time}))
    print(f"snapshots in {os.path.join(args.out, 'snapshots.jsonl')}")
    return 0


def cmd_report(args, parser) -> int:
    from .sim.report import render

    if not os.path.exists(os.path.join(args.out, "trials.csv")):
        parser.error(f"no trials.csv in {args.out}")
    for path in render(args.out):
        print(f"figure {path}")
    return 0


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    cmds = {"run": cmd_run, "density": cmd_density, "replay": cmd_replay, "report": cmd_report}
    sub = parser._subparsers._group_actions[0].choices[args.command]
    return cmds[args.command](args, sub)


if __name__ == "__main__":
    sys.exit(main())
