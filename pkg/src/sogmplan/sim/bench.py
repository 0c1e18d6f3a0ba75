"""Benchmark grids over tasks, environment kinds and obstacle counts.

A run writes ``trials.csv`` (one row per trial, fixed column order),
``cycles.csv`` (per-cycle stage timings), ``records.jsonl`` (everything
needed to re-run a single trial) and ``summary.json``.
"""
from __future__ import annotations

import csv
import hashlib
import io
import json
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field

import numpy as np

from ..comms import BusConfig
from .environment import EnvironmentConfig, sample_density
from .trial import OUTCOMES, STAGES, TASKS, TrialRecord, default_agents, run_trial

KINDS = {"mixed": "mixed", "pure": "pure_column", "pure_column": "pure_column"}

OUTCOME_COLUMNS = [
    "task", "env", "obstacles", "seed", "outcome", "sim_time", "cycles", "stops", "conflicts",
    "arrived", "flight_time_mean", "flight_time_max", "flight_times", "first_event",
]
TIMING_COLUMNS = [f"{s}_ms_{stat}" for s in STAGES for stat in ("mean", "median")]
CSV_COLUMNS = OUTCOME_COLUMNS + TIMING_COLUMNS
CYCLE_COLUMNS = ["task", "env", "obstacles", "seed", "cycle", *STAGES]


@dataclass
class BenchConfig:
    tasks: list = field(default_factory=lambda: list(TASKS))
    env: str = "mixed"
    obstacles: list = field(default_factory=lambda: [20])
    trials: int = 1
    seed: int = 0
    agents: int = 4
    time_limit: float = 60.0
    latency: float = 0.0
    drop: float = 0.0
    workers: int = 1

    def __post_init__(self):
        if isinstance(self.tasks, str):
            self.tasks = list(TASKS) if self.tasks == "all" else [self.tasks]
        bad = [t for t in self.tasks if t not in TASKS]
        if bad:
            raise ValueError(f"unknown task(s) {bad}; choose from {', '.join(TASKS)} or all")
        if self.env not in KINDS:
            raise ValueError(f"unknown environment {self.env!r}; choose mixed or pure")
        if isinstance(self.obstacles, int):
            self.obstacles = [self.obstacles]
        self.obstacles = [int(n) for n in self.obstacles]
        if any(n < 0 for n in self.obstacles):
            raise ValueError("obstacle counts must be non-negative")
        if self.trials < 1:
            raise ValueError("need at least one trial")
        if self.agents < 1:
            raise ValueError("need at least one agent")
        if self.time_limit <= 0:
            raise ValueError("time limit must be positive")
        if self.workers < 1:
            raise ValueError("workers must be >= 1")
        BusConfig(self.latency, self.drop)  # validates

    @property
    def kind(self) -> str:
        return KINDS[self.env]

    def cells(self) -> list[tuple[str, int]]:
        return [(task, n) for n in self.obstacles for task in self.tasks]

    def seeds(self) -> list[int]:
        return [self.seed + i for i in range(self.trials)]


@dataclass
class TrialSpec:
    """Everything needed to re-run one trial."""

    task: str
    kind: str
    obstacles: int
    seed: int
    agents: int = 4
    time_limit: float = 60.0
    latency: float = 0.0
    drop: float = 0.0

    def run(self, snapshot=None) -> TrialRecord:
        env = EnvironmentConfig(obstacle_count=self.obstacles, kind=self.kind)
        bus = BusConfig(self.latency, self.drop, self.seed)
        return run_trial(self.task, env, default_agents(self.agents), self.seed, bus_config=bus,
                         time_limit=self.time_limit, snapshot=snapshot)


def trial_specs(cfg: BenchConfig) -> list[TrialSpec]:
    return [
        TrialSpec(task, cfg.kind, n, s, cfg.agents, cfg.time_limit, cfg.latency, cfg.drop)
        for task, n in cfg.cells()
        for s in cfg.seeds()
    ]


def _run_spec(spec: TrialSpec) -> TrialRecord:
    return spec.run()


def _fmt(x) -> str:
    if isinstance(x, float):
        return "nan" if math.isnan(x) else f"{x:.6g}"
    return str(x)


def trial_row(rec: TrialRecord) -> dict:
    ft = np.asarray(rec.flight_times, dtype=float)
    ok = ft[np.isfinite(ft)]
    row = {
        "task": rec.task, "env": rec.kind, "obstacles": rec.obstacles, "seed": rec.seed,
        "outcome": rec.outcome, "sim_time": rec.sim_time, "cycles": rec.cycles, "stops": rec.stops,
        "conflicts": rec.conflicts, "arrived": int(len(ok)),
        "flight_time_mean": float(ok.mean()) if len(ok) else math.nan,
        "flight_time_max": float(ok.max()) if len(ok) else math.nan,
        "flight_times": ";".join(_fmt(float(x)) for x in ft),
        "first_event": "" if not rec.events else ":".join(map(str, rec.events[0])),
    }
    for s in STAGES:
        v = np.asarray(rec.timings.get(s, []), dtype=float)
        row[f"{s}_ms_mean"] = float(v.mean()) if len(v) else math.nan
        row[f"{s}_ms_median"] = float(np.median(v)) if len(v) else math.nan
    return {k: _fmt(v) for k, v in row.items()}


def write_csv(path, rows, columns) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=columns, lineterminator="\n")
        w.writeheader()
        for r in rows:
            w.writerow({k: r[k] for k in columns})


def read_trials(path) -> list[dict]:
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def outcome_digest(path) -> str:
    """SHA-256 of ``trials.csv`` with the timing columns dropped."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(OUTCOME_COLUMNS)
    for r in read_trials(path):
        w.writerow([r[c] for c in OUTCOME_COLUMNS])
    return hashlib.sha256(buf.getvalue().encode()).hexdigest()


def _stats(v) -> dict:
    v = np.asarray(v, dtype=float)
    if not len(v):
        return {"mean": None, "std": None, "median": None, "p90": None}
    return {"mean": float(v.mean()), "std": float(v.std()), "median": float(np.median(v)),
            "p90": float(np.percentile(v, 90))}


def summarize(records: list[TrialRecord]) -> list[dict]:
    """Per-cell outcome rates, flight time over arrived agents and stage timings."""
    cells: dict = {}
    for r in records:
        cells.setdefault((r.task, r.kind, r.obstacles), []).append(r)
    out = []
    for (task, kind, n), recs in cells.items():
        m = len(recs)
        ft = [x for r in recs if r.success for x in r.flight_times]
        timing = {s: _stats([x for r in recs for x in r.timings.get(s, [])]) for s in STAGES}
        out.append({
            "task": task, "env": kind, "obstacles": n, "trials": m,
            "seeds": [r.seed for r in recs],
            "rates": {o: sum(r.outcome == o for r in recs) / m for o in OUTCOMES},
            "flight_time": {"mean": float(np.mean(ft)) if ft else None,
                            "std": float(np.std(ft)) if ft else None},
            "timing_ms": timing,
        })
    return out


def run_benchmark(cfg: BenchConfig, out_dir=None, progress=None) -> dict:
    """Run every (task, obstacle count) cell of ``cfg`` over its seeds.

    Args:
        cfg: grid definition.
        out_dir: if given, the CSV, JSONL and JSON outputs are written there.
        progress: optional callable receiving each finished TrialRecord.

    Returns:
        Summary dict with the config and one entry per cell.
    """
    specs = trial_specs(cfg)
    if cfg.workers > 1:
        with ProcessPoolExecutor(cfg.workers) as ex:
            records = []
            for r in ex.map(_run_spec, specs):
                records.append(r)
                if progress:
                    progress(r)
    else:
        records = []
        for s in specs:
            r = s.run()
            records.append(r)
            if progress:
                progress(r)
    summary = {"config": asdict(cfg), "cells": summarize(records)}
    if out_dir is not None:
        os.makedirs(out_dir, exist_ok=True)
        write_csv(os.path.join(out_dir, "trials.csv"), [trial_row(r) for r in records], CSV_COLUMNS)
        cyc = []
        for r in records:
            for i in range(len(r.timings.get("total", []))):
                cyc.append({"task": r.task, "env": r.kind, "obstacles": r.obstacles, "seed": r.seed, "cycle": i,
                            **{s: _fmt(float(r.timings[s][i])) for s in STAGES}})
        write_csv(os.path.join(out_dir, "cycles.csv"), cyc, CYCLE_COLUMNS)
        with open(os.path.join(out_dir, "records.jsonl"), "w") as fh:
            for s, r in zip(specs, records):
                fh.write(json.dumps({**asdict(s), "outcome": r.outcome}, sort_keys=True) + "\n")
        with open(os.path.join(out_dir, "summary.json"), "w") as fh:
            json.dump(summary, fh, indent=1, sort_keys=True)
    summary["records"] = records
    return summary


# ---------------------------------------------------------------------------
# density


def density_table(kind: str, counts, samples: int = 1000, seed: int = 0) -> list[dict]:
    """Monte Carlo mean and std of obstacle density (percent) per count."""
    rows = []
    for n in counts:
        d = 100.0 * sample_density(KINDS[kind], int(n), samples, seed)
        rows.append({"env": KINDS[kind], "obstacles": int(n), "samples": samples,
                     "mean_pct": float(d.mean()), "std_pct": float(d.std())})
    return rows


# ---------------------------------------------------------------------------
# replay


def load_spec(path, index: int = 0) -> TrialSpec:
    """A TrialSpec from a ``.json`` record or line ``index`` of a ``records.jsonl``."""
    with open(path) as fh:
        text = fh.read()
    lines = [ln for ln in text.splitlines() if ln.strip()]
    if path.endswith(".jsonl") or len(lines) > 1:
        if not 0 <= index < len(lines):
            raise ValueError(f"record index {index} out of range (file has {len(lines)})")
        d = json.loads(lines[index])
    else:
        d = json.loads(text)
    keys = TrialSpec.__dataclass_fields__
    return TrialSpec(**{k: v for k, v in d.items() if k in keys})


def replay(spec: TrialSpec, out_dir, every: int = 1) -> TrialRecord:
    """Re-run ``spec`` and dump one JSON line per plan to ``snapshots.jsonl``.

    Each line holds the agent id, time, status, committed spline, search
    path, corridors (as halfspace rows) and the planning map in run-length
    form.  ``every`` thins the dump to every n-th planning tick.
    """
    os.makedirs(out_dir, exist_ok=True)
    fh = open(os.path.join(out_dir, "snapshots.jsonl"), "w")
    tick = {"n": -1, "t": None}

    def snap(t, agent, out, trace):
        if t != tick["t"]:
            tick["n"] += 1
            tick["t"] = t
        if tick["n"] % every:
            return
        path = trace.get("path")
        fh.write(json.dumps({
            "t": round(t, 6), "agent_id": agent.config.agent_id, "status": out.status, "reason": out.reason,
            "goal": agent.goal.tolist(),
            "spline": agent.spline.to_dict(),
            "path": None if path is None else [s.p.tolist() for s in path.states],
            "corridors": [{"frame_index": c.frame_index, "window": list(c.window),
                           "halfspaces": np.column_stack([c.polytope.A, c.polytope.b]).tolist()}
                          for c in trace.get("corridors", [])],
            "sogm": trace["sogm"].to_dict() if "sogm" in trace else None,
        }) + "\n")

    try:
        rec = spec.run(snapshot=snap)
    finally:
        fh.close()
    with open(os.path.join(out_dir, "record.json"), "w") as out:
        json.dump({**asdict(spec), "outcome": rec.outcome, "sim_time": rec.sim_time,
                   "flight_times": rec.flight_times, "events": rec.events}, out, indent=1)
    return rec
