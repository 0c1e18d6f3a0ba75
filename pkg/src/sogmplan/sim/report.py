"""Figures for a benchmark output directory."""
from __future__ import annotations

import math
import os

import numpy as np

from .bench import read_trials
from .trial import OUTCOMES, STAGES


def _cells(rows):
    keys = []
    for r in rows:
        k = (r["task"], r["env"], int(r["obstacles"]))
        if k not in keys:
            keys.append(k)
    return keys


def _label(k) -> str:
    return f"{k[0]}\n{k[1]} {k[2]}"


def render(out_dir, fmt: str = "png") -> list[str]:
    """Draw outcome rates, flight times and stage timings from ``out_dir``.

    Reads ``trials.csv`` (and ``cycles.csv`` when present) and writes the
    figures next to them.

    Returns:
        Paths of the written files.
    """
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    rows = read_trials(os.path.join(out_dir, "trials.csv"))
    cells = _cells(rows)
    written = []

    fig, ax = plt.subplots(figsize=(max(4, 1.2 * len(cells)), 3.5))
    bottom = np.zeros(len(cells))
    for o in OUTCOMES:
        frac = np.array([np.mean([r["outcome"] == o for r in rows if (r["task"], r["env"], int(r["obstacles"])) == k])
                         for k in cells])
        ax.bar(range(len(cells)), frac, bottom=bottom, label=o)
        bottom += frac
    ax.set_xticks(range(len(cells)), [_label(k) for k in cells], fontsize=7)
    ax.set_ylabel("fraction of trials")
    ax.set_ylim(0, 1)
    ax.legend(fontsize=7, loc="lower right")
    fig.tight_layout()
    written.append(os.path.join(out_dir, f"outcomes.{fmt}"))
    fig.savefig(written[-1])
    plt.close(fig)

    fig, ax = plt.subplots(figsize=(max(4, 1.2 * len(cells)), 3.5))
    data = []
    for k in cells:
        v = [float(x) for r in rows if (r["task"], r["env"], int(r["obstacles"])) == k and r["outcome"] == "success"
             for x in r["flight_times"].split(";")]
        data.append([x for x in v if not math.isnan(x)] or [math.nan])
    ax.boxplot(data)
    ax.set_xticks(range(1, len(cells) + 1), [_label(k) for k in cells], fontsize=7)
    ax.set_ylabel("flight time [s]")
    fig.tight_layout()
    written.append(os.path.join(out_dir, f"flight_time.{fmt}"))
    fig.savefig(written[-1])
    plt.close(fig)

    cyc_path = os.path.join(out_dir, "cycles.csv")
    if os.path.exists(cyc_path):
        import csv

        with open(cyc_path, newline="") as fh:
            cyc = list(csv.DictReader(fh))
        if cyc:
            fig, ax = plt.subplots(figsize=(5, 3.5))
            ax.boxplot([[float(r[s]) for r in cyc] for s in STAGES], showfliers=False)
            ax.set_xticks(range(1, len(STAGES) + 1), STAGES, fontsize=8)
            ax.set_ylabel("time per cycle [ms]")
            fig.tight_layout()
            written.append(os.path.join(out_dir, f"stage_timing.{fmt}"))
            fig.savefig(written[-1])
            plt.close(fig)
    return written
