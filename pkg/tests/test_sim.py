import json
import math

import numpy as np
import pytest
import yaml

from sogmplan import cli
from sogmplan.planner import PlanOutcome, stop_trajectory
from sogmplan.search import RobotState
from sogmplan.sim import trial as trial_mod
from sogmplan.sim.bench import (
    CSV_COLUMNS, CYCLE_COLUMNS, BenchConfig, load_spec, outcome_digest, read_trials, run_benchmark,
)
from sogmplan.sim.environment import (
    Environment, EnvironmentConfig, advance, build_local_sogm, generate_environment, obstacle_density,
    sample_density, step_obstacles,
)
from sogmplan.sim.trial import default_agents, run_trial, task_endpoints
from sogmplan.sogm import Column, ObstacleTrack

LO = np.array([-8.0, -8.0, 0.0])
HI = np.array([8.0, 8.0, 4.0])


# -- environment ----------------------------------------------------------------


def test_environment_counts_and_regeneration():
    env = generate_environment(EnvironmentConfig(obstacle_count=21, seed=4))
    tags = [o.shape.tag for o in env.obstacles]
    assert tags.count(Column.tag) == 11 and len(tags) == 21
    assert generate_environment(EnvironmentConfig(obstacle_count=0)).obstacles == []
    pure = generate_environment(EnvironmentConfig(obstacle_count=8, kind="pure_column"))
    assert all(o.shape.tag == Column.tag for o in pure.obstacles)
    a = generate_environment(EnvironmentConfig(obstacle_count=20, seed=11)).to_json()
    b = generate_environment(EnvironmentConfig(obstacle_count=20, seed=11)).to_json()
    c = generate_environment(EnvironmentConfig(obstacle_count=20, seed=12)).to_json()
    assert a == b and a != c
    for o in env.obstacles:
        assert np.all(o.position >= LO) and np.all(o.position <= HI)
        assert o.velocity[2] == 0 and np.linalg.norm(o.velocity) <= 1.0


def test_environment_validation():
    with pytest.raises(ValueError):
        EnvironmentConfig(obstacle_count=-1)
    with pytest.raises(ValueError):
        EnvironmentConfig(kind="forest")
    with pytest.raises(ValueError):
        EnvironmentConfig(hoop_radius=(2.0, 1.0))


def test_keep_out_is_respected():
    pts = ((0.0, 0.0, 1.0), (3.0, 3.0, 1.0))
    env = generate_environment(EnvironmentConfig(obstacle_count=30, seed=2, keep_out=pts))
    for o in env.obstacles:
        assert o.shape.distance(o.position, np.array(pts)).min() > 1.0


def test_density_single_column():
    env = Environment([ObstacleTrack(Column(1.0, 4.0), np.zeros(3), np.zeros(3))], LO, HI)
    assert obstacle_density(env) == pytest.approx(math.pi / 1024)


def test_sampled_density_matches_expectation():
    d = sample_density("pure_column", 10, 4000, seed=1)
    mean_d2 = (1.0**3 - 0.5**3) / (3 * 0.5)
    assert d.mean() == pytest.approx(10 * math.pi / 4 * 4 * mean_d2 / 1024, rel=0.01)


def test_wall_rebound():
    tr = ObstacleTrack(Column(0.5, 4.0), np.array([7.95, 0.0, 2.0]), np.array([1.0, 0.0, 0.0]))
    nxt = advance(tr, 0.1, LO, HI)
    assert nxt.position[0] == pytest.approx(7.95)
    assert nxt.velocity[0] == pytest.approx(-1.0)
    assert np.linalg.norm(nxt.velocity) == pytest.approx(1.0)
    env = step_obstacles(Environment([tr], LO, HI), 0.1)
    assert env.t == pytest.approx(0.1) and env.obstacles[0].position[0] == pytest.approx(7.95)


def test_long_run_stays_inside():
    env = generate_environment(EnvironmentConfig(obstacle_count=10, seed=5))
    for o in env.obstacles:
        p = advance(o, 137.3, LO, HI).position
        assert np.all(p[:2] >= LO[:2] - 1e-9) and np.all(p[:2] <= HI[:2] + 1e-9)


def test_local_map_forecast_and_range():
    moving = ObstacleTrack(Column(0.5, 4.0), np.array([3.0, 0.0, 2.0]), np.array([1.0, 0.0, 0.0]))
    env = Environment([moving], LO, HI)
    m = build_local_sogm(env, [0.0, 0.0, 1.0])
    assert m.frames.shape[0] == 20
    for k in (0, 10, 19):
        x = 3.0 + 0.1 * k + 0.05
        assert m.frames[k][m.world_to_cell([x, 0.0, 1.0])]
        assert not m.frames[k][m.world_to_cell([x - 0.5, 0.0, 1.0])]
    far = ObstacleTrack(Column(0.5, 4.0), np.array([5.4, 0.0, 2.0]), np.zeros(3))
    assert not build_local_sogm(Environment([far], LO, HI), [0.0, 0.0, 1.0]).frames.any()


# -- trials -----------------------------------------------------------------------


@pytest.mark.parametrize("task", ["bilateral", "unilateral", "cross"])
def test_task_endpoints(task):
    s, g = task_endpoints(task, 4)
    assert s.shape == g.shape == (4, 3)
    assert np.all(np.abs(s[:, :2]) <= 7.0 + 1e-9) and np.all(np.abs(g[:, :2]) <= 7.0 + 1e-9)
    assert np.all(np.linalg.norm(s - g, axis=1) > 5.0)
    assert len({tuple(x) for x in s}) == 4
    with pytest.raises(ValueError):
        task_endpoints("spiral")


def test_obstacle_free_trial_succeeds():
    rec = run_trial("bilateral", EnvironmentConfig(obstacle_count=0), default_agents(2), 0, time_limit=30.0)
    assert rec.outcome == "success"
    s, g = task_endpoints("bilateral", 2)
    for ft, a, b in zip(rec.flight_times, s, g):
        assert ft >= (np.linalg.norm(a - b) - 0.3) / 2.0
    assert len(rec.timings["total"]) == rec.cycles


def test_scripted_deadlock(monkeypatch):
    s, _ = task_endpoints("bilateral", 1)
    col = ObstacleTrack(Column(0.8, 4.0), s[0] + [3.0, 0.0, 1.0], np.array([-1.0, 0.0, 0.0]))

    def frozen(cfg, state, goal, sogm, others, t_now=0.0, **kw):
        return PlanOutcome("stopped", stop_trajectory(RobotState(state.p, state.v), cfg.a_max, t_now, cfg.horizon),
                           {}, reason="scripted")

    monkeypatch.setattr(trial_mod, "plan_cycle", frozen)
    monkeypatch.setattr(trial_mod, "generate_environment", lambda cfg: Environment([col], LO, HI))
    rec = run_trial("bilateral", EnvironmentConfig(obstacle_count=1), default_agents(1), 0, time_limit=10.0)
    assert rec.outcome == "deadlock"
    assert rec.events[0][1:] == ("deadlock", 0, "obstacle")
    assert rec.sim_time == pytest.approx(3.0 - 0.4 - 0.25, abs=0.02)


# -- bench and CLI ---------------------------------------------------------------

RUN = ["run", "--task", "bilateral", "--obstacles", "0", "--agents", "1", "--time-limit", "20"]


@pytest.fixture(scope="module")
def bench_dir(tmp_path_factory):
    out = tmp_path_factory.mktemp("bench")
    assert cli.main(RUN + ["--out", str(out)]) == 0
    return out


def test_bench_outputs(bench_dir, capsys):
    rows = read_trials(bench_dir / "trials.csv")
    assert list(rows[0]) == CSV_COLUMNS and len(rows) == 1
    assert rows[0]["outcome"] == "success" and rows[0]["seed"] == "0"
    with open(bench_dir / "cycles.csv") as fh:
        assert fh.readline().strip().split(",") == CYCLE_COLUMNS
    summary = json.loads((bench_dir / "summary.json").read_text())
    assert summary["cells"][0]["rates"]["success"] == 1.0
    for f in ("outcomes.png", "flight_time.png", "stage_timing.png"):
        assert (bench_dir / f).stat().st_size > 0


def test_bench_is_deterministic(bench_dir, tmp_path):
    run_benchmark(BenchConfig("bilateral", "mixed", [0], agents=1, time_limit=20.0), tmp_path)
    assert outcome_digest(tmp_path / "trials.csv") == outcome_digest(bench_dir / "trials.csv")


def test_summary_is_delimited(tmp_path, capsys):
    cli.main(RUN + ["--out", str(tmp_path), "--no-figures", "--time-limit", "0.5"])
    out = capsys.readouterr().out
    body = out.split("---- summary ----\n")[1].split("---- end ----")[0]
    assert body.startswith("bilateral") and "timeout=1.00" in body
    assert "figure" not in out


def test_config_file_and_override(tmp_path, capsys):
    cfg = tmp_path / "c.yaml"
    cfg.write_text(yaml.safe_dump({"task": "cross", "obstacles": "0", "agents": 1, "time-limit": 0.3}))
    cli.main(["run", "--config", str(cfg), "--task", "bilateral", "--out", str(tmp_path / "o"), "--no-figures"])
    rows = read_trials(tmp_path / "o" / "trials.csv")
    assert [r["task"] for r in rows] == ["bilateral"]
    assert float(rows[0]["sim_time"]) == pytest.approx(0.31, abs=0.011)


@pytest.mark.parametrize("argv", [
    ["run", "--task", "zigzag"],
    ["run", "--trials", "0", "--no-figures"],
    ["run", "--drop", "2", "--no-figures"],
    ["density", "--samples", "0"],
    ["report", "--out", "/nonexistent"],
    ["frobnicate"],
])
def test_cli_usage_errors(argv, tmp_path):
    with pytest.raises(SystemExit) as e:
        cli.main(argv + (["--out", str(tmp_path)] if argv[0] == "run" else []))
    assert e.value.code == 2


def test_config_unknown_key(tmp_path):
    cfg = tmp_path / "c.yaml"
    cfg.write_text("speed: 3\n")
    with pytest.raises(SystemExit):
        cli.main(["run", "--config", str(cfg)])


def test_density_command(capsys):
    assert cli.main(["density", "--env", "pure", "--obstacles", "10", "--samples", "50"]) == 0
    assert "pure_column" in capsys.readouterr().out


def test_replay_and_report(bench_dir, tmp_path, capsys):
    spec = load_spec(str(bench_dir / "records.jsonl"))
    assert spec.task == "bilateral" and spec.obstacles == 0
    out = tmp_path / "rp"
    assert cli.main(["replay", "--record", str(bench_dir / "records.jsonl"), "--out", str(out), "--every", "5"]) == 0
    lines = (out / "snapshots.jsonl").read_text().splitlines()
    first = json.loads(lines[0])
    assert {"t", "agent_id", "status", "spline", "path", "corridors", "sogm"} <= set(first)
    assert json.loads((out / "record.json").read_text())["outcome"] == "success"
    assert cli.main(["report", "--out", str(bench_dir)]) == 0
    assert "outcomes.png" in capsys.readouterr().out
