import json
import logging

import numpy as np
import pytest
from hypothesis import given, strategies as st

from sogmplan.bezier import BezierPiece, BezierSpline, constant_spline, piece_from_polynomial
from sogmplan.planner import (
    AgentConfig, deconflict_check, plan_cycle, replan_after_conflict, stop_trajectory,
)
from sogmplan.search import RobotState
from sogmplan.sogm import Sphere, TrajectoryMessage, new_sogm
from sogmplan.trajopt import BoundaryState

from conftest import random_spline

seeds = st.integers(0, 2**31 - 1)


def dense_min_distance(a, b, n=4000):
    t0, t1 = max(a.t_start, b.t_start), min(a.t_end, b.t_end)
    if t1 <= t0:
        return np.inf
    t = np.linspace(t0, t1, n)
    return float(np.linalg.norm(a.sample(t) - b.sample(t), axis=1).min())


def local_map(t0=0.0, T=20):
    return new_sogm([0, 0, 0], (60, 60, 30), 0.1, 0.1, T, t0)


# -- braking ------------------------------------------------------------------


@given(st.floats(0.1, 3.0), st.floats(0, 2 * np.pi), st.floats(1.0, 10.0))
def test_stop_trajectory_profile(speed, heading, a_max):
    v0 = speed * np.array([np.cos(heading), np.sin(heading), 0.0])
    s = stop_trajectory(RobotState([1, 2, 3], v0), a_max, t_start=4.0, hold=1.0)
    T = s.pieces[0].duration
    assert T == pytest.approx(1.5 * speed / a_max)
    t = np.linspace(4.0, 4.0 + T, 801)
    acc = np.linalg.norm(s.sample(t, 2), axis=1)
    assert acc.max() <= a_max * (1 + 1e-9)
    assert acc.max() >= a_max * (1 - 1e-4)
    assert np.allclose(s.eval(4.0, 1), v0)
    assert np.allclose(s.eval(4.0 + T, 1), 0, atol=1e-9)
    assert np.allclose(s.eval(4.0 + T, 2), 0, atol=1e-9)
    stop = np.linalg.norm(s.eval(4.0 + T) - [1, 2, 3])
    assert stop == pytest.approx(0.75 * speed**2 / a_max)
    assert s.t_end == pytest.approx(5.0 + T)
    assert np.allclose(s.eval(s.t_end), s.eval(4.0 + T))


def test_stop_from_rest():
    s = stop_trajectory(RobotState([1, 1, 1]), 6.0, 2.0)
    assert s.t_end == pytest.approx(2.1) and np.allclose(s.eval(2.05), [1, 1, 1])


# -- deconfliction ------------------------------------------------------------


def _pair(rng):
    a = random_spline(rng, t_start=0.0, scale=0.5)
    b = random_spline(rng, t_start=float(rng.uniform(-0.5, 0.5)), scale=0.5)
    shift = rng.uniform(-2.5, 2.5, 3)
    b = BezierSpline([BezierPiece(p.control_points + shift, p.duration) for p in b.pieces], b.t_start)
    return a, b


@given(seeds)
def test_deconflict_check_is_sound(seed):
    rng = np.random.default_rng(seed)
    a, b = _pair(rng)
    ra, rb = rng.uniform(0.1, 0.4, 2)
    if deconflict_check(a, TrajectoryMessage(1, 0.0, b, Sphere(rb)), ra):
        assert dense_min_distance(a, b) >= ra + rb - 1e-6


def test_deconflict_obvious_cases():
    a = constant_spline([0, 0, 0], 0.0, 1.0)
    far = TrajectoryMessage(1, 0.0, constant_spline([3, 0, 0], 0.0, 1.0), Sphere(0.25))
    near = TrajectoryMessage(1, 0.0, constant_spline([0.4, 0, 0], 0.0, 1.0), Sphere(0.25))
    later = TrajectoryMessage(1, 0.0, constant_spline([0, 0, 0], 2.0, 1.0), Sphere(0.25))
    assert deconflict_check(a, far, 0.25)
    assert not deconflict_check(a, near, 0.25)
    assert deconflict_check(a, later, 0.25)  # no time overlap


def test_deconflict_crossing_paths_in_time():
    # two agents crossing the same point half a second apart
    pa = piece_from_polynomial(np.array([[-1, 0, 1], [1, 0, 0]]), 2.0, 5)
    pb = piece_from_polynomial(np.array([[0, -1.5, 1], [0, 1, 0]]), 2.0, 5)
    a = BezierSpline([pa]).resample_pieces(0.1)
    b = BezierSpline([pb]).resample_pieces(0.1)
    assert deconflict_check(a, TrajectoryMessage(1, 0, b, Sphere(0.1)), 0.1)
    assert not deconflict_check(a, TrajectoryMessage(1, 0, b, Sphere(0.3)), 0.3)


# -- planning cycle -----------------------------------------------------------


def test_config_validation():
    with pytest.raises(ValueError):
        AgentConfig(0, replan_period=0.05)
    with pytest.raises(ValueError):
        AgentConfig(0, horizon=2.05)
    c = AgentConfig(0, v_max=1.5)
    assert c.frames == 20 and c.search.v_max == 1.5 and c.shape == Sphere(0.25)


def test_plan_in_free_space(caplog):
    cfg = AgentConfig(0)
    m = local_map()
    trace = {}
    with caplog.at_level(logging.INFO, logger="sogmplan.planner"):
        out = plan_cycle(cfg, RobotState([1, 3, 1.5]), [5.5, 3, 1.5], m, [], cycle=7, trace=trace)
    assert out.status == "committed" and out.committed
    s = out.spline
    assert np.allclose(s.eval(0.0), [1, 3, 1.5], atol=1e-6)
    assert np.allclose(s.eval(0.0, 1), 0, atol=1e-5)
    assert s.eval(s.t_end)[0] > 1.5
    assert set(out.timings) >= {"search", "corridor", "qp", "map", "deconflict", "total"}
    assert out.timings["total"] >= out.timings["qp"]
    assert len(trace["corridors"]) == trace["path"].steps == len(s.pieces)
    line = json.loads(caplog.records[-1].message)
    assert line["cycle"] == 7 and line["status"] == "committed"
    t = np.linspace(0, s.t_end, 200)
    assert np.linalg.norm(s.sample(t, 1), axis=1).max() <= np.sqrt(3) * cfg.v_max + 1e-6


def test_plan_reaches_goal_flag():
    out = plan_cycle(AgentConfig(0), RobotState([2, 3, 1.5]), [2.5, 3, 1.5], local_map(), [])
    assert out.committed and out.reached_goal
    assert np.linalg.norm(out.spline.eval(out.spline.t_end) - [2.5, 3, 1.5]) <= 0.3 + 1e-6


def test_blocked_start_brakes():
    m = local_map()
    m.frames[:, 5:15, 25:35, 10:20] = True
    state = BoundaryState([1, 3, 1.5], [1, 0, 0], np.zeros(3))
    out = plan_cycle(AgentConfig(0), state, [5, 3, 1.5], m, [], t_now=0.0)
    assert out.status == "stopped" and not out.committed
    assert out.reason in {"InfeasibleStartError", "SearchError"}
    assert np.allclose(out.spline.eval(0.0, 1), [1, 0, 0])
    assert np.allclose(out.spline.eval(out.spline.pieces[0].duration, 1), 0, atol=1e-9)


def test_neighbor_is_avoided_or_braked():
    cfg = AgentConfig(0)
    m = local_map()
    other = TrajectoryMessage(1, 0.0, constant_spline([3.0, 3.0, 1.5], 0.0, 2.0), Sphere(0.25))
    out = plan_cycle(cfg, RobotState([1, 3, 1.5]), [5, 3, 1.5], m, [other])
    if out.committed:
        assert deconflict_check(out.spline, other, cfg.radius)
        assert dense_min_distance(out.spline, other.spline) >= 0.5


def test_replan_after_conflict_adds_margin():
    cfg = AgentConfig(0)
    m = local_map()
    other = TrajectoryMessage(1, 0.0, constant_spline([3.0, 3.6, 1.5], 0.0, 2.0), Sphere(0.25))
    out = replan_after_conflict(cfg, RobotState([1, 3, 1.5]), [5, 3, 1.5], m, [], other)
    assert out.deconflict_attempts == 1
    if out.committed:
        assert out.status == "replanned_then_committed"
        assert dense_min_distance(out.spline, other.spline) >= 0.5 + 0.2 - 0.1


def test_short_goal_path_settles_at_rest():
    # 0.31 m from the goal: one full-acceleration step enters the goal region,
    # which no trajectory starting at zero acceleration can follow in 0.1 s
    p, g = np.array([3.0, 3.0, 1.5]), np.array([3.0, 2.873, 1.22])
    out = plan_cycle(AgentConfig(0), BoundaryState(p, np.zeros(3), np.zeros(3)), g, local_map(), [])
    assert out.status == "committed" and out.reached_goal
    s = out.spline
    assert len(s.pieces) > 1
    assert np.linalg.norm(s.eval(s.t_end) - g) <= 0.3
    assert np.allclose(s.eval(s.t_end, 1), 0, atol=1e-6)
