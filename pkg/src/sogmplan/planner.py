"""One agent's planning cycle: map snapshot, search, corridors, QP, deconfliction.

Every stage failure falls back to a braking trajectory; nothing is raised
to the caller.  A log line per cycle goes to the ``sogmplan.planner`` logger.
"""
from __future__ import annotations

import json
import logging
import time
from dataclasses import dataclass, field

import numpy as np

from . import _kernels as K
from .bezier import BezierSpline, constant_spline, piece_from_polynomial
from .corridor import CorridorError, Polytope, check_sequence, corridors_along_path
from .search import PathResult, RobotState, SearchBudgetError, SearchError, SearchParams, search
from .sogm import Sogm, Sphere, TrajectoryMessage, project_trajectory
from .trajopt import BoundaryState, Limits, OptimizationError, solve_trajectory

log = logging.getLogger("sogmplan.planner")

RASTER_INFLATE = 0.5 * np.sqrt(3.0) * 0.1  # half cell diagonal at 0.1 m cells
SETTLE_STEPS = 5  # frames held at a goal-reaching path's end when the QP cannot track it


@dataclass
class CorridorParams:
    max_iters: int = 2
    prune_radius: float = 1.5
    max_planes: int = 60
    mvie_tol: float = 1e-2


@dataclass
class AgentConfig:
    agent_id: int
    radius: float = 0.25
    v_max: float = 2.0
    a_max: float = 6.0
    replan_period: float = 0.1
    sensing_radius: float = 5.0
    horizon: float = 2.0
    r_s: float = 0.1
    r_tau: float = 0.1
    search_margin: float = 0.1  # extra clearance used by the search only
    conflict_margin: float = 0.2  # extra inflation of a neighbor on replan
    search: SearchParams = field(default_factory=lambda: SearchParams(rho=5.0, heuristic_weight=3.0,
                                                                      max_expansions=3000))
    corridor: CorridorParams = field(default_factory=CorridorParams)
    qp_method: str = "clarabel"
    qp_tol: float = 1e-6
    degree: int = 5

    def __post_init__(self):
        if self.replan_period < self.r_tau - 1e-12:
            raise ValueError("replan period shorter than the map's temporal resolution")
        T = self.horizon / self.r_tau
        if abs(T - round(T)) > 1e-9:
            raise ValueError("horizon must be a whole number of frames")
        self.search.v_max = self.v_max
        self.search.a_max = self.a_max

    @property
    def frames(self) -> int:
        return int(round(self.horizon / self.r_tau))

    @property
    def shape(self) -> Sphere:
        return Sphere(self.radius)

    @property
    def limits(self) -> Limits:
        return Limits(self.v_max, self.a_max)


@dataclass
class PlanOutcome:
    status: str  # committed | replanned_then_committed | stopped
    spline: BezierSpline
    timings: dict
    deconflict_attempts: int = 0
    reason: str = ""
    reached_goal: bool = False

    @property
    def committed(self) -> bool:
        return self.status != "stopped"


# ---------------------------------------------------------------------------
# fallbacks and deconfliction


def stop_trajectory(state: RobotState, a_max: float, t_start: float = 0.0, hold: float = 0.0,
                    degree: int = 5) -> BezierSpline:
    """Brake to rest along the current heading, then hover.

    The velocity follows ``v0 * (1 - 3s^2 + 2s^3)`` over ``T = 1.5 |v0| / a_max``,
    whose peak deceleration is exactly ``a_max``.  A hover piece of ``hold``
    seconds is appended when ``hold > 0``.  A state at rest gives a
    constant hold of ``max(hold, 0.1)`` seconds.
    """
    v0 = np.asarray(state.v, dtype=float)
    speed = float(np.linalg.norm(v0))
    if speed < 1e-12:
        return constant_spline(state.p, t_start, max(hold, 0.1), degree=degree)
    T = 1.5 * speed / a_max
    # p = p0 + T v0 (s - s^3 + s^4 / 2) with s = t / T
    coeffs = np.zeros((5, 3))
    coeffs[0] = state.p
    coeffs[1] = v0
    coeffs[3] = -v0 / T**2
    coeffs[4] = 0.5 * v0 / T**3
    pieces = [piece_from_polynomial(coeffs, T, degree)]
    if hold > 0:
        end = state.p + 0.5 * T * v0
        pieces += constant_spline(end, t_start + T, hold, degree=degree).pieces
    return BezierSpline(pieces, t_start)


def _windows(spline: BezierSpline) -> np.ndarray:
    k = spline.knots
    return np.stack([k[:-1], k[1:]], axis=1)


def deconflict_check(mine: BezierSpline, other: TrajectoryMessage, my_radius: float) -> bool:
    """True when every time-overlapping piece pair has control-point hulls
    farther apart than the two radii.

    Only a certified lower bound on each hull distance is compared, so a
    ``True`` is never caused by round-off.  No overlap at all is vacuously
    ``True``.
    """
    need = my_radius + other.occupancy_shape.extent()
    wa, wb = _windows(mine), _windows(other.spline)
    for i, (a0, a1) in enumerate(wa):
        P = mine.pieces[i].control_points
        plo, phi = P.min(axis=0), P.max(axis=0)
        for j in np.flatnonzero((wb[:, 0] < a1) & (wb[:, 1] > a0)):
            Q = other.spline.pieces[j].control_points
            gap = np.maximum(Q.min(axis=0) - phi, plo - Q.max(axis=0))
            if np.linalg.norm(np.maximum(gap, 0.0)) > need:
                continue
            _, lower = K.hull_distance(P, Q)
            if not lower > need:
                return False
    return True


# ---------------------------------------------------------------------------
# the cycle


def _snapshot(local_sogm: Sogm, inbox, own_id: int, extra: dict | None = None) -> Sogm:
    sogm = local_sogm.copy()
    for msg in inbox:
        if msg.agent_id == own_id:
            continue
        inflate = RASTER_INFLATE + (extra or {}).get(msg.agent_id, 0.0)
        project_trajectory(sogm, msg, inflate=inflate)
    return sogm


def _search_box(sogm: Sogm, radius: float):
    lo = sogm.lower + radius + 1e-6
    hi = sogm.upper - radius - 1e-6
    return lo, hi


def _attempt(config: AgentConfig, state: BoundaryState, goal, sogm: Sogm, t_now: float, timings: dict,
             trace: dict | None = None):
    """search -> corridors -> QP; returns (spline, reached_goal) or raises."""
    r = config.radius
    t = time.perf_counter()
    try:
        try:
            path = search(sogm, RobotState(state.p, state.v), RobotState(goal), config.search,
                          robot_radius=r + config.search_margin, bounds=_search_box(sogm, r),
                          t_start=t_now, near_radius=r)
        except SearchBudgetError as e:
            path = e.partial
    finally:
        timings["search"] += 1e3 * (time.perf_counter() - t)
    if trace is not None:
        trace["path"], trace["corridors"] = path, []
    if path.steps == 0:
        raise SearchError("empty path")

    t = time.perf_counter()
    try:
        box = Polytope.box(sogm.lower, sogm.upper)
        cp = config.corridor
        corridors = corridors_along_path(sogm, path, r, box, cp.max_iters, cp.prune_radius, cp.max_planes,
                                         mvie_tol=cp.mvie_tol)
        if trace is not None:
            trace["corridors"] = corridors
        report = check_sequence(corridors, path)
        if not report.ok:
            raise CorridorError(f"corridor sequence broken at {report.failing}")
    finally:
        timings["corridor"] += 1e3 * (time.perf_counter() - t)

    t = time.perf_counter()
    try:
        end = path.states[-1]
        try:
            spline, _ = solve_trajectory(corridors, state, BoundaryState(end.p, end.v, np.zeros(3)),
                                         config.limits, config.degree, config.qp_method, config.qp_tol)
        except OptimizationError as e:
            if e.result is None or e.result.status != "infeasible":
                raise
            # the search's end velocity may not be reachable from the current acceleration
            try:
                spline, _ = solve_trajectory(corridors, state, BoundaryState(end.p, None, None),
                                             config.limits, config.degree, config.qp_method, config.qp_tol)
            except OptimizationError:
                if not path.reached_goal:
                    raise
                spline = _settle(config, state, path, corridors, sogm, box)
    finally:
        timings["qp"] += 1e3 * (time.perf_counter() - t)
    return spline, path.reached_goal


def _settle(config: AgentConfig, state: BoundaryState, path, corridors: list, sogm: Sogm, box: Polytope):
    """Reach the end of a short goal path and stop there, using extra held frames.

    Near the goal the search may return one or two full-acceleration
    primitives, which a trajectory starting from the current acceleration
    cannot follow in the same time.  Holding the end point for up to
    SETTLE_STEPS more frames (each with its own corridor) gives the QP room
    to arrive at rest.
    """
    extra = min(SETTLE_STEPS, sogm.T - path.steps)
    if extra <= 0:
        raise OptimizationError("no frames left to settle at the goal")
    end = RobotState(path.states[-1].p)
    hold = PathResult([end] * (extra + 1), [np.zeros(3)] * extra, 0.0, True, path.dt,
                      path.t_start + path.steps * path.dt)
    cp = config.corridor
    try:
        more = corridors_along_path(sogm, hold, config.radius, box, cp.max_iters, cp.prune_radius,
                                    cp.max_planes, mvie_tol=cp.mvie_tol)
    except CorridorError as e:
        raise OptimizationError(f"goal hold blocked: {e}") from None
    seq = corridors + more
    if not check_sequence(seq).ok:
        raise OptimizationError("goal hold corridors disconnected")
    spline, _ = solve_trajectory(seq, state, BoundaryState(end.p), config.limits, config.degree,
                                 config.qp_method, config.qp_tol)
    return spline


def _conflicts(spline, inbox, config) -> list:
    return [m for m in inbox if m.agent_id != config.agent_id and not deconflict_check(spline, m, config.radius)]


def _boundary(state) -> BoundaryState:
    if isinstance(state, BoundaryState):
        return state
    return BoundaryState(state.p, state.v, getattr(state, "a", np.zeros(3)))


def _run(config, state, goal, local_sogm, inbox, t_now, extra, timings, attempts, trace=None):
    t = time.perf_counter()
    sogm = _snapshot(local_sogm, inbox, config.agent_id, extra)
    timings["map"] += 1e3 * (time.perf_counter() - t)
    if trace is not None:
        trace["sogm"] = sogm
    spline, reached = _attempt(config, state, goal, sogm, t_now, timings, trace)
    t = time.perf_counter()
    bad = _conflicts(spline, inbox, config)
    timings["deconflict"] += 1e3 * (time.perf_counter() - t)
    return spline, reached, bad


def _new_timings() -> dict:
    return {"search": 0.0, "corridor": 0.0, "qp": 0.0, "map": 0.0, "deconflict": 0.0}


def _finish(config, state, t_now, timings, t0, status, spline=None, attempts=0, reason="", reached=False,
            cycle=None):
    if spline is None:
        spline = stop_trajectory(RobotState(state.p, state.v), config.a_max, t_now, hold=config.horizon,
                                 degree=config.degree)
    timings["total"] = 1e3 * (time.perf_counter() - t0)
    out = PlanOutcome(status, spline, timings, attempts, reason, reached)
    if log.isEnabledFor(logging.INFO):
        log.info(json.dumps({
            "agent_id": config.agent_id, "cycle": cycle, "status": status,
            "timings_ms": {k: round(v, 3) for k, v in timings.items()},
            "conflicts": attempts, "reason": reason,
        }))
    return out


def plan_cycle(config: AgentConfig, state, goal, local_sogm: Sogm, inbox: list, t_now: float | None = None,
               cycle: int | None = None, trace: dict | None = None) -> PlanOutcome:
    """Plan one receding-horizon step toward ``goal``.

    Args:
        config: agent parameters.
        state: current RobotState or BoundaryState (acceleration is kept).
        goal: global goal position; the search may stop short of it, in which
            case the optimizer ends at the partial path's final state.
        local_sogm: obstacle map covering [t_now, t_now + horizon].
        inbox: latest trajectories of the other agents.
        t_now: current time, defaults to ``local_sogm.t0``.
        trace: if given, filled with the planning map (``sogm``), the search
            ``path`` and the ``corridors`` of the last attempt.

    Returns:
        PlanOutcome.  ``stopped`` carries a braking trajectory.
    """
    t0 = time.perf_counter()
    t_now = local_sogm.t0 if t_now is None else t_now
    state = _boundary(state)
    goal = np.asarray(goal, dtype=float)
    timings = _new_timings()
    try:
        spline, reached, bad = _run(config, state, goal, local_sogm, inbox, t_now, None, timings, 0, trace)
    except (SearchError, CorridorError, OptimizationError, ValueError) as e:
        return _finish(config, state, t_now, timings, t0, "stopped", reason=type(e).__name__, cycle=cycle)
    if not bad:
        return _finish(config, state, t_now, timings, t0, "committed", spline, 0, reached=reached, cycle=cycle)
    out = replan_after_conflict(config, state, goal, local_sogm, inbox, bad, t_now, _timings=timings, trace=trace)
    out.timings["total"] = 1e3 * (time.perf_counter() - t0)
    return out


def replan_after_conflict(config: AgentConfig, state, goal, local_sogm: Sogm, inbox: list, failed_against,
                          t_now: float | None = None, _timings: dict | None = None,
                          trace: dict | None = None) -> PlanOutcome:
    """Rerun the pipeline once with the conflicting neighbors inflated.

    ``failed_against`` is a message or a list of messages.  Each is projected
    again with ``conflict_margin`` of extra inflation (it is added to the
    inbox if missing).  A second conflict or any stage failure gives
    ``stopped``.
    """
    t0 = time.perf_counter()
    t_now = local_sogm.t0 if t_now is None else t_now
    state = _boundary(state)
    goal = np.asarray(goal, dtype=float)
    timings = _timings if _timings is not None else _new_timings()
    failed = failed_against if isinstance(failed_against, (list, tuple)) else [failed_against]
    inbox = list(inbox)
    known = {id(m) for m in inbox}
    inbox += [m for m in failed if id(m) not in known]
    extra = {m.agent_id: config.conflict_margin for m in failed}
    try:
        spline, reached, bad = _run(config, state, goal, local_sogm, inbox, t_now, extra, timings, 1, trace)
    except (SearchError, CorridorError, OptimizationError, ValueError) as e:
        return _finish(config, state, t_now, timings, t0, "stopped", attempts=1, reason=type(e).__name__)
    if bad:
        return _finish(config, state, t_now, timings, t0, "stopped", attempts=1, reason="conflict")
    return _finish(config, state, t_now, timings, t0, "replanned_then_committed", spline, 1, reached=reached)
