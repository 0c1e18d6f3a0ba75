"""Kinodynamic A* over a spatiotemporal occupancy map.

Edges are constant-acceleration double-integrator primitives lasting one
temporal frame, so step ``k`` of a path lives in frame ``k`` of the map.
Edge cost is ``(|u|^2 + rho) * dt``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import _kernels as K
from .sogm import Sogm, Sphere, is_state_free


class SearchError(RuntimeError):
    pass


class InfeasibleStartError(SearchError):
    pass


class SearchBudgetError(SearchError):
    def __init__(self, msg, partial: "PathResult"):
        super().__init__(msg)
        self.partial = partial


@dataclass
class RobotState:
    p: np.ndarray
    v: np.ndarray = field(default_factory=lambda: np.zeros(3))

    def __post_init__(self):
        self.p = np.asarray(self.p, dtype=float).reshape(3)
        self.v = np.asarray(self.v, dtype=float).reshape(3)


@dataclass
class MotionPrimitive:
    start: RobotState
    u: np.ndarray
    duration: float

    def at(self, t) -> tuple[np.ndarray, np.ndarray]:
        t = np.asarray(t, dtype=float)[..., None]
        p = self.start.p + self.start.v * t + 0.5 * self.u * t**2
        v = self.start.v + self.u * t
        return p, v

    def end(self) -> RobotState:
        p, v = self.at(self.duration)
        return RobotState(p, v)

    def cost(self, rho: float) -> float:
        return (float(self.u @ self.u) + rho) * self.duration


@dataclass
class SearchParams:
    samples_per_axis: tuple = (3, 3, 3)
    v_max: float = 2.0
    a_max: float = 6.0
    rho: float = 1.0
    goal_tol: float = 0.3
    max_expansions: int = 20000
    heuristic_weight: float = 1.0
    prune: bool = True
    pos_bin: float | None = None  # defaults to the map resolution
    vel_bin: float | None = None  # defaults to v_max / 4
    max_steps: int | None = None  # defaults to the map's frame count
    near_steps: int = 3  # leading steps checked exactly when a near radius is given

    def controls(self) -> np.ndarray:
        return control_grid(self.a_max, self.samples_per_axis)


@dataclass
class PathResult:
    states: list
    controls: list
    cost: float
    reached_goal: bool
    dt: float
    t_start: float = 0.0
    expansions: int = 0

    @property
    def steps(self) -> int:
        return len(self.controls)

    def primitives(self) -> list[MotionPrimitive]:
        return [MotionPrimitive(s, u, self.dt) for s, u in zip(self.states, self.controls)]

    def dump(self, path) -> None:
        """Write rows of ``t px py pz vx vy vz ux uy uz``; the last row has zero control."""
        rows = []
        for k, s in enumerate(self.states):
            u = self.controls[k] if k < len(self.controls) else np.zeros(3)
            rows.append([self.t_start + k * self.dt, *s.p, *s.v, *u])
        np.savetxt(path, np.array(rows), header="t px py pz vx vy vz ux uy uz", fmt="%.9g")


def control_grid(a_max: float, samples_per_axis) -> np.ndarray:
    """All control tuples of a per-axis uniform grid over [-a_max, a_max]."""
    if isinstance(samples_per_axis, int):
        samples_per_axis = (samples_per_axis,) * 3
    axes = [np.array([0.0]) if n == 1 else np.linspace(-a_max, a_max, n) for n in samples_per_axis]
    grid = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, 3)
    return grid


def expand(state: RobotState, controls: np.ndarray, dt: float, v_max: float) -> list:
    """Successors of ``state`` under each control, dropping those above ``v_max``."""
    out = []
    for u in np.atleast_2d(controls):
        prim = MotionPrimitive(state, np.asarray(u, dtype=float), dt)
        succ = prim.end()
        if np.linalg.norm(succ.v) <= v_max + 1e-9:
            out.append((prim, succ))
    return out


# ---------------------------------------------------------------------------
# cost-to-go


def optimal_control_cost(p, v, p_goal, v_goal, tau):
    """Minimum of the integrated squared control to reach (p_goal, v_goal) in ``tau``.

    Summed over axes of the double integrator; inputs broadcast.
    """
    tau = np.asarray(tau, dtype=float)
    dp = np.asarray(p_goal) - np.asarray(p) - np.asarray(v) * tau[..., None]
    dv = np.asarray(v_goal) - np.asarray(v)
    t = tau[..., None]
    per_axis = 12.0 * dp**2 / t**3 - 12.0 * dp * dv / t**2 + 4.0 * dv**2 / t
    return per_axis.sum(axis=-1)


def free_velocity_cost(p, v, p_goal, tau, tol: float = 0.0):
    """Minimum control effort to end within ``tol`` of ``p_goal`` after ``tau``, any velocity."""
    tau = np.asarray(tau, dtype=float)
    gap = np.linalg.norm(np.asarray(p_goal) - np.asarray(p) - np.asarray(v) * tau[..., None], axis=-1)
    gap = np.maximum(gap - tol, 0.0)
    return 3.0 * gap**2 / tau**3


def heuristic_batch(P, V, goal: RobotState, rho: float, dt: float, tol: float = 0.0,
                    match_velocity: bool = False) -> np.ndarray:
    """Lower bound on the remaining path cost for each row of (P, V).

    The arrival time is minimized over multiples of ``dt``, which are exactly
    the durations a primitive path can have; the search is extended until
    the time term alone exceeds the best value found.
    """
    P = np.atleast_2d(P)
    V = np.atleast_2d(V)
    n = P.shape[0]
    out = np.zeros(n)
    if match_velocity:
        done = np.all(np.abs(P - goal.p) <= tol + 1e-12, axis=1) & np.all(np.abs(V - goal.v) < 1e-12, axis=1)
    else:
        done = np.linalg.norm(P - goal.p, axis=1) <= tol
    todo = np.flatnonzero(~done)
    if todo.size == 0:
        return out
    P, V = P[todo], V[todo]
    best = np.full(todo.size, np.inf)
    k0 = 1
    span = 64
    while True:
        taus = dt * np.arange(k0, k0 + span)
        if match_velocity:
            J = optimal_control_cost(P[:, None, :], V[:, None, :], goal.p, goal.v, taus[None, :])
        else:
            J = free_velocity_cost(P[:, None, :], V[:, None, :], goal.p, taus[None, :], tol)
        best = np.minimum(best, (J + rho * taus[None, :]).min(axis=1))
        # beyond k0 + span the time term alone is at least this much
        if np.all(rho * dt * (k0 + span) >= best):
            break
        k0 += span
        span *= 2
    out[todo] = best
    return out


def heuristic(state: RobotState, goal: RobotState, rho: float, dt: float, tol: float = 0.0,
              match_velocity: bool = False) -> float:
    if rho <= 0:
        raise ValueError("time weight must be positive")
    return float(heuristic_batch(state.p, state.v, goal, rho, dt, tol, match_velocity)[0])


# ---------------------------------------------------------------------------
# collision checks


def _sample_count(v0_norm: float, a_norm: float, dt: float, r_s: float) -> int:
    length = v0_norm * dt + 0.5 * a_norm * dt * dt
    return max(1, int(math.ceil(length / (0.5 * r_s))))


def primitive_collides(sogm: Sogm, primitive: MotionPrimitive, robot_shape, frame: int | None = None) -> bool:
    """True if the robot shape swept along ``primitive`` touches occupied cells.

    Positions are sampled at spatial spacing at most ``r_s / 2``.  Without an
    explicit frame the primitive is checked against the frame covering its
    start time relative to ``sogm.t0`` (start at t0 -> frame 0).  Spheres use
    the same cell-conservative test as ``search``.
    """
    k = 0 if frame is None else frame
    k = min(k, sogm.T - 1)
    n = _sample_count(float(np.linalg.norm(primitive.start.v)), float(np.linalg.norm(primitive.u)),
                      primitive.duration, sogm.r_s)
    pts, _ = primitive.at(np.linspace(0.0, primitive.duration, n + 1))
    if isinstance(robot_shape, Sphere):
        return bool(K.points_cell_blocked(sogm.frames[k], sogm.origin, sogm.r_s, pts, robot_shape.radius).any())
    return any(not is_state_free(sogm, k, p, robot_shape) for p in pts)


# ---------------------------------------------------------------------------
# A*


def _backtrack(P, V, parent, control, U, idx):
    states, controls = [], []
    while idx >= 0:
        states.append(RobotState(P[idx].copy(), V[idx].copy()))
        if control[idx] >= 0:
            controls.append(U[control[idx]].copy())
        idx = parent[idx]
    return states[::-1], controls[::-1]


def search(sogm: Sogm, start: RobotState, goal: RobotState, params: SearchParams | None = None,
           robot_radius: float = 0.0, bounds=None, t_start: float | None = None,
           near_radius: float | None = None) -> PathResult:
    """Minimum-cost primitive sequence from ``start`` to within ``goal_tol`` of ``goal``.

    A sampled position is in collision when the cell containing it is within
    ``robot_radius + sqrt(3)/2 * r_s`` of an occupied cell center (center to
    center), so accepted positions keep more than ``robot_radius`` from every
    occupied center.

    With ``near_radius`` the start and the first ``near_steps`` primitives
    instead only need every sample at least ``near_radius`` from each
    occupied cell taken as a solid cube.  A robot that has been following a
    trajectory with that clearance can then always restart the search from
    its current state, even inside the wider conservative margin.

    If no goal state is found within ``max_steps`` primitives, the path to the
    first horizon-depth node taken off the open list (lowest f) is returned
    with ``reached_goal=False``.

    Args:
        sogm: occupancy map; step k is checked against the frame covering it.
        robot_radius: sphere radius inflating every sampled position.
        bounds: (lo, hi) box every sampled position must stay in; defaults to
            the map box.
        t_start: time of ``start``; defaults to ``sogm.t0``.
    """
    params = params or SearchParams()
    dt = sogm.r_tau
    t_start = sogm.t0 if t_start is None else t_start
    max_steps = params.max_steps or sogm.T
    lo, hi = (sogm.lower, sogm.upper) if bounds is None else bounds
    U = params.controls()
    frame_of_step = np.array([sogm.frame_index(t_start + (k + 0.5) * dt) for k in range(max_steps)],
                             dtype=np.int64)
    memo = np.zeros(sogm.frames.shape, dtype=np.uint8)
    k0 = frame_of_step[0]
    if near_radius is None:
        blocked = K.cell_blocked(sogm.frames[k0], memo[k0], sogm.origin, sogm.r_s, start.p, float(robot_radius))
    else:
        blocked = K.cube_blocked(sogm.frames[k0], sogm.origin, sogm.r_s, start.p, float(near_radius))
    if blocked:
        raise InfeasibleStartError("start state is in collision")
    if params.prune:
        pos_bin = params.pos_bin or sogm.r_s
        vel_bin = params.vel_bin or params.v_max / 4.0
    else:
        pos_bin = vel_bin = 1e-9

    status, idx, P, V, G, _, parent, control, _, expansions = K.astar(
        sogm.frames, memo, frame_of_step, sogm.origin, sogm.r_s, start.p, start.v, goal.p, U, dt,
        params.v_max, params.rho, params.goal_tol, params.heuristic_weight,
        np.asarray(lo, dtype=float), np.asarray(hi, dtype=float), float(robot_radius),
        int(params.max_expansions), int(max_steps), pos_bin, vel_bin,
        float(near_radius or 0.0), int(params.near_steps if near_radius is not None else 0),
    )
    states, controls = _backtrack(P, V, parent, control, U, idx)
    result = PathResult(states, controls, float(G[idx]), status == 0, dt, t_start, int(expansions))
    if status == 2:
        raise SearchBudgetError(f"expansion budget {params.max_expansions} exhausted", result)
    if status == 3:
        raise SearchError("open set exhausted without reaching goal or horizon")
    return result
