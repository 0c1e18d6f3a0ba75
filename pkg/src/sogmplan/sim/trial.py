"""Swap tasks for a team of agents flying through a moving-obstacle world."""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from ..bezier import constant_spline
from ..comms import BusConfig, broadcast, make_bus, poll
from ..planner import AgentConfig, PlanOutcome, plan_cycle, stop_trajectory
from ..search import RobotState
from ..sogm import TrajectoryMessage
from ..trajopt import BoundaryState
from .environment import EnvironmentConfig, build_local_sogm, clearance, generate_environment, step_obstacles

TASKS = ("bilateral", "unilateral", "cross")
OUTCOMES = ("success", "collision", "deadlock", "timeout")
STAGES = ("search", "corridor", "qp", "map", "deconflict", "total")


def task_endpoints(task: str, n_agents: int = 4, box=(16.0, 16.0, 4.0), margin: float = 1.0,
                   height: float = 1.0) -> tuple[np.ndarray, np.ndarray]:
    """Start and goal positions, one row per agent.

    bilateral: pairs on two lanes swap ends head-on.
    unilateral: all agents fly the same way, each to the mirror of its lane.
    cross: agents on a circle fly to the antipodal point.
    """
    hx, hy = box[0] / 2 - margin, box[1] / 2 - margin
    if task == "bilateral":
        lanes = np.linspace(-hy / 2, hy / 2, max(1, (n_agents + 1) // 2))
        starts, goals = [], []
        for i in range(n_agents):
            y = lanes[i // 2]
            x = -hx if i % 2 == 0 else hx
            starts.append([x, y, height])
            goals.append([-x, y, height])
    elif task == "unilateral":
        ys = np.linspace(-hy, hy, n_agents) if n_agents > 1 else np.zeros(1)
        starts = [[-hx, y, height] for y in ys]
        goals = [[hx, -y, height] for y in ys]
    elif task == "cross":
        r = min(hx, hy)
        ang = math.pi / 4 + 2 * math.pi * np.arange(n_agents) / n_agents
        starts = [[r * math.sqrt(2) * math.cos(a) if n_agents == 4 else r * math.cos(a),
                   r * math.sqrt(2) * math.sin(a) if n_agents == 4 else r * math.sin(a), height] for a in ang]
        starts = np.clip(np.array(starts), [-hx, -hy, 0], [hx, hy, box[2]])
        goals = starts * [-1, -1, 1]
    else:
        raise ValueError(f"unknown task {task!r}")
    return np.asarray(starts, dtype=float), np.asarray(goals, dtype=float)


@dataclass
class TrialRecord:
    task: str
    kind: str
    obstacles: int
    seed: int
    outcome: str
    flight_times: list  # per agent, NaN when the goal was not reached
    sim_time: float
    cycles: int
    stops: int
    conflicts: int
    timings: dict = field(default_factory=dict)  # stage -> list of per-cycle ms
    events: list = field(default_factory=list)

    @property
    def success(self) -> bool:
        return self.outcome == "success"


@dataclass
class _Agent:
    config: AgentConfig
    goal: np.ndarray
    spline: object
    stopped: bool = False
    arrived_at: float = math.nan
    inbox: dict = field(default_factory=dict)

    def state(self, t: float) -> BoundaryState:
        s = self.spline
        if t >= s.t_end:
            return BoundaryState(s.eval_clamped(t), np.zeros(3), np.zeros(3))
        return BoundaryState(s.eval_clamped(t), s.eval_clamped(t, 1), s.eval_clamped(t, 2))

    def position(self, t: float) -> np.ndarray:
        return self.spline.eval_clamped(t)


def run_trial(task: str, env_config: EnvironmentConfig, agent_configs: list, seed: int,
              bus_config: BusConfig | None = None, dt: float = 0.01, time_limit: float = 60.0,
              goal_tol: float = 0.3, snapshot=None) -> TrialRecord:
    """Fly every agent to its goal with receding-horizon replanning.

    The loop advances physics by ``dt`` with perfect tracking.  Agents
    replan in id order every ``replan_period``, each reading its mailbox
    first, so lower ids take priority within a tick.  An agent within
    ``goal_tol`` of its goal is done and leaves the arena.  The trial ends
    at the first collision (agent following a planned trajectory) or
    deadlock (an obstacle reaching a stopped agent), when all agents are
    done, or at ``time_limit``.

    ``snapshot(t, agent, outcome, trace)`` is called after every plan with
    the planner's trace (planning map, search path, corridors).
    """
    n = len(agent_configs)
    starts, goals = task_endpoints(task, n, env_config.box)
    keep = np.vstack([starts, goals])
    env_cfg = EnvironmentConfig(**{**env_config.__dict__, "seed": seed, "keep_out": tuple(map(tuple, keep))})
    env = generate_environment(env_cfg)
    bus = make_bus([c.agent_id for c in agent_configs], bus_config)
    agents = [
        _Agent(c, goals[i], stop_trajectory(RobotState(starts[i]), c.a_max, 0.0, hold=c.horizon, degree=c.degree),
               stopped=True)
        for i, c in enumerate(agent_configs)
    ]
    period = agent_configs[0].replan_period
    steps_per_plan = max(1, int(round(period / dt)))
    timings = {k: [] for k in STAGES}
    cycles = stops = conflicts = 0
    outcome = "timeout"
    events = []
    step = 0
    t = 0.0
    while t <= time_limit + 1e-9:
        active = [a for a in agents if math.isnan(a.arrived_at)]
        if not active:
            outcome = "success"
            break
        if step % steps_per_plan == 0:
            for a in active:
                c = a.config
                for msg in poll(bus, c.agent_id, t):
                    old = a.inbox.get(msg.agent_id)
                    if old is None or msg.stamp >= old.stamp:
                        a.inbox[msg.agent_id] = msg
                live = [m for m in a.inbox.values() if m.spline.t_end > t
                        and math.isnan(agents[_index(agents, m.agent_id)].arrived_at)]
                state = a.state(t)
                sogm = build_local_sogm(env, state.p, c.sensing_radius, c.r_s, c.r_tau, c.horizon)
                trace = {} if snapshot is not None else None
                out: PlanOutcome = plan_cycle(c, state, a.goal, sogm, live, t_now=t, cycle=cycles, trace=trace)
                cycles += 1
                conflicts += out.deconflict_attempts
                for k in timings:
                    timings[k].append(out.timings.get(k, 0.0))
                if out.committed:
                    a.spline, a.stopped = out.spline, False
                else:
                    stops += 1
                    if not a.stopped:
                        a.spline, a.stopped = out.spline, True
                    elif a.spline.t_end < t + c.horizon:
                        # braking is over; renew the hover so neighbors keep seeing it
                        a.spline = constant_spline(a.position(t), t, c.horizon, degree=c.degree)
                broadcast(bus, c.agent_id, TrajectoryMessage(c.agent_id, t, a.spline, c.shape), t)
                if snapshot is not None:
                    snapshot(t, a, out, trace)
        # collision checks at time t
        pos = np.array([a.position(t) for a in active])
        gap = clearance(env, pos)
        for a, g in zip(active, gap):
            if g < a.config.radius:
                kind = "deadlock" if a.stopped else "collision"
                events.append((round(t, 6), kind, a.config.agent_id, "obstacle"))
        for i in range(len(active)):
            for j in range(i + 1, len(active)):
                d = float(np.linalg.norm(pos[i] - pos[j]))
                if d < active[i].config.radius + active[j].config.radius:
                    both = active[i].stopped and active[j].stopped
                    kind = "deadlock" if both else "collision"
                    events.append((round(t, 6), kind, active[i].config.agent_id, active[j].config.agent_id))
        if events:
            outcome = "collision" if any(e[1] == "collision" for e in events) else "deadlock"
            break
        for a, p in zip(active, pos):
            if np.linalg.norm(p - a.goal) <= goal_tol:
                a.arrived_at = t
        step += 1
        t = step * dt
        env = step_obstacles(env, dt)
    return TrialRecord(task, env_config.kind, env_config.obstacle_count, seed, outcome,
                       [a.arrived_at for a in agents], round(t, 6), cycles, stops, conflicts, timings, events)


def _index(agents, agent_id) -> int:
    for i, a in enumerate(agents):
        if a.config.agent_id == agent_id:
            return i
    raise KeyError(agent_id)


def default_agents(n: int = 4, **kw) -> list[AgentConfig]:
    return [AgentConfig(i, **kw) for i in range(n)]
