"""Random moving-obstacle worlds, their dynamics and local maps built from ground truth."""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, replace

import numpy as np

from ..sogm import CircleHoop, Column, ObstacleTrack, Sogm, new_sogm, sweep_shape

RASTER_INFLATE = 0.5 * math.sqrt(3.0) * 0.1


@dataclass
class EnvironmentConfig:
    box: tuple = (16.0, 16.0, 4.0)
    obstacle_count: int = 20
    kind: str = "mixed"  # mixed | pure_column
    speed_range: tuple = (0.0, 1.0)
    column_width: tuple = (0.5, 1.0)
    column_height: float = 4.0
    hoop_radius: tuple = (0.7, 2.5)
    hoop_width: float = 0.1
    seed: int = 0
    keep_out: tuple = ()  # points kept clear of obstacles at t = 0
    keep_out_clearance: float = 1.0

    def __post_init__(self):
        if self.obstacle_count < 0:
            raise ValueError("obstacle count must be non-negative")
        if self.kind not in ("mixed", "pure_column"):
            raise ValueError(f"unknown environment kind {self.kind!r}")
        for name in ("speed_range", "column_width", "hoop_radius"):
            lo, hi = getattr(self, name)
            if not 0 <= lo <= hi:
                raise ValueError(f"{name} must be an ordered non-negative range")

    @property
    def lower(self) -> np.ndarray:
        return np.array([-self.box[0] / 2, -self.box[1] / 2, 0.0])

    @property
    def upper(self) -> np.ndarray:
        return np.array([self.box[0] / 2, self.box[1] / 2, self.box[2]])


@dataclass
class Environment:
    obstacles: list
    lower: np.ndarray
    upper: np.ndarray
    t: float = 0.0

    @property
    def volume(self) -> float:
        return float(np.prod(self.upper - self.lower))

    def to_dict(self) -> dict:
        return {
            "t": self.t,
            "lower": self.lower.tolist(),
            "upper": self.upper.tolist(),
            "obstacles": [
                {"tag": o.shape.tag, "params": list(o.shape.params()), "position": o.position.tolist(),
                 "velocity": o.velocity.tolist()}
                for o in self.obstacles
            ],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)


def _counts(cfg: EnvironmentConfig) -> tuple[int, int]:
    n = cfg.obstacle_count
    if cfg.kind == "pure_column":
        return n, 0
    return n - n // 2, n // 2


def generate_environment(cfg: EnvironmentConfig) -> Environment:
    """Columns and vertical hoops with random horizontal constant velocities.

    Mixed worlds hold half columns and half hoops (the odd one is a column).
    Hoops stand upright at mid height with a random yaw.  Obstacles whose
    surface comes within ``keep_out_clearance`` of a keep-out point at
    t = 0 are re-drawn.
    """
    rng = np.random.default_rng(cfg.seed)
    lo, hi = cfg.lower, cfg.upper
    n_col, n_hoop = _counts(cfg)
    keep = np.asarray(cfg.keep_out, dtype=float).reshape(-1, 3)
    obstacles = []
    for kind in [0] * n_col + [1] * n_hoop:
        if kind == 0:
            shape = Column(float(rng.uniform(*cfg.column_width)), cfg.column_height)
        else:
            yaw = rng.uniform(0.0, 2.0 * math.pi)
            shape = CircleHoop(float(rng.uniform(*cfg.hoop_radius)), cfg.hoop_width,
                               (math.cos(yaw), math.sin(yaw), 0.0))
        for _ in range(1000):
            pos = np.array([rng.uniform(lo[0], hi[0]), rng.uniform(lo[1], hi[1]), 0.5 * (lo[2] + hi[2])])
            if not len(keep) or shape.distance(pos, keep).min() > cfg.keep_out_clearance:
                break
        else:
            raise RuntimeError("could not place an obstacle clear of the keep-out points")
        speed = rng.uniform(*cfg.speed_range)
        heading = rng.uniform(0.0, 2.0 * math.pi)
        vel = np.array([speed * math.cos(heading), speed * math.sin(heading), 0.0])
        obstacles.append(ObstacleTrack(shape, pos, vel, 0.0))
    return Environment(obstacles, lo, hi, 0.0)


def obstacle_density(env: Environment) -> float:
    """Summed obstacle volume over box volume; overlaps are not deducted."""
    return sum(o.shape.volume() for o in env.obstacles) / env.volume


def sample_density(kind: str, count: int, samples: int, seed: int = 0, box=(16.0, 16.0, 4.0)) -> np.ndarray:
    """Densities of ``samples`` environments drawn with the generator's size laws.

    Only sizes are drawn; positions do not affect the volume ratio.
    """
    rng = np.random.default_rng(seed)
    cfg = EnvironmentConfig(box=box, obstacle_count=count, kind=kind)
    n_col, n_hoop = _counts(cfg)
    d = rng.uniform(*cfg.column_width, size=(samples, n_col))
    R = rng.uniform(*cfg.hoop_radius, size=(samples, n_hoop))
    vol = (math.pi / 4.0 * cfg.column_height * d**2).sum(axis=1)
    vol += (2.0 * math.pi**2 * (cfg.hoop_width / 2.0) ** 2 * R).sum(axis=1)
    return vol / float(np.prod(box))


# ---------------------------------------------------------------------------
# dynamics


def _fold(x, v, lo, hi):
    """Reflect a free flight x + v t back into [lo, hi]; returns (x, v)."""
    L = hi - lo
    u = np.mod(x - lo, 2.0 * L)
    back = u > L
    x = np.where(back, lo + 2.0 * L - u, lo + u)
    v = np.where(back, -v, v)
    return x, v


def advance(track: ObstacleTrack, t: float, lo, hi) -> ObstacleTrack:
    """State of ``track`` at time ``t`` with rebounds on the horizontal walls."""
    dt = t - track.stamp
    free = track.position + track.velocity * dt
    x, v = _fold(free[:2], track.velocity[:2], lo[:2], hi[:2])
    pos = np.array([x[0], x[1], track.position[2]])
    vel = np.array([v[0], v[1], track.velocity[2]])
    return ObstacleTrack(track.shape, pos, vel, t)


def track_states(track: ObstacleTrack, times, lo, hi) -> tuple[np.ndarray, np.ndarray]:
    """Positions and velocities of ``track`` at each of ``times``, rebounds included."""
    dt = np.asarray(times, dtype=float)[:, None] - track.stamp
    free = track.position + track.velocity * dt
    P = free.copy()
    V = np.tile(track.velocity, (len(dt), 1))
    P[:, :2], V[:, :2] = _fold(free[:, :2], V[:, :2], lo[:2], hi[:2])
    return P, V


def _bounce_times(track: ObstacleTrack, t0: float, t1: float, lo, hi) -> list:
    out = []
    for a in range(2):
        va = track.velocity[a]
        if va == 0:
            continue
        x0 = track.position[a] + va * (t0 - track.stamp)
        L = hi[a] - lo[a]
        # wall hits of the unfolded line happen at lo + k L
        k0 = math.floor((x0 - lo[a]) / L)
        k = k0 + 1 if va > 0 else k0
        while True:
            t = t0 + (lo[a] + k * L - x0) / va
            if t <= t0:
                k += 1 if va > 0 else -1
                continue
            if t >= t1:
                break
            out.append(t)
            k += 1 if va > 0 else -1
    return sorted(out)


def step_obstacles(env: Environment, dt: float) -> Environment:
    if dt <= 0:
        raise ValueError("time step must be positive")
    t = env.t + dt
    return replace(env, obstacles=[advance(o, t, env.lower, env.upper) for o in env.obstacles], t=t)


def clearance(env: Environment, points) -> np.ndarray:
    """Signed distance from each point to the nearest obstacle surface."""
    pts = np.atleast_2d(points)
    best = np.full(len(pts), np.inf)
    for o in env.obstacles:
        best = np.minimum(best, o.shape.distance(o.position, pts))
    return best


# ---------------------------------------------------------------------------
# local maps


def build_local_sogm(env: Environment, robot_p, sensing_radius: float = 5.0, r_s: float = 0.1,
                     r_tau: float = 0.1, horizon: float = 2.0, inflate: float = RASTER_INFLATE) -> Sogm:
    """Map centered on the robot, clipped to the world box, horizon ``horizon``.

    Obstacles whose surface is within ``sensing_radius`` of the robot are
    forecast with their current velocity, rebounds included, and swept into
    every frame.
    """
    p = np.asarray(robot_p, dtype=float)
    lo = np.maximum(env.lower, np.array([p[0] - sensing_radius, p[1] - sensing_radius, env.lower[2]]))
    hi = np.minimum(env.upper, np.array([p[0] + sensing_radius, p[1] + sensing_radius, env.upper[2]]))
    dims = np.maximum(1, np.floor((hi - lo) / r_s + 1e-9).astype(int))
    T = int(round(horizon / r_tau))
    sogm = new_sogm(lo, dims, r_s, r_tau, T, env.t)
    times = sogm.t0 + r_tau * np.arange(T + 1)
    for o in env.obstacles:
        if float(o.shape.distance(o.position, p[None])[0]) > sensing_radius:
            continue
        reach = o.shape.extent() + inflate
        P, V = track_states(o, times, env.lower, env.upper)
        near = np.all(np.maximum(P[:-1], P[1:]) + reach >= sogm.lower, axis=1) & \
            np.all(np.minimum(P[:-1], P[1:]) - reach <= sogm.upper, axis=1)
        for k in np.flatnonzero(near):
            if np.array_equal(np.sign(V[k]), np.sign(V[k + 1])):
                sweep_shape(sogm.frames[k], sogm.origin, r_s, o.shape, P[k], P[k + 1], inflate)
                continue
            cuts = [times[k], *_bounce_times(o, times[k], times[k + 1], env.lower, env.upper), times[k + 1]]
            for a, b in zip(cuts[:-1], cuts[1:]):
                pa = advance(o, a, env.lower, env.upper).position
                pb = advance(o, b, env.lower, env.upper).position
                sweep_shape(sogm.frames[k], sogm.origin, r_s, o.shape, pa, pb, inflate)
    return sogm
