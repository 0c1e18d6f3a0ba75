"""Spatiotemporal occupancy grid maps.

A map is a stack of ``T`` boolean 3D grids sharing one spatial layout.  Frame
``k`` (0-based) predicts occupancy during ``(t0 + k*r_tau, t0 + (k+1)*r_tau]``.
Obstacles and the planned trajectories of other robots are rasterized into
the frames by sweeping their shape over each frame's time window.
"""
from __future__ import annotations

import json
import math
import struct
from dataclasses import dataclass, field
from typing import ClassVar, NamedTuple

import numpy as np

from . import _kernels as K
from .bezier import BezierPiece, BezierSpline


class SogmError(ValueError):
    pass


# ---------------------------------------------------------------------------
# shapes


@dataclass(frozen=True)
class Column:
    """Vertical circular cylinder; the pose is the center of its axis."""

    diameter: float
    height: float
    tag: ClassVar[int] = 1

    def __post_init__(self):
        if not (self.diameter > 0 and self.height > 0):
            raise ValueError("column dimensions must be positive")

    def volume(self) -> float:
        return math.pi * self.diameter**2 * self.height / 4.0

    def params(self) -> tuple:
        return (self.diameter, self.height)

    def extent(self) -> float:
        return math.hypot(self.diameter / 2.0, self.height / 2.0)

    def distance(self, center, pts) -> np.ndarray:
        q = np.atleast_2d(pts) - center
        dr = np.hypot(q[:, 0], q[:, 1]) - self.diameter / 2.0
        dz = np.abs(q[:, 2]) - self.height / 2.0
        outside = np.hypot(np.maximum(dr, 0.0), np.maximum(dz, 0.0))
        return outside + np.minimum(np.maximum(dr, dz), 0.0)


@dataclass(frozen=True)
class CircleHoop:
    """Torus: core circle of ``major_radius`` around ``axis``, tube of ``tube_diameter``."""

    major_radius: float
    tube_diameter: float
    axis: tuple = (1.0, 0.0, 0.0)
    tag: ClassVar[int] = 2

    def __post_init__(self):
        if not (self.major_radius > 0 and self.tube_diameter > 0):
            raise ValueError("hoop dimensions must be positive")
        if abs(float(np.linalg.norm(self.axis)) - 1.0) > 1e-9:
            raise ValueError("hoop axis must have unit norm")
        object.__setattr__(self, "axis", tuple(float(a) for a in self.axis))

    def volume(self) -> float:
        return 2.0 * math.pi**2 * self.major_radius * (self.tube_diameter / 2.0) ** 2

    def params(self) -> tuple:
        return (self.major_radius, self.tube_diameter, *self.axis)

    def extent(self) -> float:
        return self.major_radius + self.tube_diameter / 2.0

    def distance(self, center, pts) -> np.ndarray:
        q = np.atleast_2d(pts) - center
        ax = np.asarray(self.axis)
        h = q @ ax
        rho = np.linalg.norm(q - h[:, None] * ax, axis=1)
        return np.hypot(rho - self.major_radius, h) - self.tube_diameter / 2.0


@dataclass(frozen=True)
class Sphere:
    radius: float
    tag: ClassVar[int] = 3

    def __post_init__(self):
        if not self.radius > 0:
            raise ValueError("sphere radius must be positive")

    def volume(self) -> float:
        return 4.0 / 3.0 * math.pi * self.radius**3

    def params(self) -> tuple:
        return (self.radius,)

    def extent(self) -> float:
        return self.radius

    def distance(self, center, pts) -> np.ndarray:
        return np.linalg.norm(np.atleast_2d(pts) - center, axis=1) - self.radius


@dataclass(frozen=True)
class Box:
    half_extents: tuple
    tag: ClassVar[int] = 4

    def __post_init__(self):
        if len(self.half_extents) != 3 or min(self.half_extents) <= 0:
            raise ValueError("box half extents must be three positive numbers")
        object.__setattr__(self, "half_extents", tuple(float(h) for h in self.half_extents))

    def volume(self) -> float:
        return 8.0 * float(np.prod(self.half_extents))

    def params(self) -> tuple:
        return self.half_extents

    def extent(self) -> float:
        return float(np.linalg.norm(self.half_extents))

    def distance(self, center, pts) -> np.ndarray:
        q = np.abs(np.atleast_2d(pts) - center) - np.asarray(self.half_extents)
        return np.linalg.norm(np.maximum(q, 0.0), axis=1) + np.minimum(q.max(axis=1), 0.0)


ObstacleShape = Column | CircleHoop | Sphere | Box
_SHAPES = {cls.tag: cls for cls in (Column, CircleHoop, Sphere, Box)}
_SHAPE_NPARAMS = {1: 2, 2: 5, 3: 1, 4: 3}


def shape_from_params(tag: int, params) -> ObstacleShape:
    params = tuple(float(p) for p in params)
    if tag == CircleHoop.tag:
        return CircleHoop(params[0], params[1], params[2:5])
    if tag == Box.tag:
        return Box(params)
    return _SHAPES[tag](*params)


@dataclass
class ObstacleTrack:
    """Constant-velocity obstacle: ``position`` at time ``stamp``."""

    shape: ObstacleShape
    position: np.ndarray
    velocity: np.ndarray
    stamp: float = 0.0

    def __post_init__(self):
        self.position = np.asarray(self.position, dtype=float)
        self.velocity = np.asarray(self.velocity, dtype=float)
        if not (np.all(np.isfinite(self.position)) and np.all(np.isfinite(self.velocity))):
            raise ValueError("obstacle track must be finite")

    def at(self, t: float) -> np.ndarray:
        return self.position + self.velocity * (t - self.stamp)


# ---------------------------------------------------------------------------
# trajectory messages


@dataclass
class TrajectoryMessage:
    agent_id: int
    stamp: float
    spline: BezierSpline
    occupancy_shape: ObstacleShape

    _HEAD: ClassVar[str] = "<IdII"

    def to_bytes(self) -> bytes:
        n = self.spline.degree
        chunks = [struct.pack(self._HEAD, self.agent_id, self.stamp, len(self.spline.pieces), n)]
        for piece in self.spline.pieces:
            if piece.degree != n:
                raise SogmError("all pieces must share one degree")
            chunks.append(struct.pack("<d", piece.duration))
            chunks.append(np.ascontiguousarray(piece.control_points, dtype="<f8").tobytes())
        shape = self.occupancy_shape
        params = shape.params()
        chunks.append(struct.pack("<B", shape.tag))
        chunks.append(struct.pack(f"<{len(params)}d", *params))
        return b"".join(chunks)

    @classmethod
    def from_bytes(cls, data: bytes) -> "TrajectoryMessage":
        head = struct.calcsize(cls._HEAD)
        agent_id, stamp, count, n = struct.unpack_from(cls._HEAD, data, 0)
        off = head
        pieces = []
        for _ in range(count):
            (duration,) = struct.unpack_from("<d", data, off)
            off += 8
            cps = np.frombuffer(data, dtype="<f8", count=3 * (n + 1), offset=off).reshape(n + 1, 3)
            off += 24 * (n + 1)
            pieces.append(BezierPiece(cps.astype(float), duration))
        (tag,) = struct.unpack_from("<B", data, off)
        off += 1
        k = _SHAPE_NPARAMS[tag]
        params = struct.unpack_from(f"<{k}d", data, off)
        if off + 8 * k != len(data):
            raise SogmError("trailing bytes in trajectory message")
        return cls(agent_id, stamp, BezierSpline(pieces, stamp), shape_from_params(tag, params))


# ---------------------------------------------------------------------------
# the grid


class OccupancyFrame(NamedTuple):
    """One temporal frame with the spatial layout needed to locate its cells."""

    grid: np.ndarray
    origin: np.ndarray
    r_s: float


@dataclass
class Sogm:
    origin: np.ndarray
    r_s: float
    r_tau: float
    t0: float
    frames: np.ndarray = field(repr=False)  # (T, nx, ny, nz) bool

    @property
    def T(self) -> int:
        return self.frames.shape[0]

    @property
    def dims(self) -> tuple[int, int, int]:
        return tuple(self.frames.shape[1:])

    @property
    def lower(self) -> np.ndarray:
        return self.origin.copy()

    @property
    def upper(self) -> np.ndarray:
        return self.origin + np.asarray(self.dims) * self.r_s

    @property
    def t_end(self) -> float:
        return self.t0 + self.T * self.r_tau

    def window(self, k: int) -> tuple[float, float]:
        return self.t0 + k * self.r_tau, self.t0 + (k + 1) * self.r_tau

    def frame_index(self, t: float) -> int:
        """Frame covering time ``t``; times past the horizon map to the last frame."""
        k = math.ceil((t - self.t0) / self.r_tau - 1e-9) - 1
        return min(max(k, 0), self.T - 1)

    def frame(self, k: int) -> OccupancyFrame:
        return OccupancyFrame(self.frames[k], self.origin, self.r_s)

    def contains(self, p) -> bool:
        p = np.asarray(p, dtype=float)
        return bool(np.all(p >= self.origin) and np.all(p < self.upper))

    def world_to_cell(self, p) -> tuple[int, int, int] | None:
        """Cell index containing ``p`` or None when ``p`` is outside the map."""
        p = np.asarray(p, dtype=float)
        idx = np.floor((p - self.origin) / self.r_s + 1e-9).astype(int)
        if np.any(idx < 0) or np.any(idx >= np.asarray(self.dims)):
            return None
        return tuple(int(i) for i in idx)

    def cell_center(self, idx) -> np.ndarray:
        return self.origin + (np.asarray(idx, dtype=float) + 0.5) * self.r_s

    def occupied_count(self, k: int | None = None) -> int:
        if k is None:
            return int(self.frames.sum())
        return int(self.frames[k].sum())

    def occupied_centers(self, k: int) -> np.ndarray:
        idx = np.argwhere(self.frames[k])
        return self.origin + (idx + 0.5) * self.r_s

    def copy(self) -> "Sogm":
        return Sogm(self.origin.copy(), self.r_s, self.r_tau, self.t0, self.frames.copy())

    def union(self, other: "Sogm") -> "Sogm":
        if other.frames.shape != self.frames.shape:
            raise SogmError("cannot merge maps with different layouts")
        self.frames |= other.frames
        return self

    # -- serialization -------------------------------------------------------

    def to_dict(self) -> dict:
        return {
            "origin": [float(x) for x in self.origin],
            "dims": list(self.dims),
            "r_s": self.r_s,
            "r_tau": self.r_tau,
            "T": self.T,
            "t0": self.t0,
            "frames": [_rle_encode(f) for f in self.frames],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Sogm":
        sogm = new_sogm(d["origin"], d["dims"], d["r_s"], d["r_tau"], d["T"], d["t0"])
        for k, runs in enumerate(d["frames"]):
            sogm.frames[k] = _rle_decode(runs, sogm.dims)
        return sogm

    def dump(self, path) -> None:
        with open(path, "w") as fh:
            json.dump(self.to_dict(), fh)

    @classmethod
    def load(cls, path) -> "Sogm":
        with open(path) as fh:
            return cls.from_dict(json.load(fh))


def _rle_encode(frame: np.ndarray) -> list[int]:
    """Run lengths of the C-order flattened frame, starting with a free run."""
    flat = frame.ravel().astype(np.int8)
    change = np.flatnonzero(np.diff(flat)) + 1
    bounds = np.concatenate([[0], change, [flat.size]])
    runs = np.diff(bounds).tolist()
    if flat.size and flat[0]:
        runs.insert(0, 0)
    return runs


def _rle_decode(runs, dims) -> np.ndarray:
    values = np.arange(len(runs)) % 2 == 1
    flat = np.repeat(values, runs)
    return flat.reshape(dims)


def new_sogm(origin, dims, r_s: float, r_tau: float, T: int, t0: float = 0.0) -> Sogm:
    dims = tuple(int(d) for d in dims)
    if len(dims) != 3 or min(dims) < 1:
        raise SogmError(f"map dims must be three positive counts, got {dims}")
    if not (r_s > 0 and r_tau > 0):
        raise SogmError("resolutions must be positive")
    if int(T) < 1:
        raise SogmError("a map needs at least one frame")
    origin = np.asarray(origin, dtype=float).reshape(3)
    return Sogm(origin, float(r_s), float(r_tau), float(t0), np.zeros((int(T), *dims), dtype=bool))


def frames_for_horizon(horizon: float, r_tau: float) -> int:
    return int(round(horizon / r_tau))


# ---------------------------------------------------------------------------
# rasterization


def sweep_shape(grid: np.ndarray, origin, r_s: float, shape: ObstacleShape, p0, p1, inflate: float = 0.0) -> int:
    """Mark cells whose centers are covered by ``shape`` translated from p0 to p1.

    Column and Sphere sweeps are exact; hoops are covered by arc-sampled
    capsules (over-approximation below ``r_s / 4``); boxes are time-sampled.
    Returns the number of newly set cells.
    """
    p0 = np.asarray(p0, dtype=float)
    p1 = np.asarray(p1, dtype=float)
    if isinstance(shape, Sphere):
        return K.fill_capsule(grid, origin, r_s, p0, p1, shape.radius + inflate)
    if isinstance(shape, Column):
        zlo = min(p0[2], p1[2]) - shape.height / 2.0 - inflate
        zhi = max(p0[2], p1[2]) + shape.height / 2.0 + inflate
        return K.fill_column(grid, origin, r_s, p0, p1, shape.diameter / 2.0 + inflate, zlo, zhi)
    if isinstance(shape, CircleHoop):
        return K.fill_torus(
            grid, origin, r_s, p0, p1, np.asarray(shape.axis), shape.major_radius,
            shape.tube_diameter / 2.0 + inflate, r_s / 2.0,
        )
    if isinstance(shape, Box):
        half = np.asarray(shape.half_extents) + inflate
        dist = float(np.linalg.norm(p1 - p0))
        n = max(1, int(math.ceil(dist / (r_s / 4.0))))
        count = 0
        for s in np.linspace(0.0, 1.0, n + 1):
            count += K.fill_box(grid, origin, r_s, p0 + s * (p1 - p0), half)
        return count
    raise TypeError(f"unknown shape {shape!r}")


def _touches_map(sogm: Sogm, p0, p1, reach: float) -> bool:
    lo = np.minimum(p0, p1) - reach
    hi = np.maximum(p0, p1) + reach
    return bool(np.all(hi >= sogm.origin) and np.all(lo <= sogm.upper))


def rasterize_obstacle(sogm: Sogm, track: ObstacleTrack, frames=None, inflate: float = 0.0) -> Sogm:
    """Union the swept obstacle into each frame of ``frames`` (default: all)."""
    frames = range(sogm.T) if frames is None else frames
    reach = track.shape.extent() + inflate
    for k in frames:
        if not 0 <= k < sogm.T:
            raise SogmError(f"frame {k} outside [0, {sogm.T})")
        ta, tb = sogm.window(k)
        p0, p1 = track.at(ta), track.at(tb)
        if _touches_map(sogm, p0, p1, reach):
            sweep_shape(sogm.frames[k], sogm.origin, sogm.r_s, track.shape, p0, p1, inflate)
    return sogm


class ProjectionInfo(NamedTuple):
    frames_updated: list
    overlaps: bool


def _derivative_bounds(spline: BezierSpline) -> tuple[float, float]:
    """Speed and acceleration bounds from the hodograph control points."""
    vmax = amax = 0.0
    for piece in spline.pieces:
        n = piece.degree
        if n > 0:
            hod = n / piece.duration * np.diff(piece.control_points, axis=0)
            vmax = max(vmax, float(np.linalg.norm(hod, axis=1).max()))
        if n > 1:
            acc = (n - 1) / piece.duration * np.diff(hod, axis=0)
            amax = max(amax, float(np.linalg.norm(acc, axis=1).max()))
    return vmax, amax


def project_trajectory(sogm: Sogm, msg: TrajectoryMessage, inflate: float = 0.0) -> ProjectionInfo:
    """Rasterize the sender's body swept along its shared trajectory.

    For every frame whose window overlaps the trajectory, the trajectory is
    sampled at the knots and so that consecutive samples are at most
    ``r_s / 4`` apart, and the body is swept along each chord.  The sweep is
    inflated by the chord sagitta bound ``a_max h^2 / 8`` so the result
    covers the curve itself.
    """
    spline = msg.spline
    ts, te = spline.t_start, spline.t_end
    if te <= sogm.t0 or ts >= sogm.t_end:
        return ProjectionInfo([], False)
    vbound, abound = _derivative_bounds(spline)
    step = sogm.r_s / 4.0
    k = np.arange(sogm.T)
    a = np.maximum(sogm.t0 + k * sogm.r_tau, ts)
    b = np.minimum(sogm.t0 + (k + 1) * sogm.r_tau, te)
    keep = b > a
    if not keep.any():
        return ProjectionInfo([], True)
    k, a, b = k[keep], a[keep], b[keep]
    n = np.maximum(1, np.ceil(vbound * (b - a) / step).astype(np.int64)) + 1
    h = float(np.max((b - a) / (n - 1)))
    knots = np.asarray(spline.knots)[1:-1]
    chunks = []
    for ai, bi, ni in zip(a, b, n):
        inner = knots[(knots > ai) & (knots < bi)]
        chunks.append(np.union1d(np.linspace(ai, bi, ni), inner))
    n = np.array([len(c) for c in chunks], dtype=np.int64)
    bounds = np.concatenate([[0], np.cumsum(n)])
    pts = spline.sample(np.concatenate(chunks))
    pad = inflate + abound * h * h / 8.0
    shape = msg.occupancy_shape
    if isinstance(shape, Sphere):
        K.fill_polylines(sogm.frames, sogm.origin, sogm.r_s, pts, bounds, k, shape.radius + pad)
    else:
        for m, kk in enumerate(k):
            chain = pts[bounds[m]:bounds[m + 1]]
            for i in range(len(chain) - 1):
                sweep_shape(sogm.frames[kk], sogm.origin, sogm.r_s, shape, chain[i], chain[i + 1], pad)
    updated = [int(x) for x in k]
    return ProjectionInfo(updated, True)


def is_state_free(sogm: Sogm, k: int, p, inflation: ObstacleShape) -> bool:
    """True iff no occupied cell center of frame ``k`` lies inside ``inflation`` at ``p``.

    Space outside the map is free.
    """
    if not 0 <= k < sogm.T:
        raise SogmError(f"frame {k} outside [0, {sogm.T})")
    p = np.asarray(p, dtype=float)
    if isinstance(inflation, Sphere):
        return not K.sphere_blocked(sogm.frames[k], sogm.origin, sogm.r_s, p, inflation.radius)
    mask = np.zeros(sogm.dims, dtype=bool)
    sweep_shape(mask, sogm.origin, sogm.r_s, inflation, p, p)
    return not bool(np.any(mask & sogm.frames[k]))
