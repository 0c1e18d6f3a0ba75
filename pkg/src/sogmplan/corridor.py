"""Convex free-space corridors, one per temporal frame of a reference path.

Each corridor is grown by region inflation: alternate between the largest
ellipsoid inside the current halfspaces and a fresh set of planes tangent to
that ellipsoid which separate it from every occupied cell (treated as a cube
of side ``r_s``).
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import linprog

from . import _kernels as K
from . import _region as R
from .sogm import OccupancyFrame, Sogm


class CorridorError(RuntimeError):
    pass


class InfeasibleSeedError(CorridorError):
    pass


class InfeasibleCorridorError(CorridorError):
    pass


class PlaneBudgetError(CorridorError):
    pass


# ---------------------------------------------------------------------------
# geometry types


@dataclass
class Polytope:
    """Halfspace intersection ``{x : A x <= b}`` with unit-norm rows."""

    A: np.ndarray
    b: np.ndarray
    bounds: tuple | None = None  # axis-aligned box the polytope was built in
    interior: np.ndarray | None = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        A = np.asarray(self.A, dtype=float).reshape(-1, 3)
        b = np.asarray(self.b, dtype=float).reshape(-1)
        if A.shape[0] != b.shape[0]:
            raise ValueError("halfspace count mismatch")
        norms = np.linalg.norm(A, axis=1)
        if np.any(norms < 1e-12):
            raise ValueError("zero halfspace normal")
        self.A = A / norms[:, None]
        self.b = b / norms

    @classmethod
    def unit(cls, A, b, bounds=None) -> "Polytope":
        """Build from rows already of unit norm, skipping normalization."""
        P = cls.__new__(cls)
        P.A, P.b, P.bounds, P.interior = A, b, bounds, None
        return P

    @classmethod
    def box(cls, lo, hi) -> "Polytope":
        lo = np.asarray(lo, dtype=float)
        hi = np.asarray(hi, dtype=float)
        eye = np.eye(3)
        return cls(np.vstack([eye, -eye]), np.concatenate([hi, -lo]), bounds=(lo.copy(), hi.copy()))

    @property
    def n_planes(self) -> int:
        return self.A.shape[0]

    @property
    def halfspaces(self) -> list:
        return [(a.copy(), float(bi)) for a, bi in zip(self.A, self.b)]

    def slack(self, x) -> np.ndarray:
        """``b - A x`` per halfspace; shape (..., m)."""
        return self.b - np.asarray(x, dtype=float) @ self.A.T

    def contains(self, x, tol: float = 1e-9):
        s = self.slack(x)
        return np.all(s >= -tol, axis=-1)

    def intersect(self, other: "Polytope") -> "Polytope":
        return Polytope.unit(np.vstack([self.A, other.A]), np.concatenate([self.b, other.b]), self.bounds)

    def chebyshev(self) -> tuple[float, np.ndarray]:
        """Radius and center of the largest inscribed ball (negative if empty)."""
        return chebyshev_ball(self.A, self.b)

    def to_dict(self) -> dict:
        return {"halfspaces": np.column_stack([self.A, self.b]).tolist()}


@dataclass
class Ellipsoid:
    """``{center + shape @ u : |u| <= 1}`` with ``shape`` symmetric positive definite."""

    center: np.ndarray
    shape: np.ndarray

    def __post_init__(self):
        self.center = np.asarray(self.center, dtype=float).reshape(3)
        E = np.asarray(self.shape, dtype=float).reshape(3, 3)
        if np.max(np.abs(E - E.T)) > 1e-9 * max(1.0, np.max(np.abs(E))):
            raise ValueError("ellipsoid shape must be symmetric")
        self.shape = 0.5 * (E + E.T)
        if np.linalg.eigvalsh(self.shape).min() <= 1e-12:
            raise ValueError("ellipsoid shape must be positive definite")

    @classmethod
    def ball(cls, center, radius: float) -> "Ellipsoid":
        return cls(center, radius * np.eye(3))

    @classmethod
    def from_cholesky(cls, L: np.ndarray, d: np.ndarray) -> "Ellipsoid":
        w, V = np.linalg.eigh(L @ L.T)
        return cls(d, (V * np.sqrt(np.maximum(w, 0.0))) @ V.T)

    def cholesky(self) -> np.ndarray:
        return np.linalg.cholesky(self.shape @ self.shape)

    @property
    def log_volume(self) -> float:
        return float(np.log(4.0 / 3.0 * np.pi) + np.linalg.slogdet(self.shape)[1])

    @property
    def volume(self) -> float:
        return float(np.exp(self.log_volume))

    def support(self, A: np.ndarray) -> np.ndarray:
        """max over the ellipsoid of a.x for each row a."""
        return A @ self.center + np.linalg.norm(A @ self.shape, axis=1)

    def inside(self, poly: Polytope, tol: float = 1e-9) -> bool:
        return bool(np.all(self.support(poly.A) <= poly.b + tol))


@dataclass
class SpatioTemporalCorridor:
    polytope: Polytope
    window: tuple[float, float]
    frame_index: int

    @property
    def duration(self) -> float:
        return self.window[1] - self.window[0]


# ---------------------------------------------------------------------------
# LP helpers


def _lp_chebyshev(A, b) -> tuple[float, np.ndarray]:
    # max r  s.t.  a_i.x + r <= b_i ; r capped so empty-interior sets stay bounded
    m = A.shape[0]
    Aub = np.hstack([A, np.ones((m, 1))])
    res = linprog(np.array([0.0, 0.0, 0.0, -1.0]), A_ub=Aub, b_ub=b,
                  bounds=[(None, None)] * 3 + [(None, 1e6)], method="highs")
    if res.status != 0:
        return -np.inf, np.full(3, np.nan)
    return float(res.x[3]), res.x[:3]


def chebyshev_ball(A, b, exact_band: float = 1e-6) -> tuple[float, np.ndarray]:
    """Chebyshev radius and center of ``{A x <= b}`` (rows unit norm).

    A compiled barrier method is used first; answers within ``exact_band`` of
    zero are recomputed with an exact LP so the sign is reliable.
    """
    A = np.ascontiguousarray(A, dtype=float)
    b = np.ascontiguousarray(b, dtype=float)
    try:
        r, c = R.chebyshev_barrier(A, b, 1e-9)
        if np.isfinite(r) and abs(r) > exact_band:
            return float(r), c
    except Exception:  # singular Newton systems on unbounded sets
        pass
    return _lp_chebyshev(A, b)


def _intersection_nonempty(A, b, witnesses=(), tol: float = 1e-9) -> bool:
    for w in witnesses:
        if w is not None and np.all(b - A @ w >= -tol):
            return True
    r, _ = chebyshev_ball(A, b)
    return r >= -tol


# ---------------------------------------------------------------------------
# inscribed ellipsoid


_TRIL = np.tril_indices(3)
_BOX_A = np.vstack([np.eye(3), -np.eye(3)])


def _pack(L, d):
    return np.array([L[0, 0], L[1, 0], L[1, 1], L[2, 0], L[2, 1], L[2, 2], d[0], d[1], d[2]])


def _strict_start(poly: Polytope, *candidates):
    """A strictly feasible starting point for the barrier method."""
    for ell in candidates:
        if ell is None:
            continue
        for alpha in (1.0, 1.0 - 1e-6, 1.0 - 1e-3, 0.9, 0.5, 0.1):
            E = alpha * ell.shape
            if np.all(poly.A @ ell.center + np.linalg.norm(poly.A @ E, axis=1) < poly.b):
                return _pack(np.linalg.cholesky(E @ E), ell.center)
    r, c = poly.chebyshev()
    if not r > 0:
        raise InfeasibleCorridorError("polytope has empty interior")
    return _pack(0.99 * r * np.eye(3), c)


def inscribed_ellipsoid(polytope: Polytope, initial: Ellipsoid | None = None, tol: float = 1e-9,
                        max_newton: int = 500, hint: Ellipsoid | None = None) -> Ellipsoid:
    """Maximum-volume ellipsoid inside a bounded polytope.

    Args:
        polytope: bounded polytope with non-empty interior.
        initial: optional ellipsoid inside the polytope, used as a warm start;
            the result is never smaller.
        tol: barrier duality-gap target on log det.
        hint: optional ellipsoid used only as a starting point.

    Returns:
        The inscribed ellipsoid.
    """
    x0 = _strict_start(polytope, initial, hint)
    x, _ = R.mvie(np.ascontiguousarray(polytope.A), np.ascontiguousarray(polytope.b), x0, float(tol),
                  int(max_newton), 1.0, 50.0)
    L, d = np.zeros((3, 3)), x[6:9].copy()
    L[_TRIL] = x[:6]
    out = Ellipsoid.from_cholesky(L, d)
    if not out.inside(polytope):
        # eigen round-off on a touching ellipsoid; pull in by the violation
        viol = np.max(out.support(polytope.A) - polytope.b)
        out = Ellipsoid(out.center, out.shape * (1.0 - max(viol, 0.0) / max(np.linalg.norm(out.shape, 2), 1e-12)))
    if initial is not None and initial.inside(polytope) and initial.log_volume > out.log_volume:
        return Ellipsoid(initial.center.copy(), initial.shape.copy())
    return out


# ---------------------------------------------------------------------------
# region inflation


@dataclass
class InflationResult:
    polytope: Polytope
    packed: np.ndarray | None  # final ellipsoid, packed Cholesky form
    volumes: list = field(default_factory=list)  # inscribed-ellipsoid volume per accepted iteration
    iterations: int = 0
    obstacle_planes: int = 0

    @property
    def ellipsoid(self) -> Ellipsoid | None:
        if self.packed is None:
            return None
        L = np.zeros((3, 3))
        L[_TRIL] = self.packed[:6]
        return Ellipsoid.from_cholesky(L, self.packed[6:9])


def _triple(seed):
    if seed.shape[0] == 2:
        return np.vstack([seed[0], 0.5 * (seed[0] + seed[1]), seed[1]])
    return seed


def _inflate_raw(centers, half_side, seed, A, b, max_iters, max_planes, seed_margin, mvie_tol, fixpoint_tol):
    seed = np.ascontiguousarray(seed)
    x0 = R.needle(seed, min(0.05, 0.25 * half_side + 1e-3))
    A, b, m, x, logv, status = R.inflate(
        centers, float(half_side), seed, x0, np.ascontiguousarray(A), np.ascontiguousarray(b),
        int(max_iters), int(max_planes), float(seed_margin), float(mvie_tol), float(fixpoint_tol))
    if status == 2:
        raise InfeasibleSeedError("seed segment touches an occupied cell")
    if status == 1:
        raise PlaneBudgetError(f"more than {max_planes} planes needed")
    return A, b, m, x, logv


def inflate_region(centers: np.ndarray, half_side: float, seed, bound: Polytope, max_iters: int = 5,
                   max_planes: int = 60, seed_margin: float = 0.0, mvie_tol: float = 1e-6,
                   fixpoint_tol: float = 1e-6) -> InflationResult:
    """Grow a convex region around ``seed`` that excludes cubes at ``centers``.

    ``seed_margin`` keeps every seed point at least that far inside every
    obstacle plane, so the region stays usable after shrinking by it.
    """
    seed = _triple(np.atleast_2d(np.asarray(seed, dtype=float)))
    if not np.all(bound.contains(seed)):
        raise InfeasibleSeedError("seed outside the map box")
    centers = np.ascontiguousarray(centers, dtype=float).reshape(-1, 3)
    if centers.shape[0] == 0:
        return InflationResult(bound, None, [], 0, 0)
    if max_planes - bound.n_planes <= 0:
        raise PlaneBudgetError("bounding planes alone exhaust the plane budget")
    A, b, m, x, logv = _inflate_raw(centers, half_side, seed, bound.A, bound.b, max_iters, max_planes,
                                    seed_margin, mvie_tol, fixpoint_tol)
    poly = Polytope.unit(A[:m], b[:m], bound.bounds)
    volumes = list(4.0 / 3.0 * np.pi * np.exp(logv))
    return InflationResult(poly, x if len(logv) else None, volumes, len(logv), m - bound.n_planes)


def _as_frame(frame) -> OccupancyFrame:
    if isinstance(frame, OccupancyFrame):
        return frame
    grid, origin, r_s = frame
    return OccupancyFrame(np.asarray(grid, dtype=bool), np.asarray(origin, dtype=float), float(r_s))


def inflate_corridor(frame, seed, map_box: Polytope, max_iters: int = 5, prune_radius: float = 3.0,
                     max_planes: int = 60, seed_margin: float = 0.0, **kw) -> InflationResult:
    """Region inflation against the occupied cells of one frame; see ``generate_corridor``."""
    frame = _as_frame(frame)
    seed = np.atleast_2d(np.asarray(seed, dtype=float))
    if not np.all(map_box.contains(seed)):
        raise InfeasibleSeedError("seed outside the map box")
    if not frame.grid.any():
        return InflationResult(map_box, None)
    lo = seed.min(axis=0) - prune_radius
    hi = seed.max(axis=0) + prune_radius
    # cells whose cube reaches into the pruning box
    centers = K.surface_centers(frame.grid, frame.origin, frame.r_s, lo - frame.r_s, hi + frame.r_s)
    if map_box.bounds is not None and map_box.n_planes == 6:
        # both are boxes: keep only the tighter face per direction
        blo, bhi = np.maximum(lo, map_box.bounds[0]), np.minimum(hi, map_box.bounds[1])
        bound = Polytope.unit(_BOX_A, np.concatenate([bhi, -blo]), (blo, bhi))
    else:
        bound = map_box.intersect(Polytope.box(lo, hi))
    return inflate_region(centers, 0.5 * frame.r_s, seed, bound, max_iters, max_planes, seed_margin, **kw)


def generate_corridor(frame, seed, map_box: Polytope, max_iters: int = 5, prune_radius: float = 3.0,
                      max_planes: int = 60, seed_margin: float = 0.0, **kw) -> Polytope:
    """Obstacle-free convex polytope containing a seed segment.

    Args:
        frame: an ``OccupancyFrame`` (or ``(grid, origin, r_s)``).
        seed: segment endpoints, shape (2, 3), or a single point.
        map_box: polytope the result must stay inside.
        max_iters: region-inflation rounds.
        prune_radius: only cells within this box distance of the seed are
            considered; the result is clipped to the same box so cells
            farther out cannot be inside it.
        max_planes: halfspace budget including the bounding planes.
        seed_margin: minimum distance kept between the seed and every
            obstacle plane.

    Returns:
        Polytope excluding every occupied cell cube.
    """
    return inflate_corridor(frame, seed, map_box, max_iters, prune_radius, max_planes, seed_margin, **kw).polytope


def shrink(polytope: Polytope, d: float, witnesses=None) -> Polytope:
    """Offset every halfspace inward by ``d``; raises if nothing is left.

    A witness point with positive slack in the result proves a non-empty
    interior and skips the LP.
    """
    if d < 0:
        raise ValueError("shrink distance must be non-negative")
    out = Polytope.unit(polytope.A.copy(), polytope.b - d, polytope.bounds)
    if witnesses is not None:
        W = np.atleast_2d(np.asarray(witnesses, dtype=float))
        slack = out.slack(W).min(axis=1)
        best = int(np.argmax(slack))
        if slack[best] > 1e-9:
            out.interior = W[best].copy()
            return out
    r, c = out.chebyshev()
    if not r > 0:
        raise InfeasibleCorridorError(f"corridor empty after shrinking by {d}")
    out.interior = c
    return out


# ---------------------------------------------------------------------------
# sequences


@dataclass
class ConnectivityReport:
    ok: bool
    empty: list  # corridors with no interior point
    disconnected: list  # j such that corridors j and j+1 do not intersect

    @property
    def failing(self) -> list:
        return sorted(set(self.empty) | set(self.disconnected))


def check_sequence(corridors: list, path=None, tol: float = 1e-9) -> ConnectivityReport:
    """Check each corridor is non-empty and consecutive corridors intersect.

    Closed sets are used, so corridors meeting in a single point count as
    connected.  Path nodes serve as cheap feasibility witnesses before an LP
    is solved.
    """
    if path is not None and len(corridors) != path.steps:
        raise ValueError(f"{len(corridors)} corridors for {path.steps} path segments")
    nodes = [s.p for s in path.states] if path is not None else []
    empty, disconnected = [], []
    for j, c in enumerate(corridors):
        P = c.polytope
        wit = [P.interior] + nodes[j:j + 2]
        if not _intersection_nonempty(P.A, P.b, wit, tol):
            empty.append(j)
    for j in range(len(corridors) - 1):
        P, Q = corridors[j].polytope, corridors[j + 1].polytope
        wit = [P.interior, Q.interior] + nodes[j + 1:j + 2]
        if not _intersection_nonempty(np.vstack([P.A, Q.A]), np.concatenate([P.b, Q.b]), wit, tol):
            disconnected.append(j)
    return ConnectivityReport(not empty and not disconnected, empty, disconnected)


def corridors_along_path(sogm: Sogm, path, robot_radius: float, map_box: Polytope, max_iters: int = 5,
                         prune_radius: float = 3.0, max_planes: int = 60, **kw) -> list:
    """Shrunk corridors for every segment of a search path.

    Segment ``j`` (states ``j`` to ``j+1``) is inflated in the frame covering
    its time window and shrunk by ``robot_radius``.
    """
    if map_box.bounds is None or map_box.n_planes != 6:
        return [_segment_corridor_generic(sogm, path, j, robot_radius, map_box, max_iters, prune_radius,
                                          max_planes, **kw) for j in range(path.steps)]
    # box maps: generate_corridor + shrink inlined to cut per-segment
    # overhead; the region is always clipped to the pruning box
    mvie_tol = kw.get("mvie_tol", 1e-6)
    fixpoint_tol = kw.get("fixpoint_tol", 1e-6)
    mlo, mhi = map_box.bounds
    rs = sogm.r_s
    out = []
    for j in range(path.steps):
        t0 = path.t_start + j * path.dt
        k = sogm.frame_index(t0 + 0.5 * path.dt)
        seed = _triple(np.vstack([path.states[j].p, path.states[j + 1].p]))
        if np.any(seed < mlo - 1e-9) or np.any(seed > mhi + 1e-9):
            raise InfeasibleSeedError("seed outside the map box")
        lo = seed.min(axis=0) - prune_radius
        hi = seed.max(axis=0) + prune_radius
        blo, bhi = np.maximum(lo, mlo), np.minimum(hi, mhi)
        A, b = _BOX_A, np.concatenate([bhi, -blo])
        centers = K.surface_centers(sogm.frames[k], sogm.origin, rs, lo - rs, hi + rs)
        if centers.shape[0]:
            A, b, m, _, _ = _inflate_raw(centers, 0.5 * rs, seed, A, b, max_iters, max_planes, robot_radius,
                                         mvie_tol, fixpoint_tol)
            A, b = A[:m], b[:m]
        poly = shrink(Polytope.unit(A, b, (blo, bhi)), robot_radius, seed)
        out.append(SpatioTemporalCorridor(poly, (t0, t0 + path.dt), k))
    return out


def _segment_corridor_generic(sogm, path, j, robot_radius, map_box, max_iters, prune_radius, max_planes, **kw):
    t0 = path.t_start + j * path.dt
    k = sogm.frame_index(t0 + 0.5 * path.dt)
    seed = np.vstack([path.states[j].p, path.states[j + 1].p])
    poly = generate_corridor(sogm.frame(k), seed, map_box, max_iters, prune_radius, max_planes,
                             seed_margin=robot_radius, **kw)
    return SpatioTemporalCorridor(shrink(poly, robot_radius, seed), (t0, t0 + path.dt), k)


def dump_corridors(corridors: list, path) -> None:
    rows = [
        {"frame_index": c.frame_index, "window": list(c.window), **c.polytope.to_dict()}
        for c in corridors
    ]
    with open(path, "w") as f:
        json.dump(rows, f, indent=1)


def load_corridors(path) -> list:
    with open(path) as f:
        rows = json.load(f)
    out = []
    for r in rows:
        H = np.asarray(r["halfspaces"], dtype=float).reshape(-1, 4)
        out.append(SpatioTemporalCorridor(Polytope(H[:, :3], H[:, 3]), tuple(r["window"]), r["frame_index"]))
    return out
