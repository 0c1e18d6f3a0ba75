"""Minimum-jerk Bezier trajectories inside a corridor sequence.

Piece ``j`` lives in corridor ``j`` for that corridor's time window.  All
control points of a piece are constrained to its polytope, which keeps the
whole curve inside by the convex-hull property.  Velocity and acceleration
bounds are applied per axis to the hodograph control points.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache
from math import comb

import numpy as np
import scipy.sparse as sp

from .bezier import BezierPiece, BezierSpline
from .qp import QpProblem, QpResult, solve_qp


class OptimizationError(RuntimeError):
    def __init__(self, msg, result: QpResult | None = None):
        super().__init__(msg)
        self.result = result


@dataclass
class BoundaryState:
    """Position, velocity and acceleration; ``None`` leaves a derivative free."""

    p: np.ndarray
    v: np.ndarray | None = field(default_factory=lambda: np.zeros(3))
    a: np.ndarray | None = field(default_factory=lambda: np.zeros(3))

    def __post_init__(self):
        self.p = np.asarray(self.p, dtype=float).reshape(3)
        if self.v is not None:
            self.v = np.asarray(self.v, dtype=float).reshape(3)
        if self.a is not None:
            self.a = np.asarray(self.a, dtype=float).reshape(3)


@dataclass
class Limits:
    v_max: float = 2.0
    a_max: float = 6.0


@lru_cache(maxsize=None)
def bernstein_gram(m: int) -> np.ndarray:
    """Integral over [0, 1] of b_m^i(s) b_m^k(s)."""
    G = np.empty((m + 1, m + 1))
    for i in range(m + 1):
        for k in range(m + 1):
            G[i, k] = comb(m, i) * comb(m, k) / ((2 * m + 1) * comb(2 * m, i + k))
    G.setflags(write=False)
    return G


@lru_cache(maxsize=None)
def _third_difference(n: int) -> np.ndarray:
    D = np.zeros((n - 2, n + 1))
    for i in range(n - 2):
        D[i, i:i + 4] = [-1.0, 3.0, -3.0, 1.0]
    return D


def jerk_gram(n: int, duration: float) -> np.ndarray:
    """Q with integral of |p'''(t)|^2 dt = sum_axes c^T Q c for one piece of degree n."""
    if n < 3:
        return np.zeros((n + 1, n + 1))
    D3 = _third_difference(n)
    k = n * (n - 1) * (n - 2)
    return (k * k / duration**5) * (D3.T @ bernstein_gram(n - 3) @ D3)


def jerk_cost(spline: BezierSpline) -> float:
    """Exact integrated squared jerk of a spline."""
    total = 0.0
    for piece in spline.pieces:
        Q = jerk_gram(piece.degree, piece.duration)
        C = piece.control_points
        total += float(np.einsum("ia,ik,ka->", C, Q, C))
    return total


# ---------------------------------------------------------------------------
# assembly


def _difference_operator(n: int, duration: float, order: int) -> np.ndarray:
    """Map from control points to the order-th hodograph control points."""
    M = np.eye(n + 1)
    for r in range(order):
        M = (n - r) / duration * (M[1:] - M[:-1])
    return M


def _derivative_rows(n: int, duration: float, order: int, at_end: bool) -> np.ndarray:
    """Coefficients over a piece's control points of the order-th derivative at s=0 or s=1."""
    return _difference_operator(n, duration, order)[-1 if at_end else 0]


def _kron3(M: np.ndarray, row0: int, col0: int):
    """COO triplets of ``kron(M, I3)`` placed at (row0, col0)."""
    r, c = np.nonzero(M)
    v = M[r, c]
    rr = (row0 + 3 * r[:, None] + np.arange(3)).ravel()
    cc = (col0 + 3 * c[:, None] + np.arange(3)).ravel()
    return rr, cc, np.repeat(v, 3)


@lru_cache(maxsize=64)
def _piece_templates(n: int, duration: float):
    """Per-piece COO triplets: jerk Hessian, velocity and acceleration boxes."""
    hess = _kron3(2.0 * jerk_gram(n, duration), 0, 0)
    boxes = []
    for order in (1, 2):
        M = _difference_operator(n, duration, order)
        k = 3 * M.shape[0]
        r1, c1, v1 = _kron3(M, 0, 0)
        boxes.append((np.concatenate([r1, r1 + k]), np.concatenate([c1, c1]), np.concatenate([v1, -v1]), 2 * k))
    return hess, boxes


@lru_cache(maxsize=64)
def _knot_template(n: int, d_left: float, d_right: float, w: int):
    """COO triplets of the C2 continuity rows between two neighboring pieces."""
    parts = []
    for order in range(3):
        left = _derivative_rows(n, d_left, order, True)[None, :]
        right = _derivative_rows(n, d_right, order, False)[None, :]
        parts.append(_kron3(left, 3 * order, 0))
        parts.append(_kron3(-right, 3 * order, w))
    return tuple(np.concatenate([p[k] for p in parts]) for k in range(3))


def _coo(parts, shape):
    if not parts:
        return sp.csr_matrix(shape)
    r = np.concatenate([p[0] for p in parts])
    c = np.concatenate([p[1] for p in parts])
    v = np.concatenate([p[2] for p in parts])
    return sp.csr_matrix((v, (r, c)), shape=shape)


def assemble_qp(corridors: list, start: BoundaryState, goal: BoundaryState, limits: Limits,
                degree: int = 5) -> QpProblem:
    """Build the corridor-constrained minimum-jerk QP.

    Variables are the stacked control points, index ``(j*(n+1) + i)*3 + axis``.
    Pieces take their durations from the corridor windows.

    Args:
        corridors: one SpatioTemporalCorridor per piece.
        start, goal: boundary position, velocity and acceleration.
        limits: per-axis velocity and acceleration bounds.
        degree: Bezier degree of every piece (at least 3).

    Returns:
        QpProblem whose ``row_tags`` name the corridor, velocity and
        acceleration blocks of the inequality rows.
    """
    n = degree
    if n < 3:
        raise ValueError("degree must be at least 3 for a jerk objective")
    J = len(corridors)
    if J == 0:
        raise ValueError("need at least one corridor")
    w = (n + 1) * 3  # variables per piece
    nv = J * w
    durations = [c.window[1] - c.window[0] for c in corridors]
    if min(durations) <= 0:
        raise ValueError("corridor windows must have positive length")

    templates = [_piece_templates(n, float(D)) for D in durations]
    parts = [(r + j * w, c + j * w, v) for j, ((r, c, v), _) in enumerate(templates)]
    P = _coo(parts, (nv, nv)).tocsc()

    # inequalities: corridor rows, then velocity and acceleration boxes
    parts, h, tags, row = [], [], {}, 0
    cp = np.arange(n + 1)
    for j, c in enumerate(corridors):
        A, b = c.polytope.A, c.polytope.b
        m = A.shape[0]
        # row (i, r) holds A[r] against control point i
        rr = row + np.repeat(np.arange((n + 1) * m), 3)
        cc = (j * w + 3 * cp[:, None, None] + np.arange(3)[None, None, :]).repeat(m, axis=1).ravel()
        parts.append((rr, cc, np.tile(A.ravel(), n + 1)))
        h.append(np.tile(b, n + 1))
        row += (n + 1) * m
    tags["corridor"] = slice(0, row)
    for k_order, (name, bound) in enumerate((("velocity", limits.v_max), ("acceleration", limits.a_max))):
        first = row
        for j, (_, boxes) in enumerate(templates):
            r, c, v, k = boxes[k_order]
            parts.append((r + row, c + j * w, v))
            h.append(np.full(k, float(bound)))
            row += k
        tags[name] = slice(first, row)
    G = _coo(parts, (row, nv))

    # equalities: boundary states and C2 continuity at every knot
    parts, beq, row = [], [], 0

    def boundary(j, D, state, at_end):
        nonlocal row
        for order, val in enumerate((state.p, state.v, state.a)):
            if val is None:
                continue
            M = _derivative_rows(n, D, order, at_end)[None, :]
            parts.append(_kron3(M, row, j * w))
            beq.append(val)
            row += 3

    boundary(0, durations[0], start, False)
    boundary(J - 1, durations[-1], goal, True)
    for j in range(J - 1):
        r, c, v = _knot_template(n, float(durations[j]), float(durations[j + 1]), w)
        parts.append((r + row, c + j * w, v))
        beq.append(np.zeros(9))
        row += 9
    A = _coo(parts, (row, nv))
    return QpProblem(P, np.zeros(nv), G, np.concatenate(h), A, np.concatenate(beq), tags)


def spline_from_solution(x: np.ndarray, corridors: list, degree: int = 5) -> BezierSpline:
    C = np.asarray(x).reshape(len(corridors), degree + 1, 3)
    pieces = [BezierPiece(C[j].copy(), c.window[1] - c.window[0]) for j, c in enumerate(corridors)]
    return BezierSpline(pieces, corridors[0].window[0])


def solve_trajectory(corridors: list, start: BoundaryState, goal: BoundaryState, limits: Limits,
                     degree: int = 5, method: str = "osqp", tol: float = 1e-6,
                     max_iter: int = 4000) -> tuple[BezierSpline, QpResult]:
    """``optimize_trajectory`` that also returns the solver result."""
    first, last = corridors[0].polytope, corridors[-1].polytope
    if not first.contains(start.p, 1e-9) or not last.contains(goal.p, 1e-9):
        raise OptimizationError("boundary position outside its corridor")
    problem = assemble_qp(corridors, start, goal, limits, degree)
    result = solve_qp(problem, tol=tol, max_iter=max_iter, method=method)
    if not result.ok:
        raise OptimizationError(f"trajectory QP {result.status}", result)
    return spline_from_solution(result.x, corridors, degree), result


def optimize_trajectory(corridors: list, start: BoundaryState, goal: BoundaryState, limits: Limits,
                        degree: int = 5, method: str = "osqp", tol: float = 1e-6,
                        max_iter: int = 4000) -> BezierSpline:
    """Minimum-jerk spline through the corridors; raises ``OptimizationError`` on failure."""
    return solve_trajectory(corridors, start, goal, limits, degree, method, tol, max_iter)[0]
