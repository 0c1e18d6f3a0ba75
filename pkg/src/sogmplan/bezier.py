"""Piecewise Bezier curves in the Bernstein basis.

A spline is a list of pieces, each with its own duration.  Piece ``j`` is
evaluated with the normalized parameter ``s = (t - t_j) / duration_j``.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache
from math import comb

import numpy as np


class BezierError(ValueError):
    pass


@lru_cache(maxsize=None)
def bernstein_to_power(n: int) -> np.ndarray:
    """Matrix M with p(s) = sum_k (M @ c)[k] s^k for control points c."""
    M = np.zeros((n + 1, n + 1))
    for i in range(n + 1):
        for k in range(i, n + 1):
            M[k, i] = comb(n, k) * comb(k, i) * (-1) ** (k - i)
    M.setflags(write=False)
    return M


@lru_cache(maxsize=None)
def power_to_bernstein(n: int) -> np.ndarray:
    M = np.linalg.inv(bernstein_to_power(n))
    M.setflags(write=False)
    return M


def bernstein_basis(n: int, s) -> np.ndarray:
    """Basis values b_n^i(s), shape (..., n+1)."""
    s = np.asarray(s, dtype=float)[..., None]
    i = np.arange(n + 1)
    binom = np.array([comb(n, k) for k in range(n + 1)], dtype=float)
    return binom * s**i * (1.0 - s) ** (n - i)


@dataclass
class BezierPiece:
    control_points: np.ndarray  # (n+1, 3)
    duration: float

    def __post_init__(self):
        self.control_points = np.atleast_2d(np.asarray(self.control_points, dtype=float))
        if self.control_points.shape[0] < 1:
            raise BezierError("a piece needs at least one control point")
        if not self.duration > 0:
            raise BezierError(f"piece duration must be positive, got {self.duration}")

    @property
    def degree(self) -> int:
        return self.control_points.shape[0] - 1

    def eval(self, s, derivative: int = 0) -> np.ndarray:
        """Evaluate at normalized parameter(s) ``s`` in [0, 1].

        Derivatives are taken with respect to time, i.e. scaled by
        ``1 / duration`` per order.
        """
        piece = self
        for _ in range(derivative):
            if piece.degree == 0:
                s_arr = np.asarray(s, dtype=float)
                return np.zeros(s_arr.shape + (self.control_points.shape[1],))
            piece = derivative_control_points(piece)
        B = bernstein_basis(piece.degree, s)
        return B @ piece.control_points

    def split(self, s: float) -> tuple["BezierPiece", "BezierPiece"]:
        """De Casteljau subdivision at normalized parameter ``s``."""
        pts = self.control_points.copy()
        left, right = [pts[0].copy()], [pts[-1].copy()]
        while len(pts) > 1:
            pts = (1.0 - s) * pts[:-1] + s * pts[1:]
            left.append(pts[0].copy())
            right.append(pts[-1].copy())
        return (
            BezierPiece(np.array(left), self.duration * s),
            BezierPiece(np.array(right[::-1]), self.duration * (1.0 - s)),
        )


def derivative_control_points(piece: BezierPiece) -> BezierPiece:
    """Hodograph of a piece: degree n-1 with points n/duration * (c[i+1] - c[i])."""
    n = piece.degree
    if n == 0:
        raise BezierError("cannot differentiate a degree-0 piece")
    d = n / piece.duration * np.diff(piece.control_points, axis=0)
    return BezierPiece(d, piece.duration)


def de_casteljau(control_points: np.ndarray, s: float) -> np.ndarray:
    pts = np.asarray(control_points, dtype=float)
    while len(pts) > 1:
        pts = (1.0 - s) * pts[:-1] + s * pts[1:]
    return pts[0]


def piece_from_polynomial(coeffs: np.ndarray, duration: float, degree: int | None = None) -> BezierPiece:
    """Build a piece from power-basis coefficients in *time*.

    ``coeffs[k]`` multiplies ``t**k`` (rows) for each axis (columns).  The
    polynomial is degree-elevated to ``degree`` if given.
    """
    coeffs = np.atleast_2d(np.asarray(coeffs, dtype=float))
    m = coeffs.shape[0] - 1
    n = m if degree is None else degree
    if n < m:
        raise BezierError("target degree lower than polynomial degree")
    scaled = np.zeros((n + 1, coeffs.shape[1]))
    scaled[: m + 1] = coeffs * (duration ** np.arange(m + 1))[:, None]
    return BezierPiece(power_to_bernstein(n) @ scaled, duration)


@dataclass
class BezierSpline:
    pieces: list[BezierPiece]
    t_start: float = 0.0
    _knots: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        if not self.pieces:
            raise BezierError("spline needs at least one piece")
        self._knots = self.t_start + np.concatenate(
            [[0.0], np.cumsum([p.duration for p in self.pieces])]
        )

    @property
    def knots(self) -> np.ndarray:
        return self._knots

    @property
    def t_end(self) -> float:
        return float(self._knots[-1])

    @property
    def degree(self) -> int:
        return self.pieces[0].degree

    @property
    def durations(self) -> np.ndarray:
        return np.array([p.duration for p in self.pieces])

    def to_dict(self) -> dict:
        return {
            "t_start": self.t_start,
            "pieces": [{"duration": p.duration, "control_points": p.control_points.tolist()} for p in self.pieces],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "BezierSpline":
        pieces = [BezierPiece(np.asarray(p["control_points"], dtype=float), p["duration"]) for p in d["pieces"]]
        return cls(pieces, d["t_start"])

    def locate(self, t: float) -> tuple[int, float]:
        """Piece index and normalized parameter for time ``t``."""
        j = int(np.searchsorted(self._knots, t, side="right")) - 1
        j = min(max(j, 0), len(self.pieces) - 1)
        s = (t - self._knots[j]) / self.pieces[j].duration
        return j, min(max(s, 0.0), 1.0)

    def eval(self, t: float, derivative: int = 0) -> np.ndarray:
        tol = 1e-9 * max(1.0, abs(self.t_end))
        if t < self.t_start - tol or t > self.t_end + tol:
            raise BezierError(f"t={t} outside [{self.t_start}, {self.t_end}]")
        j, s = self.locate(t)
        return self.pieces[j].eval(s, derivative)

    def eval_clamped(self, t: float, derivative: int = 0) -> np.ndarray:
        """Like ``eval`` but holds the end state outside the time range."""
        if t >= self.t_end:
            if derivative == 0:
                return self.pieces[-1].control_points[-1].copy()
            return np.zeros(3) if t > self.t_end else self.pieces[-1].eval(1.0, derivative)
        if t <= self.t_start:
            return self.pieces[0].eval(0.0, derivative)
        return self.eval(t, derivative)

    def sample(self, times, derivative: int = 0) -> np.ndarray:
        times = np.asarray(times, dtype=float)
        idx = np.clip(np.searchsorted(self._knots, times, side="right") - 1, 0, len(self.pieces) - 1)
        n = self.pieces[0].degree
        if derivative == 0 and times.ndim == 1 and all(p.degree == n for p in self.pieces):
            # one batched Bernstein evaluation when all pieces share a degree
            dur = np.array([p.duration for p in self.pieces])
            s = np.clip((times - self._knots[idx]) / dur[idx], 0.0, 1.0)
            C = np.stack([p.control_points for p in self.pieces])[idx]
            return np.einsum("mi,mia->ma", bernstein_basis(n, s), C)
        out = np.empty(times.shape + (3,))
        for j in np.unique(idx):
            mask = idx == j
            piece = self.pieces[j]
            s = np.clip((times[mask] - self._knots[j]) / piece.duration, 0.0, 1.0)
            out[mask] = piece.eval(s, derivative)
        return out

    def resample_pieces(self, duration: float) -> "BezierSpline":
        """Split pieces so every piece has length ``duration``.

        Requires all piece durations to be integer multiples of ``duration``.
        """
        out = []
        for piece in self.pieces:
            k = int(round(piece.duration / duration))
            if k < 1 or abs(k * duration - piece.duration) > 1e-9:
                raise BezierError("piece duration is not a multiple of the target")
            rest = piece
            for m in range(k, 1, -1):
                left, rest = rest.split(1.0 / m)
                left.duration = duration
                out.append(left)
            rest.duration = duration
            out.append(rest)
        return BezierSpline(out, self.t_start)

    def extended(self, until: float, duration: float) -> "BezierSpline":
        """Append constant hover pieces until ``until``."""
        pieces = list(self.pieces)
        end = self.pieces[-1].control_points[-1]
        t = self.t_end
        n = self.degree
        while t < until - 1e-9:
            pieces.append(BezierPiece(np.tile(end, (n + 1, 1)), duration))
            t += duration
        return BezierSpline(pieces, self.t_start)


def constant_spline(p, t_start: float, duration: float, n_pieces: int = 1, degree: int = 5) -> BezierSpline:
    p = np.asarray(p, dtype=float)
    return BezierSpline(
        [BezierPiece(np.tile(p, (degree + 1, 1)), duration) for _ in range(n_pieces)], t_start
    )
