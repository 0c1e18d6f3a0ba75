import numpy as np
import pytest
from hypothesis import given, strategies as st
from numpy.polynomial import legendre
from scipy.spatial import ConvexHull

from sogmplan.bezier import (
    BezierError, BezierPiece, BezierSpline, bernstein_basis, bernstein_to_power, constant_spline,
    de_casteljau, derivative_control_points, piece_from_polynomial, power_to_bernstein,
)
from sogmplan.trajopt import jerk_cost, jerk_gram

from conftest import random_spline

seeds = st.integers(0, 2**31 - 1)


def _fd(spline, t, h, order):
    f = spline.eval
    if order == 1:
        return (-f(t + 2 * h) + 8 * f(t + h) - 8 * f(t - h) + f(t - 2 * h)) / (12 * h)
    return (-f(t + 2 * h) + 16 * f(t + h) - 30 * f(t) + 16 * f(t - h) - f(t - 2 * h)) / (12 * h * h)


def test_basis_partition_of_unity():
    s = np.linspace(0, 1, 11)
    for n in range(7):
        B = bernstein_basis(n, s)
        assert np.allclose(B.sum(axis=1), 1.0)
        assert np.all(B >= 0)


def test_power_basis_round_trip():
    for n in range(1, 8):
        assert np.allclose(bernstein_to_power(n) @ power_to_bernstein(n), np.eye(n + 1))


def test_eval_matches_de_casteljau(rng):
    C = rng.normal(size=(6, 3))
    piece = BezierPiece(C, 0.7)
    for s in np.linspace(0, 1, 9):
        assert np.allclose(piece.eval(s), de_casteljau(C, s))


def test_endpoints_interpolate(rng):
    C = rng.normal(size=(6, 3))
    piece = BezierPiece(C, 2.0)
    assert np.allclose(piece.eval(0.0), C[0])
    assert np.allclose(piece.eval(1.0), C[-1])
    # end velocity is n / T times the last control-point difference
    assert np.allclose(piece.eval(1.0, 1), 5 / 2.0 * (C[-1] - C[-2]))


def test_piece_from_polynomial_matches_power_series(rng):
    coeffs = rng.normal(size=(4, 3))
    T = 0.8
    piece = piece_from_polynomial(coeffs, T, degree=6)
    assert piece.degree == 6
    for t in np.linspace(0, T, 7):
        expect = sum(coeffs[k] * t**k for k in range(4))
        assert np.allclose(piece.eval(t / T), expect)
        dexpect = sum(k * coeffs[k] * t ** (k - 1) for k in range(1, 4))
        assert np.allclose(piece.eval(t / T, 1), dexpect)


def test_piece_from_polynomial_rejects_lower_degree():
    with pytest.raises(BezierError):
        piece_from_polynomial(np.ones((5, 3)), 1.0, degree=3)


def test_split_preserves_curve(rng):
    piece = BezierPiece(rng.normal(size=(6, 3)), 1.5)
    left, right = piece.split(0.3)
    assert left.duration == pytest.approx(0.45)
    for u in np.linspace(0, 1, 5):
        assert np.allclose(left.eval(u), piece.eval(0.3 * u))
        assert np.allclose(right.eval(u), piece.eval(0.3 + 0.7 * u))
        assert np.allclose(left.eval(u, 1), piece.eval(0.3 * u, 1))


def test_invalid_pieces():
    with pytest.raises(BezierError):
        BezierPiece(np.zeros((3, 3)), 0.0)
    with pytest.raises(BezierError):
        BezierSpline([])
    with pytest.raises(BezierError):
        derivative_control_points(BezierPiece(np.zeros((1, 3)), 1.0))


def test_spline_eval_out_of_range():
    s = constant_spline([0, 0, 0], 1.0, 1.0)
    with pytest.raises(BezierError):
        s.eval(2.5)
    assert np.allclose(s.eval_clamped(5.0), 0.0)


def test_sample_matches_eval(rng):
    s = random_spline(rng, 4)
    ts = np.linspace(s.t_start, s.t_end, 37)
    ref = np.array([s.eval(t) for t in ts])
    assert np.allclose(s.sample(ts), ref)
    vref = np.array([s.eval(t, 1) for t in ts])
    assert np.allclose(s.sample(ts, 1), vref)


def test_resample_pieces(rng):
    piece = BezierPiece(rng.normal(size=(6, 3)), 0.3)
    s = BezierSpline([piece], 0.0)
    r = s.resample_pieces(0.1)
    assert len(r.pieces) == 3
    for t in np.linspace(0, 0.3, 13):
        assert np.allclose(r.eval(t), s.eval(t))
    with pytest.raises(BezierError):
        s.resample_pieces(0.07)


def test_extended_holds_end(rng):
    s = random_spline(rng, 2, t_start=0.0)
    e = s.extended(s.t_end + 0.5, 0.2)
    assert e.t_end >= s.t_end + 0.5 - 1e-9
    assert np.allclose(e.eval(e.t_end), s.eval(s.t_end))


def test_dict_round_trip(rng):
    s = random_spline(rng, 3)
    r = BezierSpline.from_dict(s.to_dict())
    assert r.t_start == s.t_start
    for a, b in zip(r.pieces, s.pieces):
        assert np.array_equal(a.control_points, b.control_points) and a.duration == b.duration


def test_jerk_cost_of_cubic_in_time():
    # p(t) = t^3 on x over [0, 2]: jerk is 6, cost 36 * 2
    piece = piece_from_polynomial(np.array([[0, 0, 0], [0, 0, 0], [0, 0, 0], [1, 0, 0]]), 2.0, degree=5)
    assert jerk_cost(BezierSpline([piece])) == pytest.approx(72.0, rel=1e-12)


def test_jerk_gram_is_psd():
    for n in range(3, 8):
        Q = jerk_gram(n, 0.4)
        assert np.allclose(Q, Q.T)
        assert np.linalg.eigvalsh(Q).min() > -1e-8 * np.abs(Q).max()


# -- property suite over random splines -------------------------------------


@given(seeds)
def test_convex_hull_containment(seed):
    rng = np.random.default_rng(seed)
    s = random_spline(rng)
    for piece in s.pieces:
        hull = ConvexHull(piece.control_points)
        pts = piece.eval(np.linspace(0, 1, 41))
        scale = np.abs(piece.control_points).max()
        assert np.all(pts @ hull.equations[:, :3].T + hull.equations[:, 3] <= 1e-9 * scale)


@given(seeds)
def test_hodograph_matches_finite_difference(seed):
    rng = np.random.default_rng(seed)
    s = random_spline(rng, n_pieces=1)
    T = s.pieces[0].duration
    h = 1e-3 * T
    for t in s.t_start + T * np.linspace(0.1, 0.9, 5):
        for order in (1, 2):
            exact = s.eval(t, order)
            approx = _fd(s, t, h, order)
            assert np.allclose(approx, exact, rtol=1e-6, atol=1e-6 * max(1.0, np.abs(exact).max()))


@given(seeds)
def test_gram_objective_matches_quadrature(seed):
    rng = np.random.default_rng(seed)
    s = random_spline(rng, degree=int(rng.integers(3, 8)))
    x, w = legendre.leggauss(12)
    total = 0.0
    for piece in s.pieces:
        u = 0.5 * (x + 1.0)
        j = piece.eval(u, 3)
        total += 0.5 * piece.duration * float(np.sum(w * np.sum(j**2, axis=1)))
    assert jerk_cost(s) == pytest.approx(total, rel=1e-8, abs=1e-12)
