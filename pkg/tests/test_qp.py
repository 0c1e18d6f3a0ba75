import numpy as np
import pytest
import scipy.sparse as sp
from hypothesis import given, strategies as st

from sogmplan.bezier import derivative_control_points
from sogmplan.corridor import Polytope, SpatioTemporalCorridor
from sogmplan.qp import QpError, QpProblem, solve_qp
from sogmplan.trajopt import (
    BoundaryState, Limits, OptimizationError, assemble_qp, jerk_cost, optimize_trajectory, solve_trajectory,
)

seeds = st.integers(0, 2**31 - 1)
METHODS = ["clarabel", "osqp"]


def _projection_qp():
    # nearest point to (2, -1) with x + y = 1 and y >= 0.5
    P = sp.eye(2)
    q = -np.array([2.0, -1.0])
    G = sp.csr_matrix([[0.0, -1.0]])
    A = sp.csr_matrix([[1.0, 1.0]])
    return QpProblem(P, q, G, np.array([-0.5]), A, np.array([1.0]))


@pytest.mark.parametrize("method", METHODS)
def test_small_qp(method):
    res = solve_qp(_projection_qp(), tol=1e-6, method=method)
    assert res.ok
    assert np.allclose(res.x, [0.5, 0.5], atol=1e-5)
    assert max(res.residuals.values()) <= 1e-6
    lam, nu = res.duals
    # stationarity in original units: x - c + G^T lam + A^T nu = 0
    assert np.allclose(res.x - [2, -1] + np.array([0, -1]) * lam[0] + nu[0], 0, atol=1e-4)


@pytest.mark.parametrize("method", METHODS)
def test_infeasible_qp(method):
    p = QpProblem(sp.eye(1), np.zeros(1), sp.csr_matrix([[1.0], [-1.0]]), np.array([-1.0, -1.0]),
                  sp.csr_matrix((0, 1)), np.zeros(0))
    assert solve_qp(p, method=method).status == "infeasible"


def test_qp_errors():
    with pytest.raises(QpError):
        solve_qp(_projection_qp(), method="simplex")
    with pytest.raises(QpError):
        QpProblem(sp.eye(2), np.zeros(2), sp.csr_matrix((1, 2)), np.zeros(2), sp.csr_matrix((0, 2)), np.zeros(0))


def test_problem_helpers():
    p = _projection_qp()
    assert p.symmetry_error() == 0.0
    assert p.min_scaled_eigenvalue() == pytest.approx(1.0)
    assert p.objective(np.array([2.0, -1.0])) == pytest.approx(-2.5)


def chain(lo, hi, n, dt=0.1):
    return [SpatioTemporalCorridor(Polytope.box(lo, hi), (j * dt, (j + 1) * dt), j) for j in range(n)]


def random_corridors(rng, n):
    """Overlapping boxes drifting along x, the last one containing the goal."""
    out, c = [], np.array([0.0, 0.0, 1.0])
    centers = []
    for j in range(n):
        half = rng.uniform(0.3, 0.8, 3)
        out.append(SpatioTemporalCorridor(Polytope.box(c - half, c + half), (0.1 * j, 0.1 * (j + 1)), j))
        centers.append(c.copy())
        c = c + np.array([rng.uniform(0.05, 0.15), rng.uniform(-0.1, 0.1), 0.0])
    return out, centers


def test_rest_to_rest_matches_quintic():
    D, T = 2.0, 2.0
    cs = chain([-5, -5, -5], [5, 5, 5], 20)
    spline, res = solve_trajectory(cs, BoundaryState([0, 0, 0]), BoundaryState([D, 0, 0]), Limits(10, 20),
                                   method="clarabel")
    analytic = 720.0 * D**2 / T**5
    assert jerk_cost(spline) == pytest.approx(analytic, rel=1e-2)
    assert res.objective == pytest.approx(jerk_cost(spline), rel=1e-6)
    # the quintic itself: x(t) = D (10 s^3 - 15 s^4 + 6 s^5)
    for t in np.linspace(0, T, 9):
        s = t / T
        assert spline.eval(t)[0] == pytest.approx(D * (10 * s**3 - 15 * s**4 + 6 * s**5), abs=5e-3)


@given(seeds)
def test_random_corridor_instances_satisfy_constraints(seed):
    rng = np.random.default_rng(seed)
    n = int(rng.integers(3, 12))
    cs, centers = random_corridors(rng, n)
    start = BoundaryState(centers[0], rng.uniform(-0.3, 0.3, 3), np.zeros(3))
    goal = BoundaryState(centers[-1], None, None)
    lim = Limits(2.0, 6.0)
    try:
        spline, res = solve_trajectory(cs, start, goal, lim, method="clarabel", tol=1e-6)
    except OptimizationError as e:
        assert e.result is not None and e.result.status == "infeasible"
        return
    assert max(res.residuals.values()) <= 1e-6
    for piece, c in zip(spline.pieces, cs):
        assert np.all(c.polytope.contains(piece.control_points, 1e-6))
        v = derivative_control_points(piece)
        a = derivative_control_points(v)
        assert np.abs(v.control_points).max() <= lim.v_max + 1e-5
        assert np.abs(a.control_points).max() <= lim.a_max + 1e-5
    assert np.allclose(spline.eval(0.0), start.p, atol=1e-5)
    assert np.allclose(spline.eval(0.0, 1), start.v, atol=1e-4)
    assert np.allclose(spline.eval(spline.t_end), goal.p, atol=1e-5)
    # C2 at every knot
    for t in spline.knots[1:-1]:
        for d in range(3):
            left = spline.pieces[np.searchsorted(spline.knots, t) - 1].eval(1.0, d)
            right = spline.pieces[np.searchsorted(spline.knots, t)].eval(0.0, d)
            assert np.allclose(left, right, atol=1e-4 * max(1, np.abs(left).max()))


def test_assemble_tags_and_shapes():
    cs = chain([-1, -1, -1], [1, 1, 1], 3)
    p = assemble_qp(cs, BoundaryState([0, 0, 0]), BoundaryState([0.5, 0, 0]), Limits(), degree=5)
    assert p.n == 3 * 18
    assert p.row_tags["corridor"] == slice(0, 3 * 6 * 6)
    assert p.A.shape[0] == 9 + 9 + 2 * 9
    free = assemble_qp(cs, BoundaryState([0, 0, 0]), BoundaryState([0.5, 0, 0], None, None), Limits())
    assert free.A.shape[0] == p.A.shape[0] - 6


def test_trajectory_errors():
    cs = chain([-1, -1, -1], [1, 1, 1], 3)
    with pytest.raises(OptimizationError):
        optimize_trajectory(cs, BoundaryState([3, 0, 0]), BoundaryState([0, 0, 0]), Limits())
    with pytest.raises(ValueError):
        assemble_qp(cs, BoundaryState([0, 0, 0]), BoundaryState([0, 0, 0]), Limits(), degree=2)
    with pytest.raises(ValueError):
        assemble_qp([], BoundaryState([0, 0, 0]), BoundaryState([0, 0, 0]), Limits())
    # cannot cover 1.8 m in 0.3 s under the speed limit
    with pytest.raises(OptimizationError) as e:
        optimize_trajectory(cs, BoundaryState([-0.9, 0, 0]), BoundaryState([0.9, 0, 0]), Limits(), method="clarabel")
    assert e.value.result.status == "infeasible"


@pytest.mark.parametrize("method", METHODS)
def test_methods_agree(method):
    cs = chain([-2, -2, -2], [2, 2, 2], 10)
    spline = optimize_trajectory(cs, BoundaryState([0, 0, 0]), BoundaryState([0.6, 0.2, 0]), Limits(),
                                 method=method, tol=1e-5, max_iter=20000)
    assert jerk_cost(spline) == pytest.approx(720 * (0.6**2 + 0.2**2) / 1.0**5, rel=2e-2)


def test_residuals_of_diverged_iterate_never_pass():
    from sogmplan.qp import _equilibrate, kkt_residuals

    s = _equilibrate(_projection_qp())
    for x in ([1e300, -1e300], [1e300, 1e300], [np.inf, 0.0]):
        res = kkt_residuals(s, np.array(x), np.array([1e300]), np.array([0.0]))
        assert not any(np.isnan(v) for v in res.values())
        assert max(res.values()) > 1e-6
