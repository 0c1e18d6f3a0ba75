"""Convex quadratic programs and a solver front end with independent KKT checks.

Problems have the form::

    minimize    1/2 x^T P x + q^T x
    subject to  G x <= h,   A x = b

Two back ends are available: an operator-splitting method (osqp) and an
interior-point method (clarabel).  Whatever the back end reports, the
returned status is re-derived from residuals computed here.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp


class QpError(RuntimeError):
    pass


@dataclass
class QpProblem:
    P: sp.csc_matrix
    q: np.ndarray
    G: sp.csr_matrix
    h: np.ndarray
    A: sp.csr_matrix
    b: np.ndarray
    row_tags: dict = field(default_factory=dict)  # name -> slice of G rows

    def __post_init__(self):
        n = self.q.shape[0]
        self.P = sp.csc_matrix(self.P, shape=(n, n))
        self.G = sp.csr_matrix(self.G, shape=(self.G.shape[0], n))
        self.A = sp.csr_matrix(self.A, shape=(self.A.shape[0], n))
        self.q = np.asarray(self.q, dtype=float)
        self.h = np.asarray(self.h, dtype=float)
        self.b = np.asarray(self.b, dtype=float)
        if self.G.shape[0] != self.h.shape[0] or self.A.shape[0] != self.b.shape[0]:
            raise QpError("constraint rows and right-hand sides disagree")

    @property
    def n(self) -> int:
        return self.q.shape[0]

    def objective(self, x) -> float:
        return float(0.5 * x @ (self.P @ x) + self.q @ x)

    def symmetry_error(self) -> float:
        D = self.P - self.P.T
        return float(abs(D).max()) if D.nnz else 0.0

    def min_scaled_eigenvalue(self) -> float:
        Pd = self.P.toarray()
        s = max(np.abs(Pd).max(), 1e-300)
        return float(np.linalg.eigvalsh(0.5 * (Pd + Pd.T) / s).min())


@dataclass
class QpResult:
    x: np.ndarray | None
    status: str  # solved | infeasible | max_iter | failed
    objective: float
    residuals: dict
    iterations: int
    solver: str
    duals: tuple | None = None  # (inequality, equality) multipliers of the original rows

    @property
    def ok(self) -> bool:
        return self.status == "solved"


def _row_scale(M: sp.csr_matrix) -> np.ndarray:
    norms = np.asarray(abs(M).max(axis=1).todense()).ravel() if M.shape[0] else np.zeros(0)
    norms[norms == 0] = 1.0
    return 1.0 / norms


@dataclass
class _Scaled:
    P: sp.csc_matrix
    q: np.ndarray
    G: sp.csr_matrix
    h: np.ndarray
    A: sp.csr_matrix
    b: np.ndarray
    sigma: float
    dg: np.ndarray
    da: np.ndarray


def _equilibrate(p: QpProblem) -> _Scaled:
    # unit inf-norm constraint rows and an objective scaled to O(1)
    dg = _row_scale(p.G)
    da = _row_scale(p.A)
    pmax = abs(p.P).max() if p.P.nnz else 0.0
    sigma = 1.0 / max(pmax, np.abs(p.q).max(initial=0.0), 1e-12)
    return _Scaled(
        sp.csc_matrix(p.P * sigma), p.q * sigma,
        sp.diags(dg) @ p.G, p.h * dg,
        sp.diags(da) @ p.A, p.b * da,
        sigma, dg, da,
    )


def kkt_residuals(s: _Scaled, x, lam, nu) -> dict:
    """Relative primal, stationarity, dual-sign and complementarity residuals.

    Non-finite values (overflow on diverging iterates) are reported as inf so
    they can never pass a tolerance check.
    """
    with np.errstate(over="ignore", invalid="ignore"):
        res = _residuals(s, x, lam, nu)
    return {k: float(v) if np.isfinite(v) else np.inf for k, v in res.items()}


def _residuals(s: _Scaled, x, lam, nu) -> dict:
    Gx = s.G @ x
    Ax = s.A @ x
    slack = s.h - Gx
    prim = max(np.max(-slack, initial=0.0), np.max(np.abs(Ax - s.b), initial=0.0))
    prim_scale = max(1.0, np.max(np.abs(Gx), initial=0.0), np.max(np.abs(s.h), initial=0.0),
                     np.max(np.abs(Ax), initial=0.0), np.max(np.abs(s.b), initial=0.0))
    Px = s.P @ x
    Gl = s.G.T @ lam
    An = s.A.T @ nu
    stat = np.max(np.abs(Px + s.q + Gl + An), initial=0.0)
    stat_scale = max(1.0, np.max(np.abs(Px)), np.max(np.abs(s.q)), np.max(np.abs(Gl), initial=0.0),
                     np.max(np.abs(An), initial=0.0))
    comp = np.max(np.abs(lam * np.maximum(slack, 0.0)), initial=0.0)
    comp_scale = max(1.0, np.max(np.abs(lam), initial=0.0))
    return {
        "primal": prim / prim_scale,
        "stationarity": stat / stat_scale,
        "dual_sign": float(np.max(-lam, initial=0.0)) / comp_scale,
        "complementarity": comp / comp_scale,
    }


def _stack(s: _Scaled):
    M = sp.vstack([s.A, s.G], format="csc")
    return M


def _solve_osqp(s: _Scaled, tol, max_iter):
    import osqp

    meq = s.A.shape[0]
    M = _stack(s)
    lo = np.concatenate([s.b, np.full(s.G.shape[0], -np.inf)])
    hi = np.concatenate([s.b, s.h])
    solver = osqp.OSQP()
    solver.setup(sp.triu(s.P, format="csc"), s.q, M, lo, hi, verbose=False, polishing=True,
                 eps_abs=0.1 * tol, eps_rel=0.1 * tol, max_iter=int(max_iter),
                 eps_prim_inf=1e-9, eps_dual_inf=1e-9, scaling=10)
    r = solver.solve(raise_error=False)  # statuses are mapped below
    status = str(r.info.status).lower()
    if "infeasible" in status:
        kind = "infeasible"
    elif "maximum iterations" in status or "max_iter" in status:
        kind = "max_iter"
    elif status.startswith("solved"):
        kind = "solved"
    else:
        kind = "failed"
    if r.x is None or r.y is None or not np.all(np.isfinite(r.x)):
        return None, None, None, kind, int(r.info.iter)
    y = np.asarray(r.y)
    return np.asarray(r.x), y[meq:], y[:meq], kind, int(r.info.iter)


def _solve_clarabel(s: _Scaled, tol, max_iter):
    import clarabel

    meq, mi = s.A.shape[0], s.G.shape[0]
    M = _stack(s)
    rhs = np.concatenate([s.b, s.h])
    cones = []
    if meq:
        cones.append(clarabel.ZeroConeT(meq))
    if mi:
        cones.append(clarabel.NonnegativeConeT(mi))
    st = clarabel.DefaultSettings()
    st.verbose = False
    st.max_iter = int(max_iter)
    st.tol_gap_abs = st.tol_gap_rel = 0.1 * tol
    st.tol_feas = 0.1 * tol
    st.tol_ktratio = 1e-8
    sol = clarabel.DefaultSolver(sp.triu(s.P, format="csc"), s.q, M, rhs, cones, st).solve()
    status = str(sol.status)
    if "Infeasible" in status:
        kind = "infeasible"
    elif "MaxIterations" in status:
        kind = "max_iter"
    elif status in ("Solved", "AlmostSolved"):
        kind = "solved"
    else:
        kind = "failed"
    x = np.asarray(sol.x)
    z = np.asarray(sol.z)
    if not np.all(np.isfinite(x)):
        return None, None, None, kind, int(sol.iterations)
    return x, z[meq:], z[:meq], kind, int(sol.iterations)


_BACKENDS = {"osqp": _solve_osqp, "clarabel": _solve_clarabel}


def solve_qp(problem: QpProblem, tol: float = 1e-6, max_iter: int = 4000, method: str = "osqp") -> QpResult:
    """Solve a convex QP and certify the answer.

    Args:
        problem: the QP.
        tol: bound on every relative KKT residual for a ``solved`` status.
        max_iter: back-end iteration limit.
        method: ``"osqp"`` or ``"clarabel"``.

    Returns:
        QpResult.  ``solved`` is only reported when the residuals computed
        here, on the equilibrated problem, are all within ``tol``; a back end
        claiming success otherwise yields ``failed``.  Infeasibility and
        iteration limits are passed through with the best iterate.
    """
    try:
        backend = _BACKENDS[method]
    except KeyError:
        raise QpError(f"unknown QP method {method!r}") from None
    s = _equilibrate(problem)
    x, lam, nu, kind, iters = backend(s, tol, max_iter)
    if x is None:
        return QpResult(None, "infeasible" if kind == "infeasible" else kind, np.nan, {}, iters, method)
    res = kkt_residuals(s, x, lam, nu)
    if kind == "solved" and max(res.values()) > tol:
        kind = "failed"
    duals = (np.maximum(lam, 0.0) * s.dg / s.sigma, nu * s.da / s.sigma)
    # diverging iterates of infeasible problems can overflow here; the value is informational
    with np.errstate(over="ignore", invalid="ignore"):
        obj = problem.objective(x)
    return QpResult(x, kind, obj, res, iters, method, duals)
