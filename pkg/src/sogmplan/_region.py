"""Compiled kernels for convex region inflation.

Ellipsoids are handled in Cholesky form: the set ``{d + L u : |u| <= 1}``
with ``L`` lower triangular and positive diagonal.
"""
import math

import numpy as np
from numba import njit

# variable layout: L00 L10 L11 L20 L21 L22 d0 d1 d2
_LJ = (0, 1, 1, 2, 2, 2)  # row of each L entry
_LK = (0, 0, 1, 0, 1, 2)  # column of each L entry


@njit(cache=True)
def _barrier_value(x, A, b, t):
    val = -t * (math.log(x[0]) + math.log(x[2]) + math.log(x[5]))
    for i in range(A.shape[0]):
        a0, a1, a2 = A[i, 0], A[i, 1], A[i, 2]
        w0 = x[0] * a0 + x[1] * a1 + x[3] * a2
        w1 = x[2] * a1 + x[4] * a2
        w2 = x[5] * a2
        s = b[i] - (a0 * x[6] + a1 * x[7] + a2 * x[8]) - math.sqrt(w0 * w0 + w1 * w1 + w2 * w2)
        if s <= 0.0:
            return np.inf
        val -= math.log(s)
    return val


@njit(cache=True)
def _barrier(x, A, b, t, g, H):
    """Value of -t*logdet(L) - sum log(slack); fills gradient ``g`` and Hessian ``H``."""
    g[:] = 0.0
    H[:, :] = 0.0
    val = 0.0
    for kk in (0, 2, 5):
        val -= t * math.log(x[kk])
        g[kk] -= t / x[kk]
        H[kk, kk] += t / (x[kk] * x[kk])
    J = np.empty(9)
    aj = np.empty(3)
    w = np.empty(3)
    for i in range(A.shape[0]):
        aj[0], aj[1], aj[2] = A[i, 0], A[i, 1], A[i, 2]
        w[0] = x[0] * aj[0] + x[1] * aj[1] + x[3] * aj[2]
        w[1] = x[2] * aj[1] + x[4] * aj[2]
        w[2] = x[5] * aj[2]
        nw = math.sqrt(w[0] * w[0] + w[1] * w[1] + w[2] * w[2])
        s = b[i] - (aj[0] * x[6] + aj[1] * x[7] + aj[2] * x[8]) - nw
        if s <= 0.0:
            return np.inf
        val -= math.log(s)
        inv = 1.0 / s
        # gradient of the constraint a.d + |L^T a| - b
        if nw > 0:
            for v in range(6):
                J[v] = w[_LK[v]] / nw * aj[_LJ[v]]
        else:
            for v in range(6):
                J[v] = 0.0
        J[6], J[7], J[8] = aj[0], aj[1], aj[2]
        for p in range(9):
            g[p] += J[p] * inv
            jp = J[p] * inv * inv
            for q in range(p, 9):
                H[p, q] += jp * J[q]
        if nw > 0:
            c0 = inv / nw
            for p in range(6):
                jp, kp = _LJ[p], _LK[p]
                for q in range(p, 6):
                    jq, kq = _LJ[q], _LK[q]
                    c = (1.0 if kp == kq else 0.0) - w[kp] * w[kq] / (nw * nw)
                    H[p, q] += aj[jp] * aj[jq] * c * c0
    for p in range(9):
        for q in range(p):
            H[p, q] = H[q, p]
    return val


@njit(cache=True)
def _newton_step(H, g):
    """-H^{-1} g with a diagonal shift relative to H's scale; zeros if H is singular."""
    n = g.shape[0]
    big = 1.0
    for p in range(n):
        big = max(big, abs(H[p, p]))
    for p in range(n):
        H[p, p] += 1e-13 * big
    try:
        return -np.linalg.solve(H, g)
    except Exception:
        return np.zeros(n)


@njit(cache=True)
def mvie(A, b, x0, gap_tol, max_newton, t0=1.0, mu=50.0):
    """Maximum-volume inscribed ellipsoid by a log-barrier path-following method.

    ``x0`` must be strictly feasible.  Stops once m / t < gap_tol.
    Returns (x, newton_steps).
    """
    m = A.shape[0]
    x = x0.copy()
    g = np.empty(9)
    H = np.empty((9, 9))
    t = t0
    total = 0
    while True:
        for _ in range(50):
            val = _barrier(x, A, b, t, g, H)
            dx = _newton_step(H, g)
            lam2 = -(g @ dx)
            total += 1
            if lam2 * 0.5 < 1e-9 or total > max_newton:
                break
            step = 1.0
            while step > 1e-12:
                xn = x + step * dx
                if xn[0] > 0 and xn[2] > 0 and xn[5] > 0:
                    if _barrier_value(xn, A, b, t) <= val - 0.25 * step * lam2:
                        break
                step *= 0.5
            if step <= 1e-12:
                break
            x = xn
        if m / t < gap_tol or total > max_newton:
            break
        t *= mu
    return x, total


@njit(cache=True)
def _cheb_value(x, A, b, t):
    val = -t * x[3]
    for i in range(A.shape[0]):
        s = b[i] - A[i, 0] * x[0] - A[i, 1] * x[1] - A[i, 2] * x[2] - x[3]
        if s <= 0:
            return np.inf
        val -= math.log(s)
    return val


@njit(cache=True)
def chebyshev_barrier(A, b, gap_tol):
    """Approximate Chebyshev radius/center of {A x <= b} (unit-norm rows, bounded).

    Maximizes r subject to a_i.x + r <= b_i with a barrier method; the
    problem is always strictly feasible.  Returns (r, center).
    """
    m = A.shape[0]
    x = np.zeros(4)
    x[3] = np.min(b) - 1.0
    t = 1.0
    g = np.empty(4)
    H = np.empty((4, 4))
    row = np.empty(4)
    while True:
        for _ in range(60):
            g[:] = 0.0
            H[:, :] = 0.0
            g[3] = -t
            val = -t * x[3]
            for i in range(m):
                row[0], row[1], row[2], row[3] = A[i, 0], A[i, 1], A[i, 2], 1.0
                s = b[i] - row[0] * x[0] - row[1] * x[1] - row[2] * x[2] - x[3]
                val -= math.log(s)
                inv = 1.0 / s
                for p in range(4):
                    g[p] += row[p] * inv
                    for q in range(p, 4):
                        H[p, q] += row[p] * row[q] * inv * inv
            for p in range(4):
                for q in range(p):
                    H[p, q] = H[q, p]
            dx = _newton_step(H, g)
            lam2 = -(g @ dx)
            if lam2 * 0.5 < 1e-10:
                break
            step = 1.0
            while step > 1e-14:
                xn = x + step * dx
                if _cheb_value(xn, A, b, t) <= val - 0.25 * step * lam2:
                    break
                step *= 0.5
            if step <= 1e-14:
                break
            x = xn
        if m / t < gap_tol:
            break
        t *= 20.0
    return x[3], x[:3].copy()


@njit(cache=True)
def _box_metric_closest(lo, hi, d, M, out):
    """argmin (x-d)^T M (x-d) over the box [lo, hi] by active-set enumeration."""
    best = np.inf
    x0 = x1 = x2 = 0.0
    for code in range(27):
        m0 = code % 3
        m1 = (code // 3) % 3
        m2 = code // 9
        x = (lo[0] if m0 == 1 else hi[0], lo[1] if m1 == 1 else hi[1], lo[2] if m2 == 1 else hi[2])
        e0, e1, e2 = x[0] - d[0], x[1] - d[1], x[2] - d[2]
        nf = (m0 == 0) + (m1 == 0) + (m2 == 0)
        if nf == 3:
            e0 = e1 = e2 = 0.0
        elif nf == 2:
            # two free coordinates i, j, fixed k
            if m0 != 0:
                i, j, k = 1, 2, 0
            elif m1 != 0:
                i, j, k = 0, 2, 1
            else:
                i, j, k = 0, 1, 2
            ek = (e0, e1, e2)[k]
            r0 = -M[i, k] * ek
            r1 = -M[j, k] * ek
            det = M[i, i] * M[j, j] - M[i, j] * M[j, i]
            yi = (r0 * M[j, j] - M[i, j] * r1) / det
            yj = (M[i, i] * r1 - M[j, i] * r0) / det
            ee = [e0, e1, e2]
            ee[i] = yi
            ee[j] = yj
            e0, e1, e2 = ee[0], ee[1], ee[2]
        elif nf == 1:
            i = 0 if m0 == 0 else (1 if m1 == 0 else 2)
            ee = [e0, e1, e2]
            ee[i] = 0.0
            r = -(M[i, 0] * ee[0] + M[i, 1] * ee[1] + M[i, 2] * ee[2])
            ee[i] = r / M[i, i]
            e0, e1, e2 = ee[0], ee[1], ee[2]
        y0, y1, y2 = d[0] + e0, d[1] + e1, d[2] + e2
        if (y0 < lo[0] - 1e-12 or y0 > hi[0] + 1e-12 or y1 < lo[1] - 1e-12 or y1 > hi[1] + 1e-12
                or y2 < lo[2] - 1e-12 or y2 > hi[2] + 1e-12):
            continue
        val = (e0 * (M[0, 0] * e0 + M[0, 1] * e1 + M[0, 2] * e2)
               + e1 * (M[1, 0] * e0 + M[1, 1] * e1 + M[1, 2] * e2)
               + e2 * (M[2, 0] * e0 + M[2, 1] * e1 + M[2, 2] * e2))
        if val < best:
            best = val
            x0, x1, x2 = y0, y1, y2
    out[0], out[1], out[2] = x0, x1, x2


@njit(cache=True)
def _segment_box_closest(q0, q1, lo, hi):
    """Closest points (segment point, box point) by golden-section search on s."""
    def f(s):
        acc = 0.0
        for q in range(3):
            p = q0[q] + s * (q1[q] - q0[q])
            c = min(max(p, lo[q]), hi[q])
            acc += (p - c) ** 2
        return acc

    a, bb = 0.0, 1.0
    gr = (math.sqrt(5.0) - 1.0) / 2.0
    c = bb - gr * (bb - a)
    dd = a + gr * (bb - a)
    fc, fd = f(c), f(dd)
    for _ in range(80):
        if fc < fd:
            bb, dd, fd = dd, c, fc
            c = bb - gr * (bb - a)
            fc = f(c)
        else:
            a, c, fc = c, dd, fd
            dd = a + gr * (bb - a)
            fd = f(dd)
    s = 0.5 * (a + bb)
    if f(0.0) <= f(s):
        s = 0.0
    if f(1.0) <= f(s):
        s = 1.0
    ps = q0 + s * (q1 - q0)
    pb = np.empty(3)
    for q in range(3):
        pb[q] = min(max(ps[q], lo[q]), hi[q])
    return ps, pb


@njit(cache=True)
def separating_planes(centers, h, L, d, seeds, max_planes, margin):
    """Greedy separating hyperplanes between an ellipsoid and cube obstacles.

    Cubes (centers, half side ``h``) are visited by increasing ellipsoid-metric
    distance of their centers.  Each surviving cube gets the plane tangent to
    the ellipsoid scaled to touch the cube's metric-closest point; cubes lying
    entirely beyond a plane are dropped.  If a tangent plane would cut a seed
    point, or pass within ``margin`` of one, the plane separating the seed
    segment from the cube is used instead.

    Returns (A, b, n_planes, status): status 0 ok, 1 plane budget hit with
    cubes left, 2 a seed touches a cube.
    """
    n = centers.shape[0]
    A = np.zeros((max_planes, 3))
    b = np.zeros(max_planes)
    if n == 0:
        return A, b, 0, 0
    Linv = np.linalg.inv(L)
    M = Linv.T @ Linv
    dist = np.empty(n)
    for i in range(n):
        e0 = centers[i, 0] - d[0]
        e1 = centers[i, 1] - d[1]
        e2 = centers[i, 2] - d[2]
        u0 = Linv[0, 0] * e0 + Linv[0, 1] * e1 + Linv[0, 2] * e2
        u1 = Linv[1, 0] * e0 + Linv[1, 1] * e1 + Linv[1, 2] * e2
        u2 = Linv[2, 0] * e0 + Linv[2, 1] * e1 + Linv[2, 2] * e2
        dist[i] = u0 * u0 + u1 * u1 + u2 * u2
    alive = np.ones(n, dtype=np.bool_)
    count = 0
    lo = np.empty(3)
    hi = np.empty(3)
    xs = np.empty(3)
    # nearest cube first; each plane pass also finds the next nearest survivor
    i = np.argmin(dist)
    while i >= 0:
        if count >= max_planes:
            return A, b, count, 1
        for q in range(3):
            lo[q] = centers[i, q] - h
            hi[q] = centers[i, q] + h
        _box_metric_closest(lo, hi, d, M, xs)
        a = M @ (xs - d)
        na = math.sqrt(a @ a)
        use_fallback = na < 1e-12
        if not use_fallback:
            a /= na
            off = a[0] * centers[i, 0] + a[1] * centers[i, 1] + a[2] * centers[i, 2] \
                - h * (abs(a[0]) + abs(a[1]) + abs(a[2]))
            for k in range(seeds.shape[0]):
                if a @ seeds[k] > off - margin - 1e-9:
                    use_fallback = True
                    break
        if use_fallback:
            ps, pb = _segment_box_closest(seeds[0], seeds[seeds.shape[0] - 1], lo, hi)
            a = pb - ps
            na = math.sqrt(a @ a)
            if na < 1e-9:
                return A, b, count, 2
            a /= na
            off = a[0] * centers[i, 0] + a[1] * centers[i, 1] + a[2] * centers[i, 2] \
                - h * (abs(a[0]) + abs(a[1]) + abs(a[2]))
        A[count] = a
        b[count] = off
        count += 1
        l1 = h * (abs(a[0]) + abs(a[1]) + abs(a[2]))
        alive[i] = False
        best = np.inf
        i = -1
        for j in range(n):
            if alive[j]:
                if a[0] * centers[j, 0] + a[1] * centers[j, 1] + a[2] * centers[j, 2] - l1 >= off - 1e-12:
                    alive[j] = False
                elif dist[j] < best:
                    best = dist[j]
                    i = j
    return A, b, count, 0


@njit(cache=True)
def _logdet(x):
    return math.log(x[0]) + math.log(x[2]) + math.log(x[5])


@njit(cache=True)
def _strictly_inside(x, A, b, m):
    return _barrier_value(x, A[:m], b[:m], 0.0) < np.inf


@njit(cache=True)
def inflate(centers, h, seeds, x_init, boundA, boundB, max_iters, max_planes, margin, gap_tol, fix_tol):
    """Alternate separating planes and inscribed ellipsoids around a seed.

    ``x_init`` is the starting ellipsoid in packed Cholesky form.  An
    iteration is accepted only if its ellipsoid is not smaller than the last
    accepted one, so the recorded log volumes never decrease.

    Returns (A, b, m, x, log_volumes, status) where the first ``m`` rows of
    (A, b) are the accepted polytope; status 0 ok, 1 plane budget exceeded
    before any region was accepted, 2 seed touches an obstacle.
    """
    nb = boundA.shape[0]
    budget = max_planes - nb
    cur_A = np.empty((max_planes, 3))
    cur_b = np.empty(max_planes)
    acc_A = np.empty((max_planes, 3))
    acc_b = np.empty(max_planes)
    cur_A[:nb] = boundA
    cur_b[:nb] = boundB
    acc_A[:nb] = boundA
    acc_b[:nb] = boundB
    acc_m = nb
    logv = np.empty(max_iters)
    iters = 0
    x = x_init.copy()
    for it in range(max_iters):
        L = np.zeros((3, 3))
        L[0, 0], L[1, 0], L[1, 1], L[2, 0], L[2, 1], L[2, 2] = x[0], x[1], x[2], x[3], x[4], x[5]
        Ap, bp, n, st = separating_planes(centers, h, L, x[6:9], seeds, budget, margin)
        if st == 2:
            return acc_A, acc_b, acc_m, x, logv[:iters], 2
        if st == 1:
            if iters > 0:
                break
            return acc_A, acc_b, acc_m, x, logv[:iters], 1
        m = nb + n
        cur_A[nb:m] = Ap[:n]
        cur_b[nb:m] = bp[:n]
        # warm start from the current ellipsoid, shrunk until strictly inside
        xs = x.copy()
        found = False
        alpha = 1.0
        for _ in range(40):
            xs[:6] = alpha * x[:6]
            if _strictly_inside(xs, cur_A, cur_b, m):
                found = True
                break
            alpha *= 0.5
        if not found:
            r, c = chebyshev_barrier(cur_A[:m].copy(), cur_b[:m].copy(), 1e-6)
            if not r > 0:
                return acc_A, acc_b, acc_m, x, logv[:iters], 1
            xs[:] = 0.0
            xs[0] = xs[2] = xs[5] = 0.99 * r
            xs[6:9] = c
        xn, _ = mvie(cur_A[:m].copy(), cur_b[:m].copy(), xs, gap_tol, 500, 1.0, 50.0)
        lv = _logdet(xn)
        if iters > 0 and lv < logv[iters - 1]:
            break
        acc_A[:m] = cur_A[:m]
        acc_b[:m] = cur_b[:m]
        acc_m = m
        x = xn
        logv[iters] = lv
        iters += 1
        if iters > 1 and math.exp(lv - logv[iters - 2]) - 1.0 <= fix_tol:
            break
    return acc_A, acc_b, acc_m, x, logv[:iters], 0


@njit(cache=True)
def needle(seeds, width):
    """Packed Cholesky form of a thin ellipsoid around the first-to-last seed segment."""
    a = seeds[0]
    bb = seeds[seeds.shape[0] - 1]
    mid = 0.5 * (a + bb)
    axis = bb - a
    length = math.sqrt(axis @ axis)
    x = np.zeros(9)
    x[6:9] = mid
    if length < 1e-9:
        x[0] = x[2] = x[5] = width
        return x
    u = axis / length
    k = np.argmin(np.abs(u))
    tmp = np.zeros(3)
    tmp[k] = 1.0
    v = np.cross(u, tmp)
    v /= math.sqrt(v @ v)
    w = np.cross(u, v)
    Rm = np.empty((3, 3))
    Rm[:, 0] = u
    Rm[:, 1] = v
    Rm[:, 2] = w
    semi = np.array([0.5 * length + width, width, width])
    # E^2 = R diag(semi^2) R^T
    E2 = (Rm * semi ** 2) @ Rm.T
    L = np.linalg.cholesky(E2)
    x[0], x[1], x[2], x[3], x[4], x[5] = L[0, 0], L[1, 0], L[1, 1], L[2, 0], L[2, 1], L[2, 2]
    return x
