"""Compiled inner loops for grid rasterization and occupancy queries.

All grids are 3D boolean arrays indexed [ix, iy, iz]; cell (i, j, k) has its
center at ``origin + (idx + 0.5) * rs``.
"""
import math

import numpy as np
from numba import njit


@njit(cache=True)
def _index_range(lo, hi, origin, rs, n):
    # cells whose centers lie in [lo, hi]
    i0 = int(math.ceil((lo - origin) / rs - 0.5))
    i1 = int(math.floor((hi - origin) / rs - 0.5))
    if i0 < 0:
        i0 = 0
    if i1 > n - 1:
        i1 = n - 1
    return i0, i1


@njit(cache=True)
def fill_capsule(grid, origin, rs, p0, p1, r):
    """Mark cells whose centers lie within ``r`` of segment p0-p1."""
    nx, ny, nz = grid.shape
    d0 = p1[0] - p0[0]
    d1 = p1[1] - p0[1]
    d2 = p1[2] - p0[2]
    dd = d0 * d0 + d1 * d1 + d2 * d2
    r2 = r * r * (1.0 + 1e-12)
    x0, x1 = _index_range(min(p0[0], p1[0]) - r, max(p0[0], p1[0]) + r, origin[0], rs, nx)
    y0, y1 = _index_range(min(p0[1], p1[1]) - r, max(p0[1], p1[1]) + r, origin[1], rs, ny)
    z0, z1 = _index_range(min(p0[2], p1[2]) - r, max(p0[2], p1[2]) + r, origin[2], rs, nz)
    count = 0
    for i in range(x0, x1 + 1):
        cx = origin[0] + (i + 0.5) * rs - p0[0]
        for j in range(y0, y1 + 1):
            cy = origin[1] + (j + 0.5) * rs - p0[1]
            for k in range(z0, z1 + 1):
                cz = origin[2] + (k + 0.5) * rs - p0[2]
                s = 0.0
                if dd > 0.0:
                    s = (cx * d0 + cy * d1 + cz * d2) / dd
                    if s < 0.0:
                        s = 0.0
                    elif s > 1.0:
                        s = 1.0
                ex = cx - s * d0
                ey = cy - s * d1
                ez = cz - s * d2
                if ex * ex + ey * ey + ez * ez <= r2:
                    if not grid[i, j, k]:
                        grid[i, j, k] = True
                        count += 1
    return count


@njit(cache=True)
def fill_polyline(grid, origin, rs, pts, r):
    """``fill_capsule`` along consecutive rows of ``pts``."""
    count = 0
    for m in range(pts.shape[0] - 1):
        count += fill_capsule(grid, origin, rs, pts[m], pts[m + 1], r)
    return count


@njit(cache=True)
def fill_polylines(frames, origin, rs, pts, bounds, frame_ids, r):
    """``fill_polyline`` of ``pts[bounds[m]:bounds[m+1]]`` into ``frames[frame_ids[m]]``."""
    count = 0
    for m in range(frame_ids.shape[0]):
        count += fill_polyline(frames[frame_ids[m]], origin, rs, pts[bounds[m]:bounds[m + 1]], r)
    return count


@njit(cache=True)
def fill_column(grid, origin, rs, p0, p1, r, zlo, zhi):
    """Vertical cylinder of radius ``r`` spanning [zlo, zhi], swept in xy from p0 to p1."""
    nx, ny, nz = grid.shape
    d0 = p1[0] - p0[0]
    d1 = p1[1] - p0[1]
    dd = d0 * d0 + d1 * d1
    r2 = r * r * (1.0 + 1e-12)
    x0, x1 = _index_range(min(p0[0], p1[0]) - r, max(p0[0], p1[0]) + r, origin[0], rs, nx)
    y0, y1 = _index_range(min(p0[1], p1[1]) - r, max(p0[1], p1[1]) + r, origin[1], rs, ny)
    z0, z1 = _index_range(zlo, zhi, origin[2], rs, nz)
    count = 0
    if z1 < z0:
        return 0
    for i in range(x0, x1 + 1):
        cx = origin[0] + (i + 0.5) * rs - p0[0]
        for j in range(y0, y1 + 1):
            cy = origin[1] + (j + 0.5) * rs - p0[1]
            s = 0.0
            if dd > 0.0:
                s = (cx * d0 + cy * d1) / dd
                if s < 0.0:
                    s = 0.0
                elif s > 1.0:
                    s = 1.0
            ex = cx - s * d0
            ey = cy - s * d1
            if ex * ex + ey * ey <= r2:
                for k in range(z0, z1 + 1):
                    if not grid[i, j, k]:
                        grid[i, j, k] = True
                        count += 1
    return count


@njit(cache=True)
def fill_torus(grid, origin, rs, c0, c1, axis, R, r, spacing):
    """Torus with core circle radius ``R`` and tube radius ``r`` translated c0 -> c1.

    The core circle is sampled every ``spacing`` along its arc; each sample
    sweeps a capsule of radius ``r + spacing / 2`` so the union covers the
    swept tube.
    """
    # orthonormal basis of the hoop plane
    ax = np.empty(3)
    ax[0] = axis[0]
    ax[1] = axis[1]
    ax[2] = axis[2]
    if abs(ax[0]) < 0.9:
        u = np.array([0.0, -ax[2], ax[1]])
    else:
        u = np.array([-ax[2], 0.0, ax[0]])
    nu = math.sqrt(u[0] ** 2 + u[1] ** 2 + u[2] ** 2)
    u /= nu
    w = np.array([
        ax[1] * u[2] - ax[2] * u[1],
        ax[2] * u[0] - ax[0] * u[2],
        ax[0] * u[1] - ax[1] * u[0],
    ])
    n = max(8, int(math.ceil(2.0 * math.pi * R / spacing)))
    rad = r + 0.5 * (2.0 * math.pi * R / n)
    a = np.empty(3)
    b = np.empty(3)
    count = 0
    for m in range(n):
        th = 2.0 * math.pi * m / n
        ct = math.cos(th) * R
        st = math.sin(th) * R
        for q in range(3):
            off = ct * u[q] + st * w[q]
            a[q] = c0[q] + off
            b[q] = c1[q] + off
        count += fill_capsule(grid, origin, rs, a, b, rad)
    return count


@njit(cache=True)
def fill_box(grid, origin, rs, c, half):
    nx, ny, nz = grid.shape
    x0, x1 = _index_range(c[0] - half[0], c[0] + half[0], origin[0], rs, nx)
    y0, y1 = _index_range(c[1] - half[1], c[1] + half[1], origin[1], rs, ny)
    z0, z1 = _index_range(c[2] - half[2], c[2] + half[2], origin[2], rs, nz)
    count = 0
    for i in range(x0, x1 + 1):
        for j in range(y0, y1 + 1):
            for k in range(z0, z1 + 1):
                if not grid[i, j, k]:
                    grid[i, j, k] = True
                    count += 1
    return count


@njit(cache=True)
def sphere_blocked(grid, origin, rs, p, r):
    """True if any occupied cell center lies within ``r`` of ``p``."""
    nx, ny, nz = grid.shape
    r2 = r * r
    x0, x1 = _index_range(p[0] - r, p[0] + r, origin[0], rs, nx)
    y0, y1 = _index_range(p[1] - r, p[1] + r, origin[1], rs, ny)
    z0, z1 = _index_range(p[2] - r, p[2] + r, origin[2], rs, nz)
    for i in range(x0, x1 + 1):
        dx = origin[0] + (i + 0.5) * rs - p[0]
        for j in range(y0, y1 + 1):
            dy = origin[1] + (j + 0.5) * rs - p[1]
            rem = r2 - dx * dx - dy * dy
            if rem < 0.0:
                continue
            for k in range(z0, z1 + 1):
                if grid[i, j, k]:
                    dz = origin[2] + (k + 0.5) * rs - p[2]
                    if dz * dz <= rem:
                        return True
    return False


HALF_DIAG = math.sqrt(3.0) / 2.0


@njit(cache=True)
def cube_blocked(grid, origin, rs, p, r):
    """True if some occupied cell, as a solid cube, is closer than ``r`` to ``p``."""
    nx, ny, nz = grid.shape
    h = 0.5 * rs
    reach = r + h
    r2 = r * r
    x0, x1 = _index_range(p[0] - reach, p[0] + reach, origin[0], rs, nx)
    y0, y1 = _index_range(p[1] - reach, p[1] + reach, origin[1], rs, ny)
    z0, z1 = _index_range(p[2] - reach, p[2] + reach, origin[2], rs, nz)
    for i in range(x0, x1 + 1):
        dx = max(abs(origin[0] + (i + 0.5) * rs - p[0]) - h, 0.0)
        for j in range(y0, y1 + 1):
            dy = max(abs(origin[1] + (j + 0.5) * rs - p[1]) - h, 0.0)
            rem = r2 - dx * dx - dy * dy
            if rem <= 0.0:
                continue
            for k in range(z0, z1 + 1):
                if grid[i, j, k]:
                    dz = max(abs(origin[2] + (k + 0.5) * rs - p[2]) - h, 0.0)
                    if dz * dz < rem:
                        return True
    return False


@njit(cache=True)
def cell_blocked(grid, memo, origin, rs, p, r):
    """Cell-conservative sphere test with memoization.

    A point is blocked when the center of the cell containing it lies within
    ``r + sqrt(3)/2 * rs`` of an occupied cell center, which guarantees every
    occupied center is farther than ``r`` from any point of a free cell.
    Points outside the grid are free.  ``memo`` has the grid's shape and
    holds 0 (unknown), 1 (free) or 2 (blocked).
    """
    nx, ny, nz = grid.shape
    i = int(math.floor((p[0] - origin[0]) / rs))
    j = int(math.floor((p[1] - origin[1]) / rs))
    k = int(math.floor((p[2] - origin[2]) / rs))
    if i < 0 or j < 0 or k < 0 or i >= nx or j >= ny or k >= nz:
        return False
    m = memo[i, j, k]
    if m == 0:
        c = np.empty(3)
        c[0] = origin[0] + (i + 0.5) * rs
        c[1] = origin[1] + (j + 0.5) * rs
        c[2] = origin[2] + (k + 0.5) * rs
        hit = sphere_blocked(grid, origin, rs, c, r + HALF_DIAG * rs)
        memo[i, j, k] = 2 if hit else 1
        return hit
    return m == 2


@njit(cache=True)
def points_cell_blocked(grid, origin, rs, pts, r):
    memo = np.zeros(grid.shape, dtype=np.uint8)
    out = np.zeros(pts.shape[0], dtype=np.bool_)
    for m in range(pts.shape[0]):
        out[m] = cell_blocked(grid, memo, origin, rs, pts[m], r)
    return out


@njit(cache=True)
def points_blocked(grid, origin, rs, pts, r):
    out = np.zeros(pts.shape[0], dtype=np.bool_)
    for m in range(pts.shape[0]):
        out[m] = sphere_blocked(grid, origin, rs, pts[m], r)
    return out


@njit(cache=True)
def groups_blocked(grids, frame_of_group, origin, rs, pts, group, r):
    """Per-group collision flags; each point is checked against its group's frame.

    ``pts`` is (N, 3), ``group`` maps each point to a group id.  Groups stop
    being checked after their first hit.
    """
    ng = frame_of_group.shape[0]
    hit = np.zeros(ng, dtype=np.bool_)
    for m in range(pts.shape[0]):
        g = group[m]
        if hit[g]:
            continue
        if sphere_blocked(grids[frame_of_group[g]], origin, rs, pts[m], r):
            hit[g] = True
    return hit


@njit(cache=True)
def occupied_centers(grid, origin, rs, lo, hi):
    """Centers of occupied cells whose centers fall inside the box [lo, hi]."""
    nx, ny, nz = grid.shape
    x0, x1 = _index_range(lo[0], hi[0], origin[0], rs, nx)
    y0, y1 = _index_range(lo[1], hi[1], origin[1], rs, ny)
    z0, z1 = _index_range(lo[2], hi[2], origin[2], rs, nz)
    count = 0
    for i in range(x0, x1 + 1):
        for j in range(y0, y1 + 1):
            for k in range(z0, z1 + 1):
                if grid[i, j, k]:
                    count += 1
    out = np.empty((count, 3))
    m = 0
    for i in range(x0, x1 + 1):
        for j in range(y0, y1 + 1):
            for k in range(z0, z1 + 1):
                if grid[i, j, k]:
                    out[m, 0] = origin[0] + (i + 0.5) * rs
                    out[m, 1] = origin[1] + (j + 0.5) * rs
                    out[m, 2] = origin[2] + (k + 0.5) * rs
                    m += 1
    return out


@njit(cache=True)
def surface_centers(grid, origin, rs, lo, hi):
    """Occupied cells in [lo, hi] with at least one free 26-neighbour.

    Cells on the grid border count as exposed.
    """
    nx, ny, nz = grid.shape
    x0, x1 = _index_range(lo[0], hi[0], origin[0], rs, nx)
    y0, y1 = _index_range(lo[1], hi[1], origin[1], rs, ny)
    z0, z1 = _index_range(lo[2], hi[2], origin[2], rs, nz)
    buf = np.empty((max(0, (x1 - x0 + 1) * (y1 - y0 + 1) * (z1 - z0 + 1)), 3))
    m = 0
    for i in range(x0, x1 + 1):
        for j in range(y0, y1 + 1):
            for k in range(z0, z1 + 1):
                if not grid[i, j, k]:
                    continue
                exposed = False
                if i == 0 or j == 0 or k == 0 or i == nx - 1 or j == ny - 1 or k == nz - 1:
                    exposed = True
                else:
                    for a in range(-1, 2):
                        for b in range(-1, 2):
                            for c in range(-1, 2):
                                if not grid[i + a, j + b, k + c]:
                                    exposed = True
                                    break
                            if exposed:
                                break
                        if exposed:
                            break
                if exposed:
                    buf[m, 0] = origin[0] + (i + 0.5) * rs
                    buf[m, 1] = origin[1] + (j + 0.5) * rs
                    buf[m, 2] = origin[2] + (k + 0.5) * rs
                    m += 1
    return buf[:m].copy()


# ---------------------------------------------------------------------------
# kinodynamic A*


@njit(cache=True)
def free_velocity_heuristic(px, py, pz, vx, vy, vz, goal, rho, dt, tol):
    """min over k >= 1 of 3*gap(k dt)^2/(k dt)^3 + rho*k*dt; zero inside the goal ball."""
    ex = goal[0] - px
    ey = goal[1] - py
    ez = goal[2] - pz
    if math.sqrt(ex * ex + ey * ey + ez * ez) <= tol:
        return 0.0
    best = np.inf
    k = 1
    while True:
        tau = k * dt
        if rho * tau >= best:
            break
        gx = ex - vx * tau
        gy = ey - vy * tau
        gz = ez - vz * tau
        gap = math.sqrt(gx * gx + gy * gy + gz * gz) - tol
        if gap < 0.0:
            gap = 0.0
        c = 3.0 * gap * gap / (tau * tau * tau) + rho * tau
        if c < best:
            best = c
        k += 1
    return best


@njit(cache=True)
def _heap_less(a, b, F, H, P, V):
    if F[a] != F[b]:
        return F[a] < F[b]
    if H[a] != H[b]:
        return H[a] < H[b]
    for q in range(3):
        if P[a, q] != P[b, q]:
            return P[a, q] < P[b, q]
    for q in range(3):
        if V[a, q] != V[b, q]:
            return V[a, q] < V[b, q]
    return a < b


@njit(cache=True)
def _heap_push(heap, size, node, F, H, P, V):
    i = size
    heap[i] = node
    while i > 0:
        parent = (i - 1) // 2
        if _heap_less(heap[i], heap[parent], F, H, P, V):
            tmp = heap[i]
            heap[i] = heap[parent]
            heap[parent] = tmp
            i = parent
        else:
            break
    return size + 1


@njit(cache=True)
def _heap_pop(heap, size, F, H, P, V):
    top = heap[0]
    size -= 1
    heap[0] = heap[size]
    i = 0
    while True:
        l = 2 * i + 1
        r = l + 1
        m = i
        if l < size and _heap_less(heap[l], heap[m], F, H, P, V):
            m = l
        if r < size and _heap_less(heap[r], heap[m], F, H, P, V):
            m = r
        if m == i:
            break
        tmp = heap[i]
        heap[i] = heap[m]
        heap[m] = tmp
        i = m
    return top, size


@njit(cache=True)
def _state_key(depth, p, v, pos_bin, vel_bin):
    return (
        np.int64(depth),
        np.int64(math.floor(p[0] / pos_bin)),
        np.int64(math.floor(p[1] / pos_bin)),
        np.int64(math.floor(p[2] / pos_bin)),
        np.int64(math.floor(v[0] / vel_bin)),
        np.int64(math.floor(v[1] / vel_bin)),
        np.int64(math.floor(v[2] / vel_bin)),
    )


@njit(cache=True)
def astar(frames, memo, frame_of_step, origin, rs, start_p, start_v, goal, U, dt, v_max, rho, tol, weight,
          lo, hi, radius, max_expansions, max_steps, pos_bin, vel_bin, near_radius, near_steps):
    """Returns (status, final node, P, V, G, H, parent, control, depth, expansions).

    Primitives leaving depth below ``near_steps`` are checked with the exact
    cube test at ``near_radius``; all others with the cell test at ``radius``.

    status 0: goal reached, 1: horizon reached, 2: budget exhausted (final
    node is the expanded node closest to the goal by heuristic), 3: open set
    exhausted.
    """
    nu = U.shape[0]
    cap = max_expansions * nu + 1
    P = np.empty((cap, 3))
    V = np.empty((cap, 3))
    G = np.empty(cap)
    H = np.empty(cap)
    F = np.empty(cap)
    parent = np.empty(cap, dtype=np.int64)
    control = np.empty(cap, dtype=np.int64)
    depth = np.empty(cap, dtype=np.int64)
    heap = np.empty(cap, dtype=np.int64)

    a_norm = 0.0
    for m in range(nu):
        a_norm = max(a_norm, math.sqrt(U[m, 0] ** 2 + U[m, 1] ** 2 + U[m, 2] ** 2))

    P[0] = start_p
    V[0] = start_v
    G[0] = 0.0
    H[0] = free_velocity_heuristic(start_p[0], start_p[1], start_p[2], start_v[0], start_v[1], start_v[2],
                                   goal, rho, dt, tol)
    F[0] = weight * H[0]
    parent[0] = -1
    control[0] = -1
    depth[0] = 0
    n_nodes = 1
    size = _heap_push(heap, 0, 0, F, H, P, V)

    key0 = _state_key(0, start_p, start_v, pos_bin, vel_bin)
    best_g = {key0: 0.0}
    closed = {key0: True}
    closed.pop(key0)
    expansions = 0
    best_partial = 0
    pt = np.empty(3)
    vn = np.empty(3)
    pn = np.empty(3)

    while size > 0:
        idx, size = _heap_pop(heap, size, F, H, P, V)
        d = depth[idx]
        kk = _state_key(d, P[idx], V[idx], pos_bin, vel_bin)
        if kk in closed:
            continue
        closed[kk] = True
        ex = P[idx, 0] - goal[0]
        ey = P[idx, 1] - goal[1]
        ez = P[idx, 2] - goal[2]
        if math.sqrt(ex * ex + ey * ey + ez * ez) <= tol:
            return 0, idx, P, V, G, H, parent, control, depth, expansions
        if d >= max_steps:
            return 1, idx, P, V, G, H, parent, control, depth, expansions
        if expansions >= max_expansions:
            return 2, best_partial, P, V, G, H, parent, control, depth, expansions
        expansions += 1
        if H[idx] < H[best_partial]:
            best_partial = idx

        p = P[idx]
        v = V[idx]
        vnorm = math.sqrt(v[0] ** 2 + v[1] ** 2 + v[2] ** 2)
        ns = max(1, int(math.ceil((vnorm * dt + 0.5 * a_norm * dt * dt) / (0.5 * rs))))
        grid = frames[frame_of_step[d]]
        fmemo = memo[frame_of_step[d]]
        for m in range(nu):
            for q in range(3):
                vn[q] = v[q] + U[m, q] * dt
            if vn[0] ** 2 + vn[1] ** 2 + vn[2] ** 2 > (v_max + 1e-9) ** 2:
                continue
            ok = True
            for s_i in range(ns + 1):
                t = dt * s_i / ns
                for q in range(3):
                    pt[q] = p[q] + v[q] * t + 0.5 * U[m, q] * t * t
                    if pt[q] < lo[q] or pt[q] > hi[q]:
                        ok = False
                if not ok:
                    break
                if d < near_steps:
                    if cube_blocked(grid, origin, rs, pt, near_radius):
                        ok = False
                        break
                elif cell_blocked(grid, fmemo, origin, rs, pt, radius):
                    ok = False
                    break
            if not ok:
                continue
            for q in range(3):
                pn[q] = p[q] + v[q] * dt + 0.5 * U[m, q] * dt * dt
            g1 = G[idx] + (U[m, 0] ** 2 + U[m, 1] ** 2 + U[m, 2] ** 2 + rho) * dt
            k1 = _state_key(d + 1, pn, vn, pos_bin, vel_bin)
            if k1 in closed:
                continue
            if k1 in best_g and best_g[k1] <= g1:
                continue
            best_g[k1] = g1
            j = n_nodes
            n_nodes += 1
            P[j] = pn
            V[j] = vn
            G[j] = g1
            H[j] = free_velocity_heuristic(pn[0], pn[1], pn[2], vn[0], vn[1], vn[2], goal, rho, dt, tol)
            F[j] = g1 + weight * H[j]
            parent[j] = idx
            control[j] = m
            depth[j] = d + 1
            size = _heap_push(heap, size, j, F, H, P, V)
    return 3, best_partial, P, V, G, H, parent, control, depth, expansions


# ---------------------------------------------------------------------------
# convex hull distance


@njit(cache=True)
def _affine_min_norm(D, S, m, w):
    # minimum-norm point of the affine hull of D[S[:m]]; weights into w
    M = np.zeros((m + 1, m + 1))
    rhs = np.zeros(m + 1)
    for a in range(m):
        for b in range(m):
            M[a, b] = D[S[a]] @ D[S[b]]
        M[a, m] = 1.0
        M[m, a] = 1.0
    rhs[m] = 1.0
    sol = np.linalg.lstsq(M, rhs)[0]
    for a in range(m):
        w[a] = sol[a]


@njit(cache=True)
def min_norm_point(D, max_iter=200):
    """Wolfe's nearest point to the origin in conv(rows of D).

    Returns (x, lower) where ``x`` is a point of the hull and ``lower`` is a
    certified lower bound on the hull's distance to the origin.
    """
    n = D.shape[0]
    best = 0
    bn = D[0] @ D[0]
    for i in range(1, n):
        v = D[i] @ D[i]
        if v < bn:
            best, bn = i, v
    S = np.zeros(4, np.int64)
    lam = np.zeros(4)
    mu = np.zeros(4)
    S[0] = best
    lam[0] = 1.0
    m = 1
    x = D[best].copy()
    scale = 0.0
    for i in range(n):
        scale = max(scale, D[i] @ D[i])
    for _ in range(max_iter):
        # most violating vertex
        j = 0
        jv = D[0] @ x
        for i in range(1, n):
            v = D[i] @ x
            if v < jv:
                j, jv = i, v
        xx = x @ x
        if xx - jv <= 1e-12 * scale or m == 4:
            break
        dup = False
        for a in range(m):
            if S[a] == j:
                dup = True
        if dup:
            break
        S[m] = j
        lam[m] = 0.0
        m += 1
        while True:
            _affine_min_norm(D, S, m, mu)
            ok = True
            for a in range(m):
                if mu[a] <= 1e-12:
                    ok = False
            if ok:
                for a in range(m):
                    lam[a] = mu[a]
                break
            theta = 1.0
            for a in range(m):
                if mu[a] <= 1e-12 and lam[a] - mu[a] > 0:
                    theta = min(theta, lam[a] / (lam[a] - mu[a]))
            for a in range(m):
                lam[a] = lam[a] + theta * (mu[a] - lam[a])
            k = 0
            for a in range(m):
                if lam[a] > 1e-12:
                    S[k] = S[a]
                    lam[k] = lam[a]
                    k += 1
            m = k
            if m == 1:
                lam[0] = 1.0
                break
        x[:] = 0.0
        for a in range(m):
            x += lam[a] * D[S[a]]
    nx = math.sqrt(x @ x)
    lower = 0.0
    if nx > 0:
        lower = np.inf
        for i in range(n):
            lower = min(lower, (D[i] @ x) / nx)
        lower = max(lower, 0.0)
    return x, lower


@njit(cache=True)
def hull_distance(P, Q):
    """(upper, lower) bounds on the distance between conv(P) and conv(Q)."""
    D = np.empty((P.shape[0] * Q.shape[0], 3))
    k = 0
    for i in range(P.shape[0]):
        for j in range(Q.shape[0]):
            D[k] = P[i] - Q[j]
            k += 1
    x, lower = min_norm_point(D, 200)
    return math.sqrt(x @ x), lower
