"""Loop kernels compiled with numba; same contracts as :mod:`numpy_impl`."""

from __future__ import annotations

import math

import numpy as np
from numba import njit, prange

_EDGE_SLACK = 1e-12


@njit(parallel=True, cache=True)
def _sample_bilinear(img, rows, cols, wrap_cols):
    h, w, nc = img.shape
    n = rows.shape[0]
    out = np.empty((n, nc))
    for p in prange(n):
        r = min(max(rows[p], 0.0), h - 1.0)
        r0 = min(int(math.floor(r)), h - 1)
        r1 = min(r0 + 1, h - 1)
        fr = r - r0
        if wrap_cols:
            c = cols[p] % w
            fl = math.floor(c)
            c0 = int(fl) % w
            c1 = (c0 + 1) % w
            fc = c - fl
        else:
            c = min(max(cols[p], 0.0), w - 1.0)
            c0 = min(int(math.floor(c)), w - 1)
            c1 = min(c0 + 1, w - 1)
            fc = c - c0
        for ch in range(nc):
            top = img[r0, c0, ch] * (1.0 - fc) + img[r0, c1, ch] * fc
            bot = img[r1, c0, ch] * (1.0 - fc) + img[r1, c1, ch] * fc
            out[p, ch] = top * (1.0 - fr) + bot * fr
    return out


def sample_bilinear(img, rows, cols, wrap_cols):
    return _sample_bilinear(
        np.ascontiguousarray(img, dtype=np.float64),
        np.ascontiguousarray(rows, dtype=np.float64),
        np.ascontiguousarray(cols, dtype=np.float64),
        bool(wrap_cols),
    )


@njit(parallel=True, cache=True)
def _cast_floorplan(origin, dirs, edges, floor, ceiling):
    n = dirs.shape[0]
    ox, oy, oz = origin[0], origin[1], origin[2]
    out = np.empty(n)
    for p in prange(n):
        dx, dy, dz = dirs[p, 0], dirs[p, 1], dirs[p, 2]
        t = np.inf
        if dy < 0:
            t = (floor - oy) / dy
        elif dy > 0:
            t = (ceiling - oy) / dy
        for e in range(edges.shape[0]):
            ax, az = edges[e, 0], edges[e, 1]
            ex, ez = edges[e, 2] - ax, edges[e, 3] - az
            wx, wz = ax - ox, az - oz
            denom = dx * ez - dz * ex
            if abs(denom) <= 1e-300:
                continue
            te = (wx * ez - wz * ex) / denom
            u = (wx * dz - wz * dx) / denom
            if te > 0 and u >= -_EDGE_SLACK and u <= 1 + _EDGE_SLACK and te < t:
                t = te
        out[p] = t
    return out


def cast_floorplan(origin, dirs, edges, floor, ceiling):
    return _cast_floorplan(
        np.asarray(origin, dtype=np.float64),
        np.ascontiguousarray(dirs, dtype=np.float64),
        np.ascontiguousarray(edges, dtype=np.float64).reshape(-1, 4),
        float(floor),
        float(ceiling),
    )


@njit(parallel=True, cache=True)
def _cast_boxes(origin, dirs, boxes):
    n = dirs.shape[0]
    nb = boxes.shape[0]
    out = np.full((n, nb), np.inf)
    for p in prange(n):
        for b in range(nb):
            t_near = 0.0
            t_far = np.inf
            alive = True
            for axis in range(3):
                lo = boxes[b, axis]
                hi = boxes[b, axis + 3]
                o = origin[axis]
                d = dirs[p, axis]
                if d == 0.0:
                    if o < lo or o > hi:
                        alive = False
                        break
                    continue
                t1 = (lo - o) / d
                t2 = (hi - o) / d
                if t1 > t2:
                    t1, t2 = t2, t1
                t_near = max(t_near, t1)
                t_far = min(t_far, t2)
            if alive and t_far >= t_near and t_far > 0:
                out[p, b] = t_near
    return out


def cast_boxes(origin, dirs, boxes):
    return _cast_boxes(
        np.asarray(origin, dtype=np.float64),
        np.ascontiguousarray(dirs, dtype=np.float64),
        np.ascontiguousarray(boxes, dtype=np.float64).reshape(-1, 6),
    )


@njit(cache=True)
def _height_at(heights, cell, x, z):
    hv, hu = heights.shape
    u = min(max(x / cell, 0.0), hu - 1.0)
    v = min(max(z / cell, 0.0), hv - 1.0)
    u0 = min(int(math.floor(u)), hu - 2)
    v0 = min(int(math.floor(v)), hv - 2)
    fu = u - u0
    fv = v - v0
    top = heights[v0, u0] * (1 - fu) + heights[v0, u0 + 1] * fu
    bot = heights[v0 + 1, u0] * (1 - fu) + heights[v0 + 1, u0 + 1] * fu
    return top * (1 - fv) + bot * fv


@njit(parallel=True, cache=True)
def _march_heightfield(origin, dirs, heights, cell, max_distance, step, n_bisect):
    n = dirs.shape[0]
    ox, oy, oz = origin[0], origin[1], origin[2]
    hmax = heights.max()
    out = np.full(n, np.inf)
    for p in prange(n):
        dx, dy, dz = dirs[p, 0], dirs[p, 1], dirs[p, 2]
        t_prev = 0.0
        k = 0
        done = False
        while not done:
            k += 1
            t_now = k * step
            if t_now >= max_distance:
                t_now = max_distance
                done = True
            y = oy + t_now * dy
            f = y - _height_at(heights, cell, ox + t_now * dx, oz + t_now * dz)
            if f <= 0:
                lo = t_prev
                hi = t_now
                for _ in range(n_bisect):
                    mid = 0.5 * (lo + hi)
                    fm = oy + mid * dy - _height_at(heights, cell, ox + mid * dx, oz + mid * dz)
                    if fm <= 0:
                        hi = mid
                    else:
                        lo = mid
                out[p] = 0.5 * (lo + hi)
                break
            if dy >= 0 and y > hmax:
                break
            t_prev = t_now
    return out


def march_heightfield(origin, dirs, heights, cell, max_distance, step, n_bisect):
    return _march_heightfield(
        np.asarray(origin, dtype=np.float64),
        np.ascontiguousarray(dirs, dtype=np.float64),
        np.ascontiguousarray(heights, dtype=np.float64),
        float(cell),
        float(max_distance),
        float(step),
        int(n_bisect),
    )


@njit(cache=True)
def _accumulate_normal(d0, phi0, est, phi):
    n_views, n_pix = est.shape
    mat = np.zeros((2 * n_views, 2 * n_views))
    rhs = np.zeros(2 * n_views)
    live = np.empty(n_views, dtype=np.int64)
    for p in range(n_pix):
        sigma = phi0[p]
        m = 0
        for k in range(n_views):
            if phi[k, p] > 0:
                sigma += phi[k, p]
                live[m] = k
                m += 1
        if sigma <= 0 or m == 0:
            continue
        base = phi0[p] * d0[p] / sigma
        for a in range(m):
            k = live[a]
            wk = phi[k, p]
            ek = est[k, p]
            own = wk * (sigma - wk) / sigma
            i = 2 * k
            mat[i, i] += own * ek * ek
            mat[i, i + 1] += own * ek
            mat[i + 1, i] += own * ek
            mat[i + 1, i + 1] += own
            rhs[i] += wk * base * ek
            rhs[i + 1] += wk * base
            for c in range(m):
                l = live[c]
                if l == k:
                    continue
                wl = phi[l, p]
                el = est[l, p]
                cross = wk * wl / sigma
                j = 2 * l
                mat[i, j] -= cross * ek * el
                mat[i, j + 1] -= cross * ek
                mat[i + 1, j] -= cross * el
                mat[i + 1, j + 1] -= cross
    return mat, rhs


def accumulate_normal(d0, phi0, est, phi):
    return _accumulate_normal(
        np.ascontiguousarray(d0, dtype=np.float64),
        np.ascontiguousarray(phi0, dtype=np.float64),
        np.ascontiguousarray(est, dtype=np.float64),
        np.ascontiguousarray(phi, dtype=np.float64),
    )


@njit(cache=True)
def _splat_nearest(rows, cols, dist, height, width):
    buf = np.full(height * width, -1, dtype=np.int64)
    best = np.full(height * width, np.inf)
    for p in range(rows.shape[0]):
        r = rows[p]
        c = cols[p]
        if r < 0 or r >= height or c < 0 or c >= width:
            continue
        d = dist[p]
        if not np.isfinite(d):
            continue
        q = r * width + c
        if d < best[q]:
            best[q] = d
            buf[q] = p
    return buf.reshape(height, width)


def splat_nearest(rows, cols, dist, height, width):
    return _splat_nearest(
        np.ascontiguousarray(rows, dtype=np.int64),
        np.ascontiguousarray(cols, dtype=np.int64),
        np.ascontiguousarray(dist, dtype=np.float64),
        int(height),
        int(width),
    )
