"""Vectorized numpy kernels (reference backend)."""

from __future__ import annotations

import numpy as np

_EDGE_SLACK = 1e-12


def sample_bilinear(img, rows, cols, wrap_cols):
    """Bilinearly sample ``img`` (H, W, C) at continuous index coordinates.

    Rows clamp at the top/bottom edge.  Columns wrap modulo W when
    ``wrap_cols`` is set (ERP seam), otherwise clamp.  Returns (n, C).
    """
    h, w = img.shape[:2]
    r = np.clip(rows, 0.0, h - 1.0)
    r0 = np.floor(r).astype(np.int64)
    r0 = np.minimum(r0, h - 1)
    r1 = np.minimum(r0 + 1, h - 1)
    fr = (r - r0)[:, None]
    if wrap_cols:
        c = np.mod(cols, float(w))
        c0 = np.floor(c).astype(np.int64) % w
        fc = (c - np.floor(c))[:, None]
        c1 = (c0 + 1) % w
    else:
        c = np.clip(cols, 0.0, w - 1.0)
        c0 = np.minimum(np.floor(c).astype(np.int64), w - 1)
        c1 = np.minimum(c0 + 1, w - 1)
        fc = (c - c0)[:, None]
    top = img[r0, c0] * (1.0 - fc) + img[r0, c1] * fc
    bottom = img[r1, c0] * (1.0 - fc) + img[r1, c1] * fc
    return top * (1.0 - fr) + bottom * fr


def cast_floorplan(origin, dirs, edges, floor, ceiling):
    """Distance along unit ``dirs`` from ``origin`` to the first room surface.

    ``edges`` is (E, 4) of wall segments ``[ax, az, bx, bz]`` in the top view;
    walls span the full floor-ceiling height.  Floor/ceiling are horizontal
    planes.  Missing hits are +inf.
    """
    ox, oy, oz = origin
    dx, dy, dz = dirs[:, 0], dirs[:, 1], dirs[:, 2]
    t = np.full(dirs.shape[0], np.inf)
    with np.errstate(divide="ignore", invalid="ignore"):
        down = dy < 0
        t[down] = (floor - oy) / dy[down]
        up = dy > 0
        t[up] = (ceiling - oy) / dy[up]
        for ax, az, bx, bz in edges:
            ex, ez = bx - ax, bz - az
            wx, wz = ax - ox, az - oz
            denom = dx * ez - dz * ex
            ok = np.abs(denom) > 1e-300
            te = (wx * ez - wz * ex) / denom
            u = (wx * dz - wz * dx) / denom
            hit = ok & (te > 0) & (u >= -_EDGE_SLACK) & (u <= 1 + _EDGE_SLACK)
            np.minimum(t, np.where(hit, te, np.inf), out=t)
    return t


def cast_boxes(origin, dirs, boxes):
    """Entry distance of each ray into each axis-aligned box.

    ``boxes`` is (B, 6) ``[xmin, ymin, zmin, xmax, ymax, zmax]``.  Returns
    (n, B) distances clipped at 0 (origin inside a box), +inf on a miss.
    """
    n = dirs.shape[0]
    out = np.full((n, boxes.shape[0]), np.inf)
    for b, box in enumerate(boxes):
        t_near = np.zeros(n)
        t_far = np.full(n, np.inf)
        alive = np.ones(n, dtype=bool)
        for axis in range(3):
            lo, hi = box[axis], box[axis + 3]
            o = origin[axis]
            d = dirs[:, axis]
            flat = d == 0
            alive &= ~(flat & ((o < lo) | (o > hi)))
            with np.errstate(divide="ignore", invalid="ignore"):
                t1 = (lo - o) / d
                t2 = (hi - o) / d
            ta = np.where(flat, -np.inf, np.minimum(t1, t2))
            tb = np.where(flat, np.inf, np.maximum(t1, t2))
            t_near = np.maximum(t_near, ta)
            t_far = np.minimum(t_far, tb)
        hit = alive & (t_far >= t_near) & (t_far > 0)
        out[hit, b] = t_near[hit]
    return out


def _terrain_height(heights, cell, x, z):
    hv, hu = heights.shape
    u = np.clip(x / cell, 0.0, hu - 1.0)
    v = np.clip(z / cell, 0.0, hv - 1.0)
    u0 = np.minimum(np.floor(u).astype(np.int64), hu - 2)
    v0 = np.minimum(np.floor(v).astype(np.int64), hv - 2)
    fu = u - u0
    fv = v - v0
    h00 = heights[v0, u0]
    h01 = heights[v0, u0 + 1]
    h10 = heights[v0 + 1, u0]
    h11 = heights[v0 + 1, u0 + 1]
    return (h00 * (1 - fu) + h01 * fu) * (1 - fv) + (h10 * (1 - fu) + h11 * fu) * fv


def march_heightfield(origin, dirs, heights, cell, max_distance, step, n_bisect):
    """First intersection of each ray with a bilinear heightfield.

    Fixed-step march at ``step`` followed by ``n_bisect`` bisection steps on
    the bracketing interval.  Grid point (v, u) sits at world
    ``(x, z) = (u * cell, v * cell)``; outside the grid the border heights
    extend.  No hit within ``max_distance`` gives +inf.
    """
    n = dirs.shape[0]
    out = np.full(n, np.inf)
    hmax = float(heights.max())
    ox, oy, oz = origin
    active = np.arange(n)
    t_prev = np.zeros(n)
    k = 0
    done = False
    while active.size and not done:
        k += 1
        t_now = k * step
        if t_now >= max_distance:
            t_now = max_distance
            done = True
        d = dirs[active]
        y = oy + t_now * d[:, 1]
        f = y - _terrain_height(heights, cell, ox + t_now * d[:, 0], oz + t_now * d[:, 2])
        hit = f <= 0
        if hit.any():
            idx = active[hit]
            lo = t_prev[idx]
            hi = np.full(idx.size, t_now)
            dh = dirs[idx]
            for _ in range(n_bisect):
                mid = 0.5 * (lo + hi)
                fm = oy + mid * dh[:, 1] - _terrain_height(
                    heights, cell, ox + mid * dh[:, 0], oz + mid * dh[:, 2]
                )
                below = fm <= 0
                hi = np.where(below, mid, hi)
                lo = np.where(below, lo, mid)
            out[idx] = 0.5 * (lo + hi)
        escaped = (d[:, 1] >= 0) & (y > hmax)
        keep = ~(hit | escaped)
        active = active[keep]
        t_prev[active] = t_now
    return out


def accumulate_normal(d0, phi0, est, phi):
    """Assemble the 2N x 2N block normal matrix and right-hand side.

    Per pixel with total weight ``s = phi0 + sum_k phi_k > 0`` and
    ``v_k = [est_k, 1]``: diagonal blocks gain ``phi_k (s - phi_k) / s v_k v_k^T``,
    off-diagonal blocks lose ``phi_k phi_l / s v_k v_l^T`` and the right-hand
    side gains ``phi_k phi0 d0 / s v_k``.  Inputs must be zero wherever
    their weight is zero.
    """
    n_views, n_pix = est.shape
    sigma = phi0 + phi.sum(axis=0)
    live = sigma > 0
    sigma = sigma[live]
    phi = phi[:, live]
    est = est[:, live]
    root = np.sqrt(sigma)
    g = np.empty((sigma.size, 2 * n_views))
    g[:, 0::2] = (phi * est / root).T
    g[:, 1::2] = (phi / root).T
    mat = -(g.T @ g)
    rhs = g.T @ (phi0[live] * d0[live] / root)
    own = phi * (sigma - phi) / sigma
    for k in range(n_views):
        e = est[k]
        w = own[k]
        s_dd = np.dot(w, e * e)
        s_d = np.dot(w, e)
        s_1 = w.sum()
        mat[2 * k : 2 * k + 2, 2 * k : 2 * k + 2] = [[s_dd, s_d], [s_d, s_1]]
    return mat, rhs


def splat_nearest(rows, cols, dist, height, width):
    """Nearest-distance z-buffer over integer pixel targets.

    Returns (H, W) int64 holding the winning point index per pixel, -1 for
    holes.  Equal distances resolve to the lower point index.
    """
    rows = np.asarray(rows, dtype=np.int64)
    cols = np.asarray(cols, dtype=np.int64)
    buf = np.full(height * width, -1, dtype=np.int64)
    ok = (rows >= 0) & (rows < height) & (cols >= 0) & (cols < width) & np.isfinite(dist)
    idx = np.nonzero(ok)[0]
    if idx.size == 0:
        return buf.reshape(height, width)
    pix = rows[idx] * width + cols[idx]
    order = np.lexsort((idx, dist[idx], pix))
    pix_sorted = pix[order]
    first = np.ones(order.size, dtype=bool)
    first[1:] = pix_sorted[1:] != pix_sorted[:-1]
    buf[pix_sorted[first]] = idx[order][first]
    return buf.reshape(height, width)
