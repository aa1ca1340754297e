"""numba kernels: log-intensity micro-frame rendering and threshold-crossing events."""
from __future__ import annotations

import math

import numba as nb
import numpy as np

SPHERE, BOX = 0, 1
# obstacle row layout: kind, px, py, pz, a, b, c, albedo, texture
# (a = R for spheres, half sizes for boxes; texture = relative albedo of the dark pattern cells)
OB_COLS = 9
CHECKER_LON = 12
CHECKER_LAT = 6
SUPERSAMPLE = ((-0.25, -0.25), (0.25, -0.25), (-0.25, 0.25), (0.25, 0.25))


@nb.njit(cache=True, inline="always")
def _bilinear(tex, u, v):
    h, w = tex.shape
    if u < 0.0:
        u = 0.0
    elif u > w - 1.001:
        u = w - 1.001
    if v < 0.0:
        v = 0.0
    elif v > h - 1.001:
        v = h - 1.001
    i = int(u)
    j = int(v)
    fu = u - i
    fv = v - j
    return ((1 - fu) * (1 - fv) * tex[j, i] + fu * (1 - fv) * tex[j, i + 1]
            + (1 - fu) * fv * tex[j + 1, i] + fu * fv * tex[j + 1, i + 1])


@nb.njit(cache=True, inline="always")
def _box_hit(ox, oy, oz, dx, dy, dz, bx, by, bz, hx, hy, hz):
    """Axis of the entry face of a ray/box hit, or -1 for a miss."""
    tmin = 0.0
    tmax = 1e30
    axis = -1
    o = (ox - bx, oy - by, oz - bz)
    d = (dx, dy, dz)
    hs = (hx, hy, hz)
    for k in range(3):
        if abs(d[k]) < 1e-15:
            if abs(o[k]) > hs[k]:
                return -1
        else:
            t1 = (-hs[k] - o[k]) / d[k]
            t2 = (hs[k] - o[k]) / d[k]
            if t1 > t2:
                t1, t2 = t2, t1
            if t1 > tmin:
                tmin = t1
                axis = k
            if t2 < tmax:
                tmax = t2
            if tmin > tmax:
                return -1
    return axis if axis >= 0 else 2


@nb.njit(cache=True, inline="always")
def _sphere_albedo(hx, hy, hz, albedo, texture):
    """Checker pattern in longitude/latitude around the world y axis."""
    if texture <= 0.0:
        return albedo
    n = math.sqrt(hx * hx + hy * hy + hz * hz)
    if n == 0.0:
        return albedo
    lon = math.atan2(hz, hx)
    lat = math.acos(min(max(hy / n, -1.0), 1.0))
    a = int(math.floor((lon + math.pi) / (2 * math.pi) * CHECKER_LON))
    b = int(math.floor(lat / math.pi * CHECKER_LAT))
    return albedo * texture if (a + b) % 2 else albedo


@nb.njit(cache=True)
def render_kernel(out_L, out_label, rot, cam, lam, cx, cy, wall_z, tex, tex_x0, tex_y0, texel,
                  obstacles, rects, bboxes):
    """Render log intensity into ``out_L``; ``out_label`` gets the dominant obstacle index or -1.

    ``rot`` maps camera-frame directions to world; obstacles are drawn far to near
    (caller's order) with anti-aliased coverage blended in linear intensity.
    ``bboxes[k]`` receives the pixel extent (xmin, ymin, xmax, ymax) of coverage >= 0.5.
    """
    h, w = out_L.shape
    for j in range(h):
        for i in range(w):
            dcx = (i - cx) / lam
            dcy = (j - cy) / lam
            dwx = rot[0, 0] * dcx + rot[0, 1] * dcy + rot[0, 2]
            dwy = rot[1, 0] * dcx + rot[1, 1] * dcy + rot[1, 2]
            dwz = rot[2, 0] * dcx + rot[2, 1] * dcy + rot[2, 2]
            if dwz > 1e-9:
                s = (wall_z - cam[2]) / dwz
                u = (cam[0] + s * dwx - tex_x0) / texel
                v = (cam[1] + s * dwy - tex_y0) / texel
                out_L[j, i] = _bilinear(tex, u, v)
            else:
                out_L[j, i] = 0.0
            out_label[j, i] = -1
    n_ob = obstacles.shape[0]
    for k in range(n_ob):
        bboxes[k, 0] = w
        bboxes[k, 1] = h
        bboxes[k, 2] = -1
        bboxes[k, 3] = -1
    for k in range(n_ob):
        kind = int(obstacles[k, 0])
        px = obstacles[k, 1]
        py = obstacles[k, 2]
        pz = obstacles[k, 3]
        albedo = obstacles[k, 7]
        texture = obstacles[k, 8]
        for j in range(rects[k, 1], rects[k, 3] + 1):
            for i in range(rects[k, 0], rects[k, 2] + 1):
                dcx = (i - cx) / lam
                dcy = (j - cy) / lam
                dwx = rot[0, 0] * dcx + rot[0, 1] * dcy + rot[0, 2]
                dwy = rot[1, 0] * dcx + rot[1, 1] * dcy + rot[1, 2]
                dwz = rot[2, 0] * dcx + rot[2, 1] * dcy + rot[2, 2]
                cov = 0.0
                alb = albedo
                if kind == SPHERE:
                    n = math.sqrt(dwx * dwx + dwy * dwy + dwz * dwz)
                    ox = px - cam[0]
                    oy = py - cam[1]
                    oz = pz - cam[2]
                    along = (ox * dwx + oy * dwy + oz * dwz) / n
                    if along > 0:
                        perp2 = ox * ox + oy * oy + oz * oz - along * along
                        perp = math.sqrt(perp2) if perp2 > 0 else 0.0
                        rad = obstacles[k, 4]
                        cov = 0.5 + (rad - perp) * lam / along
                        cov = min(max(cov, 0.0), 1.0)
                        if cov > 0.0:
                            # surface point (clamped onto the silhouette for edge pixels)
                            inside = rad * rad - perp2
                            th = along - math.sqrt(inside) if inside > 0 else along
                            alb = _sphere_albedo(cam[0] + th * dwx / n - px,
                                                 cam[1] + th * dwy / n - py,
                                                 cam[2] + th * dwz / n - pz, albedo, texture)
                    lin = math.exp(out_L[j, i])
                    mixed = cov * alb + (1.0 - cov) * lin
                else:
                    hits = 0
                    acc = 0.0
                    for sx, sy in SUPERSAMPLE:
                        ex = (i + sx - cx) / lam
                        ey = (j + sy - cy) / lam
                        qx = rot[0, 0] * ex + rot[0, 1] * ey + rot[0, 2]
                        qy = rot[1, 0] * ex + rot[1, 1] * ey + rot[1, 2]
                        qz = rot[2, 0] * ex + rot[2, 1] * ey + rot[2, 2]
                        face = _box_hit(cam[0], cam[1], cam[2], qx, qy, qz, px, py, pz,
                                        obstacles[k, 4], obstacles[k, 5], obstacles[k, 6])
                        if face >= 0:
                            hits += 1
                            # faces shade differently so box edges stay visible
                            shade = 1.0 if face == 2 else (texture if texture > 0 else 1.0)
                            if face == 1 and texture > 0:
                                shade = 0.5 * (1.0 + texture)
                            acc += albedo * shade
                    cov = hits / 4.0
                    lin = math.exp(out_L[j, i])
                    mixed = 0.25 * acc + (1.0 - cov) * lin
                if cov <= 0.0:
                    continue
                out_L[j, i] = math.log(mixed)
                if cov >= 0.5 or out_label[j, i] < 0:
                    out_label[j, i] = k
                if cov >= 0.5:
                    if i < bboxes[k, 0]:
                        bboxes[k, 0] = i
                    if j < bboxes[k, 1]:
                        bboxes[k, 1] = j
                    if i > bboxes[k, 2]:
                        bboxes[k, 2] = i
                    if j > bboxes[k, 3]:
                        bboxes[k, 3] = j


@nb.njit(cache=True)
def emit_kernel(L_prev, L_new, L_ref, lab_prev, lab_new, t_prev, t_cur, C,
                out_ts, out_x, out_y, out_p, out_label):
    """Emit one event per contrast-threshold crossing between two frames.

    Timestamps are linearly interpolated inside (t_prev, t_cur]. Events at a
    pixel covered by an obstacle in either frame carry that obstacle index,
    otherwise -1 (background). Returns the number of events written, or -1
    if the output buffers overflowed.
    """
    h, w = L_new.shape
    dt = t_cur - t_prev
    n = 0
    cap = out_ts.shape[0]
    for j in range(h):
        for i in range(w):
            ref = L_ref[j, i]
            new = L_new[j, i]
            diff = new - ref
            if abs(diff) < C:
                continue
            pol = 1 if diff > 0 else -1
            k_max = int(abs(diff) / C)
            old = L_prev[j, i]
            span = new - old
            label = lab_new[j, i]
            if label < 0:
                label = lab_prev[j, i]
            for k in range(1, k_max + 1):
                level = ref + pol * k * C
                frac = 1.0
                if span != 0.0:
                    frac = (level - old) / span
                    if frac < 0.0:
                        frac = 0.0
                    elif frac > 1.0:
                        frac = 1.0
                ts = t_prev + int(math.ceil(frac * dt))
                if ts <= t_prev:
                    ts = t_prev + 1
                if n >= cap:
                    return -1
                out_ts[n] = ts
                out_x[n] = i
                out_y[n] = j
                out_p[n] = pol
                out_label[n] = label
                n += 1
            L_ref[j, i] = ref + pol * k_max * C
    return n
