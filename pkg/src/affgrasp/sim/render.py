"""Deterministic flat-shaded raycaster for the tabletop scene.

Rays are cast per pixel from the camera through box and cylinder primitives;
the nearest hit wins the depth buffer. Ray directions have unit camera-frame
depth, so the ray parameter equals pinhole depth directly.
"""

from __future__ import annotations

import numpy as np

from ..geometry import CameraCalib, pixel_rays

HIT_EPS = 1e-9


def _ray_box(o, d, half):
    """Slab intersection for an origin-centered box. Returns (t, hit)."""
    with np.errstate(divide="ignore", invalid="ignore"):
        inv = 1.0 / d
    t1 = (-half[None, :] - o) * inv
    t2 = (half[None, :] - o) * inv
    # parallel rays: the slab test degenerates, use +-inf by origin position
    par = d == 0.0
    inside = np.abs(o) <= half[None, :]
    t_lo = np.where(par, np.where(inside, -np.inf, np.inf), np.minimum(t1, t2))
    t_hi = np.where(par, np.where(inside, np.inf, -np.inf), np.maximum(t1, t2))
    tmin = t_lo.max(axis=1)
    tmax = t_hi.min(axis=1)
    hit = (tmax >= np.maximum(tmin, HIT_EPS)) & np.isfinite(tmin)
    t = np.where(tmin > HIT_EPS, tmin, tmax)
    return np.where(hit, t, np.inf), hit


def _ray_cylinder(o, d, radius, half_h):
    """Vertical cylinder (axis z) centered at the part origin."""
    a = d[:, 0] ** 2 + d[:, 1] ** 2
    b = 2.0 * (o[:, 0] * d[:, 0] + o[:, 1] * d[:, 1])
    c = o[:, 0] ** 2 + o[:, 1] ** 2 - radius**2
    disc = b * b - 4.0 * a * c
    best = np.full(o.shape[0], np.inf)
    with np.errstate(divide="ignore", invalid="ignore"):
        sq = np.sqrt(np.maximum(disc, 0.0))
        for sign in (-1.0, 1.0):
            t = (-b + sign * sq) / (2.0 * a)
            z = o[:, 2] + t * d[:, 2]
            ok = (disc >= 0.0) & (a > 0.0) & (t > HIT_EPS) & (np.abs(z) <= half_h)
            best = np.where(ok & (t < best), t, best)
        # end caps
        for cap_z in (-half_h, half_h):
            t = (cap_z - o[:, 2]) / d[:, 2]
            px = o[:, 0] + t * d[:, 0]
            py = o[:, 1] + t * d[:, 1]
            ok = (d[:, 2] != 0.0) & (t > HIT_EPS) & (px**2 + py**2 <= radius**2)
            best = np.where(ok & (t < best), t, best)
    return best, np.isfinite(best)


def render_scene(
    world_parts,
    calib: CameraCalib,
    table_half,
    table_color=(168, 168, 172),
    background_color=(26, 26, 30),
    far_depth=1.5,
):
    """Render (rgb uint8, depth float32 meters) for a world-extrinsic calib.

    ``world_parts``: iterables of (rotation part->world, translation, prim)
    as produced by ``objects.object_world_parts``.
    """
    origin, dirs = pixel_rays(calib)
    h, w = dirs.shape[:2]
    d = dirs.reshape(-1, 3)
    n = d.shape[0]
    o = np.broadcast_to(origin, (n, 3))

    depth = np.full(n, np.inf)
    color = np.empty((n, 3), dtype=np.uint8)
    color[:] = np.asarray(background_color, dtype=np.uint8)

    # table plane z=0 bounded by the table extent
    with np.errstate(divide="ignore", invalid="ignore"):
        t_tab = -o[:, 2] / d[:, 2]
    px = o[:, 0] + t_tab * d[:, 0]
    py = o[:, 1] + t_tab * d[:, 1]
    ok = (
        (d[:, 2] != 0.0)
        & (t_tab > HIT_EPS)
        & (np.abs(px) <= table_half[0])
        & (np.abs(py) <= table_half[1])
    )
    depth = np.where(ok, t_tab, depth)
    color[ok] = np.asarray(table_color, dtype=np.uint8)

    for rot, trans, prim in world_parts:
        # into the part frame
        op = (o - trans) @ rot
        dp = d @ rot
        if hasattr(prim, "half"):
            t, hit = _ray_box(op, dp, prim.half)
        else:
            t, hit = _ray_cylinder(op, dp, prim.radius, prim.half_height)
        closer = hit & (t < depth)
        depth = np.where(closer, t, depth)
        color[closer] = np.asarray(prim.color, dtype=np.uint8)

    depth = np.where(np.isfinite(depth), depth, far_depth)
    return color.reshape(h, w, 3), depth.reshape(h, w).astype(np.float32)


def depth_to_mm(depth_m: np.ndarray) -> np.ndarray:
    return np.clip(np.rint(depth_m * 1000.0), 0, 65535).astype(np.uint16)
