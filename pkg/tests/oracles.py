"""Independent reference implementations used to check the production code.

These deliberately take different algorithmic routes: full per-pixel
nearest-center enumeration instead of disc stamping, a stateless rescan for
interaction detection, central finite differences for gradients.
"""

from __future__ import annotations

import math

import numpy as np

from affgrasp.geometry import calib_at_tcp
from affgrasp.labeling import GRASP_START, RELEASE


def enumerate_label(shape, centers_uv, radius, background=(0.0, 1.0)):
    """Per-pixel nearest-center enumeration over the *full* image.

    ``centers_uv``: list of (u, v) integer pixels. Ties resolve to the
    smaller (v, u) center because centers are pre-sorted and argmin keeps
    the first minimum.
    """
    h, w = shape
    bg = np.asarray(background, dtype=np.float64)
    mask = np.zeros((h, w), dtype=bool)
    dirs = np.empty((h, w, 2), dtype=np.float64)
    dirs[..., 0] = bg[0]
    dirs[..., 1] = bg[1]
    if not centers_uv:
        return mask, dirs
    order = sorted(range(len(centers_uv)), key=lambda i: (centers_uv[i][1], centers_uv[i][0]))
    cu = np.array([centers_uv[i][0] for i in order], dtype=np.float64)
    cv = np.array([centers_uv[i][1] for i in order], dtype=np.float64)
    uu, vv = np.meshgrid(np.arange(w, dtype=np.float64), np.arange(h, dtype=np.float64))
    d2 = (uu[..., None] - cu) ** 2 + (vv[..., None] - cv) ** 2  # (H, W, C)
    nearest = d2.argmin(axis=-1)  # first minimum -> smallest (v, u) on ties
    nd2 = np.take_along_axis(d2, nearest[..., None], axis=-1)[..., 0]
    mask = nd2 <= radius * radius
    du = cu[nearest] - uu
    dv = cv[nearest] - vv
    norm = np.hypot(du, dv)
    on_center = norm == 0.0
    norm[on_center] = 1.0
    du /= norm
    dv /= norm
    du[on_center] = bg[0]
    dv[on_center] = bg[1]
    dirs[mask, 0] = du[mask]
    dirs[mask, 1] = dv[mask]
    return mask, dirs


def project_reference(point, calib):
    """Re-derived pinhole projection (matrix algebra written out)."""
    p = calib.extrinsic.rotation @ np.asarray(point, dtype=float) + calib.extrinsic.translation
    if p[2] <= 0:
        return None
    return calib.fx * p[0] / p[2] + calib.cx, calib.fy * p[1] / p[2] + calib.cy, p[2]


def brute_force_label(session, frame_idx, camera, events, cfg):
    """Oracle for render_label: own accumulation, projection, enumeration."""
    frame = next(f for f in session.frames if f.index == frame_idx)
    calib = session.calibs[camera]
    if calib.attached_to == "tcp":
        calib = calib_at_tcp(calib, frame.tcp_pose)
    points = []
    for ev in events:
        if ev.kind == RELEASE and ev.frame_index <= frame_idx:
            points.append(ev)
        elif ev.kind == GRASP_START and ev.frame_index - cfg.n_past <= frame_idx <= ev.frame_index:
            points.append(ev)
    if camera == "gripper" and cfg.gripper_live_only:
        points = [p for p in points if p.kind == GRASP_START or p.frame_index == frame_idx]
    centers = []
    for ev in points:
        proj = project_reference(ev.world_point, calib)
        if proj is None:
            continue
        u, v, _ = proj
        ui = math.floor(u + 0.5)
        vi = math.floor(v + 0.5)
        if 0 <= ui < calib.width and 0 <= vi < calib.height:
            centers.append((ui, vi))
    mask, dirs = enumerate_label(
        (calib.height, calib.width), centers, cfg.radius_for(camera), cfg.background_direction
    )
    return mask, dirs, centers


def brute_force_events(session, cfg):
    """Stateless rescan of the gripper signal for (kind, frame) tuples."""
    w_low, w_high = cfg.width_band
    cmds = [f.gripper_command for f in session.frames]
    widths = [f.gripper_width for f in session.frames]
    out = []
    n = len(cmds)
    for i in range(1, n):
        if cmds[i - 1] == "open" and cmds[i] == "close":
            j = i + 1
            while j < n and cmds[j] == "close":
                j += 1
            run = best = 0
            for k in range(i + 1, j):
                run = run + 1 if w_low < widths[k] < w_high else 0
                best = max(best, run)
            if best >= cfg.dt_debounce:
                out.append((GRASP_START, session.frames[i].index))
                if j < n:
                    out.append((RELEASE, session.frames[j].index))
    return out


def finite_diff_grad(fn, x: np.ndarray, h: float = 1e-4) -> np.ndarray:
    """Central finite differences of a scalar function of an array."""
    grad = np.zeros_like(x, dtype=np.float64)
    flat = x.reshape(-1)
    gflat = grad.reshape(-1)
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + h
        fp = fn(x)
        flat[i] = orig - h
        fm = fn(x)
        flat[i] = orig
        gflat[i] = (fp - fm) / (2.0 * h)
    return grad


def relative_grad_error(analytic: np.ndarray, numeric: np.ndarray) -> float:
    denom = max(float(np.linalg.norm(numeric)), 1e-12)
    return float(np.linalg.norm(analytic - numeric)) / denom


def synthetic_disc_field(shape, centers_uv, radius, noise_deg=0.0, rng=None, tau_fill=1.0):
    """Perfect (optionally angle-noised) disc field for voting tests."""
    mask, dirs = enumerate_label(shape, centers_uv, radius)
    prob = mask.astype(np.float64) * tau_fill
    if noise_deg > 0.0:
        assert rng is not None
        ang = np.deg2rad(rng.uniform(-noise_deg, noise_deg, size=shape))
        cos, sin = np.cos(ang), np.sin(ang)
        du = dirs[..., 0] * cos - dirs[..., 1] * sin
        dv = dirs[..., 0] * sin + dirs[..., 1] * cos
        dirs = np.stack([du, dv], axis=-1)
    return prob, dirs
