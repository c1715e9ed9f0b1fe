"""Hough-voting center extraction from a mask + direction field.

Every pixel above the mask threshold casts votes along the ray in its
predicted direction; accumulated cell scores are scanned in descending
order with non-max suppression to recover up to K centers.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from ..geometry import round_half_up


@dataclass
class VoteParams:
    tau: float = 0.5  # mask threshold
    ray_step: float = 1.0  # pixels between successive votes on a ray
    s_max: float | None = None  # max ray length; None = image diagonal
    cell_size: float = 1.0  # vote grid resolution in pixels
    peak_threshold: float = 10.0  # minimum votes for a peak
    nms_radius: float = 5.0  # suppression radius in pixels
    max_centers: int = 4

    def __post_init__(self):
        if not 0.0 < self.tau < 1.0:
            raise ValueError("tau must lie in (0, 1)")
        for name in ("ray_step", "cell_size", "nms_radius"):
            if getattr(self, name) < 1.0:
                raise ValueError(f"{name} must be >= 1 pixel")
        if self.s_max is not None and self.s_max < 1.0:
            raise ValueError("s_max must be >= 1 pixel")
        if self.max_centers < 1:
            raise ValueError("max_centers must be >= 1")


def hough_vote(
    mask_prob: np.ndarray, directions: np.ndarray, params: VoteParams
) -> list[tuple[int, int, float]]:
    """Vote and extract peaks; returns [(u, v, score)] sorted by score.

    Peak coordinates are vote-cell centers in pixel units. Ties in score are
    broken toward the smaller (v, u) cell so results are deterministic.
    """
    h, w = mask_prob.shape
    fg_v, fg_u = np.nonzero(mask_prob >= params.tau)
    if fg_u.size == 0:
        return []
    du = directions[fg_v, fg_u, 0].astype(float)
    dv = directions[fg_v, fg_u, 1].astype(float)

    s_max = params.s_max if params.s_max is not None else math.hypot(h, w)
    n_steps = max(1, int(s_max / params.ray_step))
    ks = np.arange(1, n_steps + 1) * params.ray_step  # (S,)

    # (S, N) ray sample positions in pixel coordinates
    pu = fg_u[None, :] + ks[:, None] * du[None, :]
    pv = fg_v[None, :] + ks[:, None] * dv[None, :]
    cu = round_half_up(pu / params.cell_size)
    cv = round_half_up(pv / params.cell_size)

    grid_w = int(math.ceil(w / params.cell_size)) + 1
    grid_h = int(math.ceil(h / params.cell_size)) + 1
    ok = (cu >= 0) & (cu < grid_w) & (cv >= 0) & (cv < grid_h)
    grid = np.zeros((grid_h, grid_w), dtype=np.float64)
    np.add.at(grid, (cv[ok], cu[ok]), 1.0)

    cand_v, cand_u = np.nonzero(grid >= params.peak_threshold)
    if cand_u.size == 0:
        return []
    scores = grid[cand_v, cand_u]
    order = np.lexsort((cand_u, cand_v, -scores))  # score desc, then (v, u) asc

    peaks: list[tuple[int, int, float]] = []
    taken_u: list[float] = []
    taken_v: list[float] = []
    for idx in order:
        u_px = cand_u[idx] * params.cell_size
        v_px = cand_v[idx] * params.cell_size
        if any(
            (u_px - tu) ** 2 + (v_px - tv) ** 2 <= params.nms_radius**2
            for tu, tv in zip(taken_u, taken_v)
        ):
            continue
        peaks.append((int(round(u_px)), int(round(v_px)), float(scores[idx])))
        taken_u.append(u_px)
        taken_v.append(v_px)
        if len(peaks) >= params.max_centers:
            break
    return peaks
