"""Mixture controller pieces: target selection, approach policy, gate, reward.

The executed policy is a hard switch between a straight-line approach
controller and the learned local policy; the gate opens once the TCP enters
the target's neighborhood and carries hysteresis so boundary noise cannot
make it chatter.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..affnet.model import AffordancePrediction
from ..geometry import CameraCalib, Pose, backproject, wrap_angle
from ..sim.env import Action


class NoTargetError(RuntimeError):
    """Prediction carried no voted centers to select from."""


class InvalidDepthError(RuntimeError):
    """No valid depth near the chosen center pixel."""


@dataclass
class MixtureConfig:
    d_switch: float = 0.15  # gate radius, meters
    hysteresis: float = 0.02
    d_max: float = 0.15  # local neighborhood radius / distance normalizer
    approach_offset: float = 0.05  # approach waypoint height above target
    top_down_euler: tuple[float, float, float] = (0.0, 0.0, 0.0)

    def __post_init__(self):
        if not 0.0 < self.d_switch <= self.d_max:
            raise ValueError("requires 0 < d_switch <= d_max")
        if self.hysteresis < 0.0:
            raise ValueError("hysteresis must be >= 0")


@dataclass
class RewardConfig:
    lam1: float = 1.0
    lam2: float = 1.0
    lam3: float = 1.0
    r_succ: float = 200.0
    r_out: float = -1.0
    d_max: float = 0.15
    terminate_on_exit: bool = True

    def __post_init__(self):
        if self.d_max <= 0.0:
            raise ValueError("d_max must be positive")


def select_target(
    prediction: AffordancePrediction,
    depth_m: np.ndarray,
    calib: CameraCalib,
    search_px: int = 3,
) -> np.ndarray:
    """3D target from the highest-scoring voted center and the depth image.

    Invalid (zero) depth at the center pixel falls back to the nearest valid
    pixel within ``search_px``; scanning order is by distance then (v, u) so
    the fallback is deterministic.
    """
    if not prediction.centers:
        raise NoTargetError("prediction has no voted centers")
    u, v, _score = max(prediction.centers, key=lambda c: c[2])
    h, w = depth_m.shape
    u = int(np.clip(u, 0, w - 1))
    v = int(np.clip(v, 0, h - 1))
    candidates = []
    for dv in range(-search_px, search_px + 1):
        for du in range(-search_px, search_px + 1):
            uu, vv = u + du, v + dv
            if 0 <= uu < w and 0 <= vv < h:
                candidates.append((du * du + dv * dv, vv, uu))
    for _, vv, uu in sorted(candidates):
        d = float(depth_m[vv, uu])
        if d > 0.0:
            return backproject(float(uu), float(vv), d, calib)
    raise InvalidDepthError(f"no valid depth within {search_px} px of ({u}, {v})")


def pi_mod(
    tcp_pose: Pose,
    target: np.ndarray,
    cfg: MixtureConfig,
    max_dpos: float,
    max_deuler: float,
) -> Action:
    """Straight-line step toward the approach waypoint above the target.

    Translation is norm-capped (direction preserved); orientation steps
    toward the fixed top-down grasp orientation; the gripper stays open.
    """
    waypoint = np.asarray(target, dtype=float) + np.array([0.0, 0.0, cfg.approach_offset])
    delta = waypoint - tcp_pose.position
    dist = float(np.linalg.norm(delta))
    if dist > max_dpos:
        delta = delta * (max_dpos / dist)
    deuler = wrap_angle(np.asarray(cfg.top_down_euler) - tcp_pose.euler)
    deuler = np.clip(deuler, -max_deuler, max_deuler)
    return Action(dpos=delta, deuler=deuler, gripper="open")


def alpha(tcp_position, target, cfg: MixtureConfig, previous: int) -> int:
    """Binary gate with hysteresis: 1 = learned local policy active."""
    d = float(np.linalg.norm(np.asarray(tcp_position) - np.asarray(target)))
    if d <= cfg.d_switch:
        return 1
    if d >= cfg.d_switch + cfg.hysteresis:
        return 0
    return previous


def reward(
    tcp_position,
    events: list[str],
    target,
    cfg: RewardConfig,
) -> tuple[float, bool]:
    """Per-step shaped reward and termination flag.

    The shaped term is 1 minus the normalized TCP-to-target distance; task
    success adds the success bonus and terminates; leaving the neighborhood
    ball adds the exit penalty and (by default) terminates.
    """
    d = float(np.linalg.norm(np.asarray(tcp_position) - np.asarray(target)))
    r_aff = 1.0 - min(max(d / cfg.d_max, 0.0), 1.0)
    success = ("lift_success" in events) or ("drawer_success" in events)
    exited = d > cfg.d_max
    r = cfg.lam2 * r_aff
    if success:
        r += cfg.lam1 * cfg.r_succ
    if exited:
        r += cfg.lam3 * cfg.r_out
    terminate = success or (exited and cfg.terminate_on_exit)
    return r, terminate
