"""Rigid-body math and pinhole camera model shared across the package.

Conventions: world frame is right-handed with z up, euler angles are
extrinsic XYZ (``R = Rz @ Ry @ Rx``), camera frames follow the usual
computer-vision convention (x right, y down, z forward).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np


class BehindCameraError(ValueError):
    """Raised when a point to project has non-positive camera-frame depth."""


def wrap_angle(a):
    """Wrap angle(s) into [-pi, pi]."""
    return (np.asarray(a, dtype=float) + math.pi) % (2.0 * math.pi) - math.pi


def euler_to_matrix(euler) -> np.ndarray:
    """Rotation matrix for extrinsic XYZ euler angles (radians)."""
    ex, ey, ez = (float(v) for v in euler)
    cx, sx = math.cos(ex), math.sin(ex)
    cy, sy = math.cos(ey), math.sin(ey)
    cz, sz = math.cos(ez), math.sin(ez)
    rx = np.array([[1, 0, 0], [0, cx, -sx], [0, sx, cx]])
    ry = np.array([[cy, 0, sy], [0, 1, 0], [-sy, 0, cy]])
    rz = np.array([[cz, -sz, 0], [sz, cz, 0], [0, 0, 1]])
    return rz @ ry @ rx


def matrix_to_euler(rot: np.ndarray) -> np.ndarray:
    """Inverse of :func:`euler_to_matrix`; gimbal-lock pitch pinned to +-pi/2."""
    r = np.asarray(rot, dtype=float)
    sy = -r[2, 0]
    sy = min(1.0, max(-1.0, sy))
    ey = math.asin(sy)
    if abs(sy) < 1.0 - 1e-9:
        ex = math.atan2(r[2, 1], r[2, 2])
        ez = math.atan2(r[1, 0], r[0, 0])
    else:
        ex = math.atan2(-r[1, 2], r[1, 1])
        ez = 0.0
    return np.array([ex, ey, ez])


@dataclass
class Pose:
    """Position (meters, world frame) plus extrinsic-XYZ euler orientation."""

    position: np.ndarray = field(default_factory=lambda: np.zeros(3))
    euler: np.ndarray = field(default_factory=lambda: np.zeros(3))

    def __post_init__(self):
        self.position = np.asarray(self.position, dtype=float).reshape(3)
        self.euler = np.asarray(self.euler, dtype=float).reshape(3)

    def matrix(self) -> np.ndarray:
        """4x4 homogeneous transform mapping local coordinates to world."""
        m = np.eye(4)
        m[:3, :3] = euler_to_matrix(self.euler)
        m[:3, 3] = self.position
        return m

    def transform(self, points: np.ndarray) -> np.ndarray:
        pts = np.asarray(points, dtype=float)
        return pts @ euler_to_matrix(self.euler).T + self.position

    def inverse_transform(self, points: np.ndarray) -> np.ndarray:
        pts = np.asarray(points, dtype=float)
        rot = euler_to_matrix(self.euler)
        return (pts - self.position) @ rot

    def copy(self) -> "Pose":
        return Pose(self.position.copy(), self.euler.copy())

    def __eq__(self, other):
        if not isinstance(other, Pose):
            return NotImplemented
        return np.array_equal(self.position, other.position) and np.array_equal(
            self.euler, other.euler
        )


@dataclass
class RigidTransform:
    """world->frame map ``p_local = rotation @ p + translation``."""

    rotation: np.ndarray
    translation: np.ndarray

    def __post_init__(self):
        self.rotation = np.asarray(self.rotation, dtype=float).reshape(3, 3)
        self.translation = np.asarray(self.translation, dtype=float).reshape(3)

    def apply(self, points: np.ndarray) -> np.ndarray:
        return np.asarray(points, dtype=float) @ self.rotation.T + self.translation

    def inverse(self) -> "RigidTransform":
        return RigidTransform(self.rotation.T, -self.rotation.T @ self.translation)

    def compose(self, inner: "RigidTransform") -> "RigidTransform":
        """self o inner: apply ``inner`` first, then ``self``."""
        return RigidTransform(
            self.rotation @ inner.rotation,
            self.rotation @ inner.translation + self.translation,
        )

    def copy(self) -> "RigidTransform":
        return RigidTransform(self.rotation.copy(), self.translation.copy())

    def __eq__(self, other):
        if not isinstance(other, RigidTransform):
            return NotImplemented
        return np.array_equal(self.rotation, other.rotation) and np.array_equal(
            self.translation, other.translation
        )

    @staticmethod
    def identity() -> "RigidTransform":
        return RigidTransform(np.eye(3), np.zeros(3))

    @staticmethod
    def from_pose(pose: Pose) -> "RigidTransform":
        """world->local transform of a frame whose pose (local->world) is given."""
        rot = euler_to_matrix(pose.euler)
        return RigidTransform(rot.T, -rot.T @ pose.position)


@dataclass
class CameraCalib:
    """Pinhole intrinsics plus a rigid extrinsic.

    ``attached_to`` selects what the extrinsic maps from: ``"world"`` for a
    fixed camera, ``"tcp"`` for a camera rigidly mounted on the gripper (the
    extrinsic then maps TCP-frame points into the camera frame and the
    effective world extrinsic follows the TCP pose, see :func:`calib_at_tcp`).
    """

    fx: float
    fy: float
    cx: float
    cy: float
    width: int
    height: int
    extrinsic: RigidTransform = field(default_factory=RigidTransform.identity)
    attached_to: str = "world"

    def __eq__(self, other):
        if not isinstance(other, CameraCalib):
            return NotImplemented
        return (
            self.fx == other.fx
            and self.fy == other.fy
            and self.cx == other.cx
            and self.cy == other.cy
            and self.width == other.width
            and self.height == other.height
            and self.attached_to == other.attached_to
            and self.extrinsic == other.extrinsic
        )


def calib_at_tcp(calib: CameraCalib, tcp_pose: Pose) -> CameraCalib:
    """Resolve a TCP-mounted camera into a world-extrinsic calib for one frame."""
    if calib.attached_to == "world":
        return calib
    world_to_tcp = RigidTransform.from_pose(tcp_pose)
    eff = calib.extrinsic.compose(world_to_tcp)
    return CameraCalib(
        fx=calib.fx,
        fy=calib.fy,
        cx=calib.cx,
        cy=calib.cy,
        width=calib.width,
        height=calib.height,
        extrinsic=eff,
        attached_to="world",
    )


def project(point, calib: CameraCalib):
    """Project a world point to continuous pixel coordinates.

    Returns ``(u, v, depth)`` with depth in meters along the camera z axis.
    Raises :class:`BehindCameraError` for points at or behind the camera
    plane rather than clamping.
    """
    if calib.attached_to != "world":
        raise ValueError("resolve a tcp-mounted calib with calib_at_tcp first")
    p_cam = calib.extrinsic.apply(np.asarray(point, dtype=float).reshape(3))
    z = float(p_cam[2])
    if z <= 0.0:
        raise BehindCameraError(f"point has camera-frame depth {z:.6f} <= 0")
    u = calib.fx * p_cam[0] / z + calib.cx
    v = calib.fy * p_cam[1] / z + calib.cy
    return float(u), float(v), z


def project_many(points: np.ndarray, calib: CameraCalib):
    """Vectorized projection; rows with depth <= 0 get ``valid=False``."""
    pts = np.asarray(points, dtype=float).reshape(-1, 3)
    p_cam = calib.extrinsic.apply(pts)
    z = p_cam[:, 2]
    valid = z > 0.0
    safe_z = np.where(valid, z, 1.0)
    u = calib.fx * p_cam[:, 0] / safe_z + calib.cx
    v = calib.fy * p_cam[:, 1] / safe_z + calib.cy
    return u, v, z, valid


def backproject(u: float, v: float, depth: float, calib: CameraCalib) -> np.ndarray:
    """Lift a pixel with known camera-frame depth back into world coordinates."""
    if depth <= 0.0:
        raise ValueError(f"depth must be positive, got {depth}")
    x = (u - calib.cx) * depth / calib.fx
    y = (v - calib.cy) * depth / calib.fy
    p_cam = np.array([x, y, depth])
    return calib.extrinsic.inverse().apply(p_cam)


def pixel_rays(calib: CameraCalib):
    """Per-pixel ray origins/directions in world frame for rendering.

    Returns ``(origin (3,), dirs (H, W, 3))`` where ``dirs`` are unit-depth
    camera rays rotated into world frame (not normalized; z component in the
    camera frame is 1, so ray parameter t equals camera depth).
    """
    inv = calib.extrinsic.inverse()
    us = (np.arange(calib.width) + 0.0 - calib.cx) / calib.fx
    vs = (np.arange(calib.height) + 0.0 - calib.cy) / calib.fy
    uu, vv = np.meshgrid(us, vs)
    cam_dirs = np.stack([uu, vv, np.ones_like(uu)], axis=-1)
    world_dirs = cam_dirs @ inv.rotation.T
    return inv.translation, world_dirs


def round_half_up(x):
    """Deterministic pixel rounding (0.5 always rounds up)."""
    return np.floor(np.asarray(x, dtype=float) + 0.5).astype(int)
