"""Procedural tabletop objects: primitives, pickable shapes, the drawer.

Shapes are unions of boxes and vertical cylinders in the object frame
(origin on the table plane under the body center). The graspable point sits
on the top surface of the part a gripper should close on; handled shapes
are only graspable at the handle.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..geometry import Pose, euler_to_matrix

DRAWER_OBJECT_ID = "drawer"


@dataclass
class BoxPrim:
    half: np.ndarray  # half extents (3,)
    center: np.ndarray  # center in object frame (3,)
    color: tuple[int, int, int]

    def __post_init__(self):
        self.half = np.asarray(self.half, dtype=float).reshape(3)
        self.center = np.asarray(self.center, dtype=float).reshape(3)


@dataclass
class CylinderPrim:
    radius: float
    half_height: float
    center: np.ndarray  # center in object frame (3,)
    color: tuple[int, int, int]

    def __post_init__(self):
        self.center = np.asarray(self.center, dtype=float).reshape(3)


@dataclass
class DrawerState:
    displacement: float = 0.0
    limit: float = 0.18
    axis: np.ndarray = field(default_factory=lambda: np.array([0.0, -1.0, 0.0]))
    ratchet: bool = True  # friction detent: pulls accumulate, pushes don't close it

    def __post_init__(self):
        self.axis = np.asarray(self.axis, dtype=float).reshape(3)

    def copy(self) -> "DrawerState":
        return DrawerState(self.displacement, self.limit, self.axis.copy(), self.ratchet)


@dataclass
class SimObject:
    object_id: str
    shape_name: str
    parts: list  # BoxPrim | CylinderPrim in object frame
    grasp_offset: np.ndarray  # graspable point g in object frame
    grasp_tolerance: float  # meters
    width: float  # gripper width the fingers settle at
    kind: str = "pickable"  # "pickable" | "drawer"
    pose: Pose = field(default_factory=Pose)
    held: bool = False

    def __post_init__(self):
        self.grasp_offset = np.asarray(self.grasp_offset, dtype=float).reshape(3)
        if self.grasp_tolerance <= 0:
            raise ValueError("grasp tolerance must be positive")

    def grasp_point(self) -> np.ndarray:
        return self.pose.transform(self.grasp_offset)

    def footprint_radius(self) -> float:
        r = 0.0
        for p in self.parts:
            c = np.hypot(p.center[0], p.center[1])
            if isinstance(p, BoxPrim):
                r = max(r, c + float(np.hypot(p.half[0], p.half[1])))
            else:
                r = max(r, c + p.radius)
        return r

    def top_height(self) -> float:
        h = 0.0
        for p in self.parts:
            if isinstance(p, BoxPrim):
                h = max(h, p.center[2] + p.half[2])
            else:
                h = max(h, p.center[2] + p.half_height)
        return h

    def copy(self) -> "SimObject":
        return SimObject(
            object_id=self.object_id,
            shape_name=self.shape_name,
            parts=self.parts,  # immutable by convention
            grasp_offset=self.grasp_offset.copy(),
            grasp_tolerance=self.grasp_tolerance,
            width=self.width,
            kind=self.kind,
            pose=self.pose.copy(),
            held=self.held,
        )


def _puck(color):
    return (
        [CylinderPrim(radius=0.028, half_height=0.020, center=(0, 0, 0.020), color=color)],
        (0.0, 0.0, 0.040),
        0.056,
    )


def _puck_wide(color):
    return (
        [CylinderPrim(radius=0.033, half_height=0.017, center=(0, 0, 0.017), color=color)],
        (0.0, 0.0, 0.034),
        0.064,
    )


def _cube(color):
    return (
        [BoxPrim(half=(0.022, 0.022, 0.022), center=(0, 0, 0.022), color=color)],
        (0.0, 0.0, 0.044),
        0.044,
    )


def _block(color):
    return (
        [BoxPrim(half=(0.026, 0.017, 0.023), center=(0, 0, 0.023), color=color)],
        (0.0, 0.0, 0.046),
        0.034,
    )


def _pan(body_color, handle_color, body_r=0.030, body_h=0.030, bar_len=0.052, bar_w=0.026):
    # grasp point on the handle top; the body is too wide for the gripper
    bar_cx = body_r + bar_len / 2.0
    parts = [
        CylinderPrim(radius=body_r, half_height=body_h / 2, center=(0, 0, body_h / 2), color=body_color),
        BoxPrim(
            half=(bar_len / 2, bar_w / 2, 0.008),
            center=(bar_cx, 0.0, body_h - 0.008),
            color=handle_color,
        ),
    ]
    return parts, (bar_cx, 0.0, body_h), bar_w


def make_object(shape_name: str, object_id: str | None = None) -> SimObject:
    object_id = object_id or shape_name
    if shape_name == "puck":
        parts, g, w = _puck((200, 60, 50))
    elif shape_name == "cube":
        parts, g, w = _cube((60, 90, 200))
    elif shape_name == "pan":
        parts, g, w = _pan((70, 160, 90), (40, 110, 60))
    elif shape_name == "puck_wide":
        parts, g, w = _puck_wide((210, 140, 60))
    elif shape_name == "block":
        parts, g, w = _block((140, 70, 180))
    elif shape_name == "skillet":
        parts, g, w = _pan((60, 150, 150), (30, 100, 110), body_r=0.026, body_h=0.026, bar_len=0.060, bar_w=0.022)
    else:
        raise KeyError(f"unknown shape {shape_name!r}")
    return SimObject(
        object_id=object_id,
        shape_name=shape_name,
        parts=parts,
        grasp_offset=g,
        grasp_tolerance=0.02,
        width=w,
    )


SEEN_OBJECTS = ("puck", "cube", "pan")
UNSEEN_OBJECTS = ("puck_wide", "block", "skillet")


# drawer geometry: body at the back of the table, opening toward the center
DRAWER_BODY_HALF = np.array([0.085, 0.055, 0.030])
DRAWER_BODY_CENTER = np.array([0.0, 0.17, 0.030])
DRAWER_HANDLE_HALF = np.array([0.034, 0.011, 0.011])
DRAWER_HANDLE_CENTER = np.array([0.0, 0.17 - 0.055 - 0.013, 0.049])
DRAWER_HANDLE_TOP = DRAWER_HANDLE_CENTER + np.array([0.0, 0.0, DRAWER_HANDLE_HALF[2]])


def make_drawer() -> SimObject:
    parts = [
        BoxPrim(half=DRAWER_BODY_HALF, center=DRAWER_BODY_CENTER, color=(120, 90, 60)),
        BoxPrim(half=DRAWER_HANDLE_HALF, center=DRAWER_HANDLE_CENTER, color=(50, 40, 35)),
    ]
    return SimObject(
        object_id=DRAWER_OBJECT_ID,
        shape_name="drawer",
        parts=parts,
        grasp_offset=DRAWER_HANDLE_TOP,
        grasp_tolerance=0.025,
        width=0.022,
        kind="drawer",
    )


def object_world_parts(obj: SimObject):
    """(rotation, translation, primitive) triples mapping part frame -> world."""
    rot = euler_to_matrix(obj.pose.euler)
    out = []
    for p in obj.parts:
        out.append((rot, obj.pose.position + rot @ p.center, p))
    return out
