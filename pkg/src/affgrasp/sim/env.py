"""Kinematic tabletop environment with RGB-D rendering and task events.

No contact dynamics: grasping is geometric (close near a graspable point
with enough finger clearance), held objects ride the TCP rigidly, and the
drawer is a prismatic joint dragged by a held handle. Everything is a pure
function of (seed, action sequence).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..geometry import (
    CameraCalib,
    Pose,
    RigidTransform,
    calib_at_tcp,
    euler_to_matrix,
    matrix_to_euler,
    wrap_angle,
)
from .objects import DrawerState, SimObject, make_drawer, make_object, object_world_parts
from .render import depth_to_mm, render_scene

TOP_DOWN_CAM_ROT = np.array([[1.0, 0.0, 0.0], [0.0, -1.0, 0.0], [0.0, 0.0, -1.0]])


class PlacementError(RuntimeError):
    """Could not place objects collision-free within the retry budget."""


def _static_calib(size=96, fx=110.0, cam_height=0.60) -> CameraCalib:
    t = -(TOP_DOWN_CAM_ROT @ np.array([0.0, 0.0, cam_height]))
    return CameraCalib(
        fx=fx, fy=fx, cx=size / 2, cy=size / 2, width=size, height=size,
        extrinsic=RigidTransform(TOP_DOWN_CAM_ROT, t), attached_to="world",
    )


def _gripper_calib(size=48, fx=45.0, mount_height=0.10) -> CameraCalib:
    # camera sits above the TCP in the TCP frame, looking along the grasp axis
    t = -(TOP_DOWN_CAM_ROT @ np.array([0.0, 0.0, mount_height]))
    return CameraCalib(
        fx=fx, fy=fx, cx=size / 2, cy=size / 2, width=size, height=size,
        extrinsic=RigidTransform(TOP_DOWN_CAM_ROT, t), attached_to="tcp",
    )


@dataclass
class EnvConfig:
    tick_hz: float = 20.0
    table_half: tuple[float, float] = (0.25, 0.25)
    workspace_low: tuple[float, float, float] = (-0.25, -0.25, 0.01)
    workspace_high: tuple[float, float, float] = (0.25, 0.25, 0.45)
    neutral_tcp: tuple[float, float, float] = (0.0, -0.10, 0.30)
    w_max: float = 0.08
    width_speed: float = 0.02  # meters per tick
    max_dpos: float = 0.02
    max_deuler: float = 0.1
    h_lift: float = 0.10
    hold_ticks: int = 40  # two seconds at 20 Hz
    drawer_success_displacement: float = 0.15
    placement_half: float = 0.17
    placement_margin: float = 0.02
    placement_retries: int = 100
    far_depth: float = 1.5
    static_calib: CameraCalib = field(default_factory=_static_calib)
    gripper_calib: CameraCalib = field(default_factory=_gripper_calib)


@dataclass
class Action:
    dpos: np.ndarray = field(default_factory=lambda: np.zeros(3))
    deuler: np.ndarray = field(default_factory=lambda: np.zeros(3))
    gripper: str = "open"  # "open" | "close"

    def __post_init__(self):
        self.dpos = np.asarray(self.dpos, dtype=float).reshape(3)
        self.deuler = np.asarray(self.deuler, dtype=float).reshape(3)
        if self.gripper not in ("open", "close"):
            raise ValueError(f"gripper command {self.gripper!r} invalid")


@dataclass
class GripperState:
    tcp_pose: Pose
    width: float
    holding: str | None = None


@dataclass
class SceneState:
    gripper: GripperState
    objects: list[SimObject]
    drawer: DrawerState | None
    step_count: int = 0

    def object_by_id(self, object_id: str) -> SimObject:
        for obj in self.objects:
            if obj.object_id == object_id:
                return obj
        raise KeyError(object_id)


@dataclass
class Observation:
    tcp_pose: Pose
    width: float
    gripper_command: str
    gripper_rgb: np.ndarray | None = None
    gripper_depth_mm: np.ndarray | None = None


class TabletopEnv:
    """Single-owner environment instance; parallel training uses one per worker."""

    def __init__(self, cfg: EnvConfig | None = None):
        self.cfg = cfg or EnvConfig()
        self.state: SceneState | None = None
        self.task = "grasp"
        self._gripper_command = "open"
        self._grasp_tf: RigidTransform | None = None  # tcp -> object at attach
        self._lift_counter = 0
        self._lift_latched = False
        self._drawer_latched = False

    # -- lifecycle -----------------------------------------------------------

    def reset(self, seed: int, task: str = "grasp", object_set=("puck", "cube", "pan")):
        if task not in ("grasp", "drawer"):
            raise ValueError(f"unknown task {task!r}")
        rng = np.random.default_rng(seed)
        self.task = task
        cfg = self.cfg
        drawer = None
        drawer_obj = None
        if task == "drawer":
            drawer = DrawerState()
            drawer_obj = make_drawer()
        y_high = 0.02 if task == "drawer" else cfg.placement_half
        placed: list[SimObject] = []
        for i, shape in enumerate(object_set):
            obj = make_object(shape, object_id=f"{shape}_{i}")
            for attempt in range(cfg.placement_retries + 1):
                if attempt == cfg.placement_retries:
                    raise PlacementError(
                        f"could not place {obj.object_id} after {cfg.placement_retries} tries"
                    )
                x = rng.uniform(-cfg.placement_half, cfg.placement_half)
                y = rng.uniform(-cfg.placement_half, y_high)
                yaw = rng.uniform(-np.pi, np.pi)
                obj.pose = Pose(np.array([x, y, 0.0]), np.array([0.0, 0.0, yaw]))
                r = obj.footprint_radius()
                ok = all(
                    np.hypot(*(obj.pose.position[:2] - other.pose.position[:2]))
                    >= r + other.footprint_radius() + cfg.placement_margin
                    for other in placed
                )
                if ok:
                    break
            placed.append(obj)
        objects = placed
        if drawer_obj is not None:
            objects = [drawer_obj, *placed]
        self.state = SceneState(
            gripper=GripperState(
                tcp_pose=Pose(np.array(cfg.neutral_tcp, dtype=float), np.zeros(3)),
                width=cfg.w_max,
                holding=None,
            ),
            objects=objects,
            drawer=drawer,
        )
        self._gripper_command = "open"
        self._grasp_tf = None
        self._lift_counter = 0
        self._lift_latched = False
        self._drawer_latched = False
        return self.state, self.observe()

    # -- stepping ------------------------------------------------------------

    def step(self, action: Action, want_images: bool = True):
        if self.state is None:
            raise RuntimeError("call reset() before step()")
        cfg = self.cfg
        st = self.state
        events: list[str] = []

        dpos = np.clip(action.dpos, -cfg.max_dpos, cfg.max_dpos)
        deuler = np.clip(action.deuler, -cfg.max_deuler, cfg.max_deuler)
        if not np.allclose(dpos, action.dpos) or not np.allclose(deuler, action.deuler):
            events.append("clamped")

        old_pos = st.gripper.tcp_pose.position.copy()
        new_pos = np.clip(
            old_pos + dpos, np.asarray(cfg.workspace_low), np.asarray(cfg.workspace_high)
        )
        if not np.allclose(new_pos, old_pos + dpos):
            events.append("out_of_bounds")
        new_euler = wrap_angle(st.gripper.tcp_pose.euler + deuler)
        st.gripper.tcp_pose = Pose(new_pos, new_euler)

        # drag whatever is already held
        if st.gripper.holding is not None:
            held = st.object_by_id(st.gripper.holding)
            if held.kind == "drawer":
                drawer = st.drawer
                delta_axis = float((new_pos - old_pos) @ drawer.axis)
                if drawer.ratchet:
                    delta_axis = max(0.0, delta_axis)
                drawer.displacement = float(
                    np.clip(drawer.displacement + delta_axis, 0.0, drawer.limit)
                )
                self._apply_drawer_pose(held)
            else:
                obj_tf = self._tcp_to_world().compose(self._grasp_tf)
                held.pose = Pose(obj_tf.translation, matrix_to_euler(obj_tf.rotation))

        # gripper command edges
        if action.gripper == "open":
            if st.gripper.holding is not None:
                held = st.object_by_id(st.gripper.holding)
                held.held = False
                if held.kind != "drawer":
                    p = held.pose.position.copy()
                    held.pose = Pose(
                        np.array([p[0], p[1], 0.0]),
                        np.array([0.0, 0.0, held.pose.euler[2]]),
                    )
                st.gripper.holding = None
                self._grasp_tf = None
                self._lift_counter = 0
                self._lift_latched = False
                events.append("released")
        else:  # close
            if st.gripper.holding is None:
                candidate = None
                best_d = np.inf
                for obj in st.objects:
                    d = float(np.linalg.norm(st.gripper.tcp_pose.position - obj.grasp_point()))
                    if d <= obj.grasp_tolerance and st.gripper.width >= obj.width and d < best_d:
                        candidate = obj
                        best_d = d
                if candidate is not None:
                    candidate.held = True
                    st.gripper.holding = candidate.object_id
                    world_to_tcp = RigidTransform.from_pose(st.gripper.tcp_pose)
                    obj_to_world = RigidTransform(
                        euler_to_matrix(candidate.pose.euler), candidate.pose.position
                    )
                    self._grasp_tf = world_to_tcp.compose(obj_to_world)
                    events.append("grasped")
        self._gripper_command = action.gripper

        # width slews toward its setpoint
        if action.gripper == "open":
            target_w = cfg.w_max
        elif st.gripper.holding is not None:
            target_w = st.object_by_id(st.gripper.holding).width
        else:
            target_w = 0.0
        w = st.gripper.width
        if w < target_w:
            w = min(target_w, w + cfg.width_speed)
        else:
            w = max(target_w, w - cfg.width_speed)
        st.gripper.width = w

        # success events
        if st.gripper.holding is not None:
            held = st.object_by_id(st.gripper.holding)
            if held.kind == "pickable" and held.pose.position[2] >= cfg.h_lift:
                self._lift_counter += 1
            elif held.kind == "pickable":
                self._lift_counter = 0
            if self._lift_counter >= cfg.hold_ticks and not self._lift_latched:
                self._lift_latched = True
                events.append("lift_success")
        if (
            st.drawer is not None
            and st.drawer.displacement >= cfg.drawer_success_displacement
            and not self._drawer_latched
        ):
            self._drawer_latched = True
            events.append("drawer_success")

        st.step_count += 1
        return st, self.observe(want_images=want_images), events

    # -- rendering & observation ----------------------------------------------

    def _tcp_to_world(self) -> RigidTransform:
        pose = self.state.gripper.tcp_pose
        return RigidTransform(euler_to_matrix(pose.euler), pose.position)

    def _apply_drawer_pose(self, drawer_obj: SimObject) -> None:
        d = self.state.drawer
        drawer_obj.pose = Pose(d.axis * d.displacement, np.zeros(3))

    def _world_parts(self):
        parts = []
        for obj in self.state.objects:
            parts.extend(object_world_parts(obj))
        return parts

    def resolve_calib(self, camera: str) -> CameraCalib:
        calib = self.cfg.static_calib if camera == "static" else self.cfg.gripper_calib
        return calib_at_tcp(calib, self.state.gripper.tcp_pose)

    def render(self, camera: str):
        """(rgb uint8 HxWx3, depth float32 meters HxW) for 'static'|'gripper'."""
        calib = self.resolve_calib(camera)
        return render_scene(
            self._world_parts(), calib, self.cfg.table_half, far_depth=self.cfg.far_depth
        )

    def observe(self, want_images: bool = False) -> Observation:
        st = self.state
        obs = Observation(
            tcp_pose=st.gripper.tcp_pose.copy(),
            width=st.gripper.width,
            gripper_command=self._gripper_command,
        )
        if want_images:
            rgb, depth = self.render("gripper")
            obs.gripper_rgb = rgb
            obs.gripper_depth_mm = depth_to_mm(depth)
        return obs

    # convenience for labeling-oriented consumers
    def grasp_points(self) -> dict[str, np.ndarray]:
        return {obj.object_id: obj.grasp_point() for obj in self.state.objects}
