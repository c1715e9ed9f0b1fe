import numpy as np
import pytest
import torch

from affgrasp.geometry import CameraCalib, Pose, RigidTransform
from affgrasp.playlog import PlayFrame, PlaySession, RGBDImage

torch.set_num_threads(2)


def top_down_calib(size, fx, cam_height, attached_to="world"):
    rot = np.array([[1.0, 0.0, 0.0], [0.0, -1.0, 0.0], [0.0, 0.0, -1.0]])
    t = -(rot @ np.array([0.0, 0.0, cam_height]))
    return CameraCalib(
        fx=fx, fy=fx, cx=size / 2, cy=size / 2, width=size, height=size,
        extrinsic=RigidTransform(rot, t), attached_to=attached_to,
    )


def blank_images(static_size=96, gripper_size=48):
    return {
        "static": RGBDImage(
            np.zeros((static_size, static_size, 3), np.uint8),
            np.zeros((static_size, static_size), np.uint16),
        ),
        "gripper": RGBDImage(
            np.zeros((gripper_size, gripper_size, 3), np.uint8),
            np.zeros((gripper_size, gripper_size), np.uint16),
        ),
    }


def make_trajectory_session(
    session_id,
    positions,
    commands,
    widths,
    static_size=96,
    gripper_size=48,
    rate=20.0,
):
    """Build an in-memory session from explicit per-frame signals."""
    frames = []
    for i, (pos, cmd, width) in enumerate(zip(positions, commands, widths)):
        frames.append(
            PlayFrame(
                index=i,
                timestamp=i / rate,
                tcp_pose=Pose(np.asarray(pos, dtype=float), np.zeros(3)),
                gripper_width=float(width),
                gripper_command=cmd,
                images=blank_images(static_size, gripper_size),
            )
        )
    return PlaySession(
        session_id=session_id,
        calibs={
            "static": top_down_calib(static_size, 110.0, 0.60),
            "gripper": top_down_calib(gripper_size, 45.0, 0.10, attached_to="tcp"),
        },
        frames=frames,
        collector="scripted",
        environment_id="synthetic",
        seed=0,
    )


def make_random_grasp_session(seed, n_frames=50, w_max=0.08, width_speed=0.02):
    """Random synthetic session with realistic grasp/free-close width signatures.

    Emulates the gripper signal directly (no simulator): closes either settle
    in the intermediate band (a real grasp) or collapse to zero (free-space).
    """
    rng = np.random.default_rng(seed)
    positions = []
    commands = []
    widths = []
    pos = np.array([rng.uniform(-0.15, 0.15), rng.uniform(-0.15, 0.15), rng.uniform(0.05, 0.2)])
    width = w_max
    cmd = "open"
    close_left = 0
    settle = 0.0
    i = 0
    while i < n_frames:
        if cmd == "open" and rng.random() < 0.15:
            cmd = "close"
            close_left = int(rng.integers(5, 12))
            settle = rng.choice([0.0, rng.uniform(0.025, 0.065)])
        elif cmd == "close" and close_left <= 0:
            cmd = "open"
        pos = pos + rng.normal(0.0, 0.01, size=3)
        pos = np.clip(pos, [-0.2, -0.2, 0.02], [0.2, 0.2, 0.3])
        target = w_max if cmd == "open" else settle
        width = (
            min(target, width + width_speed) if width < target else max(target, width - width_speed)
        )
        positions.append(pos.copy())
        commands.append(cmd)
        widths.append(width)
        close_left -= 1
        i += 1
    return make_trajectory_session(f"synthetic-{seed:04d}", positions, commands, widths)


@pytest.fixture
def tiny_session():
    positions = [[0.0, 0.0, 0.2], [0.01, 0.0, 0.19]]
    return make_trajectory_session("tiny", positions, ["open", "open"], [0.08, 0.08])
