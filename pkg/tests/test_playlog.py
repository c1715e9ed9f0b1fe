import json

import numpy as np
import pytest

from affgrasp.playlog import (
    SessionFormatError,
    SessionValidationError,
    read_session,
    validate_session,
    write_session,
)
from conftest import make_random_grasp_session, make_trajectory_session


def test_roundtrip_bit_identical(tmp_path, tiny_session):
    # put recognizable content in the images so equality is meaningful
    rng = np.random.default_rng(1)
    for frame in tiny_session.frames:
        for img in frame.images.values():
            img.rgb[:] = rng.integers(0, 256, img.rgb.shape)
            img.depth_mm[:] = rng.integers(0, 3000, img.depth_mm.shape)
    write_session(tiny_session, tmp_path / "s")
    back = read_session(tmp_path / "s")
    assert back == tiny_session


def test_roundtrip_random_sessions(tmp_path):
    for seed in range(3):
        session = make_random_grasp_session(seed, n_frames=12)
        write_session(session, tmp_path / f"s{seed}")
        assert read_session(tmp_path / f"s{seed}") == session


def test_decreasing_timestamps_rejected(tmp_path, tiny_session):
    tiny_session.frames[1].timestamp = tiny_session.frames[0].timestamp - 0.01
    violations = validate_session(tiny_session)
    assert any("frame 1" in v and "timestamp" in v for v in violations)
    with pytest.raises(SessionValidationError, match="frame 1"):
        write_session(tiny_session, tmp_path / "bad")


def test_file_counts(tmp_path):
    session = make_random_grasp_session(0, n_frames=20)
    write_session(session, tmp_path / "s")
    assert (tmp_path / "s" / "manifest.json").exists()
    frame_lines = (tmp_path / "s" / "frames.jsonl").read_text().splitlines()
    assert len(frame_lines) == 20
    # 2 cameras x (rgb + depth) per frame
    assert len(list((tmp_path / "s" / "images").glob("*.png"))) == 20 * 4


def test_missing_image_named(tmp_path, tiny_session):
    write_session(tiny_session, tmp_path / "s")
    victim = next((tmp_path / "s" / "images").glob("gripper_*_rgb.png"))
    victim.unlink()
    with pytest.raises(SessionFormatError, match=victim.name):
        read_session(tmp_path / "s")


def test_unknown_schema_version_rejected(tmp_path, tiny_session):
    write_session(tiny_session, tmp_path / "s")
    manifest = json.loads((tmp_path / "s" / "manifest.json").read_text())
    manifest["schema_version"] = 99
    (tmp_path / "s" / "manifest.json").write_text(json.dumps(manifest))
    with pytest.raises(SessionFormatError, match="99"):
        read_session(tmp_path / "s")


def test_missing_manifest(tmp_path):
    with pytest.raises(SessionFormatError, match="manifest"):
        read_session(tmp_path / "nothing")


class TestValidationCompleteness:
    """One check per declared invariant."""

    def test_wellformed_is_clean(self, tiny_session):
        assert validate_session(tiny_session) == []

    def test_reflection_rotation(self, tiny_session):
        tiny_session.calibs["static"].extrinsic.rotation[:, 0] *= -1  # det -1
        assert any("determinant" in v for v in validate_session(tiny_session))

    def test_non_orthonormal_rotation(self, tiny_session):
        tiny_session.calibs["static"].extrinsic.rotation[0, 0] = 2.0
        assert any("orthonormal" in v for v in validate_session(tiny_session))

    def test_negative_gripper_width(self, tiny_session):
        tiny_session.frames[1].gripper_width = -0.01
        violations = validate_session(tiny_session)
        assert any("frame 1" in v and "gripper_width" in v for v in violations)

    def test_negative_focal(self, tiny_session):
        tiny_session.calibs["gripper"].fx = -1.0
        assert any("focal" in v for v in validate_session(tiny_session))

    def test_principal_point_outside(self, tiny_session):
        tiny_session.calibs["static"].cx = 1000.0
        assert any("cx" in v for v in validate_session(tiny_session))

    def test_euler_out_of_range(self, tiny_session):
        tiny_session.frames[0].tcp_pose.euler[2] = 4.0
        assert any("euler" in v for v in validate_session(tiny_session))

    def test_nonfinite_position(self, tiny_session):
        tiny_session.frames[0].tcp_pose.position[0] = np.nan
        assert any("non-finite" in v for v in validate_session(tiny_session))

    def test_bad_gripper_command(self, tiny_session):
        tiny_session.frames[0].gripper_command = "half"
        assert any("gripper_command" in v for v in validate_session(tiny_session))

    def test_too_few_frames(self, tiny_session):
        tiny_session.frames = tiny_session.frames[:1]
        assert any(">= 2 frames" in v for v in validate_session(tiny_session))

    def test_wrong_cameras(self, tiny_session):
        tiny_session.calibs["wrist"] = tiny_session.calibs.pop("gripper")
        assert any("cameras" in v for v in validate_session(tiny_session))

    def test_image_shape_mismatch(self, tiny_session):
        img = tiny_session.frames[0].images["static"]
        img.rgb = np.zeros((10, 10, 3), np.uint8)
        assert any("rgb shape" in v for v in validate_session(tiny_session))

    def test_bad_collector(self, tiny_session):
        tiny_session.collector = "martian"
        assert any("collector" in v for v in validate_session(tiny_session))
