import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from affgrasp.geometry import (
    BehindCameraError,
    Pose,
    backproject,
    calib_at_tcp,
    euler_to_matrix,
    matrix_to_euler,
    pixel_rays,
    project,
    round_half_up,
    wrap_angle,
)
from conftest import top_down_calib

angles = st.floats(-np.pi, np.pi, allow_nan=False)


def test_principal_point_projection():
    calib = top_down_calib(96, 110.0, 1.0)
    u, v, z = project(np.array([0.0, 0.0, 0.0]), calib)
    assert (u, v) == (calib.cx, calib.cy)
    assert z == pytest.approx(1.0)


def test_behind_camera_errors():
    calib = top_down_calib(96, 110.0, 0.6)
    with pytest.raises(BehindCameraError):
        project(np.array([0.0, 0.0, 0.7]), calib)  # above the camera
    with pytest.raises(BehindCameraError):
        project(np.array([0.0, 0.0, 0.6]), calib)  # exactly on the camera plane


def test_projection_roundtrip_1000_points():
    calib = top_down_calib(96, 110.0, 0.6)
    rng = np.random.default_rng(0)
    for _ in range(1000):
        p = np.array([rng.uniform(-0.2, 0.2), rng.uniform(-0.2, 0.2), rng.uniform(0.0, 0.5)])
        u, v, z = project(p, calib)
        back = backproject(u, v, z, calib)
        assert np.linalg.norm(back - p) <= 1e-6


@given(ex=angles, ey=st.floats(-1.4, 1.4), ez=angles)
@settings(max_examples=100, deadline=None)
def test_euler_matrix_roundtrip(ex, ey, ez):
    rot = euler_to_matrix((ex, ey, ez))
    assert np.allclose(rot @ rot.T, np.eye(3), atol=1e-12)
    assert np.linalg.det(rot) == pytest.approx(1.0)
    back = matrix_to_euler(rot)
    assert np.allclose(euler_to_matrix(back), rot, atol=1e-9)


def test_wrap_angle_range():
    xs = np.linspace(-10, 10, 401)
    w = wrap_angle(xs)
    assert np.all(w >= -np.pi) and np.all(w <= np.pi)
    assert np.allclose(np.cos(w), np.cos(xs), atol=1e-12)


def test_round_half_up():
    assert round_half_up(0.5) == 1
    assert round_half_up(1.5) == 2
    assert round_half_up(-0.5) == 0
    assert round_half_up(2.4) == 2


def test_tcp_mounted_calib_follows_pose():
    calib = top_down_calib(48, 45.0, 0.10, attached_to="tcp")
    tcp = Pose(np.array([0.1, -0.05, 0.2]), np.zeros(3))
    eff = calib_at_tcp(calib, tcp)
    # point directly below the TCP projects to the principal point
    u, v, z = project(np.array([0.1, -0.05, 0.05]), eff)
    assert (u, v) == (pytest.approx(eff.cx), pytest.approx(eff.cy))
    assert z == pytest.approx(0.2 + 0.10 - 0.05)


def test_pixel_rays_match_projection():
    calib = top_down_calib(96, 110.0, 0.6)
    origin, dirs = pixel_rays(calib)
    # walking 0.5m of depth along the (20, 30) pixel ray projects back to it
    p = origin + 0.5 * dirs[30, 20]
    u, v, z = project(p, calib)
    assert u == pytest.approx(20.0, abs=1e-9)
    assert v == pytest.approx(30.0, abs=1e-9)
    assert z == pytest.approx(0.5)
