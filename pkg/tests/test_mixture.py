import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from affgrasp.affnet.model import AffordancePrediction
from affgrasp.geometry import Pose, project
from affgrasp.policy.mixture import (
    InvalidDepthError,
    MixtureConfig,
    NoTargetError,
    RewardConfig,
    alpha,
    pi_mod,
    reward,
    select_target,
)
from affgrasp.sim import EnvConfig, TabletopEnv

CFG = MixtureConfig()
RCFG = RewardConfig()


def prediction_with(centers):
    return AffordancePrediction(
        mask_prob=np.zeros((96, 96), dtype=np.float32),
        directions=np.tile(np.array([0.0, 1.0], dtype=np.float32), (96, 96, 1)),
        centers=centers,
    )


class TestSelectTarget:
    def test_single_center_backprojects_to_object(self):
        env = TabletopEnv(EnvConfig())
        env.reset(0, task="grasp", object_set=("puck",))
        obj = env.state.objects[0]
        _, depth = env.render("static")
        u, v, _ = project(obj.grasp_point(), env.cfg.static_calib)
        pred = prediction_with([(int(round(u)), int(round(v)), 50.0)])
        target = select_target(pred, depth.astype(float), env.cfg.static_calib)
        assert np.linalg.norm(target - obj.grasp_point()) <= 0.01

    def test_argmax_by_score(self):
        env = TabletopEnv(EnvConfig())
        env.reset(1, task="grasp", object_set=("puck", "cube"))
        _, depth = env.render("static")
        a = project(env.state.objects[0].grasp_point(), env.cfg.static_calib)
        b = project(env.state.objects[1].grasp_point(), env.cfg.static_calib)
        pred = prediction_with(
            [(int(round(a[0])), int(round(a[1])), 120.0), (int(round(b[0])), int(round(b[1])), 80.0)]
        )
        target = select_target(pred, depth.astype(float), env.cfg.static_calib)
        assert np.linalg.norm(target - env.state.objects[0].grasp_point()) <= 0.01

    def test_no_centers_errors(self):
        with pytest.raises(NoTargetError):
            select_target(prediction_with([]), np.ones((96, 96)), EnvConfig().static_calib)

    def test_invalid_depth_falls_back_to_neighbor(self):
        env_cfg = EnvConfig()
        depth = np.zeros((96, 96))
        depth[50, 52] = 0.6  # only valid pixel, 2 px away
        pred = prediction_with([(50, 50, 10.0)])
        target = select_target(pred, depth, env_cfg.static_calib)
        u, v, z = project(target, env_cfg.static_calib)
        assert (round(u), round(v)) == (52, 50)

    def test_invalid_depth_everywhere_errors(self):
        with pytest.raises(InvalidDepthError):
            select_target(prediction_with([(50, 50, 10.0)]), np.zeros((96, 96)), EnvConfig().static_calib)


class TestPiMod:
    def test_fixed_point_zero_translation(self):
        target = np.array([0.1, 0.0, 0.05])
        tcp = Pose(target + [0, 0, CFG.approach_offset], np.zeros(3))
        action = pi_mod(tcp, target, CFG, 0.02, 0.1)
        assert np.allclose(action.dpos, 0.0)
        assert action.gripper == "open"

    def test_far_target_norm_capped_along_line(self):
        tcp = Pose(np.array([1.0, 0.0, 0.05]), np.zeros(3))
        target = np.array([0.0, 0.0, 0.0])
        action = pi_mod(tcp, target, CFG, 0.02, 0.1)
        assert np.linalg.norm(action.dpos) == pytest.approx(0.02)
        direction = (target + [0, 0, CFG.approach_offset]) - tcp.position
        cos = action.dpos @ direction / (np.linalg.norm(action.dpos) * np.linalg.norm(direction))
        assert cos == pytest.approx(1.0)

    def test_convergence_from_100_seeded_scenes(self):
        env = TabletopEnv(EnvConfig())
        for seed in range(100):
            env.reset(seed, task="grasp")
            obj = env.state.objects[seed % len(env.state.objects)]
            target = obj.grasp_point()
            gate = 0
            for step in range(80):
                a = pi_mod(env.state.gripper.tcp_pose, target, CFG, env.cfg.max_dpos, env.cfg.max_deuler)
                env.step(a, want_images=False)
                gate = alpha(env.state.gripper.tcp_pose.position, target, CFG, gate)
                if gate:
                    break
            assert gate == 1, seed

    def test_orientation_steps_toward_top_down(self):
        tcp = Pose(np.array([0.0, 0.0, 0.3]), np.array([0.3, -0.2, 0.5]))
        action = pi_mod(tcp, np.zeros(3), CFG, 0.02, 0.1)
        assert np.all(np.abs(action.deuler) <= 0.1 + 1e-12)
        assert action.deuler[0] < 0 and action.deuler[1] > 0 and action.deuler[2] < 0


class TestAlpha:
    def test_at_target(self):
        assert alpha([0, 0, 0], [0, 0, 0], CFG, 0) == 1

    def test_far_away(self):
        assert alpha([2 * CFG.d_switch, 0, 0], [0, 0, 0], CFG, 0) == 0

    def test_hysteresis_holds_previous(self):
        mid = CFG.d_switch + CFG.hysteresis / 2
        assert alpha([mid, 0, 0], [0, 0, 0], CFG, 1) == 1
        assert alpha([mid, 0, 0], [0, 0, 0], CFG, 0) == 0

    def test_oscillation_never_chatters(self):
        rng = np.random.default_rng(0)
        gate = 1
        values = []
        for _ in range(200):
            d = rng.uniform(CFG.d_switch + 1e-9, CFG.d_switch + CFG.hysteresis - 1e-9)
            gate = alpha([d, 0, 0], [0, 0, 0], CFG, gate)
            values.append(gate)
        assert len(set(values)) == 1


class TestReward:
    def test_at_target(self):
        r, term = reward([0, 0, 0], [], [0, 0, 0], RCFG)
        assert r == 1.0 and not term

    def test_success_at_zero_distance(self):
        r, term = reward([0, 0, 0], ["lift_success"], [0, 0, 0], RCFG)
        assert r == 201.0 and term

    def test_exit_penalty(self):
        r, term = reward([1.1 * RCFG.d_max, 0, 0], [], [0, 0, 0], RCFG)
        assert r == -1.0 and term

    def test_boundary_exact_zero_aff(self):
        r, term = reward([RCFG.d_max, 0, 0], [], [0, 0, 0], RCFG)
        assert r == 0.0 and not term

    def test_drawer_success_counts(self):
        r, term = reward([0.05, 0, 0], ["drawer_success"], [0, 0, 0], RCFG)
        assert term and r > 200.0

    @given(
        d=st.floats(0, 0.5, allow_nan=False),
        success=st.booleans(),
    )
    @settings(max_examples=200, deadline=None)
    def test_reward_bounds_and_monotonicity(self, d, success):
        events = ["lift_success"] if success else []
        r, _ = reward([d, 0, 0], events, [0, 0, 0], RCFG)
        low = RCFG.lam3 * RCFG.r_out
        high = RCFG.lam1 * RCFG.r_succ + RCFG.lam2
        assert low <= r <= high
        # R_aff alone is non-increasing in distance
        r2, _ = reward([d + 0.01, 0, 0], [], [0, 0, 0], RewardConfig(terminate_on_exit=False, lam3=0.0))
        r1, _ = reward([d, 0, 0], [], [0, 0, 0], RewardConfig(terminate_on_exit=False, lam3=0.0))
        assert r2 <= r1 + 1e-12


def test_config_validation():
    with pytest.raises(ValueError):
        MixtureConfig(d_switch=0.3, d_max=0.2)
    with pytest.raises(ValueError):
        MixtureConfig(hysteresis=-0.01)
    with pytest.raises(ValueError):
        RewardConfig(d_max=0.0)
