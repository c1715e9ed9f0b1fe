"""Episode orchestration: approach with the model-based controller, hand over
to the learned policy, collect transitions, update SAC, and log curves.

The baseline ("local-sac") runs the identical loop with the shaped reward
weight zeroed, the mask channel blank, and the distance scalar dropped, so
its transition stream cannot depend on the gripper affordance weights.
"""

from __future__ import annotations

import csv
import json
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from ..affnet.hough import VoteParams, hough_vote
from ..affnet.model import AffordanceNet, load_affordance_checkpoint, predict
from ..geometry import backproject
from ..sim.env import Action, EnvConfig, TabletopEnv
from ..sim.objects import SEEN_OBJECTS
from .mixture import (
    InvalidDepthError,
    MixtureConfig,
    NoTargetError,
    RewardConfig,
    alpha,
    pi_mod,
    reward,
    select_target,
)
from .sac import PackedObs, ReplayBuffer, SACAgent, SACConfig

MODES = ("vapo", "local-sac")


@dataclass
class RolloutConfig:
    mode: str = "vapo"
    task: str = "grasp"
    object_set: tuple[str, ...] = SEEN_OBJECTS
    total_steps: int = 10_000
    seed: int = 0
    episode_len: int = 100
    start_steps: int = 300
    update_after: int = 500
    update_every: int = 1
    eval_interval: int = 1_000
    eval_episodes: int = 20
    auto_lift: bool = True  # scripted lift-and-hold check after a close that grasps
    max_mod_steps: int = 80
    depth_norm: float = 0.8
    static_vote: VoteParams = field(
        default_factory=lambda: VoteParams(peak_threshold=10.0, nms_radius=6.0, max_centers=4)
    )
    gripper_vote: VoteParams = field(
        default_factory=lambda: VoteParams(peak_threshold=10.0, nms_radius=6.0, max_centers=2)
    )

    def __post_init__(self):
        if self.mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}")
        if self.task not in ("grasp", "drawer"):
            raise ValueError("task must be 'grasp' or 'drawer'")


def _as_model(model_or_path) -> AffordanceNet:
    if isinstance(model_or_path, AffordanceNet):
        return model_or_path
    return load_affordance_checkpoint(model_or_path)


def _proprio(env: TabletopEnv) -> np.ndarray:
    st = env.state.gripper
    half = max(env.cfg.workspace_high)
    return np.concatenate(
        [
            st.tcp_pose.position / half,
            st.tcp_pose.euler / np.pi,
            [st.width / env.cfg.w_max],
        ]
    ).astype(np.float32)


def build_obs(
    env: TabletopEnv,
    target: np.ndarray,
    gripper_model: AffordanceNet | None,
    cfg: RolloutConfig,
    reward_cfg: RewardConfig,
) -> PackedObs:
    """Gripper-view observation stack; vapo adds the mask channel and the
    normalized distance to the currently predicted center."""
    rgb, depth = env.render("gripper")
    depth_q = (np.clip(depth / cfg.depth_norm, 0.0, 1.0) * 255.0).astype(np.uint8)
    h, w = depth.shape
    tcp = env.state.gripper.tcp_pose.position
    if cfg.mode == "vapo":
        pred = predict(gripper_model, rgb)
        mask_q = (pred.mask_prob * 255.0).astype(np.uint8)
        centers = hough_vote(pred.mask_prob, pred.directions, cfg.gripper_vote)
        d = float(np.linalg.norm(tcp - target))
        if centers:
            u, v, _ = centers[0]
            d_img = float(depth[min(max(v, 0), h - 1), min(max(u, 0), w - 1)])
            if d_img > 0.0:
                world = backproject(float(u), float(v), d_img, env.resolve_calib("gripper"))
                d = float(np.linalg.norm(tcp - world))
        dist = np.float32(np.clip(d / reward_cfg.d_max, 0.0, 1.0))
        vec = np.concatenate([_proprio(env), [dist]]).astype(np.float32)
    else:
        mask_q = np.zeros((h, w), dtype=np.uint8)
        vec = _proprio(env)
    image = np.concatenate([rgb, depth_q[..., None], mask_q[..., None]], axis=-1)
    return PackedObs(image_u8=image, vec=vec)


def _auto_lift(env: TabletopEnv) -> list[str]:
    """Scripted lift-and-hold check after a grasp; mirrors the evaluation
    protocol where a close triggers a lift attempt."""
    events: list[str] = []
    cfg = env.cfg
    ascend = int((cfg.h_lift + 0.08) / cfg.max_dpos) + 2
    for _ in range(ascend):
        _, _, ev = env.step(Action(dpos=(0.0, 0.0, cfg.max_dpos), gripper="close"), want_images=False)
        events.extend(ev)
        if "lift_success" in ev:
            return events
    for _ in range(cfg.hold_ticks + 2):
        _, _, ev = env.step(Action(gripper="close"), want_images=False)
        events.extend(ev)
        if "lift_success" in ev:
            return events
    return events


@dataclass
class EpisodeResult:
    success: bool
    ep_return: float
    length: int
    steps_collected: int
    target: np.ndarray


class Rollout:
    """Owns one training run: env, agent, replay, rng streams, logs."""

    def __init__(
        self,
        env_cfg: EnvConfig,
        static_model,
        gripper_model,
        mixture_cfg: MixtureConfig,
        reward_cfg: RewardConfig,
        sac_cfg: SACConfig,
        cfg: RolloutConfig,
        build_replay: bool = True,
    ):
        self.env_cfg = env_cfg
        self.cfg = cfg
        self.mixture_cfg = mixture_cfg
        self.reward_cfg = RewardConfig(**{**asdict(reward_cfg)})
        if cfg.mode == "local-sac":
            self.reward_cfg.lam2 = 0.0
        self.static_model = _as_model(static_model)
        self.gripper_model = _as_model(gripper_model) if cfg.mode == "vapo" else None

        sac_cfg_run = SACConfig(**{**asdict(sac_cfg)})
        sac_cfg_run.include_distance = cfg.mode == "vapo"
        sac_cfg_run.image_hw = (env_cfg.gripper_calib.height, env_cfg.gripper_calib.width)
        sac_cfg_run.action_scale_pos = env_cfg.max_dpos
        sac_cfg_run.action_scale_euler = env_cfg.max_deuler
        sac_cfg_run.seed = cfg.seed
        self.agent = SACAgent(sac_cfg_run)
        self.replay = None
        if build_replay:
            self.replay = ReplayBuffer(
                sac_cfg_run.replay_capacity,
                (*sac_cfg_run.image_hw, sac_cfg_run.image_channels),
                sac_cfg_run.vec_dim,
                sac_cfg_run.action_dim,
            )

        self.env = TabletopEnv(env_cfg)
        self.eval_env = TabletopEnv(env_cfg)
        ss = np.random.SeedSequence(cfg.seed)
        scene_ss, action_ss, update_ss, fallback_ss, eval_ss = ss.spawn(5)
        self.scene_rng = np.random.default_rng(scene_ss)
        self.action_rng = np.random.default_rng(action_ss)
        self.update_rng = np.random.default_rng(update_ss)
        self.fallback_rng = np.random.default_rng(fallback_ss)
        self.eval_seed_base = int(np.random.default_rng(eval_ss).integers(0, 2**31 - 1))

        self.global_step = 0
        self.episode_idx = 0
        self.train_rows: list[dict] = []
        self.eval_rows: list[dict] = []

    # -- target selection ------------------------------------------------------

    def _select_target(self, env: TabletopEnv, fallback_rng: np.random.Generator) -> np.ndarray:
        rgb, depth = env.render("static")
        pred = predict(self.static_model, rgb)
        pred.centers = hough_vote(pred.mask_prob, pred.directions, self.cfg.static_vote)
        try:
            return select_target(pred, depth.astype(float), env.cfg.static_calib)
        except (NoTargetError, InvalidDepthError):
            half = env.cfg.placement_half
            return np.array(
                [
                    fallback_rng.uniform(-half, half),
                    fallback_rng.uniform(-half, half),
                    0.04,
                ]
            )

    # -- episodes ----------------------------------------------------------------

    def run_episode(
        self,
        env: TabletopEnv,
        scene_seed: int,
        collect: bool,
        deterministic: bool,
        fallback_rng: np.random.Generator,
    ) -> EpisodeResult:
        cfg = self.cfg
        env.reset(scene_seed, task=cfg.task, object_set=cfg.object_set)
        target = self._select_target(env, fallback_rng)

        gate = 0
        t = 0
        while gate == 0 and t < cfg.max_mod_steps:
            a = pi_mod(
                env.state.gripper.tcp_pose,
                target,
                self.mixture_cfg,
                env.cfg.max_dpos,
                env.cfg.max_deuler,
            )
            env.step(a, want_images=False)
            gate = alpha(env.state.gripper.tcp_pose.position, target, self.mixture_cfg, gate)
            t += 1
        if gate == 0:
            return EpisodeResult(False, 0.0, t, 0, target)

        obs = build_obs(env, target, self.gripper_model, cfg, self.reward_cfg)
        prev_gripper = "open"
        ep_return = 0.0
        success = False
        collected = 0
        while t < cfg.episode_len:
            if collect and self.global_step < cfg.start_steps:
                stored = SACAgent.random_action(self.action_rng, self.agent.cfg.action_dim)
                env_action = self.agent.to_env_action(stored, prev_gripper)
            else:
                env_action, stored = self.agent.act(obs, deterministic, prev_gripper)
            prev_gripper = env_action.gripper
            _, _, events = env.step(env_action, want_images=False)
            macro_events = list(events)
            if cfg.auto_lift and cfg.task == "grasp" and "grasped" in events:
                macro_events.extend(_auto_lift(env))
            r, term = reward(
                env.state.gripper.tcp_pose.position, macro_events, target, self.reward_cfg
            )
            ep_return += r
            if "lift_success" in macro_events or "drawer_success" in macro_events:
                success = True
            t += 1
            next_obs = (
                obs if term else build_obs(env, target, self.gripper_model, cfg, self.reward_cfg)
            )
            if collect:
                self.replay.add(obs, stored, r, term, next_obs)
                self.global_step += 1
                collected += 1
                if (
                    self.global_step >= cfg.update_after
                    and len(self.replay) >= self.agent.cfg.batch_size
                    and self.global_step % cfg.update_every == 0
                ):
                    self.agent.update(self.replay.sample(self.agent.cfg.batch_size, self.update_rng))
                if self.global_step >= cfg.total_steps:
                    term = True
            if term:
                break
            obs = next_obs
        return EpisodeResult(success, ep_return, t, collected, target)

    # -- evaluation ----------------------------------------------------------------

    def evaluate(self) -> dict:
        cfg = self.cfg
        succ, rets, lens = [], [], []
        for i in range(cfg.eval_episodes):
            fallback = np.random.default_rng(
                np.random.SeedSequence([self.eval_seed_base, i, 7]).generate_state(4)
            )
            res = self.run_episode(
                self.eval_env,
                scene_seed=self.eval_seed_base + i,
                collect=False,
                deterministic=True,
                fallback_rng=fallback,
            )
            succ.append(float(res.success))
            rets.append(res.ep_return)
            lens.append(res.length)
        return {
            "step": self.global_step,
            "success_rate": float(np.mean(succ)),
            "mean_return": float(np.mean(rets)),
            "mean_length": float(np.mean(lens)),
            "min_length": int(np.min(lens)),
            "max_length": int(np.max(lens)),
        }

    # -- training ----------------------------------------------------------------

    def train(self) -> None:
        cfg = self.cfg
        next_eval = cfg.eval_interval
        if cfg.total_steps == 0:
            return
        stalled = 0
        while self.global_step < cfg.total_steps:
            scene_seed = int(self.scene_rng.integers(0, 2**31 - 1))
            res = self.run_episode(
                self.env,
                scene_seed,
                collect=True,
                deterministic=False,
                fallback_rng=self.fallback_rng,
            )
            stalled = stalled + 1 if res.steps_collected == 0 else 0
            if stalled >= 50:
                raise RuntimeError(
                    "50 consecutive episodes produced no transitions; the approach "
                    "controller never reaches the gate (check targets/workspace)"
                )
            self.train_rows.append(
                {
                    "step": self.global_step,
                    "episode": self.episode_idx,
                    "success": int(res.success),
                    "return": res.ep_return,
                }
            )
            self.episode_idx += 1
            if cfg.eval_interval and self.global_step >= next_eval:
                self.eval_rows.append(self.evaluate())
                next_eval += cfg.eval_interval
        self.eval_rows.append(self.evaluate())


def _write_csv(path: Path, rows: list[dict]) -> None:
    with path.open("w", newline="") as fh:
        if not rows:
            fh.write("")
            return
        writer = csv.DictWriter(fh, fieldnames=list(rows[0].keys()))
        writer.writeheader()
        writer.writerows(rows)


def run_training(
    env_cfg: EnvConfig,
    afford_static,
    afford_gripper,
    mixture_cfg: MixtureConfig,
    reward_cfg: RewardConfig,
    sac_cfg: SACConfig,
    rollout_cfg: RolloutConfig,
    out_dir=None,
) -> dict:
    """Full training run; returns curves in memory and writes artifacts when
    ``out_dir`` is given (curve.csv, eval.csv, policy.ckpt, meta.json)."""
    rollout = Rollout(
        env_cfg, afford_static, afford_gripper, mixture_cfg, reward_cfg, sac_cfg, rollout_cfg
    )
    rollout.train()
    result = {
        "train_rows": rollout.train_rows,
        "eval_rows": rollout.eval_rows,
        "agent": rollout.agent,
    }
    if out_dir is not None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        _write_csv(out / "curve.csv", rollout.train_rows)
        _write_csv(out / "eval.csv", rollout.eval_rows)
        ckpt = out / "policy.ckpt"
        rollout.agent.save(ckpt)
        meta = {
            "mode": rollout_cfg.mode,
            "task": rollout_cfg.task,
            "object_set": list(rollout_cfg.object_set),
            "seed": rollout_cfg.seed,
            "total_steps": rollout_cfg.total_steps,
            "final_eval": rollout.eval_rows[-1] if rollout.eval_rows else None,
        }
        (out / "meta.json").write_text(json.dumps(meta, indent=2))
        result["out_dir"] = str(out)
        result["ckpt"] = str(ckpt)
    return result


def evaluate_policy(
    agent_or_ckpt,
    env_cfg: EnvConfig,
    afford_static,
    afford_gripper,
    mixture_cfg: MixtureConfig,
    reward_cfg: RewardConfig,
    rollout_cfg: RolloutConfig,
    episodes: int,
    seed: int,
) -> dict:
    """Deterministic evaluation without updates (zero-shot entry point)."""
    agent = agent_or_ckpt if isinstance(agent_or_ckpt, SACAgent) else SACAgent.load(agent_or_ckpt)
    if agent.cfg.include_distance != (rollout_cfg.mode == "vapo"):
        raise ValueError(
            f"policy checkpoint was trained for a different mode than {rollout_cfg.mode!r}"
        )
    rollout = Rollout(
        env_cfg,
        afford_static,
        afford_gripper,
        mixture_cfg,
        reward_cfg,
        agent.cfg,
        rollout_cfg,
        build_replay=False,
    )
    rollout.agent = agent
    succ, rets, lens = [], [], []
    base = int(np.random.default_rng(np.random.SeedSequence(seed)).integers(0, 2**31 - 1))
    for i in range(episodes):
        fallback = np.random.default_rng(np.random.SeedSequence([base, i, 7]).generate_state(4))
        res = rollout.run_episode(
            rollout.eval_env,
            scene_seed=base + i,
            collect=False,
            deterministic=True,
            fallback_rng=fallback,
        )
        succ.append(float(res.success))
        rets.append(res.ep_return)
        lens.append(res.length)
    return {
        "episodes": episodes,
        "success_rate": float(np.mean(succ)),
        "successes": int(np.sum(succ)),
        "mean_return": float(np.mean(rets)),
        "mean_length": float(np.mean(lens)),
    }
