"""Scripted play: a seeded pick/place/pull controller that logs PlaySessions.

The controller loops over randomized interaction cycles (approach an object,
close, lift or pull, carry, release) and deliberately mixes in free-space
closes so downstream interaction detection has negatives to reject.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..playlog import PlayFrame, PlaySession, RGBDImage
from .env import Action, EnvConfig, TabletopEnv
from .render import depth_to_mm


@dataclass
class PlayParams:
    grasp_prob: float = 0.85  # cycles that target an object (rest close in free space)
    drawer_prob: float = 0.6  # fraction of object cycles aimed at the drawer handle
    approach_height: float = 0.07
    waypoint_noise: float = 0.008
    descend_noise: float = 0.004
    close_frames: int = 6
    carry_height: float = 0.16
    pull_range: tuple[float, float] = (0.04, 0.10)
    move_budget: int = 60  # per-leg step cap


def scripted_play(
    cfg: EnvConfig,
    params: PlayParams,
    seed: int,
    duration_s: float,
    task: str = "grasp",
    object_set=("puck", "cube", "pan"),
) -> PlaySession:
    session, _ = scripted_play_with_truth(cfg, params, seed, duration_s, task, object_set)
    return session


def scripted_play_with_truth(
    cfg: EnvConfig,
    params: PlayParams,
    seed: int,
    duration_s: float,
    task: str = "grasp",
    object_set=("puck", "cube", "pan"),
):
    """Like scripted_play but also returns the simulator's ground-truth events
    (attach/release frames) for recall measurements."""
    env = TabletopEnv(cfg)
    env.reset(seed, task=task, object_set=object_set)
    rng = np.random.default_rng(np.random.SeedSequence([seed, 0x9E37]).generate_state(4))
    n_frames = int(round(duration_s * cfg.tick_hz))
    frames: list[PlayFrame] = []
    truth = {"attach": [], "release": []}

    def tick(action: Action) -> list[str]:
        state, _obs, events = env.step(action, want_images=False)
        rgb_s, depth_s = env.render("static")
        rgb_g, depth_g = env.render("gripper")
        idx = len(frames)
        frames.append(
            PlayFrame(
                index=idx,
                timestamp=idx / cfg.tick_hz,
                tcp_pose=state.gripper.tcp_pose.copy(),
                gripper_width=state.gripper.width,
                gripper_command=action.gripper,
                images={
                    "static": RGBDImage(rgb_s, depth_to_mm(depth_s)),
                    "gripper": RGBDImage(rgb_g, depth_to_mm(depth_g)),
                },
            )
        )
        if "grasped" in events:
            truth["attach"].append((idx, state.gripper.holding))
        if "released" in events:
            truth["release"].append(idx)
        return events

    def done() -> bool:
        return len(frames) >= n_frames

    def move_to(point, tol, gripper, budget=None) -> None:
        budget = budget or params.move_budget
        for _ in range(budget):
            if done():
                return
            delta = np.asarray(point) - env.state.gripper.tcp_pose.position
            dist = float(np.linalg.norm(delta))
            if dist <= tol:
                return
            step = delta if dist <= cfg.max_dpos else delta * (cfg.max_dpos / dist)
            tick(Action(dpos=step, gripper=gripper))

    def hold(n, gripper) -> None:
        for _ in range(n):
            if done():
                return
            tick(Action(gripper=gripper))

    pickables = [o.object_id for o in env.state.objects if o.kind == "pickable"]
    handle_ids = [o.object_id for o in env.state.objects if o.kind == "drawer"]

    while not done():
        r = rng.random()
        target_id = None
        if r < params.grasp_prob:
            if handle_ids and (not pickables or rng.random() < params.drawer_prob):
                target_id = handle_ids[0]
            elif pickables:
                target_id = pickables[int(rng.integers(len(pickables)))]
        if target_id is None:
            # free-space close away from every graspable point
            for _ in range(50):
                p = np.array(
                    [
                        rng.uniform(-cfg.placement_half, cfg.placement_half),
                        rng.uniform(-cfg.placement_half, cfg.placement_half),
                        rng.uniform(0.06, 0.12),
                    ]
                )
                if all(
                    np.linalg.norm(p - o.grasp_point()) > 0.06 for o in env.state.objects
                ):
                    break
            move_to(p + [0, 0, params.approach_height], 0.01, "open")
            move_to(p, 0.005, "open")
            hold(params.close_frames, "close")
            hold(1, "open")
            move_to(env.state.gripper.tcp_pose.position + [0, 0, 0.06], 0.01, "open")
            continue

        obj = env.state.object_by_id(target_id)
        g = obj.grasp_point()
        noise = rng.normal(0.0, params.waypoint_noise, size=2)
        way = g + np.array([noise[0], noise[1], params.approach_height])
        move_to(way, 0.01, "open")
        gnoise = rng.normal(0.0, params.descend_noise, size=2)
        move_to(g + np.array([gnoise[0], gnoise[1], 0.0]), 0.004, "open")
        hold(params.close_frames, "close")

        if env.state.gripper.holding == target_id and obj.kind == "pickable":
            pos = env.state.gripper.tcp_pose.position
            move_to([pos[0], pos[1], params.carry_height], 0.01, "close")
            for _ in range(50):
                drop = np.array(
                    [
                        rng.uniform(-cfg.placement_half, cfg.placement_half),
                        rng.uniform(-cfg.placement_half, cfg.placement_half),
                    ]
                )
                others = [o for o in env.state.objects if o.object_id != target_id]
                if all(
                    np.hypot(*(drop - o.pose.position[:2])) > 0.09 for o in others
                ):
                    break
            move_to([drop[0], drop[1], params.carry_height], 0.01, "close")
            hold(2, "open")
            move_to(env.state.gripper.tcp_pose.position + [0, 0, 0.05], 0.01, "open")
        elif env.state.gripper.holding == target_id and obj.kind == "drawer":
            pull = rng.uniform(*params.pull_range)
            axis = env.state.drawer.axis
            goal = env.state.gripper.tcp_pose.position + axis * pull
            move_to(goal, 0.005, "close", budget=int(pull / cfg.max_dpos) + 8)
            hold(2, "open")
            move_to(env.state.gripper.tcp_pose.position + [0, 0, 0.06], 0.01, "open")
        else:
            # missed (noise pushed the descend point outside the tolerance)
            hold(1, "open")
            move_to(env.state.gripper.tcp_pose.position + [0, 0, 0.06], 0.01, "open")

    session = PlaySession(
        session_id=f"scripted-{task}-{seed:05d}",
        calibs={"static": cfg.static_calib, "gripper": cfg.gripper_calib},
        frames=frames,
        collector="scripted",
        environment_id=task,
        seed=seed,
    )
    return session, truth
