"""Command-line entry points for the labeling/training/eval pipeline."""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np
from PIL import Image

from .affnet.hough import VoteParams, hough_vote
from .affnet.model import ModelConfig, load_affordance_checkpoint, predict
from .affnet.train import TrainConfig, train
from .evalharness import compare, export, load_records_csv, load_spec, run_experiment
from .labeling import LabelConfig, SplitSpec, build_dataset, detect_interactions, export_examples, render_label
from .playlog import read_session
from .policy.mixture import MixtureConfig, RewardConfig
from .policy.rollout import RolloutConfig, run_training
from .policy.sac import SACConfig
from .sim.env import EnvConfig
from .sim.objects import SEEN_OBJECTS, UNSEEN_OBJECTS
from .sim.scripted import PlayParams, scripted_play
from .sim.teleop import TeleopServer


def _cmd_label(args) -> int:
    session = read_session(args.session)
    cfg = LabelConfig(
        radius_static=args.radius if args.camera == "static" else LabelConfig.radius_static,
        radius_gripper=args.radius if args.camera == "gripper" else LabelConfig.radius_gripper,
        n_past=args.n_past,
        dt_debounce=args.debounce,
    )
    events = detect_interactions(session, cfg)
    from .labeling import AffordanceLabel, LabeledExample, to_grayscale

    examples = []
    for frame in session.frames:
        label = render_label(session, frame.index, args.camera, events, cfg)
        if not label.mask.any() and not args.keep_background:
            continue
        examples.append(
            LabeledExample(
                image=to_grayscale(frame.images[args.camera].rgb),
                label=label,
                session_id=session.session_id,
                frame_index=frame.index,
                camera=args.camera,
            )
        )
    export_examples(examples, args.out)
    print(f"wrote {len(examples)} labeled examples to {args.out}")
    return 0


def _load_sessions(root: Path):
    dirs = sorted(p.parent for p in Path(root).glob("*/manifest.json"))
    if not dirs:
        raise SystemExit(f"no session directories under {root}")
    return [read_session(d) for d in dirs]


def _cmd_train_affordance(args) -> int:
    sessions = _load_sessions(Path(args.data))
    calib = sessions[0].calibs[args.camera]
    label_cfg = LabelConfig(radius_static=args.radius_static, radius_gripper=args.radius_gripper)
    ds = build_dataset(
        sessions,
        label_cfg,
        args.camera,
        SplitSpec(val_fraction=args.val_fraction, negatives_fraction=args.negatives, seed=args.seed),
    )
    model_cfg = ModelConfig(height=calib.height, width=calib.width)
    train_cfg = TrainConfig(
        learning_rate=args.lr,
        batch_size=args.batch,
        steps=args.steps,
        seed=args.seed,
        checkpoint_path=args.out,
    )
    _model, curve = train(ds.train, model_cfg, train_cfg)
    print(
        f"trained on {len(ds.train)} examples ({len(ds.val)} held out); "
        f"loss {curve[0]['total']:.4f} -> {curve[-1]['total']:.4f}; saved {args.out}"
    )
    return 0


def _cmd_infer(args) -> int:
    model = load_affordance_checkpoint(args.ckpt)
    image = np.asarray(Image.open(args.image))
    pred = predict(model, image)
    params = VoteParams(tau=args.tau, peak_threshold=args.vote_threshold, max_centers=args.max_centers)
    pred.centers = hough_vote(pred.mask_prob, pred.directions, params)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    Image.fromarray(((pred.mask_prob >= args.tau) * 255).astype(np.uint8), mode="L").save(
        out / "mask.png"
    )
    dirs = np.ascontiguousarray(pred.directions, dtype="<f4")
    (out / "dirs.bin").write_bytes(dirs.tobytes())
    (out / "dirs.json").write_text(
        json.dumps(
            {
                "height": dirs.shape[0],
                "width": dirs.shape[1],
                "channels": 2,
                "dtype": "<f4",
                "order": "row-major",
            }
        )
    )
    (out / "centers.json").write_text(
        json.dumps([{"u": u, "v": v, "score": s} for (u, v, s) in pred.centers])
    )
    print(f"wrote mask.png, dirs.bin, centers.json to {out} ({len(pred.centers)} centers)")
    return 0


def _cmd_train_policy(args) -> int:
    rollout = RolloutConfig(
        mode=args.mode,
        task=args.env,
        object_set=tuple(args.objects.split(",")) if args.objects else (
            SEEN_OBJECTS if args.split == "seen" else UNSEEN_OBJECTS
        ),
        total_steps=args.steps,
        seed=args.seed,
        eval_interval=args.eval_interval,
        eval_episodes=args.eval_episodes,
    )
    result = run_training(
        EnvConfig(),
        args.afford_static,
        args.afford_gripper,
        MixtureConfig(d_max=args.d_max),
        RewardConfig(d_max=args.d_max),
        SACConfig(),
        rollout,
        out_dir=args.out,
    )
    final = result["eval_rows"][-1] if result["eval_rows"] else {}
    print(f"run complete: {args.out} final eval {final}")
    return 0


def _cmd_eval(args) -> int:
    if args.eval_cmd == "run":
        spec = load_spec(args.spec)
        records = run_experiment(spec)
        print(f"{len(records)} metric records written under {spec.out_dir}")
    elif args.eval_cmd == "compare":
        records = []
        for run in args.runs:
            records.extend(load_records_csv(Path(run) / "records.csv"))
        print(json.dumps(compare(records, threshold=args.threshold), indent=2))
    elif args.eval_cmd == "export":
        records = load_records_csv(Path(args.run) / "records.csv")
        path = export(records, Path(args.run) / f"records.{args.format}", args.format)
        print(f"wrote {path}")
    return 0


def _cmd_serve_teleop(args) -> int:
    server = TeleopServer(
        EnvConfig(), host=args.host, port=args.port, task=args.task
    ).start()
    host, port = server.address
    print(f"teleop server listening on {host}:{port} (ctrl-c to stop)")
    try:
        import time

        while True:
            time.sleep(1.0)
    except KeyboardInterrupt:
        server.stop()
    return 0


def _cmd_collect_play(args) -> int:
    from .playlog import write_session

    out = Path(args.out)
    for i in range(args.sessions):
        seed = args.seed + i
        session = scripted_play(
            EnvConfig(),
            PlayParams(),
            seed=seed,
            duration_s=args.seconds,
            task=args.task,
            object_set=tuple(args.objects.split(",")) if args.objects else SEEN_OBJECTS,
        )
        path = out / session.session_id
        write_session(session, path)
        print(f"wrote {path} ({len(session.frames)} frames)")
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="affgrasp")
    sub = p.add_subparsers(dest="cmd", required=True)

    lp = sub.add_parser("label", help="export affordance labels for one session")
    lp.add_argument("--session", required=True)
    lp.add_argument("--camera", choices=("static", "gripper"), required=True)
    lp.add_argument("--out", required=True)
    lp.add_argument("--radius", type=int, default=10)
    lp.add_argument("--n-past", type=int, default=5)
    lp.add_argument("--debounce", type=int, default=3)
    lp.add_argument("--keep-background", action="store_true")
    lp.set_defaults(fn=_cmd_label)

    tp = sub.add_parser("train-affordance", help="train an affordance model on session dirs")
    tp.add_argument("--data", required=True, help="directory containing session subdirectories")
    tp.add_argument("--camera", choices=("static", "gripper"), required=True)
    tp.add_argument("--out", required=True)
    tp.add_argument("--lr", type=float, default=1e-2)
    tp.add_argument("--batch", type=int, default=16)
    tp.add_argument("--steps", type=int, default=3000)
    tp.add_argument("--seed", type=int, default=0)
    tp.add_argument("--radius-static", type=int, default=5)
    tp.add_argument("--radius-gripper", type=int, default=12)
    tp.add_argument("--val-fraction", type=float, default=0.2)
    tp.add_argument("--negatives", type=float, default=0.05)
    tp.set_defaults(fn=_cmd_train_affordance)

    ip = sub.add_parser("infer", help="run a checkpoint on one image")
    ip.add_argument("--ckpt", required=True)
    ip.add_argument("--image", required=True)
    ip.add_argument("--out", required=True)
    ip.add_argument("--tau", type=float, default=0.5)
    ip.add_argument("--vote-threshold", type=float, default=10.0)
    ip.add_argument("--max-centers", type=int, default=4)
    ip.set_defaults(fn=_cmd_infer)

    pp = sub.add_parser("train-policy", help="train the mixture policy")
    pp.add_argument("--env", choices=("grasp", "drawer"), required=True)
    pp.add_argument("--afford-static", required=True)
    pp.add_argument("--afford-gripper", required=True)
    pp.add_argument("--mode", choices=("vapo", "local-sac"), required=True)
    pp.add_argument("--steps", type=int, required=True)
    pp.add_argument("--seed", type=int, default=0)
    pp.add_argument("--out", required=True)
    pp.add_argument("--split", choices=("seen", "unseen"), default="seen")
    pp.add_argument("--objects", default="")
    pp.add_argument("--eval-interval", type=int, default=1000)
    pp.add_argument("--eval-episodes", type=int, default=20)
    pp.add_argument("--d-max", type=float, default=0.15)
    pp.set_defaults(fn=_cmd_train_policy)

    ep = sub.add_parser("eval", help="experiment orchestration")
    esub = ep.add_subparsers(dest="eval_cmd", required=True)
    er = esub.add_parser("run")
    er.add_argument("--spec", required=True)
    ec = esub.add_parser("compare")
    ec.add_argument("--runs", nargs="+", required=True)
    ec.add_argument("--threshold", type=float, default=0.6)
    ee = esub.add_parser("export")
    ee.add_argument("--run", required=True)
    ee.add_argument("--format", choices=("csv", "json"), default="csv")
    ep.set_defaults(fn=_cmd_eval)

    sp = sub.add_parser("serve-teleop", help="run the interactive teleop server")
    sp.add_argument("--host", default="127.0.0.1")
    sp.add_argument("--port", type=int, default=7771)
    sp.add_argument("--task", choices=("grasp", "drawer"), default="grasp")
    sp.set_defaults(fn=_cmd_serve_teleop)

    cp = sub.add_parser("collect-play", help="generate scripted play sessions")
    cp.add_argument("--out", required=True)
    cp.add_argument("--seconds", type=float, default=30.0)
    cp.add_argument("--seed", type=int, default=0)
    cp.add_argument("--sessions", type=int, default=1)
    cp.add_argument("--task", choices=("grasp", "drawer"), default="grasp")
    cp.add_argument("--objects", default="")
    cp.set_defaults(fn=_cmd_collect_play)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return args.fn(args)


if __name__ == "__main__":
    sys.exit(main())
