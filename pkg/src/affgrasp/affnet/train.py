"""Seeded SGD training loop for the affordance model."""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np
import torch

from ..labeling import LabeledExample
from .losses import loss_ce, loss_dice, loss_dir
from .model import AffordanceNet, ModelConfig, save_affordance_checkpoint

log = logging.getLogger(__name__)


class TrainingDiverged(RuntimeError):
    """Loss became non-finite; message carries the step and components."""


@dataclass
class TrainConfig:
    # full-scale defaults; desk runs override with a much larger rate and
    # smaller batch (e.g. lr 1e-2, batch 8)
    learning_rate: float = 1e-5
    batch_size: int = 256
    steps: int = 1000
    seed: int = 0
    momentum: float = 0.9
    checkpoint_interval: int = 0  # 0 = only final
    checkpoint_path: str | None = None
    log_interval: int = 200


def examples_to_tensors(examples: list[LabeledExample]):
    images = np.stack([ex.image for ex in examples]).astype(np.float32)[:, None]
    masks = np.stack([ex.label.mask for ex in examples]).astype(np.float32)
    dirs = np.stack([ex.label.directions for ex in examples]).astype(np.float32)
    dirs = np.moveaxis(dirs, -1, 1)  # (N, 2, H, W)
    return (
        torch.from_numpy(images),
        torch.from_numpy(masks),
        torch.from_numpy(dirs),
    )


def train(
    examples: list[LabeledExample],
    model_cfg: ModelConfig,
    cfg: TrainConfig,
    model: AffordanceNet | None = None,
) -> tuple[AffordanceNet, list[dict]]:
    """Train (or continue training) on in-memory examples.

    Deterministic given the seed: the model is initialized under
    ``torch.manual_seed(cfg.seed)`` and batches are drawn from a dedicated
    numpy generator. Returns the model and the per-step loss curve.
    """
    if not examples:
        raise ValueError("training requires a non-empty dataset")
    if model is None:
        torch.manual_seed(cfg.seed)
        model = AffordanceNet(model_cfg)
    model.train()
    images, masks, dirs = examples_to_tensors(examples)
    n = images.shape[0]
    rng = np.random.default_rng(cfg.seed)
    opt = torch.optim.SGD(model.parameters(), lr=cfg.learning_rate, momentum=cfg.momentum)

    curve: list[dict] = []
    for step in range(cfg.steps):
        idx = torch.from_numpy(rng.integers(0, n, size=min(cfg.batch_size, n)))
        x = images[idx]
        y_mask = masks[idx]
        y_dir = dirs[idx]

        logits, raw_dirs = model(x)
        prob = torch.sigmoid(logits[:, 0])
        ce = loss_ce(prob, y_mask)
        dice = loss_dice(prob, y_mask)
        direction = loss_dir(raw_dirs, y_dir, y_mask, lambda_b=model_cfg.lambda_b)
        total = model_cfg.w_ce * ce + model_cfg.w_dice * dice + model_cfg.w_dir * direction

        if not torch.isfinite(total):
            raise TrainingDiverged(
                f"non-finite loss at step {step}: ce={float(ce)!r} dice={float(dice)!r} "
                f"dir={float(direction)!r} lr={cfg.learning_rate}"
            )
        opt.zero_grad()
        total.backward()
        opt.step()

        curve.append(
            {
                "step": step,
                "total": float(total.detach()),
                "ce": float(ce.detach()),
                "dice": float(dice.detach()),
                "dir": float(direction.detach()),
            }
        )
        if cfg.log_interval and step % cfg.log_interval == 0:
            log.info("step %d total %.4f (ce %.4f dice %.4f dir %.4f)", step, total, ce, dice, direction)
        if (
            cfg.checkpoint_interval
            and cfg.checkpoint_path
            and step > 0
            and step % cfg.checkpoint_interval == 0
        ):
            save_affordance_checkpoint(cfg.checkpoint_path, model)

    model.eval()
    if cfg.checkpoint_path:
        save_affordance_checkpoint(cfg.checkpoint_path, model)
    return model, curve
