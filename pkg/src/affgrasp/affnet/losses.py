"""Segmentation and direction-field losses.

All functions take torch tensors (float32 or float64), accept a single
instance or a leading batch dimension, and reduce per sample before
averaging over the batch, so the values for one instance match the batched
values exactly.
"""

from __future__ import annotations

import torch

from .model import normalize_directions

CE_EPS = 1e-7
DICE_SMOOTH = 1.0


def _flatten_batch(t: torch.Tensor, event_dims: int) -> torch.Tensor:
    """Collapse every leading dim, keeping the trailing ``event_dims`` dims."""
    if t.dim() == event_dims:
        t = t.unsqueeze(0)
    return t.reshape(-1, *t.shape[t.dim() - event_dims :])


def loss_ce(mask_prob: torch.Tensor, label_mask: torch.Tensor) -> torch.Tensor:
    """Mean binary cross-entropy over pixels, probabilities eps-clamped."""
    p = _flatten_batch(mask_prob, 2).clamp(CE_EPS, 1.0 - CE_EPS)
    y = _flatten_batch(label_mask, 2).to(p.dtype)
    per_sample = -(y * p.log() + (1.0 - y) * (1.0 - p).log()).mean(dim=(1, 2))
    return per_sample.mean()


def loss_dice(mask_prob: torch.Tensor, label_mask: torch.Tensor) -> torch.Tensor:
    """Soft dice loss with +1 smoothing; 0 on exact binary match, < 1 always."""
    p = _flatten_batch(mask_prob, 2)
    y = _flatten_batch(label_mask, 2).to(p.dtype)
    inter = (p * y).sum(dim=(1, 2))
    total = p.sum(dim=(1, 2)) + y.sum(dim=(1, 2))
    per_sample = 1.0 - (2.0 * inter + DICE_SMOOTH) / (total + DICE_SMOOTH)
    return per_sample.mean()


def loss_dir(
    raw_directions: torch.Tensor,
    label_directions: torch.Tensor,
    label_mask: torch.Tensor,
    lambda_b: float = 1.0,
) -> torch.Tensor:
    """Weighted cosine-similarity loss on the unit-normalized direction field.

    Foreground pixels are weighted 1/|O| so the term is a mean over the
    afforded region; background pixels are compared against their fixed label
    direction with weight lambda_b/|B|. Empty foreground contributes 0.
    """
    raw = _flatten_batch(raw_directions, 3)  # (B, 2, H, W)
    lab = _flatten_batch(label_directions, 3).to(raw.dtype)
    mask = _flatten_batch(label_mask, 2).to(torch.bool)
    v = normalize_directions(raw)
    cos = (v * lab).sum(dim=1)  # (B, H, W)
    mismatch = 1.0 - cos
    fg = mask.to(raw.dtype)
    bg = 1.0 - fg
    n_fg = fg.sum(dim=(1, 2))
    n_bg = bg.sum(dim=(1, 2))
    fg_term = (mismatch * fg).sum(dim=(1, 2)) / n_fg.clamp_min(1.0)
    bg_term = lambda_b * (mismatch * bg).sum(dim=(1, 2)) / n_bg.clamp_min(1.0)
    return (fg_term + bg_term).mean()


def total_loss(
    mask_prob: torch.Tensor,
    raw_directions: torch.Tensor,
    label_mask: torch.Tensor,
    label_directions: torch.Tensor,
    w_ce: float = 1.0,
    w_dice: float = 5.0,
    w_dir: float = 2.5,
    lambda_b: float = 1.0,
) -> tuple[torch.Tensor, dict[str, float]]:
    """Weighted sum of the three components; returns (total, components)."""
    ce = loss_ce(mask_prob, label_mask)
    dice = loss_dice(mask_prob, label_mask)
    direction = loss_dir(raw_directions, label_directions, label_mask, lambda_b=lambda_b)
    total = w_ce * ce + w_dice * dice + w_dir * direction
    return total, {"ce": float(ce), "dice": float(dice), "dir": float(direction)}
