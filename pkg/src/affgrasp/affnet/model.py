"""Pixelwise affordance predictor: encoder-decoder trunk, two heads.

The trunk is a small skip-connected encoder-decoder on grayscale input; one
1x1 head emits mask logits, the other a raw 2-channel direction field that
is unit-normalized at the output. Color must not matter, so every entry
point converts to luminance first.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass, field

import numpy as np
import torch
from torch import nn

from ..checkpoint import CheckpointError, load_checkpoint, save_checkpoint
from ..labeling import to_grayscale

DIR_EPS = 1e-8


@dataclass
class ModelConfig:
    height: int = 48
    width: int = 48
    base_channels: int = 8
    depth: int = 3  # encoder levels including the bottleneck
    w_ce: float = 1.0
    w_dice: float = 5.0
    w_dir: float = 2.5
    lambda_b: float = 1.0

    def __post_init__(self):
        for name in ("w_ce", "w_dice", "w_dir", "lambda_b"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be >= 0")
        factor = 2 ** (self.depth - 1)
        if self.height % factor or self.width % factor:
            raise ValueError(f"input size must be divisible by {factor}")


@dataclass
class AffordancePrediction:
    mask_prob: np.ndarray  # H x W float32 in [0, 1]
    directions: np.ndarray  # H x W x 2 float32, unit per pixel
    centers: list[tuple[int, int, float]] = field(default_factory=list)

    def validate(self) -> None:
        if self.mask_prob.min() < 0.0 or self.mask_prob.max() > 1.0:
            raise ValueError("mask probabilities outside [0, 1]")
        norms = np.linalg.norm(self.directions, axis=-1)
        if np.abs(norms - 1.0).max() > 1e-6:
            raise ValueError("direction field is not unit-norm everywhere")
        scores = [s for (_, _, s) in self.centers]
        if any(s < 0 for s in scores) or any(
            scores[i] < scores[i + 1] for i in range(len(scores) - 1)
        ):
            raise ValueError("center scores must be non-negative and sorted descending")


def _block(cin: int, cout: int) -> nn.Sequential:
    return nn.Sequential(
        nn.Conv2d(cin, cout, 3, padding=1),
        nn.ReLU(inplace=True),
        nn.Conv2d(cout, cout, 3, padding=1),
        nn.ReLU(inplace=True),
    )


class AffordanceNet(nn.Module):
    """Two-headed encoder-decoder; construct under a fixed torch seed for
    reproducible (uniform fan-in) initialization."""

    def __init__(self, cfg: ModelConfig):
        super().__init__()
        self.cfg = cfg
        c = cfg.base_channels
        widths = [c * (2**i) for i in range(cfg.depth)]
        self.enc = nn.ModuleList()
        cin = 1
        for w in widths:
            self.enc.append(_block(cin, w))
            cin = w
        self.pool = nn.MaxPool2d(2)
        self.up_convs = nn.ModuleList()
        self.dec = nn.ModuleList()
        for i in range(cfg.depth - 2, -1, -1):
            self.up_convs.append(nn.Conv2d(widths[i + 1], widths[i], 3, padding=1))
            self.dec.append(_block(widths[i] * 2, widths[i]))
        self.upsample = nn.Upsample(scale_factor=2, mode="nearest")
        self.mask_head = nn.Conv2d(widths[0], 1, 1)
        self.dir_head = nn.Conv2d(widths[0], 2, 1)
        # foreground is rare; start the mask head at ~5% prior odds so the
        # background term is near-converged from step one
        nn.init.constant_(self.mask_head.bias, -3.0)

    def forward(self, x: torch.Tensor) -> tuple[torch.Tensor, torch.Tensor]:
        """x: (B, 1, H, W) -> (mask logits (B, 1, H, W), raw dirs (B, 2, H, W))."""
        if x.shape[-2:] != (self.cfg.height, self.cfg.width):
            raise ValueError(
                f"input {tuple(x.shape[-2:])} != configured {(self.cfg.height, self.cfg.width)}"
            )
        skips = []
        h = x
        for i, block in enumerate(self.enc):
            h = block(h)
            if i < len(self.enc) - 1:
                skips.append(h)
                h = self.pool(h)
        for up, dec, skip in zip(self.up_convs, self.dec, reversed(skips)):
            h = up(self.upsample(h))
            h = dec(torch.cat([h, skip], dim=1))
        return self.mask_head(h), self.dir_head(h)


def normalize_directions(raw: torch.Tensor, eps: float = DIR_EPS) -> torch.Tensor:
    """Unit-normalize a (..., 2, H, W) field with an epsilon guard."""
    norm = torch.sqrt((raw * raw).sum(dim=-3, keepdim=True))
    return raw / norm.clamp_min(eps)


def predict(model: AffordanceNet, image: np.ndarray) -> AffordancePrediction:
    """Deterministic inference on one image (RGB or grayscale), no voting."""
    gray = to_grayscale(image)
    if gray.shape != (model.cfg.height, model.cfg.width):
        raise ValueError(f"image {gray.shape} != model input {(model.cfg.height, model.cfg.width)}")
    model.eval()
    with torch.no_grad():
        x = torch.from_numpy(gray).reshape(1, 1, *gray.shape)
        logits, raw = model(x)
        prob = torch.sigmoid(logits)[0, 0]
        dirs = normalize_directions(raw)[0].permute(1, 2, 0)
    return AffordancePrediction(
        mask_prob=prob.numpy().astype(np.float32),
        directions=dirs.numpy().astype(np.float32),
    )


def save_affordance_checkpoint(path, model: AffordanceNet) -> None:
    blocks = [(name, p.detach().numpy()) for name, p in model.state_dict().items()]
    save_checkpoint(path, "affordance", asdict(model.cfg), blocks)


def load_affordance_checkpoint(path) -> AffordanceNet:
    kind, config, blocks = load_checkpoint(path)
    if kind != "affordance":
        raise CheckpointError(f"{path}: checkpoint kind {kind!r}, expected 'affordance'")
    cfg = ModelConfig(**config)
    model = AffordanceNet(cfg)
    state = {name: torch.from_numpy(arr.copy()) for name, arr in blocks.items()}
    model.load_state_dict(state)
    model.eval()
    return model
