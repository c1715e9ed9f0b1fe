"""Soft actor-critic for the local grasping policy.

Observations are a gripper-camera image stack (RGB, quantized depth, and the
predicted affordance mask channel), proprioception, and optionally the
normalized distance-to-center scalar. Actions are squashed-Gaussian deltas
plus a thresholded gripper head; the threshold carries a hold band so the
binary command only flips on a decisive head value.
"""

from __future__ import annotations

import tempfile
from dataclasses import asdict, dataclass, field

import numpy as np
import torch
from torch import nn

from ..checkpoint import CheckpointError, load_checkpoint, save_checkpoint
from ..sim.env import Action


@dataclass
class SACConfig:
    gamma: float = 0.99
    target_smoothing: float = 0.005
    init_temperature: float = 0.1
    target_entropy: float | None = None  # None -> -action_dim
    replay_capacity: int = 15_000
    batch_size: int = 64
    lr: float = 3e-4
    conv_channels: tuple[int, ...] = (8, 16, 16)
    conv_kernels: tuple[int, ...] = (8, 4, 3)
    conv_strides: tuple[int, ...] = (4, 2, 1)
    feature_dim: int = 16
    fc_width: int = 64
    n_fc: int = 4  # fully connected layers after the feature concat
    image_hw: tuple[int, int] = (48, 48)
    image_channels: int = 5
    proprio_dim: int = 7
    include_distance: bool = True
    action_dim: int = 7  # dpos(3) + deuler(3) + gripper head(1)
    action_scale_pos: float = 0.02
    action_scale_euler: float = 0.1
    gripper_band: float = 0.5  # |head| must exceed this to flip the gripper
    log_std_min: float = -5.0
    log_std_max: float = 2.0
    seed: int = 0

    def __post_init__(self):
        if not 0.0 < self.gamma < 1.0:
            raise ValueError("gamma must lie in (0, 1)")
        if self.replay_capacity < self.batch_size:
            raise ValueError("replay capacity must cover at least one batch")
        if self.init_temperature < 0.0:
            raise ValueError("temperature must be >= 0")

    @property
    def vec_dim(self) -> int:
        return self.proprio_dim + (1 if self.include_distance else 0)


@dataclass
class PackedObs:
    """Compact observation as stored in replay: quantized image + vector."""

    image_u8: np.ndarray  # (H, W, C) uint8
    vec: np.ndarray  # (proprio [+ distance]) float32


def _mlp(in_dim: int, width: int, n_layers: int, out_dim: int) -> nn.Sequential:
    layers: list[nn.Module] = []
    d = in_dim
    for _ in range(n_layers - 1):
        layers += [nn.Linear(d, width), nn.ReLU(inplace=True)]
        d = width
    layers.append(nn.Linear(d, out_dim))
    return nn.Sequential(*layers)


class ConvEncoder(nn.Module):
    def __init__(self, cfg: SACConfig):
        super().__init__()
        convs: list[nn.Module] = []
        cin = cfg.image_channels
        h, w = cfg.image_hw
        for cout, k, s in zip(cfg.conv_channels, cfg.conv_kernels, cfg.conv_strides):
            convs += [nn.Conv2d(cin, cout, k, stride=s), nn.ReLU(inplace=True)]
            h = (h - k) // s + 1
            w = (w - k) // s + 1
            cin = cout
        self.convs = nn.Sequential(*convs)
        self.fc = nn.Linear(cin * h * w, cfg.feature_dim)

    def forward(self, img: torch.Tensor) -> torch.Tensor:
        z = self.convs(img)
        return torch.relu(self.fc(z.flatten(1)))


class Actor(nn.Module):
    def __init__(self, cfg: SACConfig):
        super().__init__()
        self.encoder = ConvEncoder(cfg)
        self.trunk = _mlp(cfg.feature_dim + cfg.vec_dim, cfg.fc_width, cfg.n_fc, 2 * cfg.action_dim)
        self.cfg = cfg

    def forward(self, img, vec):
        z = torch.cat([self.encoder(img), vec], dim=1)
        mean, log_std = self.trunk(z).chunk(2, dim=1)
        log_std = log_std.clamp(self.cfg.log_std_min, self.cfg.log_std_max)
        return mean, log_std

    def sample(self, img, vec, generator: torch.Generator | None = None):
        """Reparameterized tanh-Gaussian sample with log-prob."""
        mean, log_std = self(img, vec)
        std = log_std.exp()
        noise = torch.randn(mean.shape, generator=generator, dtype=mean.dtype)
        u = mean + std * noise
        a = torch.tanh(u)
        logp = (-0.5 * ((u - mean) / std) ** 2 - log_std - 0.5 * np.log(2 * np.pi)).sum(-1)
        logp = logp - torch.log(1.0 - a * a + 1e-6).sum(-1)
        return a, logp


class Critic(nn.Module):
    """Twin Q-heads over a shared critic encoder (no weights shared with the actor)."""

    def __init__(self, cfg: SACConfig):
        super().__init__()
        self.encoder = ConvEncoder(cfg)
        in_dim = cfg.feature_dim + cfg.vec_dim + cfg.action_dim
        self.q1 = _mlp(in_dim, cfg.fc_width, cfg.n_fc, 1)
        self.q2 = _mlp(in_dim, cfg.fc_width, cfg.n_fc, 1)

    def forward(self, img, vec, action):
        z = torch.cat([self.encoder(img), vec, action], dim=1)
        return self.q1(z).squeeze(-1), self.q2(z).squeeze(-1)


class ReplayBuffer:
    """Fixed-capacity FIFO ring over compact (uint8 image, float vec) transitions."""

    def __init__(self, capacity: int, image_shape, vec_dim: int, action_dim: int):
        self.capacity = capacity
        self.img = np.zeros((capacity, *image_shape), dtype=np.uint8)
        self.vec = np.zeros((capacity, vec_dim), dtype=np.float32)
        self.action = np.zeros((capacity, action_dim), dtype=np.float32)
        self.reward = np.zeros(capacity, dtype=np.float32)
        self.done = np.zeros(capacity, dtype=np.float32)
        self.next_img = np.zeros_like(self.img)
        self.next_vec = np.zeros_like(self.vec)
        self._idx = 0
        self._full = False

    def __len__(self) -> int:
        return self.capacity if self._full else self._idx

    def add(self, obs: PackedObs, action, reward, done, next_obs: PackedObs) -> None:
        i = self._idx
        self.img[i] = obs.image_u8
        self.vec[i] = obs.vec
        self.action[i] = action
        self.reward[i] = reward
        self.done[i] = float(done)
        self.next_img[i] = next_obs.image_u8
        self.next_vec[i] = next_obs.vec
        self._idx = (i + 1) % self.capacity
        if self._idx == 0:
            self._full = True

    def sample(self, batch_size: int, rng: np.random.Generator) -> dict[str, torch.Tensor]:
        n = len(self)
        if n == 0:
            raise RuntimeError("replay buffer is empty")
        idx = rng.integers(0, n, size=batch_size)
        to_img = lambda a: torch.from_numpy(a[idx].astype(np.float32) / 255.0).permute(0, 3, 1, 2)
        return {
            "img": to_img(self.img),
            "vec": torch.from_numpy(self.vec[idx]),
            "action": torch.from_numpy(self.action[idx]),
            "reward": torch.from_numpy(self.reward[idx]),
            "done": torch.from_numpy(self.done[idx]),
            "next_img": to_img(self.next_img),
            "next_vec": torch.from_numpy(self.next_vec[idx]),
        }


class NonFiniteLossError(RuntimeError):
    pass


class SACAgent:
    def __init__(self, cfg: SACConfig):
        self.cfg = cfg
        torch.manual_seed(cfg.seed)
        self.actor = Actor(cfg)
        self.critic = Critic(cfg)
        self.critic_target = Critic(cfg)
        self.critic_target.load_state_dict(self.critic.state_dict())
        for p in self.critic_target.parameters():
            p.requires_grad_(False)
        self.log_alpha = torch.tensor(float(np.log(max(cfg.init_temperature, 1e-8))), requires_grad=True)
        self.target_entropy = (
            cfg.target_entropy if cfg.target_entropy is not None else -float(cfg.action_dim)
        )
        self.actor_opt = torch.optim.Adam(self.actor.parameters(), lr=cfg.lr)
        self.critic_opt = torch.optim.Adam(self.critic.parameters(), lr=cfg.lr)
        self.alpha_opt = torch.optim.Adam([self.log_alpha], lr=cfg.lr)
        self.sample_gen = torch.Generator().manual_seed(cfg.seed + 1)
        self.n_updates = 0

    @property
    def temperature(self) -> float:
        return float(self.log_alpha.exp())

    # -- acting ---------------------------------------------------------------

    def _obs_tensors(self, obs: PackedObs):
        img = torch.from_numpy(obs.image_u8.astype(np.float32) / 255.0).permute(2, 0, 1)[None]
        vec = torch.from_numpy(obs.vec)[None]
        return img, vec

    def act(self, obs: PackedObs, deterministic: bool, prev_gripper: str) -> tuple[Action, np.ndarray]:
        """Returns (env action, stored continuous action in [-1, 1]^7)."""
        with torch.no_grad():
            img, vec = self._obs_tensors(obs)
            if deterministic:
                mean, _ = self.actor(img, vec)
                a = torch.tanh(mean)[0].numpy()
            else:
                a, _ = self.actor.sample(img, vec, generator=self.sample_gen)
                a = a[0].numpy()
        return self.to_env_action(a, prev_gripper), a.astype(np.float32)

    def to_env_action(self, a: np.ndarray, prev_gripper: str) -> Action:
        cfg = self.cfg
        head = float(a[6])
        if head > cfg.gripper_band:
            gripper = "close"
        elif head < -cfg.gripper_band:
            gripper = "open"
        else:
            gripper = prev_gripper
        return Action(
            dpos=a[:3] * cfg.action_scale_pos,
            deuler=a[3:6] * cfg.action_scale_euler,
            gripper=gripper,
        )

    @staticmethod
    def random_action(rng: np.random.Generator, action_dim: int = 7) -> np.ndarray:
        return rng.uniform(-1.0, 1.0, size=action_dim).astype(np.float32)

    # -- learning ---------------------------------------------------------------

    def update(self, batch: dict[str, torch.Tensor]) -> dict[str, float]:
        cfg = self.cfg
        alpha = self.log_alpha.exp().detach()

        with torch.no_grad():
            next_a, next_logp = self.actor.sample(
                batch["next_img"], batch["next_vec"], generator=self.sample_gen
            )
            tq1, tq2 = self.critic_target(batch["next_img"], batch["next_vec"], next_a)
            soft_v = torch.min(tq1, tq2) - alpha * next_logp
            target = batch["reward"] + cfg.gamma * (1.0 - batch["done"]) * soft_v

        q1, q2 = self.critic(batch["img"], batch["vec"], batch["action"])
        critic_loss = ((q1 - target) ** 2).mean() + ((q2 - target) ** 2).mean()
        self.critic_opt.zero_grad()
        critic_loss.backward()
        self.critic_opt.step()

        a, logp = self.actor.sample(batch["img"], batch["vec"], generator=self.sample_gen)
        q1_pi, q2_pi = self.critic(batch["img"], batch["vec"], a)
        actor_loss = (alpha * logp - torch.min(q1_pi, q2_pi)).mean()
        self.actor_opt.zero_grad()
        actor_loss.backward()
        self.actor_opt.step()

        alpha_loss = (-self.log_alpha * (logp.detach() + self.target_entropy)).mean()
        self.alpha_opt.zero_grad()
        alpha_loss.backward()
        self.alpha_opt.step()

        with torch.no_grad():
            tau = cfg.target_smoothing
            for p, tp in zip(self.critic.parameters(), self.critic_target.parameters()):
                tp.mul_(1.0 - tau).add_(tau * p)

        losses = {
            "critic": float(critic_loss.detach()),
            "actor": float(actor_loss.detach()),
            "temperature": float(alpha_loss.detach()),
            "alpha": self.temperature,
        }
        if not all(np.isfinite(v) for v in losses.values()):
            dump = tempfile.NamedTemporaryFile(
                prefix="sac_bad_batch_", suffix=".npz", delete=False
            )
            np.savez(dump, **{k: v.numpy() for k, v in batch.items()})
            raise NonFiniteLossError(f"non-finite SAC losses {losses}; batch saved to {dump.name}")
        self.n_updates += 1
        return losses

    # -- persistence -------------------------------------------------------------

    def save(self, path) -> None:
        blocks = []
        for prefix, module in (
            ("actor", self.actor),
            ("critic", self.critic),
            ("critic_target", self.critic_target),
        ):
            for name, p in module.state_dict().items():
                blocks.append((f"{prefix}.{name}", p.detach().numpy()))
        blocks.append(("log_alpha", self.log_alpha.detach().numpy().reshape(1)))
        cfg_dict = asdict(self.cfg)
        for key in ("conv_channels", "conv_kernels", "conv_strides", "image_hw"):
            cfg_dict[key] = list(cfg_dict[key])
        save_checkpoint(path, "policy", cfg_dict, blocks)

    @classmethod
    def load(cls, path) -> "SACAgent":
        kind, config, blocks = load_checkpoint(path)
        if kind != "policy":
            raise CheckpointError(f"{path}: checkpoint kind {kind!r}, expected 'policy'")
        for key in ("conv_channels", "conv_kernels", "conv_strides", "image_hw"):
            config[key] = tuple(config[key])
        agent = cls(SACConfig(**config))
        for prefix, module in (
            ("actor", agent.actor),
            ("critic", agent.critic),
            ("critic_target", agent.critic_target),
        ):
            state = {
                name[len(prefix) + 1 :]: torch.from_numpy(arr.copy())
                for name, arr in blocks.items()
                if name.startswith(prefix + ".")
            }
            module.load_state_dict(state)
        with torch.no_grad():
            agent.log_alpha.copy_(torch.from_numpy(blocks["log_alpha"].copy())[0])
        return agent
