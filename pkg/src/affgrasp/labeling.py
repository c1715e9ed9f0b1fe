"""Self-supervised affordance labels from play sessions.

Gripper open/close transitions are the supervision signal: a close that
holds an object (gripper width parked in an intermediate band for a debounce
interval) starts an interaction, the matching open ends it. Interaction
points are projected into each camera and stamped as binary discs with a
per-pixel unit direction field pointing at the nearest disc center.
"""

from __future__ import annotations

import hashlib
import json
import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from PIL import Image

from .geometry import CameraCalib, calib_at_tcp, project, round_half_up
from .playlog import GRIPPER_CLOSE, GRIPPER_OPEN, PlaySession

log = logging.getLogger(__name__)

GRASP_START = "grasp_start"
RELEASE = "release"


@dataclass
class InteractionEvent:
    kind: str  # "grasp_start" | "release"
    frame_index: int
    world_point: np.ndarray

    def __post_init__(self):
        self.world_point = np.asarray(self.world_point, dtype=float).reshape(3)


@dataclass
class LabelConfig:
    """Knobs for interaction detection and label rendering.

    Radii follow the source material's camera-specific values; pass scaled
    radii when working at reduced desk-scale resolutions.
    """

    radius_static: int = 10
    radius_gripper: int = 25
    n_past: int = 5  # frames labeled before a grasp
    dt_debounce: int = 3  # frames the width must sit in the band
    width_band: tuple[float, float] = (0.02, 0.072)  # (w_low, w_high) meters
    background_direction: tuple[float, float] = (0.0, 1.0)
    gripper_live_only: bool = False  # restrict gripper labels to the live grasp

    def __post_init__(self):
        if self.radius_static < 1 or self.radius_gripper < 1:
            raise ValueError("radii must be >= 1 pixel")
        if self.n_past < 0:
            raise ValueError("n_past must be >= 0")
        if self.dt_debounce < 1:
            raise ValueError("dt_debounce must be >= 1")
        w_low, w_high = self.width_band
        if not w_low < w_high:
            raise ValueError("width band must satisfy w_low < w_high")
        norm = float(np.hypot(*self.background_direction))
        if abs(norm - 1.0) > 1e-9:
            raise ValueError("background_direction must be unit length")

    def radius_for(self, camera: str) -> int:
        return self.radius_static if camera == "static" else self.radius_gripper


@dataclass
class LabelCenter:
    u: int
    v: int
    world_point: np.ndarray

    def __post_init__(self):
        self.world_point = np.asarray(self.world_point, dtype=float).reshape(3)


@dataclass
class AffordanceLabel:
    mask: np.ndarray  # H x W bool
    directions: np.ndarray  # H x W x 2 float32, unit vectors (du, dv)
    centers: list[LabelCenter]


def detect_interactions(session: PlaySession, cfg: LabelConfig) -> list[InteractionEvent]:
    """Gripper-transition heuristic with the width-band debounce filter.

    A grasp starts at an open->close command transition and is kept only if
    the width then sits strictly inside ``cfg.width_band`` for at least
    ``cfg.dt_debounce`` consecutive frames before the gripper reopens
    (something is between the fingers). The matching close->open transition
    emits a release at the TCP position of that frame. Free-space closes,
    where the width falls straight through the band, emit nothing.
    """
    frames = session.frames
    events: list[InteractionEvent] = []
    w_low, w_high = cfg.width_band
    i = 1
    n = len(frames)
    while i < n:
        prev_cmd = frames[i - 1].gripper_command
        cmd = frames[i].gripper_command
        if prev_cmd == GRIPPER_OPEN and cmd == GRIPPER_CLOSE:
            close_idx = i
            j = i + 1
            while j < n and frames[j].gripper_command == GRIPPER_CLOSE:
                j += 1
            open_idx = j if j < n else None  # frame where command is open again
            run = best = 0
            end = j  # widths while the command stays "close", after the transition
            for k in range(close_idx + 1, end):
                if w_low < frames[k].gripper_width < w_high:
                    run += 1
                    best = max(best, run)
                else:
                    run = 0
            if best >= cfg.dt_debounce:
                events.append(
                    InteractionEvent(
                        GRASP_START, frames[close_idx].index, frames[close_idx].tcp_pose.position
                    )
                )
                if open_idx is not None:
                    events.append(
                        InteractionEvent(
                            RELEASE, frames[open_idx].index, frames[open_idx].tcp_pose.position
                        )
                    )
            i = j
        else:
            i += 1
    return events


def accumulate_points(
    events: list[InteractionEvent], t: int, n_past: int = 0
) -> list[InteractionEvent]:
    """Interaction points relevant to frame ``t``.

    Release points persist for all later frames (the global interaction
    memory); a grasp point covers only its pre-grasp window ``[k - n_past, k]``.
    """
    out = []
    for ev in events:
        if ev.kind == RELEASE and ev.frame_index <= t:
            out.append(ev)
        elif ev.kind == GRASP_START and ev.frame_index - n_past <= t <= ev.frame_index:
            out.append(ev)
    return out


def render_label(
    session: PlaySession,
    frame_idx: int,
    camera: str,
    events: list[InteractionEvent],
    cfg: LabelConfig,
) -> AffordanceLabel:
    """Stamp the accumulated interaction points into one camera frame.

    Foreground pixels are those within the camera's radius (euclidean) of at
    least one projected center; each points at its nearest center, ties
    resolved toward the center with the smaller (v, u) coordinate. Points
    projecting outside the image or behind the camera are skipped.
    """
    frame = next((f for f in session.frames if f.index == frame_idx), None)
    if frame is None:
        raise IndexError(f"frame {frame_idx} not in session {session.session_id}")
    calib = session.calibs[camera]
    if calib.attached_to == "tcp":
        calib = calib_at_tcp(calib, frame.tcp_pose)

    points = accumulate_points(events, frame_idx, cfg.n_past)
    if camera == "gripper" and cfg.gripper_live_only:
        points = [
            ev
            for ev in points
            if ev.kind == GRASP_START or ev.frame_index == frame_idx
        ]

    centers: list[LabelCenter] = []
    for ev in points:
        try:
            u, v, _depth = project(ev.world_point, calib)
        except ValueError:
            log.debug("point %s behind %s camera at frame %d", ev.world_point, camera, frame_idx)
            continue
        ui, vi = int(round_half_up(u)), int(round_half_up(v))
        if not (0 <= ui < calib.width and 0 <= vi < calib.height):
            log.debug("point %s out of %s view at frame %d", ev.world_point, camera, frame_idx)
            continue
        centers.append(LabelCenter(ui, vi, ev.world_point))

    return stamp_centers(
        (calib.height, calib.width),
        [(c.u, c.v) for c in centers],
        cfg.radius_for(camera),
        cfg.background_direction,
        centers,
    )


def stamp_centers(shape, center_px, radius, background_direction, centers=None) -> AffordanceLabel:
    """Disc-stamping label rasterizer (bounding-box sweep per center).

    Maintains a running nearest-center map so overlapping discs resolve to
    the closer center; ties go to the smaller (v, u) center.
    """
    h, w = shape
    best_d2 = np.full((h, w), np.inf)
    best_cu = np.full((h, w), -1, dtype=int)
    best_cv = np.full((h, w), -1, dtype=int)
    r2 = float(radius) ** 2
    for cu, cv in center_px:
        u0, u1 = max(0, cu - radius), min(w - 1, cu + radius)
        v0, v1 = max(0, cv - radius), min(h - 1, cv + radius)
        if u0 > u1 or v0 > v1:
            continue
        uu, vv = np.meshgrid(np.arange(u0, u1 + 1), np.arange(v0, v1 + 1))
        d2 = (uu - cu) ** 2.0 + (vv - cv) ** 2.0
        box = (slice(v0, v1 + 1), slice(u0, u1 + 1))
        cur_d2 = best_d2[box]
        cur_cv = best_cv[box]
        cur_cu = best_cu[box]
        closer = d2 < cur_d2
        tie = (d2 == cur_d2) & ((cv < cur_cv) | ((cv == cur_cv) & (cu < cur_cu)))
        take = (d2 <= r2) & (closer | tie)
        cur_d2[take] = d2[take]
        cur_cu[take] = cu
        cur_cv[take] = cv
        best_d2[box] = cur_d2
        best_cu[box] = cur_cu
        best_cv[box] = cur_cv

    mask = np.isfinite(best_d2)
    bg = np.asarray(background_direction, dtype=np.float32)
    directions = np.empty((h, w, 2), dtype=np.float32)
    directions[..., 0] = bg[0]
    directions[..., 1] = bg[1]
    ys, xs = np.nonzero(mask)
    du = (best_cu[ys, xs] - xs).astype(np.float32)
    dv = (best_cv[ys, xs] - ys).astype(np.float32)
    norm = np.sqrt(du * du + dv * dv)
    on_center = norm == 0.0
    norm[on_center] = 1.0
    du /= norm
    dv /= norm
    du[on_center] = bg[0]
    dv[on_center] = bg[1]
    directions[ys, xs, 0] = du
    directions[ys, xs, 1] = dv
    return AffordanceLabel(mask=mask, directions=directions, centers=list(centers or []))


# ---------------------------------------------------------------------------
# dataset assembly


@dataclass
class LabeledExample:
    image: np.ndarray  # H x W float32 grayscale in [0, 1]
    label: AffordanceLabel
    session_id: str
    frame_index: int
    camera: str


@dataclass
class SplitSpec:
    val_fraction: float = 0.2
    negatives_fraction: float = 0.05
    frame_stride: int = 1
    seed: int = 0


@dataclass
class LabeledDataset:
    camera: str
    train: list[LabeledExample] = field(default_factory=list)
    val: list[LabeledExample] = field(default_factory=list)


class EmptyDatasetError(RuntimeError):
    pass


def to_grayscale(rgb: np.ndarray) -> np.ndarray:
    """Rec.601 luminance, float32 in [0, 1] for uint8 input."""
    arr = np.asarray(rgb, dtype=np.float32)
    if arr.ndim == 2:
        gray = arr
    else:
        gray = arr[..., 0] * 0.299 + arr[..., 1] * 0.587 + arr[..., 2] * 0.114
    if np.issubdtype(np.asarray(rgb).dtype, np.integer):
        gray = gray / 255.0
    return gray.astype(np.float32)


def _is_val(session_id: str, val_fraction: float) -> bool:
    digest = hashlib.sha256(session_id.encode()).digest()
    bucket = int.from_bytes(digest[:4], "big") % 10_000
    return bucket < int(round(val_fraction * 10_000))


def build_dataset(
    sessions: list[PlaySession], cfg: LabelConfig, camera: str, split: SplitSpec
) -> LabeledDataset:
    """Label every stride-th frame of every session for one camera.

    Frames with foreground are always kept; all-background frames are kept at
    ``split.negatives_fraction`` (seeded, deterministic). Sessions land in
    train or val by a hash of their id, so the split is stable across runs.
    """
    rng = np.random.default_rng(split.seed)
    ds = LabeledDataset(camera=camera)
    n_total = 0
    for session in sessions:
        events = detect_interactions(session, cfg)
        bucket = ds.val if _is_val(session.session_id, split.val_fraction) else ds.train
        for frame in session.frames[:: split.frame_stride]:
            label = render_label(session, frame.index, camera, events, cfg)
            keep = bool(label.mask.any())
            if not keep:
                keep = rng.random() < split.negatives_fraction
            if not keep:
                continue
            gray = to_grayscale(frame.images[camera].rgb)
            bucket.append(
                LabeledExample(
                    image=gray,
                    label=label,
                    session_id=session.session_id,
                    frame_index=frame.index,
                    camera=camera,
                )
            )
            n_total += 1
    if n_total == 0:
        raise EmptyDatasetError(
            f"no labeled examples for camera {camera!r} across {len(sessions)} sessions"
        )
    return ds


# ---------------------------------------------------------------------------
# on-disk pair format: gray input PNG, {0,255} mask PNG, raw float32 direction
# field with a json sidecar, centers json


def export_examples(examples: list[LabeledExample], out_dir) -> None:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    for i, ex in enumerate(examples):
        stem = f"{i:06d}"
        h, w = ex.image.shape
        gray_u8 = np.clip(np.rint(ex.image * 255.0), 0, 255).astype(np.uint8)
        Image.fromarray(gray_u8, mode="L").save(out / f"{stem}_input.png")
        Image.fromarray(ex.label.mask.astype(np.uint8) * 255, mode="L").save(
            out / f"{stem}_mask.png"
        )
        dirs = np.ascontiguousarray(ex.label.directions, dtype="<f4")
        (out / f"{stem}_dirs.bin").write_bytes(dirs.tobytes())
        (out / f"{stem}_dirs.json").write_text(
            json.dumps({"height": h, "width": w, "channels": 2, "dtype": "<f4", "order": "row-major"})
        )
        centers = [
            {"u": c.u, "v": c.v, "world_point": [float(x) for x in c.world_point]}
            for c in ex.label.centers
        ]
        meta = {
            "session_id": ex.session_id,
            "frame_index": ex.frame_index,
            "camera": ex.camera,
            "centers": centers,
        }
        (out / f"{stem}_centers.json").write_text(json.dumps(meta))


def load_examples(in_dir) -> list[LabeledExample]:
    root = Path(in_dir)
    out = []
    for input_png in sorted(root.glob("*_input.png")):
        stem = input_png.name[: -len("_input.png")]
        gray = np.asarray(Image.open(input_png), dtype=np.float32) / 255.0
        mask = np.asarray(Image.open(root / f"{stem}_mask.png")) > 127
        header = json.loads((root / f"{stem}_dirs.json").read_text())
        dirs = np.frombuffer((root / f"{stem}_dirs.bin").read_bytes(), dtype="<f4").reshape(
            header["height"], header["width"], header["channels"]
        )
        meta = json.loads((root / f"{stem}_centers.json").read_text())
        centers = [
            LabelCenter(c["u"], c["v"], np.array(c["world_point"])) for c in meta["centers"]
        ]
        out.append(
            LabeledExample(
                image=gray,
                label=AffordanceLabel(mask=mask, directions=dirs.copy(), centers=centers),
                session_id=meta["session_id"],
                frame_index=meta["frame_index"],
                camera=meta["camera"],
            )
        )
    return out
