"""Play-session data model and on-disk persistence.

A session is an immutable, ordered log of frames produced by scripted play,
human teleoperation, or replay. Layout on disk:

    manifest.json   schema version, metadata, calibrations, frame count
    frames.jsonl    one record per frame (pose, gripper, image filenames)
    images/         static_<i>_rgb.png, static_<i>_depth.png and the
                    gripper-camera equivalents

Depth images are 16-bit PNGs in millimeters (0 = invalid). All floats are
serialized as decimal strings with full round-trip precision (python repr).
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from PIL import Image

from .geometry import CameraCalib, Pose, RigidTransform

SCHEMA_VERSION = 1
CAMERA_NAMES = ("static", "gripper")
GRIPPER_OPEN = "open"
GRIPPER_CLOSE = "close"


class SessionFormatError(ValueError):
    """Unreadable or version-incompatible session directory."""


class SessionValidationError(ValueError):
    """A session violates its invariants; message lists every violation."""


@dataclass
class RGBDImage:
    rgb: np.ndarray  # H x W x 3 uint8
    depth_mm: np.ndarray  # H x W uint16, millimeters, 0 = invalid

    def __post_init__(self):
        self.rgb = np.asarray(self.rgb, dtype=np.uint8)
        self.depth_mm = np.asarray(self.depth_mm, dtype=np.uint16)

    def depth_m(self) -> np.ndarray:
        return self.depth_mm.astype(float) / 1000.0

    def __eq__(self, other):
        if not isinstance(other, RGBDImage):
            return NotImplemented
        return np.array_equal(self.rgb, other.rgb) and np.array_equal(
            self.depth_mm, other.depth_mm
        )


@dataclass
class PlayFrame:
    index: int
    timestamp: float
    tcp_pose: Pose
    gripper_width: float
    gripper_command: str  # "open" | "close"
    images: dict[str, RGBDImage] = field(default_factory=dict)

    def __eq__(self, other):
        if not isinstance(other, PlayFrame):
            return NotImplemented
        return (
            self.index == other.index
            and self.timestamp == other.timestamp
            and self.tcp_pose == other.tcp_pose
            and self.gripper_width == other.gripper_width
            and self.gripper_command == other.gripper_command
            and self.images == other.images
        )


@dataclass
class PlaySession:
    session_id: str
    calibs: dict[str, CameraCalib]
    frames: list[PlayFrame]
    collector: str = "scripted"  # "human" | "scripted"
    environment_id: str = "tabletop"
    seed: int = 0

    def __len__(self):
        return len(self.frames)

    def __eq__(self, other):
        if not isinstance(other, PlaySession):
            return NotImplemented
        return (
            self.session_id == other.session_id
            and self.calibs == other.calibs
            and self.collector == other.collector
            and self.environment_id == other.environment_id
            and self.seed == other.seed
            and self.frames == other.frames
        )


def validate_session(session: PlaySession) -> list[str]:
    """Check every type invariant; returns human-readable violations (empty = ok)."""
    out: list[str] = []
    if len(session.frames) < 2:
        out.append(f"session {session.session_id}: needs >= 2 frames, has {len(session.frames)}")
    if sorted(session.calibs.keys()) != sorted(CAMERA_NAMES):
        out.append(
            f"session {session.session_id}: cameras must be exactly {CAMERA_NAMES}, "
            f"got {sorted(session.calibs.keys())}"
        )
    if session.collector not in ("human", "scripted"):
        out.append(f"session {session.session_id}: unknown collector {session.collector!r}")

    for name, calib in session.calibs.items():
        out.extend(_validate_calib(name, calib))

    prev_ts = None
    for frame in session.frames:
        tag = f"frame {frame.index}"
        if frame.index < 0:
            out.append(f"{tag}: negative index")
        if prev_ts is not None and frame.timestamp <= prev_ts:
            out.append(f"{tag}: timestamp {frame.timestamp!r} not strictly increasing")
        prev_ts = frame.timestamp
        if not np.all(np.isfinite(frame.tcp_pose.position)):
            out.append(f"{tag}: non-finite tcp position")
        if not np.all(np.isfinite(frame.tcp_pose.euler)):
            out.append(f"{tag}: non-finite tcp euler angles")
        elif np.any(np.abs(frame.tcp_pose.euler) > math.pi + 1e-12):
            out.append(f"{tag}: euler angle outside [-pi, pi]")
        if not (frame.gripper_width >= 0.0):
            out.append(f"{tag}: gripper_width {frame.gripper_width} < 0")
        if frame.gripper_command not in (GRIPPER_OPEN, GRIPPER_CLOSE):
            out.append(f"{tag}: gripper_command {frame.gripper_command!r} invalid")
        for cam in CAMERA_NAMES:
            img = frame.images.get(cam)
            if img is None:
                out.append(f"{tag}: missing {cam} image")
                continue
            calib = session.calibs.get(cam)
            if calib is not None:
                want = (calib.height, calib.width)
                if img.rgb.shape != (*want, 3):
                    out.append(f"{tag}: {cam} rgb shape {img.rgb.shape} != {want} calib")
                if img.depth_mm.shape != want:
                    out.append(f"{tag}: {cam} depth shape {img.depth_mm.shape} != {want} calib")
            # uint16 depth is >= 0 by construction; keep the check for odd dtypes
            if img.depth_mm.dtype != np.uint16 or np.any(img.depth_mm.astype(np.int64) < 0):
                out.append(f"{tag}: {cam} depth must be uint16 millimeters >= 0")
    return out


def _validate_calib(name: str, calib: CameraCalib) -> list[str]:
    out = []
    tag = f"CameraCalib {name}"
    rot = calib.extrinsic.rotation
    if not np.allclose(rot @ rot.T, np.eye(3), atol=1e-9):
        out.append(f"{tag}: rotation not orthonormal")
    elif abs(np.linalg.det(rot) - 1.0) > 1e-9:
        out.append(f"{tag}: rotation determinant {np.linalg.det(rot):.12f} != +1")
    if not (calib.fx > 0 and calib.fy > 0):
        out.append(f"{tag}: focal lengths must be positive")
    if not (0 <= calib.cx < calib.width):
        out.append(f"{tag}: cx {calib.cx} outside [0, width)")
    if not (0 <= calib.cy < calib.height):
        out.append(f"{tag}: cy {calib.cy} outside [0, height)")
    if calib.attached_to not in ("world", "tcp"):
        out.append(f"{tag}: attached_to {calib.attached_to!r} invalid")
    if not np.all(np.isfinite(calib.extrinsic.translation)):
        out.append(f"{tag}: non-finite extrinsic translation")
    return out


# ---------------------------------------------------------------------------
# serialization helpers (floats via repr -> exact round trip)


def _calib_to_json(calib: CameraCalib) -> dict:
    return {
        "fx": calib.fx,
        "fy": calib.fy,
        "cx": calib.cx,
        "cy": calib.cy,
        "width": calib.width,
        "height": calib.height,
        "attached_to": calib.attached_to,
        "extrinsic": {
            "rotation": [[float(v) for v in row] for row in calib.extrinsic.rotation],
            "translation": [float(v) for v in calib.extrinsic.translation],
        },
    }


def _calib_from_json(d: dict) -> CameraCalib:
    return CameraCalib(
        fx=float(d["fx"]),
        fy=float(d["fy"]),
        cx=float(d["cx"]),
        cy=float(d["cy"]),
        width=int(d["width"]),
        height=int(d["height"]),
        attached_to=d.get("attached_to", "world"),
        extrinsic=RigidTransform(
            np.array(d["extrinsic"]["rotation"], dtype=float),
            np.array(d["extrinsic"]["translation"], dtype=float),
        ),
    )


def _image_names(camera: str, index: int) -> tuple[str, str]:
    return f"{camera}_{index:06d}_rgb.png", f"{camera}_{index:06d}_depth.png"


def write_session(session: PlaySession, path) -> None:
    """Persist a validated session; re-reading yields a bit-identical session."""
    violations = validate_session(session)
    if violations:
        raise SessionValidationError("; ".join(violations))
    root = Path(path)
    images = root / "images"
    images.mkdir(parents=True, exist_ok=True)

    manifest = {
        "schema_version": SCHEMA_VERSION,
        "session_id": session.session_id,
        "collector": session.collector,
        "environment_id": session.environment_id,
        "seed": session.seed,
        "n_frames": len(session.frames),
        "image_pattern": "{camera}_{index:06d}_{kind}.png",
        "calibrations": {name: _calib_to_json(c) for name, c in session.calibs.items()},
    }
    (root / "manifest.json").write_text(json.dumps(manifest, indent=2))

    with (root / "frames.jsonl").open("w") as fh:
        for frame in session.frames:
            names = {}
            for cam in CAMERA_NAMES:
                rgb_name, depth_name = _image_names(cam, frame.index)
                img = frame.images[cam]
                Image.fromarray(img.rgb).save(images / rgb_name)
                Image.fromarray(img.depth_mm).save(images / depth_name)
                names[cam] = {"rgb": rgb_name, "depth": depth_name}
            rec = {
                "index": frame.index,
                "timestamp": frame.timestamp,
                "tcp_position": [float(v) for v in frame.tcp_pose.position],
                "tcp_euler": [float(v) for v in frame.tcp_pose.euler],
                "gripper_width": frame.gripper_width,
                "gripper_command": frame.gripper_command,
                "images": names,
            }
            fh.write(json.dumps(rec) + "\n")


def read_session(path) -> PlaySession:
    """Load and fully validate a session directory written by write_session."""
    root = Path(path)
    manifest_path = root / "manifest.json"
    if not manifest_path.exists():
        raise SessionFormatError(f"missing manifest: {manifest_path}")
    manifest = json.loads(manifest_path.read_text())
    version = manifest.get("schema_version")
    if version != SCHEMA_VERSION:
        raise SessionFormatError(
            f"unsupported schema version {version!r} (reader supports {SCHEMA_VERSION})"
        )

    calibs = {name: _calib_from_json(d) for name, d in manifest["calibrations"].items()}
    frames = []
    with (root / "frames.jsonl").open() as fh:
        for line in fh:
            rec = json.loads(line)
            imgs = {}
            for cam, names in rec["images"].items():
                rgb_path = root / "images" / names["rgb"]
                depth_path = root / "images" / names["depth"]
                for p in (rgb_path, depth_path):
                    if not p.exists():
                        raise SessionFormatError(f"missing image file: {p}")
                try:
                    rgb = np.asarray(Image.open(rgb_path), dtype=np.uint8)
                    depth = np.asarray(Image.open(depth_path)).astype(np.uint16)
                except Exception as exc:  # pillow raises a zoo of types
                    raise SessionFormatError(f"corrupt image {rgb_path}: {exc}") from exc
                imgs[cam] = RGBDImage(rgb=rgb, depth_mm=depth)
            frames.append(
                PlayFrame(
                    index=int(rec["index"]),
                    timestamp=float(rec["timestamp"]),
                    tcp_pose=Pose(
                        np.array(rec["tcp_position"], dtype=float),
                        np.array(rec["tcp_euler"], dtype=float),
                    ),
                    gripper_width=float(rec["gripper_width"]),
                    gripper_command=rec["gripper_command"],
                    images=imgs,
                )
            )
    if len(frames) != manifest["n_frames"]:
        raise SessionFormatError(
            f"manifest says {manifest['n_frames']} frames, found {len(frames)}"
        )
    session = PlaySession(
        session_id=manifest["session_id"],
        calibs=calibs,
        frames=frames,
        collector=manifest["collector"],
        environment_id=manifest["environment_id"],
        seed=int(manifest["seed"]),
    )
    violations = validate_session(session)
    if violations:
        raise SessionValidationError("; ".join(violations))
    return session
