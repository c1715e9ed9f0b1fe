"""Single-file binary checkpoint container.

Layout: magic bytes, uint32 schema version, uint32 json header length, the
header (kind, config, block manifest) as utf-8 json, then raw little-endian
float32 blocks concatenated in manifest order.
"""

from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

MAGIC = b"AGRCKPT1"
VERSION = 1


class CheckpointError(ValueError):
    pass


def save_checkpoint(path, kind: str, config: dict, blocks: list[tuple[str, np.ndarray]]) -> None:
    header = {
        "kind": kind,
        "config": config,
        "blocks": [{"name": name, "shape": list(arr.shape)} for name, arr in blocks],
    }
    payload = json.dumps(header).encode("utf-8")
    with Path(path).open("wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<II", VERSION, len(payload)))
        fh.write(payload)
        for _, arr in blocks:
            fh.write(np.ascontiguousarray(arr, dtype="<f4").tobytes())


def load_checkpoint(path):
    """Returns (kind, config, ordered dict name -> float32 array)."""
    data = Path(path).read_bytes()
    if data[: len(MAGIC)] != MAGIC:
        raise CheckpointError(f"{path}: bad magic bytes")
    version, hlen = struct.unpack_from("<II", data, len(MAGIC))
    if version != VERSION:
        raise CheckpointError(f"{path}: unsupported checkpoint version {version}")
    off = len(MAGIC) + 8
    header = json.loads(data[off : off + hlen].decode("utf-8"))
    off += hlen
    blocks: dict[str, np.ndarray] = {}
    for spec in header["blocks"]:
        shape = tuple(spec["shape"])
        count = int(np.prod(shape)) if shape else 1
        arr = np.frombuffer(data, dtype="<f4", count=count, offset=off).reshape(shape)
        blocks[spec["name"]] = arr.copy()
        off += count * 4
    if off != len(data):
        raise CheckpointError(f"{path}: {len(data) - off} trailing bytes")
    return header["kind"], header["config"], blocks
