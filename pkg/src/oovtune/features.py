"""Binary feature-file format: magic FEAT1, uint32 T and D, float32 frames."""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

from .errors import DataError

MAGIC = b"FEAT1"


def write_features(path: str | Path, frames: np.ndarray):
    frames = np.asarray(frames)
    if frames.ndim != 2:
        raise DataError(f"feature array must be 2-D, got shape {frames.shape}")
    t_len, dim = frames.shape
    payload = frames.astype("<f4").tobytes()
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<II", t_len, dim))
        fh.write(payload)


def read_features(path: str | Path) -> np.ndarray:
    raw = Path(path).read_bytes()
    if raw[:5] != MAGIC:
        raise DataError(f"{path} is not a feature file (bad magic)")
    t_len, dim = struct.unpack("<II", raw[5:13])
    expected = 13 + 4 * t_len * dim
    if len(raw) != expected:
        raise DataError(f"{path} is truncated: {len(raw)} bytes, expected {expected}")
    frames = np.frombuffer(raw, dtype="<f4", offset=13).reshape(t_len, dim)
    return frames.astype(np.float64)
