"""Binary checkpoint container.

Layout: magic ``RNTCKPT1``, a length-prefixed UTF-8 JSON metadata block
(model config, vocabulary units, component tags, step counter, optional
consolidation lambda/scope), then parameter entries in lexicographic
name order as (name, shape, little-endian float64 values). When a
consolidation state is attached, an ``EWC1`` section follows with the
snapshot and Fisher entries in the same layout. Save/load round trips
are bit-exact.
"""

from __future__ import annotations

import io
import json
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import DataError
from .ewc import EwcState
from .model import ModelConfig, RnntModel
from .tokenizer import Vocab

MAGIC = b"RNTCKPT1"
EWC_MAGIC = b"EWC1"


def _write_entries(fh, entries: dict[str, np.ndarray]):
    fh.write(struct.pack("<I", len(entries)))
    for name in sorted(entries):
        arr = np.ascontiguousarray(entries[name], dtype="<f8")
        blob = name.encode("utf-8")
        fh.write(struct.pack("<H", len(blob)))
        fh.write(blob)
        fh.write(struct.pack("<B", arr.ndim))
        fh.write(struct.pack(f"<{arr.ndim}I", *arr.shape))
        fh.write(arr.tobytes())


def _read_entries(fh) -> dict[str, np.ndarray]:
    (count,) = struct.unpack("<I", fh.read(4))
    entries = {}
    for _ in range(count):
        (name_len,) = struct.unpack("<H", fh.read(2))
        name = fh.read(name_len).decode("utf-8")
        (ndim,) = struct.unpack("<B", fh.read(1))
        shape = struct.unpack(f"<{ndim}I", fh.read(4 * ndim))
        n = int(np.prod(shape)) if ndim else 1
        data = np.frombuffer(fh.read(8 * n), dtype="<f8").reshape(shape)
        entries[name] = data.astype(np.float64)
    return entries


@dataclass
class Checkpoint:
    config: ModelConfig
    vocab: Vocab
    values: dict[str, np.ndarray]
    components: dict[str, str]
    step: int = 0
    ewc: EwcState | None = None

    def to_model(self) -> RnntModel:
        model = RnntModel(self.config, seed=0)
        if model.params.components_dict() != self.components:
            raise DataError("checkpoint component tags do not match the model layout")
        model.params.load_values(self.values)
        return model


def save_checkpoint(ckpt: Checkpoint, path: str | Path):
    meta = {
        "config": ckpt.config.to_dict(),
        "vocab": {"mode": ckpt.vocab.mode, "units": list(ckpt.vocab.units[1:])},
        "components": ckpt.components,
        "step": ckpt.step,
    }
    if ckpt.ewc is not None:
        meta["ewc"] = {"lambda": ckpt.ewc.lam, "scope": sorted(ckpt.ewc.scope)}
    blob = json.dumps(meta, sort_keys=True, ensure_ascii=False).encode("utf-8")
    buf = io.BytesIO()
    buf.write(MAGIC)
    buf.write(struct.pack("<I", len(blob)))
    buf.write(blob)
    _write_entries(buf, ckpt.values)
    if ckpt.ewc is not None:
        buf.write(EWC_MAGIC)
        _write_entries(buf, dict(ckpt.ewc.theta_old))
        _write_entries(buf, dict(ckpt.ewc.fisher))
    Path(path).write_bytes(buf.getvalue())


def load_checkpoint(path: str | Path) -> Checkpoint:
    raw = Path(path).read_bytes()
    if raw[:8] != MAGIC:
        raise DataError(f"{path} is not a checkpoint (bad magic)")
    fh = io.BytesIO(raw[8:])
    (meta_len,) = struct.unpack("<I", fh.read(4))
    meta = json.loads(fh.read(meta_len).decode("utf-8"))
    values = _read_entries(fh)
    ewc = None
    tail = fh.read(4)
    if tail == EWC_MAGIC:
        theta_old = _read_entries(fh)
        fisher = _read_entries(fh)
        ewc = EwcState(theta_old=theta_old, fisher=fisher,
                       lam=float(meta["ewc"]["lambda"]),
                       scope=frozenset(meta["ewc"]["scope"]))
    elif tail:
        raise DataError(f"{path}: trailing bytes after parameter entries")
    vocab = Vocab(units=("", *meta["vocab"]["units"]), mode=meta["vocab"]["mode"])
    return Checkpoint(
        config=ModelConfig.from_dict(meta["config"]),
        vocab=vocab,
        values=values,
        components=dict(meta["components"]),
        step=int(meta["step"]),
        ewc=ewc,
    )
