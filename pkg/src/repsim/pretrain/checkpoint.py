"""Checkpoint container and its binary file format.

Layout: magic "CKPT", u32 version=1, u32 json_len, JSON metadata blob
(model config, step, running loss, data-hours tag), u32 tensor count,
then per tensor: u32 name_len + UTF-8 name, u32 ndim, u32 dims...,
little-endian float32 data.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from ..errors import BadDimensionsError, BadMagicError, BadVersionError, MalformedFileError
from .configs import ModelConfig

CKPT_MAGIC = b"CKPT"
CKPT_VERSION = 1


@dataclass
class Checkpoint:
    config: ModelConfig
    values: dict[str, np.ndarray]
    step: int
    running_loss: float
    data_hours: float = 0.0

    @property
    def checkpoint_id(self) -> str:
        return f"{self.config.name}@{self.step}"

    def save(self, path: str | Path) -> None:
        meta = json.dumps(
            {
                "config": self.config.to_dict(),
                "step": self.step,
                "running_loss": self.running_loss,
                "data_hours": self.data_hours,
            },
            sort_keys=True,
        ).encode()
        with open(path, "wb") as fh:
            fh.write(CKPT_MAGIC)
            fh.write(struct.pack("<II", CKPT_VERSION, len(meta)))
            fh.write(meta)
            fh.write(struct.pack("<I", len(self.values)))
            for name, arr in self.values.items():
                data = np.ascontiguousarray(arr, dtype="<f4")
                name_b = name.encode()
                fh.write(struct.pack("<I", len(name_b)))
                fh.write(name_b)
                fh.write(struct.pack("<I", data.ndim))
                fh.write(struct.pack(f"<{data.ndim}I", *data.shape))
                fh.write(data.tobytes())

    @classmethod
    def load(cls, path: str | Path) -> "Checkpoint":
        raw = Path(path).read_bytes()
        if len(raw) < 12:
            raise MalformedFileError(f"{path}: truncated checkpoint")
        if raw[:4] != CKPT_MAGIC:
            raise BadMagicError(f"{path}: expected CKPT magic")
        version, meta_len = struct.unpack("<II", raw[4:12])
        if version != CKPT_VERSION:
            raise BadVersionError(f"{path}: unsupported checkpoint version {version}")
        pos = 12
        try:
            meta = json.loads(raw[pos : pos + meta_len].decode())
            pos += meta_len
            (n_tensors,) = struct.unpack("<I", raw[pos : pos + 4])
            pos += 4
            values: dict[str, np.ndarray] = {}
            for _ in range(n_tensors):
                (name_len,) = struct.unpack("<I", raw[pos : pos + 4])
                pos += 4
                name = raw[pos : pos + name_len].decode()
                pos += name_len
                (ndim,) = struct.unpack("<I", raw[pos : pos + 4])
                pos += 4
                shape = struct.unpack(f"<{ndim}I", raw[pos : pos + 4 * ndim])
                pos += 4 * ndim
                count = int(np.prod(shape)) if ndim else 1
                data = np.frombuffer(raw[pos : pos + 4 * count], dtype="<f4")
                if data.size != count:
                    raise BadDimensionsError(f"{path}: tensor {name} payload truncated")
                pos += 4 * count
                values[name] = data.reshape(shape).copy()
        except (struct.error, UnicodeDecodeError, json.JSONDecodeError) as exc:
            raise MalformedFileError(f"{path}: corrupt checkpoint") from exc
        return cls(
            config=ModelConfig.from_dict(meta["config"]),
            values=values,
            step=int(meta["step"]),
            running_loss=float(meta["running_loss"]),
            data_hours=float(meta.get("data_hours", 0.0)),
        )
