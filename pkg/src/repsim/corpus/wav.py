"""Minimal RIFF/WAVE reader for 16-bit mono PCM."""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

from ..errors import MalformedFileError, UnsupportedEncodingError


def read_wav(path: str | Path) -> tuple[np.ndarray, int]:
    """Read a 16-bit mono PCM WAV file.

    Returns (samples, sample_rate) with samples scaled to [-1, 1] by the
    int16 convention value/32768. Raises FileNotFoundError for a missing
    file, MalformedFileError for structural problems, and
    UnsupportedEncodingError for anything but 16-bit mono PCM.
    """
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"no such file: {path}")
    data = path.read_bytes()
    if len(data) < 12:
        raise MalformedFileError(f"{path}: too short for a RIFF header")
    if data[:4] != b"RIFF" or data[8:12] != b"WAVE":
        raise MalformedFileError(f"{path}: not a RIFF/WAVE file")

    fmt = None
    payload = None
    pos = 12
    while pos + 8 <= len(data):
        chunk_id = data[pos : pos + 4]
        (chunk_size,) = struct.unpack("<I", data[pos + 4 : pos + 8])
        body = data[pos + 8 : pos + 8 + chunk_size]
        if chunk_id == b"fmt ":
            if len(body) < 16:
                raise MalformedFileError(f"{path}: fmt chunk truncated")
            fmt = struct.unpack("<HHIIHH", body[:16])
        elif chunk_id == b"data":
            if len(body) < chunk_size:
                raise MalformedFileError(f"{path}: data chunk truncated")
            payload = body
        # Chunks are word-aligned.
        pos += 8 + chunk_size + (chunk_size & 1)

    if fmt is None or payload is None:
        raise MalformedFileError(f"{path}: missing fmt or data chunk")
    audio_format, channels, sample_rate, _, _, bits = fmt
    if audio_format != 1:
        raise UnsupportedEncodingError(f"{path}: not PCM (format tag {audio_format})")
    if channels != 1:
        raise UnsupportedEncodingError(f"{path}: expected mono, got {channels} channels")
    if bits != 16:
        raise UnsupportedEncodingError(f"{path}: expected 16-bit samples, got {bits}")
    if len(payload) % 2:
        raise MalformedFileError(f"{path}: odd data chunk length for 16-bit PCM")

    samples = np.frombuffer(payload, dtype="<i2").astype(np.float64) / 32768.0
    return samples, int(sample_rate)


def write_wav(path: str | Path, samples: np.ndarray, sample_rate: int) -> None:
    """Write float samples in [-1, 1] as 16-bit mono PCM (test/demo helper)."""
    clipped = np.clip(np.asarray(samples, dtype=np.float64), -1.0, 1.0)
    ints = np.round(clipped * 32767.0).astype("<i2")
    payload = ints.tobytes()
    with open(path, "wb") as fh:
        fh.write(b"RIFF")
        fh.write(struct.pack("<I", 36 + len(payload)))
        fh.write(b"WAVE")
        fh.write(b"fmt ")
        fh.write(struct.pack("<IHHIIHH", 16, 1, 1, sample_rate, sample_rate * 2, 2, 16))
        fh.write(b"data")
        fh.write(struct.pack("<I", len(payload)))
        fh.write(payload)
