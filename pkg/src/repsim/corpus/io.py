"""Binary feature/label files and the JSON-lines corpus manifest.

Feature file ("FMAT"): magic, u32 version=1, u32 rows, u32 cols, then
rows*cols little-endian float32, row-major. Label file ("LVEC"): magic,
u32 version=1, u32 length, then u32 class ids. Manifest: one JSON object
per line with keys id, features, speaker, labels (nullable), split; paths
are stored relative to the manifest file.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ..errors import (
    BadDimensionsError,
    BadMagicError,
    BadVersionError,
    InvalidInputError,
    MalformedFileError,
)

FMAT_MAGIC = b"FMAT"
LVEC_MAGIC = b"LVEC"
FORMAT_VERSION = 1

SPLITS = ("train", "valid", "test")


def write_features(path: str | Path, matrix: np.ndarray) -> None:
    """Write a 2-D float matrix as an FMAT file (float32 payload)."""
    mat = np.asarray(matrix)
    if mat.ndim != 2:
        raise InvalidInputError(f"feature matrix must be 2-D, got {mat.shape}")
    if not np.all(np.isfinite(mat)):
        raise InvalidInputError("feature matrix contains non-finite entries")
    mat = np.ascontiguousarray(mat, dtype="<f4")
    with open(path, "wb") as fh:
        fh.write(FMAT_MAGIC)
        fh.write(struct.pack("<III", FORMAT_VERSION, mat.shape[0], mat.shape[1]))
        fh.write(mat.tobytes())


def read_features(path: str | Path) -> np.ndarray:
    """Read an FMAT file back as a float32 matrix (bit-exact round trip)."""
    with open(path, "rb") as fh:
        header = fh.read(16)
        if len(header) < 16:
            raise MalformedFileError(f"{path}: truncated header")
        if header[:4] != FMAT_MAGIC:
            raise BadMagicError(f"{path}: expected FMAT magic, got {header[:4]!r}")
        version, rows, cols = struct.unpack("<III", header[4:])
        if version != FORMAT_VERSION:
            raise BadVersionError(f"{path}: unsupported FMAT version {version}")
        payload = fh.read()
    expected = rows * cols * 4
    if len(payload) != expected:
        raise BadDimensionsError(
            f"{path}: payload is {len(payload)} bytes, header implies {expected}"
        )
    return np.frombuffer(payload, dtype="<f4").reshape(rows, cols).copy()


def write_labels(path: str | Path, labels: np.ndarray) -> None:
    """Write integer class ids as an LVEC file."""
    vec = np.asarray(labels)
    if vec.ndim != 1:
        raise InvalidInputError(f"label vector must be 1-D, got {vec.shape}")
    if vec.size and vec.min() < 0:
        raise InvalidInputError("label ids must be non-negative")
    vec = np.ascontiguousarray(vec, dtype="<u4")
    with open(path, "wb") as fh:
        fh.write(LVEC_MAGIC)
        fh.write(struct.pack("<II", FORMAT_VERSION, vec.shape[0]))
        fh.write(vec.tobytes())


def read_labels(path: str | Path) -> np.ndarray:
    with open(path, "rb") as fh:
        header = fh.read(12)
        if len(header) < 12:
            raise MalformedFileError(f"{path}: truncated header")
        if header[:4] != LVEC_MAGIC:
            raise BadMagicError(f"{path}: expected LVEC magic, got {header[:4]!r}")
        version, length = struct.unpack("<II", header[4:])
        if version != FORMAT_VERSION:
            raise BadVersionError(f"{path}: unsupported LVEC version {version}")
        payload = fh.read()
    if len(payload) != length * 4:
        raise BadDimensionsError(
            f"{path}: payload is {len(payload)} bytes, header implies {length * 4}"
        )
    return np.frombuffer(payload, dtype="<u4").astype(np.int64)


@dataclass(frozen=True)
class ManifestEntry:
    """One utterance: id, feature path, speaker, optional label path, split."""

    utterance_id: str
    features: str
    speaker_id: str
    labels: str | None
    split: str

    def __post_init__(self) -> None:
        if self.split not in SPLITS:
            raise InvalidInputError(f"unknown split {self.split!r}")


@dataclass
class CorpusManifest:
    """Ordered utterance list with train/valid/test assignment.

    `root` anchors the relative feature/label paths; it is set when the
    manifest is loaded from or saved to disk.
    """

    entries: list[ManifestEntry] = field(default_factory=list)
    root: Path | None = None

    def __post_init__(self) -> None:
        ids = [e.utterance_id for e in self.entries]
        if len(set(ids)) != len(ids):
            raise InvalidInputError("manifest has duplicate utterance ids")

    def split_entries(self, split: str | None) -> list[ManifestEntry]:
        if split is None:
            return list(self.entries)
        if split not in SPLITS:
            raise InvalidInputError(f"unknown split {split!r}")
        return [e for e in self.entries if e.split == split]

    def speakers(self) -> list[str]:
        seen: dict[str, None] = {}
        for e in self.entries:
            seen.setdefault(e.speaker_id, None)
        return list(seen)

    def resolve(self, relpath: str) -> Path:
        base = self.root if self.root is not None else Path(".")
        return base / relpath

    def feature_path(self, entry: ManifestEntry) -> Path:
        return self.resolve(entry.features)

    def label_path(self, entry: ManifestEntry) -> Path | None:
        return None if entry.labels is None else self.resolve(entry.labels)

    def save(self, path: str | Path) -> None:
        path = Path(path)
        with open(path, "w", encoding="utf-8") as fh:
            for e in self.entries:
                fh.write(
                    json.dumps(
                        {
                            "id": e.utterance_id,
                            "features": e.features,
                            "speaker": e.speaker_id,
                            "labels": e.labels,
                            "split": e.split,
                        },
                        sort_keys=True,
                    )
                    + "\n"
                )
        self.root = path.parent

    @classmethod
    def load(cls, path: str | Path, check_paths: bool = True) -> "CorpusManifest":
        path = Path(path)
        entries = []
        with open(path, "r", encoding="utf-8") as fh:
            for lineno, line in enumerate(fh, 1):
                line = line.strip()
                if not line:
                    continue
                try:
                    obj = json.loads(line)
                    entries.append(
                        ManifestEntry(
                            utterance_id=obj["id"],
                            features=obj["features"],
                            speaker_id=obj["speaker"],
                            labels=obj.get("labels"),
                            split=obj["split"],
                        )
                    )
                except (KeyError, json.JSONDecodeError) as exc:
                    raise MalformedFileError(f"{path}:{lineno}: bad manifest line") from exc
        manifest = cls(entries=entries, root=path.parent)
        if check_paths:
            for e in entries:
                fp = manifest.feature_path(e)
                if not fp.exists():
                    raise InvalidInputError(f"manifest references missing file {fp}")
                lp = manifest.label_path(e)
                if lp is not None and not lp.exists():
                    raise InvalidInputError(f"manifest references missing file {lp}")
        return manifest

    def content_id(self) -> str:
        """Stable identifier of the manifest content, used for provenance."""
        import hashlib

        h = hashlib.sha256()
        for e in self.entries:
            h.update(
                f"{e.utterance_id}|{e.features}|{e.speaker_id}|{e.labels}|{e.split}\n".encode()
            )
        return h.hexdigest()[:16]
