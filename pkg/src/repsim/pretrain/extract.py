"""Frozen-model representation extraction."""

from __future__ import annotations

from pathlib import Path

import numpy as np

from ..corpus.io import CorpusManifest, ManifestEntry, write_features
from ..corpus.synthetic import FeatureSequence
from ..errors import ConfigError
from .checkpoint import Checkpoint
from .models import Batch, build_model


def model_from_checkpoint(checkpoint: Checkpoint, dtype=np.float32):
    model = build_model(checkpoint.config, seed=0, dtype=dtype)
    model.store.load_values(checkpoint.values)
    return model


def extract_representations(
    source: Checkpoint | object,
    sequences: list[FeatureSequence],
    batch_size: int = 32,
    dtype=np.float32,
) -> list[np.ndarray]:
    """Final-layer representations per utterance, input order preserved.

    `source` is a Checkpoint or an already-built model. Utterances are
    grouped by length for padding efficiency; outputs are bit-reproducible
    for a fixed checkpoint and input set.
    """
    model = model_from_checkpoint(source, dtype) if isinstance(source, Checkpoint) else source
    frames = [np.asarray(s.frames) for s in sequences]
    if frames and frames[0].shape[1] != model.config.encoder.input_dim:
        raise ConfigError(
            f"feature dim {frames[0].shape[1]} != encoder input "
            f"{model.config.encoder.input_dim}"
        )
    order = sorted(range(len(frames)), key=lambda i: (frames[i].shape[0], i))
    outputs: list[np.ndarray | None] = [None] * len(frames)
    for start in range(0, len(order), batch_size):
        idx = order[start : start + batch_size]
        batch = Batch.from_sequences([frames[i] for i in idx], dtype)
        reps = model.representations(batch.x, batch.lengths)
        for row, i in enumerate(idx):
            outputs[i] = np.asarray(reps[row, : batch.lengths[row]], dtype=np.float32)
    return outputs  # type: ignore[return-value]


def write_representations(
    reps: list[np.ndarray],
    sequences: list[FeatureSequence],
    out_dir: str | Path,
    split: str = "train",
) -> CorpusManifest:
    """Write per-utterance representation matrices in the feature-file format."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    entries = []
    for rep, seq in zip(reps, sequences):
        rel = f"{seq.utterance_id}.fmat"
        write_features(out_dir / rel, rep)
        entries.append(
            ManifestEntry(
                utterance_id=seq.utterance_id,
                features=rel,
                speaker_id=seq.speaker_id,
                labels=None,
                split=split,
            )
        )
    manifest = CorpusManifest(entries=entries, root=out_dir)
    manifest.save(out_dir / "manifest.jsonl")
    return manifest
