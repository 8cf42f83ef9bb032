"""Labeled synthetic corpus with exact frame-level phone and speaker ground truth.

The generator emits log-Mel-like feature matrices directly instead of audio:
every analysis downstream consumes features only, and synthesizing at the
feature level guarantees exact labels without any forced alignment. Each
phone class is a fixed spectral prototype; each speaker applies a fixed
diagonal gain plus an additive offset; frames are

    prototype[phone] * gain[speaker] + offset[speaker] + N(0, sigma^2).

Phone sequences follow a row-stochastic transition table, so phone durations
are geometric with mean 1 / (1 - self_loop).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ..errors import InvalidInputError
from .io import CorpusManifest, ManifestEntry, write_features, write_labels

FEATURE_DIM = 80


@dataclass
class FeatureSequence:
    """One utterance: (T, 80) feature frames plus speaker and optional phone labels."""

    utterance_id: str
    frames: np.ndarray
    speaker_id: str
    phone_labels: np.ndarray | None = None

    def validate(self, num_phones: int | None = None) -> "FeatureSequence":
        frames = np.asarray(self.frames)
        if frames.ndim != 2 or frames.shape[0] < 1:
            raise InvalidInputError(f"frames must be (T>=1, d), got {frames.shape}")
        if not np.all(np.isfinite(frames)):
            raise InvalidInputError(f"{self.utterance_id}: non-finite frames")
        if self.phone_labels is not None:
            labels = np.asarray(self.phone_labels)
            if labels.shape != (frames.shape[0],):
                raise InvalidInputError(
                    f"{self.utterance_id}: labels length {labels.shape} != T {frames.shape[0]}"
                )
            if labels.min() < 0 or (num_phones is not None and labels.max() >= num_phones):
                raise InvalidInputError(f"{self.utterance_id}: label out of range")
        return self


def default_transition(num_phones: int, self_loop: float = 0.85) -> np.ndarray:
    """Uniform off-diagonal transition table with a fixed self-loop mass."""
    if not 0.0 <= self_loop < 1.0:
        raise InvalidInputError(f"self_loop must be in [0, 1), got {self_loop}")
    table = np.full((num_phones, num_phones), (1.0 - self_loop) / (num_phones - 1))
    np.fill_diagonal(table, self_loop)
    return table


@dataclass
class SyntheticSpec:
    """Parameters of the synthetic corpus."""

    seed: int
    num_speakers: int = 20
    num_phones: int = 42
    utterances_per_speaker: int = 30
    frame_rate: float = 100.0
    transition: np.ndarray | None = None
    noise_sigma: float = 0.1
    min_seconds: float = 0.6
    max_seconds: float = 1.2
    prototype_scale: float = 3.0
    speaker_offset_scale: float = 1.5
    gain_jitter: float = 0.1

    def __post_init__(self) -> None:
        if self.num_phones < 2:
            raise InvalidInputError("num_phones must be >= 2")
        if self.num_speakers < 2:
            raise InvalidInputError("num_speakers must be >= 2")
        if self.noise_sigma < 0:
            raise InvalidInputError("noise_sigma must be >= 0")
        if self.transition is None:
            self.transition = default_transition(self.num_phones)
        self.transition = np.asarray(self.transition, dtype=np.float64)
        if self.transition.shape != (self.num_phones, self.num_phones):
            raise InvalidInputError(
                f"transition table must be {self.num_phones}x{self.num_phones}"
            )
        if np.any(self.transition < 0) or np.max(
            np.abs(self.transition.sum(axis=1) - 1.0)
        ) > 1e-9:
            raise InvalidInputError("transition rows must be non-negative and sum to 1")


@dataclass
class SyntheticTruth:
    """Ground-truth generative parameters, recoverable from the spec's seed."""

    prototypes: np.ndarray  # (num_phones, 80)
    offsets: np.ndarray  # (num_speakers, 80)
    gains: np.ndarray  # (num_speakers, 80)
    speaker_ids: list[str] = field(default_factory=list)


def synthetic_truth(spec: SyntheticSpec) -> SyntheticTruth:
    """Regenerate the prototype/offset/gain tables for a spec (seed-determined)."""
    rng = np.random.default_rng([spec.seed, 0])
    prototypes = rng.normal(0.0, 1.0, (spec.num_phones, FEATURE_DIM)) * spec.prototype_scale
    offsets = rng.normal(0.0, 1.0, (spec.num_speakers, FEATURE_DIM)) * spec.speaker_offset_scale
    gains = 1.0 + rng.normal(0.0, spec.gain_jitter, (spec.num_speakers, FEATURE_DIM))
    gains = np.maximum(gains, 0.2)
    speaker_ids = [f"spk{idx:03d}" for idx in range(spec.num_speakers)]
    return SyntheticTruth(prototypes, offsets, gains, speaker_ids)


def _phone_walk(rng: np.random.Generator, transition: np.ndarray, length: int) -> np.ndarray:
    num_phones = transition.shape[0]
    labels = np.empty(length, dtype=np.int64)
    state = int(rng.integers(num_phones))
    for t in range(length):
        labels[t] = state
        state = int(rng.choice(num_phones, p=transition[state]))
    return labels


def synthesize_utterances(spec: SyntheticSpec) -> list[FeatureSequence]:
    """Generate all utterances in memory, deterministic in spec.seed."""
    truth = synthetic_truth(spec)
    rng = np.random.default_rng([spec.seed, 1])
    sequences = []
    for s, speaker in enumerate(truth.speaker_ids):
        for u in range(spec.utterances_per_speaker):
            seconds = rng.uniform(spec.min_seconds, spec.max_seconds)
            length = max(1, int(round(seconds * spec.frame_rate)))
            labels = _phone_walk(rng, spec.transition, length)
            frames = truth.prototypes[labels] * truth.gains[s] + truth.offsets[s]
            if spec.noise_sigma > 0:
                frames = frames + rng.normal(0.0, spec.noise_sigma, frames.shape)
            sequences.append(
                FeatureSequence(
                    utterance_id=f"{speaker}_u{u:03d}",
                    frames=frames.astype(np.float32),
                    speaker_id=speaker,
                    phone_labels=labels,
                ).validate(spec.num_phones)
            )
    return sequences


def _assign_splits(
    sequences: list[FeatureSequence], spec: SyntheticSpec
) -> dict[str, str]:
    """Stratified 80/10/10 per speaker so every speaker appears in train."""
    rng = np.random.default_rng([spec.seed, 2])
    assignment: dict[str, str] = {}
    by_speaker: dict[str, list[str]] = {}
    for seq in sequences:
        by_speaker.setdefault(seq.speaker_id, []).append(seq.utterance_id)
    for speaker in sorted(by_speaker):
        ids = sorted(by_speaker[speaker])
        order = rng.permutation(len(ids))
        n = len(ids)
        n_valid = max(1, n // 10) if n >= 3 else 0
        n_test = max(1, n // 10) if n >= 3 else 0
        for rank, pos in enumerate(order):
            if rank < n_valid:
                assignment[ids[pos]] = "valid"
            elif rank < n_valid + n_test:
                assignment[ids[pos]] = "test"
            else:
                assignment[ids[pos]] = "train"
    return assignment


def generate_synthetic_corpus(spec: SyntheticSpec, out_dir: str | Path) -> CorpusManifest:
    """Write feature/label files plus manifest.jsonl under out_dir."""
    out_dir = Path(out_dir)
    feat_dir = out_dir / "features"
    label_dir = out_dir / "labels"
    feat_dir.mkdir(parents=True, exist_ok=True)
    label_dir.mkdir(parents=True, exist_ok=True)

    sequences = synthesize_utterances(spec)
    splits = _assign_splits(sequences, spec)
    entries = []
    for seq in sequences:
        feat_rel = f"features/{seq.utterance_id}.fmat"
        label_rel = f"labels/{seq.utterance_id}.lvec"
        write_features(out_dir / feat_rel, seq.frames)
        write_labels(out_dir / label_rel, seq.phone_labels)
        entries.append(
            ManifestEntry(
                utterance_id=seq.utterance_id,
                features=feat_rel,
                speaker_id=seq.speaker_id,
                labels=label_rel,
                split=splits[seq.utterance_id],
            )
        )
    manifest = CorpusManifest(entries=entries, root=out_dir)
    manifest.save(out_dir / "manifest.jsonl")
    return manifest


def load_sequences(
    manifest: CorpusManifest, split: str | None = None
) -> list[FeatureSequence]:
    """Load the feature (and label) files for a manifest split, manifest order."""
    from .io import read_features, read_labels

    sequences = []
    for entry in manifest.split_entries(split):
        frames = read_features(manifest.feature_path(entry))
        labels = None
        lp = manifest.label_path(entry)
        if lp is not None:
            labels = read_labels(lp)
        sequences.append(
            FeatureSequence(entry.utterance_id, frames, entry.speaker_id, labels)
        )
    return sequences


def normalize_sequences(sequences: list[FeatureSequence]) -> list[FeatureSequence]:
    """Per-utterance mean/variance normalization (optional, off by default)."""
    out = []
    for seq in sequences:
        frames = np.asarray(seq.frames, dtype=np.float64)
        mean = frames.mean(axis=0, keepdims=True)
        std = frames.std(axis=0, keepdims=True)
        frames = (frames - mean) / np.maximum(std, 1e-8)
        out.append(
            FeatureSequence(
                seq.utterance_id,
                frames.astype(np.float32),
                seq.speaker_id,
                seq.phone_labels,
            )
        )
    return out
