"""Corpus handling: WAV ingestion, log-Mel features, synthetic data, file formats."""

from .io import (
    CorpusManifest,
    ManifestEntry,
    read_features,
    read_labels,
    write_features,
    write_labels,
)
from .logmel import hz_to_mel, log_mel, mel_filterbank, mel_to_hz
from .synthetic import (
    FEATURE_DIM,
    FeatureSequence,
    SyntheticSpec,
    SyntheticTruth,
    default_transition,
    generate_synthetic_corpus,
    load_sequences,
    normalize_sequences,
    synthesize_utterances,
    synthetic_truth,
)
from .wav import read_wav, write_wav

__all__ = [
    "CorpusManifest",
    "ManifestEntry",
    "read_features",
    "read_labels",
    "write_features",
    "write_labels",
    "hz_to_mel",
    "mel_to_hz",
    "mel_filterbank",
    "log_mel",
    "FEATURE_DIM",
    "FeatureSequence",
    "SyntheticSpec",
    "SyntheticTruth",
    "default_transition",
    "generate_synthetic_corpus",
    "load_sequences",
    "normalize_sequences",
    "synthesize_utterances",
    "synthetic_truth",
    "read_wav",
    "write_wav",
]
