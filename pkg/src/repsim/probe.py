"""Linear probing of frozen representations: frame-level phone and
utterance-level speaker classification.

The classifier is multinomial logistic regression (one linear layer +
softmax cross-entropy) trained with plain SGD at a fixed learning rate;
the epoch with the best validation error wins. Reported results average
five seeded runs. Probes never touch representation parameters.
"""

from __future__ import annotations

import json
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import (
    ContractError,
    DegenerateTaskError,
    InvalidInputError,
    MissingLabelError,
)

PHONE, SPEAKER = "phone", "speaker"


@dataclass
class ProbeDataset:
    x: np.ndarray  # (n, d) float64 design matrix
    y: np.ndarray  # (n,) int labels
    num_classes: int

    def __post_init__(self) -> None:
        self.x = np.asarray(self.x, dtype=np.float64)
        self.y = np.asarray(self.y, dtype=np.int64)
        if self.x.ndim != 2 or self.y.shape != (self.x.shape[0],):
            raise InvalidInputError(
                f"design/label mismatch: {self.x.shape} vs {self.y.shape}"
            )
        if self.y.size and (self.y.min() < 0 or self.y.max() >= self.num_classes):
            raise InvalidInputError("label id outside [0, num_classes)")


@dataclass
class ProbeResult:
    task: str
    error_rate: float  # mean over runs
    error_std: float
    seeds: list[int]
    per_run: list[float]
    split_sizes: dict[str, int] = field(default_factory=dict)

    def to_report(self, model: str = "", checkpoint: str = "") -> dict:
        return {
            "task": self.task,
            "model": model,
            "checkpoint": checkpoint,
            "error_rate_mean": self.error_rate,
            "error_rate_std": self.error_std,
            "seeds": self.seeds,
            "per_run": self.per_run,
            "split_sizes": self.split_sizes,
        }


@dataclass
class LinearClassifier:
    weights: np.ndarray  # (d, C)
    bias: np.ndarray  # (C,)
    best_epoch: int = 0

    def predict(self, x: np.ndarray) -> np.ndarray:
        logits = x @ self.weights + self.bias
        # argmax breaks ties toward the lowest class index
        return np.argmax(logits, axis=1)

    def error_rate(self, data: ProbeDataset) -> float:
        return float(np.mean(self.predict(data.x) != data.y))


def fit_logistic(
    train: ProbeDataset,
    valid: ProbeDataset,
    epochs: int = 10,
    batch_size: int = 32,
    lr: float = 1e-4,
    seed: int = 0,
) -> LinearClassifier:
    """SGD-trained multinomial logistic regression, best-validation epoch."""
    if train.x.shape[0] == 0:
        raise DegenerateTaskError("empty training set")
    if np.unique(train.y).size < 2:
        raise DegenerateTaskError("training set has a single class")
    n, d = train.x.shape
    C = train.num_classes
    W = np.zeros((d, C))
    b = np.zeros(C)
    rng = np.random.default_rng([seed, 7])
    best = LinearClassifier(W.copy(), b.copy(), best_epoch=0)
    best_err = np.inf
    track_valid = valid.x.shape[0] > 0
    for epoch in range(1, epochs + 1):
        order = rng.permutation(n)
        for start in range(0, n, batch_size):
            idx = order[start : start + batch_size]
            xb, yb = train.x[idx], train.y[idx]
            logits = xb @ W + b
            logits -= logits.max(axis=1, keepdims=True)
            p = np.exp(logits)
            p /= p.sum(axis=1, keepdims=True)
            p[np.arange(idx.size), yb] -= 1.0
            p /= idx.size
            W -= lr * (xb.T @ p)
            b -= lr * p.sum(axis=0)
        if track_valid:
            err = LinearClassifier(W, b).error_rate(valid)
            if err < best_err:
                best_err = err
                best = LinearClassifier(W.copy(), b.copy(), best_epoch=epoch)
        else:
            best = LinearClassifier(W.copy(), b.copy(), best_epoch=epoch)
    return best


def eval_frame_probe(clf: LinearClassifier, test: ProbeDataset) -> float:
    """Fraction of frames whose predicted phone differs from the label."""
    if test.y.size == 0:
        raise MissingLabelError("test set carries no frame labels")
    return clf.error_rate(test)


def eval_utterance_probe(
    clf: LinearClassifier, per_utterance: list[np.ndarray], labels: np.ndarray
) -> float:
    """Mean-pool each utterance, classify, report utterance-level error."""
    if len(per_utterance) != len(labels):
        raise InvalidInputError("one label per utterance required")
    pooled = np.stack([np.asarray(r, dtype=np.float64).mean(axis=0) for r in per_utterance])
    preds = clf.predict(pooled)
    return float(np.mean(preds != np.asarray(labels)))


def mean_pool(per_utterance: list[np.ndarray]) -> np.ndarray:
    return np.stack([np.asarray(r, dtype=np.float64).mean(axis=0) for r in per_utterance])


@dataclass
class ProbeSplits:
    train: ProbeDataset
    valid: ProbeDataset
    test: ProbeDataset

    def sizes(self) -> dict[str, int]:
        return {
            "train": int(self.train.x.shape[0]),
            "valid": int(self.valid.x.shape[0]),
            "test": int(self.test.x.shape[0]),
        }


def phone_probe_splits(
    reps: list[np.ndarray],
    frame_labels: list[np.ndarray | None],
    utt_splits: list[str],
    num_phones: int,
    seed: int = 0,
) -> ProbeSplits:
    """Frame-level task: manifest test split held out, remainder 90/10."""
    for lab in frame_labels:
        if lab is None:
            raise MissingLabelError("phone probing requires frame labels")
    rest_idx = [i for i, s in enumerate(utt_splits) if s != "test"]
    test_idx = [i for i, s in enumerate(utt_splits) if s == "test"]
    rng = np.random.default_rng([seed, 8])
    order = rng.permutation(len(rest_idx))
    n_valid = max(1, len(rest_idx) // 10)
    valid_idx = [rest_idx[i] for i in order[:n_valid]]
    train_idx = [rest_idx[i] for i in order[n_valid:]]

    def gather(idx: list[int]) -> ProbeDataset:
        if not idx:
            return ProbeDataset(np.zeros((0, reps[0].shape[1])), np.zeros(0, dtype=int), num_phones)
        x = np.concatenate([np.asarray(reps[i], dtype=np.float64) for i in idx])
        y = np.concatenate([np.asarray(frame_labels[i]) for i in idx])
        return ProbeDataset(x, y, num_phones)

    return ProbeSplits(gather(train_idx), gather(valid_idx), gather(test_idx))


def speaker_probe_splits(
    reps: list[np.ndarray],
    speakers: list[str],
    utt_splits: list[str],
) -> ProbeSplits:
    """Utterance-level task over mean-pooled representations."""
    classes = sorted(set(speakers))
    class_of = {s: i for i, s in enumerate(classes)}
    pooled = mean_pool(reps)
    y = np.array([class_of[s] for s in speakers])
    idx = {name: [i for i, s in enumerate(utt_splits) if s == name] for name in ("train", "valid", "test")}
    train_speakers = {speakers[i] for i in idx["train"]}
    missing = {speakers[i] for i in idx["test"]} - train_speakers
    if missing:
        raise ContractError(f"test speakers unseen in training: {sorted(missing)}")

    def gather(which: str) -> ProbeDataset:
        sel = idx[which]
        return ProbeDataset(pooled[sel], y[sel], len(classes))

    return ProbeSplits(gather("train"), gather("valid"), gather("test"))


def run_probe(
    task: str,
    splits: ProbeSplits,
    base_seed: int = 0,
    runs: int = 5,
    epochs: int = 10,
    batch_size: int = 32,
    lr: float = 1e-4,
    jobs: int | None = None,
) -> ProbeResult:
    """Mean test error over `runs` seeded trainings (the reported number)."""
    seeds = [base_seed + i for i in range(runs)]
    if splits.test.x.shape[0] == 0:
        raise MissingLabelError("empty test split")

    def one(seed: int) -> float:
        clf = fit_logistic(splits.train, splits.valid, epochs, batch_size, lr, seed)
        return clf.error_rate(splits.test)

    if jobs and jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            errors = list(pool.map(one, seeds))
    else:
        errors = [one(s) for s in seeds]
    return ProbeResult(
        task=task,
        error_rate=float(np.mean(errors)),
        error_std=float(np.std(errors)),
        seeds=seeds,
        per_run=[float(e) for e in errors],
        split_sizes=splits.sizes(),
    )


def write_probe_report(
    path: str | Path, results: list[ProbeResult], model: str = "", checkpoint: str = "",
    provenance: dict | None = None,
) -> None:
    payload = {"results": [r.to_report(model, checkpoint) for r in results]}
    if provenance:
        payload["provenance"] = provenance
    Path(path).write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n")
