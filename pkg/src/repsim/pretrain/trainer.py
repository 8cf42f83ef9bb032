"""Training loop: length-bucketed batches, Adam, loss log, checkpoint cadence."""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ..corpus.synthetic import FeatureSequence
from ..errors import DegenerateBatchError, NumericalError
from ..nn.params import adam_step
from .checkpoint import Checkpoint
from .configs import ModelConfig
from .models import Batch, build_model


@dataclass
class LossRow:
    step: int
    epoch: int
    loss: float


@dataclass
class TrainResult:
    config: ModelConfig
    loss_log: list[LossRow]
    checkpoints: list[Checkpoint]
    model: object = None

    def epoch_mean_losses(self) -> dict[int, float]:
        sums: dict[int, list[float]] = {}
        for row in self.loss_log:
            sums.setdefault(row.epoch, []).append(row.loss)
        return {e: float(np.mean(v)) for e, v in sums.items()}

    def save_loss_log(self, path: str | Path) -> None:
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["step", "epoch", "loss"])
            for row in self.loss_log:
                writer.writerow([row.step, row.epoch, f"{row.loss:.8f}"])


def bucket_batches(
    lengths: list[int], batch_size: int, rng: np.random.Generator
) -> list[list[int]]:
    """Group indices of similar length to limit padding, then shuffle groups."""
    order = sorted(range(len(lengths)), key=lambda i: (lengths[i], i))
    groups = [order[i : i + batch_size] for i in range(0, len(order), batch_size)]
    perm = rng.permutation(len(groups))
    return [groups[i] for i in perm]


def sweep_checkpoint_steps(total_steps: int, count: int = 15, burn_in: float = 0.1) -> list[int]:
    """Evenly spaced checkpoint steps after a burn-in fraction of training."""
    start = max(1, int(np.ceil(total_steps * burn_in)))
    steps = np.unique(np.linspace(start, total_steps, count).round().astype(int))
    return [int(s) for s in steps]


def data_hours_tag(sequences: list[FeatureSequence], frame_rate: float = 100.0) -> float:
    total_frames = sum(int(np.asarray(s.frames).shape[0]) for s in sequences)
    return total_frames / frame_rate / 3600.0


def train(
    config: ModelConfig,
    sequences: list[FeatureSequence],
    *,
    epochs: int = 10,
    batch_size: int = 32,
    lr: float = 1e-3,
    seed: int = 0,
    checkpoint_every: int = 0,
    checkpoint_at: list[int] | None = None,
    dtype=np.float32,
    frame_rate: float = 100.0,
    keep_model: bool = False,
) -> TrainResult:
    """Train one model; deterministic given the seed.

    checkpoint_every == 0 snapshots at epoch ends only; checkpoint_at is an
    explicit list of (1-based) global step indices and overrides the cadence.
    """
    if not sequences:
        raise DegenerateBatchError("training split is empty")
    model = build_model(config, seed, dtype)
    frames = [np.asarray(s.frames) for s in sequences]
    lengths = [f.shape[0] for f in frames]
    hours = data_hours_tag(sequences, frame_rate)
    rng = np.random.default_rng([seed, 10])
    explicit = set(checkpoint_at) if checkpoint_at is not None else None

    loss_log: list[LossRow] = []
    checkpoints: list[Checkpoint] = []
    window: list[float] = []
    step = 0

    def snapshot() -> None:
        running = float(np.mean(window)) if window else float("nan")
        checkpoints.append(
            Checkpoint(
                config=config,
                values=model.store.clone_values(),
                step=step,
                running_loss=running,
                data_hours=hours,
            )
        )
        window.clear()

    for epoch in range(1, epochs + 1):
        for batch_idx in bucket_batches(lengths, batch_size, rng):
            batch = Batch.from_sequences([frames[i] for i in batch_idx], dtype)
            step_seed = [seed, 4, step]
            loss, tape = model.loss(batch, step_seed)
            if not np.isfinite(loss):
                raise NumericalError(f"{config.name}: non-finite loss at step {step}")
            grads = model.backward(tape)
            adam_step(model.store, grads, lr=lr)
            step += 1
            loss_log.append(LossRow(step=step, epoch=epoch, loss=float(loss)))
            window.append(float(loss))
            if explicit is not None:
                if step in explicit:
                    snapshot()
            elif checkpoint_every and step % checkpoint_every == 0:
                snapshot()
        if explicit is None and not checkpoint_every:
            snapshot()

    return TrainResult(
        config=config,
        loss_log=loss_log,
        checkpoints=checkpoints,
        model=model if keep_model else None,
    )
