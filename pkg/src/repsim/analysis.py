"""Statistical layer: Pearson correlation with significance, the
checkpoint-sweep correlation study, and the data-scaling study.

The two-tailed p-value for a correlation r over n points uses the exact
Student-t relation t = r * sqrt((n-2) / (1 - r^2)) with n-2 degrees of
freedom, evaluated through the regularized incomplete beta function
(continued-fraction form, no external dependency).
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import (
    DegenerateVarianceError,
    InsufficientDataError,
    InvalidInputError,
    ShapeError,
)
from .probe import PHONE, SPEAKER, ProbeResult, phone_probe_splits, run_probe, speaker_probe_splits
from .similarity import Provenance, RepresentationMatrix, lincka, pool_frames

SIGNIFICANCE_LEVEL = 0.05


def pearson_r(xs: np.ndarray, ys: np.ndarray) -> float:
    """Sample Pearson correlation coefficient."""
    x = np.asarray(xs, dtype=np.float64)
    y = np.asarray(ys, dtype=np.float64)
    if x.ndim != 1 or y.ndim != 1 or x.shape != y.shape:
        raise ShapeError(f"expected equal-length vectors, got {x.shape} and {y.shape}")
    if x.size < 3:
        raise InsufficientDataError(f"need n >= 3, got {x.size}")
    dx = x - x.mean()
    dy = y - y.mean()
    sxx = float(np.sum(dx * dx))
    syy = float(np.sum(dy * dy))
    if sxx == 0.0 or syy == 0.0:
        raise DegenerateVarianceError("constant input vector")
    r = float(np.sum(dx * dy) / math.sqrt(sxx * syy))
    # round-off can overshoot the mathematical bound by an ulp
    return min(1.0, max(-1.0, r))


def _betacf(a: float, b: float, x: float) -> float:
    """Continued fraction for the regularized incomplete beta (Lentz)."""
    tiny = 1e-300
    qab, qap, qam = a + b, a + 1.0, a - 1.0
    c = 1.0
    d = 1.0 - qab * x / qap
    if abs(d) < tiny:
        d = tiny
    d = 1.0 / d
    h = d
    for m in range(1, 300):
        m2 = 2 * m
        aa = m * (b - m) * x / ((qam + m2) * (a + m2))
        d = 1.0 + aa * d
        if abs(d) < tiny:
            d = tiny
        c = 1.0 + aa / c
        if abs(c) < tiny:
            c = tiny
        d = 1.0 / d
        h *= d * c
        aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2))
        d = 1.0 + aa * d
        if abs(d) < tiny:
            d = tiny
        c = 1.0 + aa / c
        if abs(c) < tiny:
            c = tiny
        d = 1.0 / d
        delta = d * c
        h *= delta
        if abs(delta - 1.0) < 3e-15:
            return h
    raise InvalidInputError("incomplete beta continued fraction did not converge")


def betainc(a: float, b: float, x: float) -> float:
    """Regularized incomplete beta I_x(a, b)."""
    if not 0.0 <= x <= 1.0:
        raise InvalidInputError(f"x must be in [0, 1], got {x}")
    if x == 0.0:
        return 0.0
    if x == 1.0:
        return 1.0
    ln_bt = (
        math.lgamma(a + b)
        - math.lgamma(a)
        - math.lgamma(b)
        + a * math.log(x)
        + b * math.log1p(-x)
    )
    bt = math.exp(ln_bt)
    if x < (a + 1.0) / (a + b + 2.0):
        return bt * _betacf(a, b, x) / a
    return 1.0 - bt * _betacf(b, a, 1.0 - x) / b


def significance(r: float, n: int) -> float:
    """Two-tailed p-value of a Pearson r under the null of no correlation."""
    if n < 3:
        raise InsufficientDataError(f"need n >= 3, got {n}")
    if not -1.0 <= r <= 1.0:
        raise InvalidInputError(f"|r| must be <= 1, got {r}")
    if abs(r) == 1.0:
        return 0.0
    df = n - 2
    t_sq = df * r * r / (1.0 - r * r)
    return betainc(df / 2.0, 0.5, df / (df + t_sq))


@dataclass(frozen=True)
class CorrelationResult:
    r: float
    p_value: float
    n: int

    @property
    def significant(self) -> bool:
        return self.p_value < SIGNIFICANCE_LEVEL


def correlate(xs: np.ndarray, ys: np.ndarray) -> CorrelationResult:
    r = pearson_r(xs, ys)
    return CorrelationResult(r=r, p_value=significance(r, len(xs)), n=len(xs))


@dataclass
class SweepPoint:
    checkpoint_id: str
    loss: float
    phone_error: float
    speaker_error: float

    def __post_init__(self) -> None:
        if not np.isfinite(self.loss):
            raise InvalidInputError("sweep point with non-finite loss")
        for e in (self.phone_error, self.speaker_error):
            if not 0.0 <= e <= 1.0:
                raise InvalidInputError(f"error rate {e} outside [0, 1]")


def correlate_sweep(points: list[SweepPoint]) -> dict[str, CorrelationResult]:
    """Pearson r and significance of loss against each probe error."""
    if len(points) < 3:
        raise InsufficientDataError("need at least 3 sweep points")
    losses = np.array([p.loss for p in points])
    return {
        PHONE: correlate(losses, np.array([p.phone_error for p in points])),
        SPEAKER: correlate(losses, np.array([p.speaker_error for p in points])),
    }


def checkpoint_sweep(
    checkpoints: list,
    sequences: list,
    utt_splits: list[str],
    num_phones: int,
    *,
    probe_seed: int = 0,
    runs: int = 5,
    probe_epochs: int = 10,
    probe_lr: float = 1e-4,
    jobs: int | None = None,
) -> tuple[list[SweepPoint], dict[str, CorrelationResult]]:
    """Extract + probe every checkpoint, then correlate loss with errors.

    Points come back sorted by ascending loss. Deterministic for a fixed
    checkpoint series and probe_seed.
    """
    from .pretrain.extract import extract_representations, model_from_checkpoint

    labels = [s.phone_labels for s in sequences]
    speakers = [s.speaker_id for s in sequences]
    points = []
    for ckpt in checkpoints:
        model = model_from_checkpoint(ckpt)
        reps = extract_representations(model, sequences)
        phone = run_probe(
            PHONE,
            phone_probe_splits(reps, labels, utt_splits, num_phones, seed=probe_seed),
            base_seed=probe_seed,
            runs=runs,
            epochs=probe_epochs,
            lr=probe_lr,
            jobs=jobs,
        )
        speaker = run_probe(
            SPEAKER,
            speaker_probe_splits(reps, speakers, utt_splits),
            base_seed=probe_seed,
            runs=runs,
            epochs=probe_epochs,
            lr=probe_lr,
            jobs=jobs,
        )
        points.append(
            SweepPoint(
                checkpoint_id=ckpt.checkpoint_id,
                loss=float(ckpt.running_loss),
                phone_error=phone.error_rate,
                speaker_error=speaker.error_rate,
            )
        )
    points.sort(key=lambda p: p.loss)
    return points, correlate_sweep(points)


def write_sweep_table(points: list[SweepPoint], path: str | Path, header_lines=None) -> None:
    with open(path, "w", newline="") as fh:
        for line in header_lines or []:
            fh.write(f"# {line}\n")
        writer = csv.writer(fh)
        writer.writerow(["checkpoint", "loss", "phone_err", "speaker_err"])
        for p in points:
            writer.writerow(
                [p.checkpoint_id, f"{p.loss:.8f}", f"{p.phone_error:.6f}", f"{p.speaker_error:.6f}"]
            )


def read_sweep_table(path: str | Path) -> list[SweepPoint]:
    points = []
    with open(path, "r", newline="") as fh:
        rows = [r for r in csv.reader(line for line in fh if not line.startswith("#"))]
    if not rows or rows[0][:4] != ["checkpoint", "loss", "phone_err", "speaker_err"]:
        raise InvalidInputError(f"{path}: not a sweep table")
    for row in rows[1:]:
        points.append(
            SweepPoint(
                checkpoint_id=row[0],
                loss=float(row[1]),
                phone_error=float(row[2]),
                speaker_error=float(row[3]),
            )
        )
    return points


def write_correlation_summary(
    results: dict[str, dict[str, CorrelationResult]], path: str | Path, header_lines=None
) -> None:
    """results: model name -> task -> CorrelationResult."""
    with open(path, "w", newline="") as fh:
        for line in header_lines or []:
            fh.write(f"# {line}\n")
        writer = csv.writer(fh)
        writer.writerow(["model", "task", "r", "p", "n", "significant"])
        for model in results:
            for task in (PHONE, SPEAKER):
                res = results[model][task]
                writer.writerow(
                    [model, task, f"{res.r:.6f}", f"{res.p_value:.6e}", res.n,
                     str(res.significant).lower()]
                )


@dataclass
class ScalingResult:
    """One model's data-scaling study: similarity to the reference model plus
    probe errors per corpus size."""

    model: str
    labels: list[str]
    data_hours: list[float]
    similarities: list[float]
    phone_errors: list[float]
    speaker_errors: list[float]
    similarity_decreasing: bool = False

    def finalize(self) -> "ScalingResult":
        sims = self.similarities
        self.similarity_decreasing = all(b <= a for a, b in zip(sims, sims[1:]))
        return self


def data_scaling_study(
    config,
    sized_corpora: list[tuple[str, list]],
    reference_sequences: list,
    probe_sequences: list,
    utt_splits: list[str],
    num_phones: int,
    *,
    epochs: int = 10,
    batch_size: int = 32,
    lr: float = 1e-3,
    seed: int = 0,
    max_frames: int = 20000,
    pool_seed: int = 0,
    probe_seed: int = 0,
    runs: int = 5,
    probe_epochs: int = 10,
    probe_lr: float = 1e-4,
) -> ScalingResult:
    """Train one model per corpus size; compare each against the reference model.

    Similarity uses linear CKA over a shared pooling of the probe corpus, so
    every size's representation matrix is aligned frame-for-frame with the
    reference model's.
    """
    from .pretrain.extract import extract_representations
    from .pretrain.trainer import data_hours_tag, train

    sizes = [sum(np.asarray(s.frames).shape[0] for s in seqs) for _, seqs in sized_corpora]
    if any(b <= a for a, b in zip(sizes, sizes[1:])):
        raise InvalidInputError("corpus sizes must be strictly increasing")

    labels = [s.phone_labels for s in probe_sequences]
    speakers = [s.speaker_id for s in probe_sequences]

    def pooled(model, tag: str) -> RepresentationMatrix:
        reps = extract_representations(model, probe_sequences)
        prov = Provenance(
            model=config.name, checkpoint_id=tag, manifest_id="scaling-probe", pool_seed=pool_seed
        )
        return pool_frames(reps, max_frames=max_frames, seed=pool_seed, provenance=prov)

    ref_result = train(
        config, reference_sequences, epochs=epochs, batch_size=batch_size, lr=lr,
        seed=seed, keep_model=True,
    )
    ref_matrix = pooled(ref_result.model, "reference")

    result = ScalingResult(
        model=config.name, labels=[], data_hours=[], similarities=[],
        phone_errors=[], speaker_errors=[],
    )
    for label, seqs in sized_corpora:
        run = train(
            config, seqs, epochs=epochs, batch_size=batch_size, lr=lr,
            seed=seed, keep_model=True,
        )
        matrix = pooled(run.model, label)
        sim = lincka(matrix, ref_matrix).value
        reps = extract_representations(run.model, probe_sequences)
        phone = run_probe(
            PHONE,
            phone_probe_splits(reps, labels, utt_splits, num_phones, seed=probe_seed),
            base_seed=probe_seed, runs=runs, epochs=probe_epochs, lr=probe_lr,
        )
        speaker = run_probe(
            SPEAKER,
            speaker_probe_splits(reps, speakers, utt_splits),
            base_seed=probe_seed, runs=runs, epochs=probe_epochs, lr=probe_lr,
        )
        result.labels.append(label)
        result.data_hours.append(data_hours_tag(seqs))
        result.similarities.append(sim)
        result.phone_errors.append(phone.error_rate)
        result.speaker_errors.append(speaker.error_rate)
    return result.finalize()


def write_scaling_tables(
    results: list[ScalingResult], sim_path: str | Path, err_path: str | Path, header_lines=None
) -> None:
    if not results:
        raise InvalidInputError("no scaling results")
    labels = results[0].labels
    with open(sim_path, "w", newline="") as fh:
        for line in header_lines or []:
            fh.write(f"# {line}\n")
        writer = csv.writer(fh)
        writer.writerow(["model"] + labels + ["monotone_decreasing"])
        for res in results:
            writer.writerow(
                [res.model]
                + [f"{v:.6f}" for v in res.similarities]
                + [str(res.similarity_decreasing).lower()]
            )
    with open(err_path, "w", newline="") as fh:
        for line in header_lines or []:
            fh.write(f"# {line}\n")
        writer = csv.writer(fh)
        writer.writerow(["model", "task"] + labels)
        for res in results:
            writer.writerow([res.model, PHONE] + [f"{v:.6f}" for v in res.phone_errors])
            writer.writerow([res.model, SPEAKER] + [f"{v:.6f}" for v in res.speaker_errors])
