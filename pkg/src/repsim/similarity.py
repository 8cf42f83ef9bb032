"""Representation-level similarity: frame pooling, linear CKA, SVCCA, heatmaps.

Two representations are comparable only if they were pooled from the same
input frames in the same order; pooling provenance (manifest id + pooling
seed) travels with every RepresentationMatrix and is enforced on use.

linear CKA of column-centered X, Y:

    ||Y^T X||_F^2 / (||X^T X||_F * ||Y^T Y||_F)

invariant to orthogonal transforms and isotropic scaling of either side.

SVCCA: center, truncate each matrix to the singular directions holding
`variance_keep` of the squared-singular-value energy, then run CCA on the
projections via whitened SVD; the score is the mean canonical correlation.
"""

from __future__ import annotations

import csv
import json
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import (
    AlignmentError,
    DegenerateInputError,
    DegenerateVarianceError,
    InvalidInputError,
)
from .numkernel import center_columns, ensure_matrix, frobenius, inv_sqrt_psd, svd

MEASURES = ("lincka", "svcca")


@dataclass(frozen=True)
class Provenance:
    model: str
    checkpoint_id: str
    manifest_id: str
    pool_seed: int

    def alignment_key(self) -> tuple[str, int]:
        return (self.manifest_id, self.pool_seed)


@dataclass
class RepresentationMatrix:
    """Pooled (n frames, d dims) representation with pooling provenance."""

    data: np.ndarray
    provenance: Provenance | None = None

    def __post_init__(self) -> None:
        self.data = ensure_matrix(self.data, "representation")

    @property
    def n(self) -> int:
        return self.data.shape[0]

    @property
    def d(self) -> int:
        return self.data.shape[1]


@dataclass(frozen=True)
class SimilarityScore:
    value: float
    measure: str

    def __post_init__(self) -> None:
        if not -1e-9 <= self.value <= 1.0 + 1e-9:
            raise InvalidInputError(f"similarity {self.value} outside [0, 1]")


def pooled_indices(total: int, max_frames: int, seed: int) -> np.ndarray:
    """The sorted frame positions a given seed samples; reusable across models."""
    if total <= max_frames:
        return np.arange(total)
    rng = np.random.default_rng(seed)
    idx = rng.choice(total, size=max_frames, replace=False)
    idx.sort()
    return idx


def pool_frames(
    per_utterance: list[np.ndarray],
    max_frames: int = 20000,
    seed: int = 0,
    provenance: Provenance | None = None,
) -> RepresentationMatrix:
    """Concatenate utterance frames in order, then subsample to max_frames."""
    if not per_utterance:
        raise DegenerateInputError("no utterances to pool")
    stacked = np.concatenate([np.asarray(m, dtype=np.float64) for m in per_utterance], axis=0)
    if stacked.shape[0] < 2:
        raise DegenerateInputError("pooling needs at least 2 frames")
    idx = pooled_indices(stacked.shape[0], max_frames, seed)
    return RepresentationMatrix(data=stacked[idx], provenance=provenance)


def _aligned(x: RepresentationMatrix, y: RepresentationMatrix) -> None:
    if x.n != y.n:
        raise AlignmentError(f"row counts differ: {x.n} vs {y.n}")
    if x.n < 2:
        raise DegenerateInputError("similarity needs at least 2 pooled frames")
    if x.provenance is not None and y.provenance is not None:
        if x.provenance.alignment_key() != y.provenance.alignment_key():
            raise AlignmentError(
                f"pooling provenance mismatch: {x.provenance.alignment_key()} "
                f"vs {y.provenance.alignment_key()}"
            )


def lincka(x: RepresentationMatrix, y: RepresentationMatrix) -> SimilarityScore:
    """Linear centered kernel alignment of two aligned representations."""
    _aligned(x, y)
    xc = center_columns(x.data)
    yc = center_columns(y.data)
    norm_x = frobenius(xc.T @ xc)
    norm_y = frobenius(yc.T @ yc)
    if norm_x == 0.0 or norm_y == 0.0:
        raise DegenerateVarianceError("zero-variance representation")
    value = frobenius(yc.T @ xc) ** 2 / (norm_x * norm_y)
    return SimilarityScore(value=min(float(value), 1.0 + 1e-12), measure="lincka")


def _truncate(data: np.ndarray, variance_keep: float) -> np.ndarray:
    """Project onto the leading singular directions holding variance_keep energy."""
    u, s, vt = svd(data)
    energy = s**2
    total = energy.sum()
    if total <= 0.0:
        raise DegenerateVarianceError("zero-variance representation")
    cum = np.cumsum(energy) / total
    k = int(np.searchsorted(cum, variance_keep - 1e-12) + 1)
    k = min(k, s.size)
    return data @ vt[:k].T


def canonical_correlations(
    xp: np.ndarray, yp: np.ndarray, ridge: float = 1e-6
) -> np.ndarray:
    """CCA via whitened cross-covariance SVD, descending correlations.

    Inputs must be column-centered; ridge regularizes the diagonal blocks.
    """
    n = xp.shape[0]
    sxx = xp.T @ xp / (n - 1)
    syy = yp.T @ yp / (n - 1)
    sxy = xp.T @ yp / (n - 1)
    wx = inv_sqrt_psd(sxx, ridge)
    wy = inv_sqrt_psd(syy, ridge)
    _, rho, _ = svd(wx @ sxy @ wy)
    return np.clip(rho, 0.0, 1.0)


@dataclass
class SvccaDetails:
    """Intermediate SVCCA quantities, exposed for oracle cross-checks."""

    correlations: np.ndarray  # descending, length min(kept_x, kept_y)
    x_projection: np.ndarray  # centered, truncated, unit-mean-variance
    y_projection: np.ndarray
    ridge: float


def svcca_details(
    x: RepresentationMatrix,
    y: RepresentationMatrix,
    variance_keep: float = 0.99,
    ridge: float = 1e-6,
) -> SvccaDetails:
    """The SVCCA computation with its projections and correlations exposed.

    Projections are rescaled to unit mean variance before the CCA so that
    the ridge acts relative to the data scale; canonical correlations are
    invariant to that rescaling.
    """
    _aligned(x, y)
    if not 0.0 < variance_keep <= 1.0:
        raise InvalidInputError(f"variance_keep must be in (0, 1], got {variance_keep}")
    xp = _truncate(center_columns(x.data), variance_keep)
    yp = _truncate(center_columns(y.data), variance_keep)
    k = min(xp.shape[1], yp.shape[1])
    if k == 0:
        raise DegenerateInputError("no components survive truncation")
    if x.n <= max(xp.shape[1], yp.shape[1]):
        raise DegenerateInputError(
            f"need more pooled frames ({x.n}) than kept components"
        )
    xp = xp / np.sqrt(np.mean(xp * xp))
    yp = yp / np.sqrt(np.mean(yp * yp))
    rho = canonical_correlations(xp, yp, ridge)
    return SvccaDetails(
        correlations=rho[:k], x_projection=xp, y_projection=yp, ridge=ridge
    )


def svcca(
    x: RepresentationMatrix,
    y: RepresentationMatrix,
    variance_keep: float = 0.99,
    ridge: float = 1e-6,
) -> SimilarityScore:
    """Mean canonical correlation between dominant singular subspaces."""
    details = svcca_details(x, y, variance_keep, ridge)
    return SimilarityScore(value=float(details.correlations.mean()), measure="svcca")


def compute_similarity(
    x: RepresentationMatrix,
    y: RepresentationMatrix,
    measure: str = "lincka",
    **kwargs,
) -> SimilarityScore:
    if measure == "lincka":
        return lincka(x, y)
    if measure == "svcca":
        return svcca(x, y, **kwargs)
    raise InvalidInputError(f"unknown measure {measure!r}; known: {MEASURES}")


@dataclass
class Heatmap:
    """Symmetric model-by-model similarity grid."""

    models: list[str]
    values: np.ndarray
    measure: str
    manifest_id: str = ""

    def __post_init__(self) -> None:
        self.values = np.asarray(self.values, dtype=np.float64)
        k = len(self.models)
        if self.values.shape != (k, k):
            raise InvalidInputError(
                f"heatmap values {self.values.shape} != ({k}, {k})"
            )

    def check(self) -> None:
        if np.max(np.abs(self.values - self.values.T), initial=0.0) > 1e-9:
            raise InvalidInputError("heatmap is not symmetric")
        if np.max(np.abs(np.diag(self.values) - 1.0), initial=0.0) > 1e-6:
            raise InvalidInputError("heatmap diagonal deviates from 1")

    def to_csv(self, path: str | Path, header_lines: list[str] | None = None) -> None:
        with open(path, "w", newline="") as fh:
            for line in header_lines or []:
                fh.write(f"# {line}\n")
            writer = csv.writer(fh)
            writer.writerow(["model"] + self.models)
            for name, row in zip(self.models, self.values):
                writer.writerow([name] + [f"{v:.6f}" for v in row])

    def to_json(self, path: str | Path, provenance: dict | None = None) -> None:
        payload = {
            "measure": self.measure,
            "manifest_id": self.manifest_id,
            "models": self.models,
            "values": [[round(float(v), 6) for v in row] for row in self.values],
        }
        if provenance:
            payload["provenance"] = provenance
        Path(path).write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n")


def build_heatmap(
    named: list[tuple[str, RepresentationMatrix]],
    measure: str = "lincka",
    jobs: int | None = None,
    **kwargs,
) -> Heatmap:
    """All-pairs similarity over a model list; each unordered pair computed once."""
    if not named:
        raise DegenerateInputError("no representations given")
    names = [n for n, _ in named]
    reps = [r for _, r in named]
    for r in reps[1:]:
        _aligned(reps[0], r)
    k = len(reps)
    values = np.zeros((k, k))
    pairs = [(i, j) for i in range(k) for j in range(i, k)]

    def one(pair: tuple[int, int]) -> float:
        i, j = pair
        if i == j:
            # self-similarity is exactly 1 for both measures; skip the
            # estimator and its ridge/round-off bias on the diagonal
            return 1.0
        return compute_similarity(reps[i], reps[j], measure, **kwargs).value

    if jobs and jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(one, pairs))
    else:
        results = [one(p) for p in pairs]
    for (i, j), v in zip(pairs, results):
        values[i, j] = v
        values[j, i] = v
    manifest_id = ""
    if reps[0].provenance is not None:
        manifest_id = reps[0].provenance.manifest_id
    return Heatmap(models=names, values=values, measure=measure, manifest_id=manifest_id)
