"""Dense float64 matrix primitives used by every analysis module.

Thin contracts over LAPACK (via numpy.linalg) plus the small helpers the
similarity measures need: column centering, PSD inverse square root, and
Frobenius norms. All functions are pure, take and return float64 arrays,
and never mutate their inputs, so they are safe to call concurrently.

Similarity and CCA computations are ill-conditioned; analysis code therefore
runs in 64-bit throughout even though model training runs in 32-bit.
"""

from __future__ import annotations

import numpy as np

from .errors import (
    DegenerateInputError,
    InvalidInputError,
    NotPSDError,
    NumericalError,
    ShapeError,
)


def ensure_matrix(a: np.ndarray, name: str = "matrix") -> np.ndarray:
    """Validate and coerce to a finite 2-D float64 array."""
    out = np.asarray(a, dtype=np.float64)
    if out.ndim != 2:
        raise ShapeError(f"{name} must be 2-D, got shape {out.shape}")
    if not np.all(np.isfinite(out)):
        raise InvalidInputError(f"{name} contains non-finite entries")
    return out


def svd(a: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Thin SVD: a == u @ diag(s) @ vt with orthonormal columns in u and v.

    Singular values come back sorted descending and non-negative.
    Raises InvalidInputError on non-finite input and NumericalError if the
    underlying iteration fails to converge.
    """
    a = ensure_matrix(a)
    try:
        u, s, vt = np.linalg.svd(a, full_matrices=False)
    except np.linalg.LinAlgError as exc:
        raise NumericalError(f"SVD did not converge: {exc}") from exc
    return u, s, vt


def eigh_sym(a: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Eigendecomposition of a symmetric matrix, eigenvalues ascending.

    The input is symmetrized as (A + A^T)/2 first to absorb round-off
    asymmetry; callers relying on that contract may pass nearly-symmetric
    matrices.
    """
    a = ensure_matrix(a)
    if a.shape[0] != a.shape[1]:
        raise ShapeError(f"expected square matrix, got {a.shape}")
    sym = 0.5 * (a + a.T)
    try:
        w, v = np.linalg.eigh(sym)
    except np.linalg.LinAlgError as exc:
        raise NumericalError(f"eigendecomposition failed: {exc}") from exc
    return w, v


def inv_sqrt_psd(a: np.ndarray, ridge: float = 0.0) -> np.ndarray:
    """(A + ridge*I)^(-1/2) for symmetric PSD A via eigendecomposition.

    Eigenvalues are floored at `ridge`. With ridge == 0, exactly-zero
    eigenvalues are pseudo-inverted (mapped to 0) instead of producing
    infinities. An eigenvalue below -1e-8 * ||A|| means the input was not
    PSD to begin with and raises NotPSDError.
    """
    if ridge < 0:
        raise InvalidInputError(f"ridge must be >= 0, got {ridge}")
    w, v = eigh_sym(a)
    scale = float(np.max(np.abs(w))) if w.size else 0.0
    if w.size and w[0] < -1e-8 * max(scale, 1.0):
        raise NotPSDError(f"matrix has negative eigenvalue {w[0]:.3e}")
    w = np.maximum(w + ridge, ridge)
    # With ridge == 0 the floor can leave exact zeros; pseudo-invert those.
    inv_root = np.where(w > 0.0, 1.0 / np.sqrt(np.maximum(w, 1e-300)), 0.0)
    return (v * inv_root) @ v.T


def center_columns(a: np.ndarray) -> np.ndarray:
    """Subtract each column's mean. Requires at least 2 rows."""
    a = ensure_matrix(a)
    if a.shape[0] < 2:
        raise DegenerateInputError(
            f"column centering needs >= 2 rows, got {a.shape[0]}"
        )
    return a - a.mean(axis=0, keepdims=True)


def frobenius(a: np.ndarray) -> float:
    """Frobenius norm."""
    return float(np.linalg.norm(np.asarray(a, dtype=np.float64)))
