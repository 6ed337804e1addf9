"""Dense symmetric linear algebra used throughout the package.

Thin, contract-checked wrappers around NumPy: symmetric eigendecomposition
with a reproducible sign convention, weighted biased covariance, traces,
and a PSD square root for sampling. All functions are pure and accept any
array-like input.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import (
    DimensionMismatchError,
    EmptyInputError,
    NonFiniteError,
    NonSquareError,
    NotSymmetricError,
)

#: Relative symmetry tolerance: max|A - A^T| <= SYMMETRY_RTOL * max|A|.
SYMMETRY_RTOL = 1e-8


@dataclass(frozen=True)
class SymEigen:
    """Eigendecomposition of a symmetric matrix.

    ``eigenvalues`` are sorted descending by signed value; column ``j`` of
    ``eigenvectors`` is the unit eigenvector paired with ``eigenvalues[j]``.
    Each column is oriented so its largest-magnitude entry is positive
    (lowest index wins ties), making the factorization reproducible.
    """

    eigenvalues: np.ndarray
    eigenvectors: np.ndarray

    def reconstruct(self) -> np.ndarray:
        """Return V diag(w) V^T."""
        return (self.eigenvectors * self.eigenvalues) @ self.eigenvectors.T


def _as_square(matrix, name: str = "matrix") -> np.ndarray:
    a = np.asarray(matrix, dtype=float)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise NonSquareError(f"{name} must be square, got shape {a.shape}")
    if not np.all(np.isfinite(a)):
        raise NonFiniteError(f"{name} contains non-finite entries")
    return a


def sym_eigendecompose(matrix) -> SymEigen:
    """Eigendecompose a (numerically) symmetric matrix.

    The input may deviate from exact symmetry by at most ``SYMMETRY_RTOL``
    relative to its largest entry; it is then symmetrized as (A + A^T)/2
    before factorization. Indefinite matrices are fine: eigenvalues are
    reported in descending signed order, negatives included.

    Raises
    ------
    NonSquareError, NonFiniteError, NotSymmetricError
    """
    a = _as_square(matrix)
    scale = np.abs(a).max() if a.size else 0.0
    deviation = np.abs(a - a.T).max() if a.size else 0.0
    if deviation > SYMMETRY_RTOL * max(scale, np.finfo(float).tiny):
        raise NotSymmetricError(
            f"symmetry deviation {deviation:.3e} exceeds {SYMMETRY_RTOL:.0e} * max|A| = "
            f"{SYMMETRY_RTOL * scale:.3e}"
        )
    sym = (a + a.T) / 2.0
    values, vectors = np.linalg.eigh(sym)
    order = np.argsort(values)[::-1]  # descending by signed value
    values = values[order]
    vectors = vectors[:, order]
    # Sign convention: flip each column so its largest-magnitude entry
    # (first occurrence) is positive.
    for j in range(vectors.shape[1]):
        lead = np.argmax(np.abs(vectors[:, j]))
        if vectors[lead, j] < 0:
            vectors[:, j] = -vectors[:, j]
    return SymEigen(eigenvalues=values, eigenvectors=vectors)


def covariance(points, weights=None) -> np.ndarray:
    """Biased (divide-by-total-weight) covariance about the weighted mean.

    Parameters
    ----------
    points : array-like, shape (n, dim)
        At least one point; all rows the same length.
    weights : array-like of nonnegative reals, optional
        Per-point weights with positive sum. Uniform when omitted.
    """
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    if pts.size == 0:
        raise EmptyInputError("covariance requires at least one point")
    if not np.all(np.isfinite(pts)):
        raise NonFiniteError("points contain non-finite entries")
    n = pts.shape[0]
    if weights is None:
        w = np.full(n, 1.0 / n)
    else:
        w = np.asarray(weights, dtype=float)
        if w.shape != (n,):
            raise DimensionMismatchError(f"expected {n} weights, got shape {w.shape}")
        if np.any(w < 0) or not np.all(np.isfinite(w)):
            raise NonFiniteError("weights must be finite and nonnegative")
        total = w.sum()
        if total <= 0:
            raise EmptyInputError("weights must have positive sum")
        w = w / total
    mean = w @ pts
    centered = pts - mean
    return (centered * w[:, None]).T @ centered


def trace(matrix) -> float:
    """Sum of the diagonal of a square matrix."""
    return float(np.trace(_as_square(matrix)))


def psd_sqrt(matrix, tol: float = 1e-10) -> np.ndarray:
    """Symmetric square root of a PSD matrix via eigendecomposition.

    Eigenvalues in [-tol, 0) are treated as exact zeros, so rank-deficient
    matrices factor cleanly. Eigenvalues below -tol raise ValueError.
    """
    eig = sym_eigendecompose(matrix)
    if eig.eigenvalues.size and eig.eigenvalues.min() < -tol:
        raise ValueError(
            f"matrix is not PSD within tolerance: min eigenvalue {eig.eigenvalues.min():.3e}"
        )
    clipped = np.clip(eig.eigenvalues, 0.0, None)
    return (eig.eigenvectors * np.sqrt(clipped)) @ eig.eigenvectors.T
