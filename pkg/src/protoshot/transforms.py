"""Post-hoc linear transformations of an embedding space.

Two fitting rules produce the same artifact, an orthonormal projection
onto d selected directions:

* variance-contrast ("est"): eigendirections of between_cov - rho * within_cov,
  keeping the d largest signed eigenvalues. Directions with high
  between-class spread and low within-class spread score highest; the
  difference matrix is generally indefinite, so selected eigenvalues can
  be negative (counted, never hidden).
* principal components ("pca"): eigendirections of the total covariance.

Transforms are fit once on training-split statistics, never on episode
supports: per-episode covariances are far too noisy at few-shot sample
sizes. Applying a transform maps a vector to its coordinates in the
selected basis, so distances in the reduced space never exceed the
originals.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .datasets import MomentSummary
from .errors import DimensionMismatchError, DimensionTooLargeError
from .linalg import sym_eigendecompose

ORTHONORMALITY_TOL = 1e-9


@dataclass(frozen=True)
class LinearTransform:
    """An orthonormal projection of R^dim_in onto d selected directions.

    ``projection`` has shape (dim_in, d) with orthonormal columns;
    ``selected_eigenvalues`` are the fitting criterion's eigenvalues for
    those columns, in descending order. ``rho`` is the variance-contrast
    weight (None for PCA) and ``negative_selected_count`` says how many
    selected eigenvalues were negative.
    """

    projection: np.ndarray
    out_dim: int
    method: str
    selected_eigenvalues: np.ndarray
    rho: float | None = None
    negative_selected_count: int = 0
    explained_variance: float | None = None

    def __post_init__(self):
        proj = np.asarray(self.projection, dtype=float)
        object.__setattr__(self, "projection", proj)
        object.__setattr__(
            self, "selected_eigenvalues", np.asarray(self.selected_eigenvalues, dtype=float)
        )
        if proj.ndim != 2 or proj.shape[1] != self.out_dim:
            raise DimensionMismatchError(
                f"projection shape {proj.shape} does not match out_dim {self.out_dim}"
            )
        if self.out_dim > proj.shape[0]:
            raise DimensionTooLargeError(
                f"out_dim {self.out_dim} exceeds input dimension {proj.shape[0]}"
            )
        gram = proj.T @ proj
        deviation = np.abs(gram - np.eye(self.out_dim)).max()
        if deviation > ORTHONORMALITY_TOL:
            raise ValueError(f"projection columns not orthonormal: deviation {deviation:.3e}")
        if np.any(np.diff(self.selected_eigenvalues) > 0):
            raise ValueError("selected eigenvalues must be sorted descending")

    @property
    def dim_in(self) -> int:
        return self.projection.shape[0]

    def apply(self, vectors) -> np.ndarray:
        """Coordinates of ``vectors`` in the selected basis.

        Accepts a single vector of length dim_in or any array whose last
        axis has length dim_in; the last axis becomes length d.
        """
        arr = np.asarray(vectors, dtype=float)
        if arr.shape[-1:] != (self.dim_in,):
            raise DimensionMismatchError(
                f"expected last axis of length {self.dim_in}, got shape {arr.shape}"
            )
        return arr @ self.projection


def fit_est(summary: MomentSummary, rho: float, d: int) -> LinearTransform:
    """Fit a variance-contrast transform from aggregated class moments.

    Eigendecomposes between_cov - rho * within_cov and keeps the
    eigenvectors of the d largest signed eigenvalues.
    """
    if rho < 0:
        raise ValueError(f"rho must be nonnegative, got {rho}")
    if d < 1:
        raise ValueError(f"d must be >= 1, got {d}")
    dim = summary.between_cov.shape[0]
    if d > dim:
        raise DimensionTooLargeError(f"requested {d} directions from a {dim}-dim space")
    contrast = summary.between_cov - rho * summary.within_cov
    eig = sym_eigendecompose(contrast)
    selected = eig.eigenvalues[:d]
    return LinearTransform(
        projection=eig.eigenvectors[:, :d],
        out_dim=d,
        method="est",
        selected_eigenvalues=selected,
        rho=float(rho),
        negative_selected_count=int(np.sum(selected < 0)),
    )


def fit_pca(total_cov, d: int) -> LinearTransform:
    """Fit a principal-component transform from a total covariance matrix."""
    total_cov = np.asarray(total_cov, dtype=float)
    if d < 1:
        raise ValueError(f"d must be >= 1, got {d}")
    dim = total_cov.shape[0]
    if d > dim:
        raise DimensionTooLargeError(f"requested {d} components from a {dim}-dim space")
    eig = sym_eigendecompose(total_cov)
    selected = eig.eigenvalues[:d]
    clamped = np.clip(eig.eigenvalues, 0.0, None)
    total = clamped.sum()
    explained = float(np.clip(clamped[:d].sum() / total, 0.0, 1.0)) if total > 0 else 0.0
    return LinearTransform(
        projection=eig.eigenvectors[:, :d],
        out_dim=d,
        method="pca",
        selected_eigenvalues=selected,
        rho=None,
        negative_selected_count=int(np.sum(selected < 0)),
        explained_variance=explained,
    )


def save_transform(
    transform: LinearTransform,
    path: str | Path,
    source_dataset_digest: str | None = None,
    weighting: str | None = None,
) -> None:
    """Write a transform as JSON, including fit provenance fields."""
    payload = {
        "method": transform.method,
        "rho": transform.rho,
        "d": transform.out_dim,
        "dim_in": transform.dim_in,
        "eigenvalues": [float(v) for v in transform.selected_eigenvalues],
        "projection": transform.projection.tolist(),
        "source_dataset_digest": source_dataset_digest,
        "negative_selected_count": transform.negative_selected_count,
        "explained_variance": transform.explained_variance,
        "weighting": weighting,
    }
    Path(path).write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def load_transform(path: str | Path) -> LinearTransform:
    """Read a transform written by save_transform, re-validating invariants."""
    payload = json.loads(Path(path).read_text(encoding="utf-8"))
    try:
        return LinearTransform(
            projection=np.asarray(payload["projection"], dtype=float),
            out_dim=int(payload["d"]),
            method=str(payload["method"]),
            selected_eigenvalues=np.asarray(payload["eigenvalues"], dtype=float),
            rho=None if payload.get("rho") is None else float(payload["rho"]),
            negative_selected_count=int(payload.get("negative_selected_count", 0)),
            explained_variance=payload.get("explained_variance"),
        )
    except (KeyError, TypeError) as exc:
        raise ValueError(f"{path} is not a transform file: {exc!r}") from exc
