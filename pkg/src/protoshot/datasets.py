"""Embedding dataset ingestion and class-level statistics.

Datasets are plain CSV files, one record per line: ``label,v0,v1,...``
(UTF-8, no header, labels without commas). This keeps the package
independent of whatever produced the vectors; features exported from a
trained network and synthetic draws from a Gaussian world go through the
same path.

Statistics follow a single convention: covariances are biased (divide by
count), per-class moments are aggregated either with equal class weights
or with class-size weights. Size weighting makes the variance
decomposition exact: total = within + between, entrywise.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import (
    DegenerateIntraClassVarianceError,
    DimensionMismatchError,
    NonFiniteValueError,
    ParseError,
    RaggedRowsError,
    SingleClassError,
    ZeroTotalVarianceError,
)
from .linalg import covariance, sym_eigendecompose, trace

#: Eigenvalues below this fraction of the leading one count as zero when
#: computing explained-variance ratios and numerical rank.
EIGENVALUE_FLOOR = 1e-12


@dataclass(eq=False)
class EmbeddingDataset:
    """Labeled vectors in R^dim."""

    labels: list[str]
    vectors: np.ndarray

    def __post_init__(self):
        self.vectors = np.asarray(self.vectors, dtype=float)
        if self.vectors.ndim != 2:
            raise DimensionMismatchError(f"vectors must be 2-D, got shape {self.vectors.shape}")
        if len(self.labels) != self.vectors.shape[0]:
            raise DimensionMismatchError(
                f"{len(self.labels)} labels for {self.vectors.shape[0]} vectors"
            )
        if not np.all(np.isfinite(self.vectors)):
            raise NonFiniteValueError("vectors contain non-finite entries")
        indices: dict[str, list[int]] = {}
        for i, label in enumerate(self.labels):
            indices.setdefault(label, []).append(i)
        self._by_class = {lab: np.asarray(rows) for lab, rows in indices.items()}

    @property
    def dim(self) -> int:
        return self.vectors.shape[1]

    @property
    def class_labels(self) -> list[str]:
        """Distinct labels in sorted order."""
        return sorted(self._by_class)

    def class_indices(self, label: str) -> np.ndarray:
        """Row indices of one class, in file order."""
        return self._by_class[label]

    def __len__(self) -> int:
        return self.vectors.shape[0]


@dataclass(frozen=True)
class ClassStats:
    """Per-class sample counts, means, and biased covariances.

    Classes appear in sorted label order; ``means[i]`` and
    ``covariances[i]`` belong to ``labels[i]``.
    """

    labels: list[str]
    counts: np.ndarray
    means: np.ndarray
    covariances: np.ndarray


@dataclass(frozen=True)
class MomentSummary:
    """Aggregate moments of a labeled dataset.

    ``between_cov`` is the covariance of class means about the grand mean,
    ``within_cov`` the average within-class covariance, ``total_cov`` the
    biased covariance of the pooled sample. Under class-size weighting,
    total = within + between holds entrywise.
    """

    grand_mean: np.ndarray
    between_cov: np.ndarray
    within_cov: np.ndarray
    total_cov: np.ndarray
    class_count: int
    sample_count: int
    weighting: str = "equal-class"


def load_embeddings(path: str | Path) -> EmbeddingDataset:
    """Parse an embedding CSV.

    Raises ParseError (with row/column) on malformed numbers or an empty
    file, RaggedRowsError on inconsistent row widths, and
    NonFiniteValueError on NaN or infinite entries.
    """
    labels: list[str] = []
    rows: list[list[float]] = []
    width = None
    with open(path, encoding="utf-8") as handle:
        for lineno, line in enumerate(handle, start=1):
            line = line.rstrip("\n").rstrip("\r")
            if not line:
                continue
            cells = line.split(",")
            if len(cells) < 2:
                raise ParseError("expected label followed by at least one value", row=lineno)
            if width is None:
                width = len(cells) - 1
            elif len(cells) - 1 != width:
                raise RaggedRowsError(
                    f"row has {len(cells) - 1} values, expected {width}", row=lineno
                )
            values = []
            for col, cell in enumerate(cells[1:], start=1):
                try:
                    value = float(cell)
                except ValueError:
                    raise ParseError(f"cannot parse {cell!r} as a number", row=lineno, column=col)
                if not np.isfinite(value):
                    raise NonFiniteValueError(f"non-finite value {cell!r}", row=lineno, column=col)
                values.append(value)
            labels.append(cells[0])
            rows.append(values)
    if not rows:
        raise ParseError(f"no records found in {path}")
    return EmbeddingDataset(labels=labels, vectors=np.asarray(rows, dtype=float))


def save_embeddings(dataset: EmbeddingDataset, path: str | Path) -> None:
    """Write a dataset in the CSV format read by load_embeddings."""
    with open(path, "w", encoding="utf-8") as handle:
        for label, vector in zip(dataset.labels, dataset.vectors):
            handle.write(label + "," + ",".join(repr(float(v)) for v in vector) + "\n")


def class_stats(dataset: EmbeddingDataset) -> ClassStats:
    """Count, mean, and biased covariance of each class, label-sorted."""
    labels = dataset.class_labels
    counts = np.empty(len(labels), dtype=int)
    means = np.empty((len(labels), dataset.dim))
    covs = np.empty((len(labels), dataset.dim, dataset.dim))
    for i, label in enumerate(labels):
        pts = dataset.vectors[dataset.class_indices(label)]
        counts[i] = pts.shape[0]
        means[i] = pts.mean(axis=0)
        covs[i] = covariance(pts)
    return ClassStats(labels=labels, counts=counts, means=means, covariances=covs)


def moment_summary(stats: ClassStats, weighting: str = "equal-class") -> MomentSummary:
    """Aggregate per-class moments into between/within/total covariances.

    ``equal-class`` averages classes uniformly (the convention used when
    fitting transforms); ``class-size`` weights by sample counts, which
    makes Tr(total) = Tr(within) + Tr(between) exact on unbalanced data.
    The grand mean is always the sample-weighted mean of all points.
    """
    if weighting not in ("equal-class", "class-size"):
        raise ValueError(f"unknown weighting {weighting!r}")
    n_classes = len(stats.labels)
    if n_classes < 2:
        raise SingleClassError("moment summary requires at least two classes")
    total_count = int(stats.counts.sum())
    size_w = stats.counts / total_count
    grand_mean = size_w @ stats.means

    w = np.full(n_classes, 1.0 / n_classes) if weighting == "equal-class" else size_w
    centered = stats.means - grand_mean
    between = (centered * w[:, None]).T @ centered
    within = np.einsum("n,nij->ij", w, stats.covariances)
    # Pooled covariance of every sample about the grand mean; equals the
    # size-weighted within + between by the variance decomposition.
    total = (
        np.einsum("n,nij->ij", size_w, stats.covariances)
        + (centered * size_w[:, None]).T @ centered
    )
    return MomentSummary(
        grand_mean=grand_mean,
        between_cov=between,
        within_cov=within,
        total_cov=total,
        class_count=n_classes,
        sample_count=total_count,
        weighting=weighting,
    )


def variance_ratio(summary: MomentSummary, allow_infinite: bool = False) -> float:
    """Ratio of between-class to within-class variance, by traces."""
    between = trace(summary.between_cov)
    within = trace(summary.within_cov)
    if within <= 1e-12 * between or within <= 0.0:
        if allow_infinite:
            return float("inf")
        raise DegenerateIntraClassVarianceError(
            f"within-class trace {within:.3e} is negligible against between-class {between:.3e}"
        )
    return between / within


def intrinsic_dimension(cov, threshold: float = 0.9) -> int:
    """Smallest d whose top-d eigenvalues explain ``threshold`` of the variance.

    Negative eigenvalues (numerical noise in a PSD matrix) are clamped to
    zero, as are trailing eigenvalues below EIGENVALUE_FLOOR times the
    leading one; with threshold 1.0 the result is therefore the numerical
    rank.
    """
    if not 0.0 < threshold <= 1.0:
        raise ValueError(f"threshold must lie in (0, 1], got {threshold}")
    eigenvalues = sym_eigendecompose(cov).eigenvalues
    clamped = np.clip(eigenvalues, 0.0, None)
    if clamped.size and clamped[0] > 0:
        clamped[clamped < EIGENVALUE_FLOOR * clamped[0]] = 0.0
    total = clamped.sum()
    if total <= 0.0:
        raise ZeroTotalVarianceError("all eigenvalues are zero")
    ratios = np.cumsum(clamped) / total
    return int(np.searchsorted(ratios, threshold) + 1)


def diagnostics_report(dataset: EmbeddingDataset, threshold: float = 0.9) -> dict:
    """Variance ratio, intrinsic dimension, and spectrum of a dataset.

    The returned mapping is the JSON diagnostic payload; the conventions
    entry records the aggregation choices so reported numbers are
    reproducible elsewhere.
    """
    summary = moment_summary(class_stats(dataset), weighting="equal-class")
    eigenvalues = sym_eigendecompose(summary.total_cov).eigenvalues
    return {
        "variance_ratio": variance_ratio(summary),
        "intrinsic_dimension": intrinsic_dimension(summary.total_cov, threshold),
        "threshold": threshold,
        "eigenvalues": [float(v) for v in eigenvalues],
        "class_count": summary.class_count,
        "sample_count": summary.sample_count,
        "conventions": {
            "covariance": "biased (divide by count)",
            "weighting": summary.weighting,
            "eigenvalue_floor": EIGENVALUE_FLOOR,
        },
    }
