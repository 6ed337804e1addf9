"""Prototype classifier and the episodic evaluation harness.

An episode is one few-shot task: ``ways`` classes, ``shots`` labeled
supports per class, and labeled queries to score. The classifier embeds
no learning at all: each class is summarized by the mean of its supports
(its prototype), and a query is scored by the softmax of negative squared
Euclidean distances to the prototypes.

Episodes can be drawn from a GaussianWorld (classes sampled fresh from
the class-mean distribution) or from an EmbeddingDataset (classes and
samples drawn without replacement). The harness evaluates many episodes
and reports mean accuracy with a 95% confidence halfwidth; per-episode
random streams are keyed by (seed, shot, episode index), so any worker
count produces identical results.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import streams
from .datasets import EmbeddingDataset
from .errors import (
    DimensionMismatchError,
    InsufficientClassesError,
    InsufficientSamplesPerClassError,
)
from .transforms import LinearTransform
from .world import GaussianWorld, sample_classes


@dataclass(frozen=True)
class Episode:
    """One sampled few-shot task.

    ``supports`` has shape (ways, shots, dim); ``queries`` has shape
    (query_count, dim) with ``query_labels`` holding each query's class
    index in [0, ways).
    """

    ways: int
    shots: int
    supports: np.ndarray
    queries: np.ndarray
    query_labels: np.ndarray

    def __post_init__(self):
        if self.supports.shape[:2] != (self.ways, self.shots):
            raise DimensionMismatchError(
                f"supports shape {self.supports.shape} does not match "
                f"{self.ways} ways x {self.shots} shots"
            )
        if self.queries.shape[0] != self.query_labels.shape[0]:
            raise DimensionMismatchError("queries and query_labels disagree in length")
        if self.query_labels.size and (
            self.query_labels.min() < 0 or self.query_labels.max() >= self.ways
        ):
            raise ValueError("query labels out of range")

    @property
    def query_count(self) -> int:
        return self.queries.shape[0]


@dataclass(frozen=True)
class EvalConfig:
    """Parameters of one evaluation run.

    ``shots`` may be a single value or a sweep. ``queries`` counts query
    samples per class under the default "per-class" query mode, or the
    episode total under "total" mode (each query then picks its class
    uniformly at random).
    """

    ways: int
    shots: tuple[int, ...]
    queries: int
    episodes: int
    seed: int
    query_mode: str = "per-class"
    transform: LinearTransform | None = None

    def __post_init__(self):
        object.__setattr__(self, "shots", tuple(int(k) for k in np.atleast_1d(self.shots)))
        for name, value in (
            ("ways", self.ways),
            ("queries", self.queries),
            ("episodes", self.episodes),
        ):
            if value < 1:
                raise ValueError(f"{name} must be >= 1, got {value}")
        if any(k < 1 for k in self.shots):
            raise ValueError("every shot count must be >= 1")
        if self.query_mode not in ("per-class", "total"):
            raise ValueError(f"unknown query mode {self.query_mode!r}")


@dataclass(frozen=True)
class ShotResult:
    """Accuracy of one shot setting, aggregated over episodes."""

    shots: int
    accuracy: float
    ci95_halfwidth: float
    episodes: int
    per_episode: np.ndarray = field(repr=False)


@dataclass(frozen=True)
class EvalReport:
    """Evaluation results per shot value, plus the configuration echo."""

    config: dict
    results: tuple[ShotResult, ...]

    def average(self) -> ShotResult:
        """Aggregate across shot settings, mirroring per-shot result tables."""
        pooled = np.concatenate([r.per_episode for r in self.results])
        accuracy = float(np.mean([r.accuracy for r in self.results]))
        ci = _ci95(pooled)
        return ShotResult(
            shots=0, accuracy=accuracy, ci95_halfwidth=ci,
            episodes=int(pooled.size), per_episode=pooled,
        )

    def to_json_dict(self) -> dict:
        avg = self.average()
        return {
            "config": self.config,
            "per_k": [
                {
                    "k": r.shots,
                    "accuracy": r.accuracy,
                    "ci95": r.ci95_halfwidth,
                    "episodes": r.episodes,
                }
                for r in self.results
            ],
            "average": {
                "accuracy": avg.accuracy,
                "ci95": avg.ci95_halfwidth,
                "episodes": avg.episodes,
            },
        }

    def to_csv(self) -> str:
        lines = ["k,accuracy,ci95,episodes"]
        for r in self.results:
            lines.append(f"{r.shots},{r.accuracy!r},{r.ci95_halfwidth!r},{r.episodes}")
        avg = self.average()
        lines.append(f"average,{avg.accuracy!r},{avg.ci95_halfwidth!r},{avg.episodes}")
        return "\n".join(lines) + "\n"


def sample_episode(
    source,
    ways: int,
    shots: int,
    queries: int,
    rng: int | np.random.SeedSequence | np.random.Generator,
    query_mode: str = "per-class",
) -> Episode:
    """Draw one episode from a world or a dataset.

    World classes are sampled fresh and independently; dataset classes are
    drawn without replacement, as are the supports and queries within each
    class (supports and queries never overlap).
    """
    gen = streams.as_generator(rng)
    if isinstance(source, GaussianWorld):
        return _world_episode(source, ways, shots, queries, gen, query_mode)
    if isinstance(source, EmbeddingDataset):
        return _dataset_episode(source, ways, shots, queries, gen, query_mode)
    raise TypeError(f"unsupported episode source {type(source).__name__}")


def _world_episode(world, ways, shots, queries, gen, query_mode) -> Episode:
    classes = sample_classes(world, ways, gen)
    means = np.stack([c.mean for c in classes])
    noise = gen.standard_normal((ways, shots, world.dim)) @ world._class_sqrt.T
    supports = means[:, None, :] + noise
    if query_mode == "per-class":
        labels = np.repeat(np.arange(ways), queries)
    else:
        labels = gen.integers(0, ways, size=queries)
    qnoise = gen.standard_normal((labels.size, world.dim)) @ world._class_sqrt.T
    query_vecs = means[labels] + qnoise
    return Episode(
        ways=ways, shots=shots, supports=supports,
        queries=query_vecs, query_labels=labels,
    )


def _dataset_episode(dataset, ways, shots, queries, gen, query_mode) -> Episode:
    labels = dataset.class_labels
    if len(labels) < ways:
        raise InsufficientClassesError(
            f"need {ways} classes, dataset has {len(labels)}"
        )
    chosen = gen.choice(len(labels), size=ways, replace=False)
    if query_mode == "per-class":
        per_class_queries = np.full(ways, queries)
        query_labels = np.repeat(np.arange(ways), queries)
    else:
        query_labels = gen.integers(0, ways, size=queries)
        per_class_queries = np.bincount(query_labels, minlength=ways)
    supports = []
    query_rows: list[np.ndarray] = [np.empty((0,), dtype=int)] * ways
    for slot, label_idx in enumerate(chosen):
        label = labels[label_idx]
        rows = dataset.class_indices(label)
        need = shots + int(per_class_queries[slot])
        if len(rows) < need:
            raise InsufficientSamplesPerClassError(
                f"class {label!r} has {len(rows)} samples, episode needs {need}"
            )
        picked = rows[gen.permutation(len(rows))[:need]]
        supports.append(dataset.vectors[picked[:shots]])
        query_rows[slot] = picked[shots:]
    if query_mode == "per-class":
        query_vecs = np.concatenate([dataset.vectors[rows] for rows in query_rows])
    else:
        cursor = np.zeros(ways, dtype=int)
        picks = []
        for lab in query_labels:
            picks.append(query_rows[lab][cursor[lab]])
            cursor[lab] += 1
        query_vecs = dataset.vectors[np.asarray(picks, dtype=int)] if picks else (
            np.empty((0, dataset.dim))
        )
    return Episode(
        ways=ways, shots=shots, supports=np.stack(supports),
        queries=query_vecs, query_labels=np.asarray(query_labels, dtype=int),
    )


def prototypes(episode: Episode) -> np.ndarray:
    """Per-class mean of the support vectors, shape (ways, dim)."""
    return episode.supports.mean(axis=1)


def predict(query, prototype_vectors) -> tuple[np.ndarray, int]:
    """Class probabilities and predicted index for one query.

    Probabilities are the softmax of negative squared Euclidean distances
    to the prototypes, computed in the max-subtracted form so large
    distances cannot overflow. Ties break to the lowest class index.
    """
    q = np.asarray(query, dtype=float)
    protos = np.atleast_2d(np.asarray(prototype_vectors, dtype=float))
    if q.shape != (protos.shape[1],):
        raise DimensionMismatchError(
            f"query shape {q.shape} does not match prototype dim {protos.shape[1]}"
        )
    probs, picks = _softmax_predictions(q[None, :], protos)
    return probs[0], int(picks[0])


def decision_margin(query, proto_a, proto_b, form: str = "distance") -> float:
    """Squared distance to proto_b minus squared distance to proto_a.

    Positive values mean the query sits closer to proto_a. The "distance"
    form evaluates the two squared norms directly; the "linear" form uses
    the equivalent affine expression 2 (a - b)^T q + b^T b - a^T a, which
    exhibits the prototype pair as a linear classifier with offset. Both
    agree to floating-point accuracy.
    """
    q = np.asarray(query, dtype=float)
    a = np.asarray(proto_a, dtype=float)
    b = np.asarray(proto_b, dtype=float)
    if not (q.shape == a.shape == b.shape):
        raise DimensionMismatchError(
            f"shapes disagree: query {q.shape}, proto_a {a.shape}, proto_b {b.shape}"
        )
    if form == "distance":
        return float(((q - b) ** 2).sum() - ((q - a) ** 2).sum())
    if form == "linear":
        return float(2.0 * (a - b) @ q + b @ b - a @ a)
    raise ValueError(f"unknown form {form!r}")


def evaluate(
    config: EvalConfig,
    source,
    transform: LinearTransform | None = None,
    workers: int = 1,
) -> EvalReport:
    """Run the episodic protocol for every shot value in the config.

    The optional transform is applied to every support and query vector
    before prototypes are formed. Episode ``e`` of shot ``k`` draws from
    the stream keyed (seed, k, e); the worker count changes wall-clock
    time only, never a single bit of the results.
    """
    applied = transform if transform is not None else config.transform
    results = []
    for k in config.shots:
        def run(episode_index: int, k=k) -> float:
            gen = streams.child_rng(config.seed, streams.EPISODES, k, episode_index)
            episode = sample_episode(
                source, config.ways, k, config.queries, gen, config.query_mode
            )
            return _episode_accuracy(episode, applied)

        if workers > 1:
            with ThreadPoolExecutor(max_workers=workers) as pool:
                per_episode = np.fromiter(
                    pool.map(run, range(config.episodes)), dtype=float, count=config.episodes
                )
        else:
            per_episode = np.fromiter(
                (run(e) for e in range(config.episodes)), dtype=float, count=config.episodes
            )
        results.append(
            ShotResult(
                shots=k,
                accuracy=float(per_episode.mean()),
                ci95_halfwidth=_ci95(per_episode),
                episodes=config.episodes,
                per_episode=per_episode,
            )
        )
    echo = {
        "ways": config.ways,
        "shots": list(config.shots),
        "queries": config.queries,
        "episodes": config.episodes,
        "seed": config.seed,
        "query_mode": config.query_mode,
        "transform": None if applied is None else applied.method,
    }
    return EvalReport(config=echo, results=tuple(results))


def _episode_accuracy(episode: Episode, transform: LinearTransform | None) -> float:
    supports, queries = episode.supports, episode.queries
    if transform is not None:
        supports = transform.apply(supports)
        queries = transform.apply(queries)
    protos = supports.mean(axis=1)
    _, picks = _softmax_predictions(queries, protos)
    return float(np.mean(picks == episode.query_labels))


def _softmax_predictions(queries: np.ndarray, protos: np.ndarray):
    """Stable softmax over negative squared distances, plus argmax picks."""
    gaps = queries[:, None, :] - protos[None, :, :]
    logits = -np.einsum("qnd,qnd->qn", gaps, gaps)
    logits -= logits.max(axis=1, keepdims=True)
    weights = np.exp(logits)
    probs = weights / weights.sum(axis=1, keepdims=True)
    return probs, np.argmax(probs, axis=1)


def _ci95(per_episode: np.ndarray) -> float:
    if per_episode.size < 2:
        return 0.0
    return float(1.96 * per_episode.std(ddof=1) / np.sqrt(per_episode.size))
