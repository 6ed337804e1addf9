"""Gaussian generative model for class-structured embeddings.

A world describes a two-level sampling process in R^dim: class means are
drawn from N(center, mean_cov) (the between-class "signal"), and points
of a class are drawn from N(class_mean, class_cov) (the within-class
"noise", shared by every class). Because both levels are exactly
Gaussian, all second and fourth moments the accuracy bounds need are
available in closed form, so Monte Carlo estimates can be checked against
values that provably hold.

Sampling is addressable: every class mean and every point is a pure
function of (seed, class index, point index), which makes results
independent of evaluation order and worker count.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import streams
from .errors import DegenerateWorldError, DimensionMismatchError, NonFiniteError
from .linalg import psd_sqrt, trace

#: Most negative eigenvalue a world covariance may have and still count as PSD.
PSD_TOL = 1e-10


@dataclass(eq=False)
class GaussianWorld:
    """Two-level Gaussian model of an embedding space.

    Attributes
    ----------
    dim : int
        Embedding dimension.
    mean_center : ndarray, shape (dim,)
        Center of the class-mean distribution.
    mean_cov : ndarray, shape (dim, dim)
        Covariance of class means (between-class signal). PSD.
    class_cov : ndarray, shape (dim, dim)
        Within-class covariance, identical for every class. PSD.
    """

    dim: int
    mean_center: np.ndarray
    mean_cov: np.ndarray
    class_cov: np.ndarray

    def __post_init__(self):
        self.mean_center = np.asarray(self.mean_center, dtype=float)
        self.mean_cov = np.asarray(self.mean_cov, dtype=float)
        self.class_cov = np.asarray(self.class_cov, dtype=float)
        e = int(self.dim)
        if self.mean_center.shape != (e,):
            raise DimensionMismatchError(
                f"mean_center has shape {self.mean_center.shape}, expected ({e},)"
            )
        if not np.all(np.isfinite(self.mean_center)):
            raise NonFiniteError("mean_center contains non-finite entries")
        for name, mat in (("mean_cov", self.mean_cov), ("class_cov", self.class_cov)):
            if mat.shape != (e, e):
                raise DimensionMismatchError(f"{name} has shape {mat.shape}, expected ({e}, {e})")
        try:
            self._mean_sqrt = psd_sqrt(self.mean_cov, tol=PSD_TOL)
            self._class_sqrt = psd_sqrt(self.class_cov, tol=PSD_TOL)
        except ValueError as exc:
            raise DegenerateWorldError(str(exc)) from exc


@dataclass(frozen=True)
class SampledClass:
    """One realized class: an identifier, its index, and its true mean."""

    id: str
    index: int
    mean: np.ndarray


@dataclass(frozen=True)
class MomentBundle:
    """Moments of a class-structured distribution that feed the accuracy bounds.

    ``tr_signal`` is the trace of the class-mean covariance, ``tr_noise_sq``
    the trace of the squared within-class covariance, ``tr_signal_noise``
    the trace of their product, and ``gap_fourth_moment`` the expectation of
    the squared squared-norm of the difference of two independent class
    means.
    """

    tr_signal: float
    tr_noise_sq: float
    tr_signal_noise: float
    gap_fourth_moment: float


def sample_classes(
    world: GaussianWorld,
    count: int,
    rng: int | np.random.SeedSequence | np.random.Generator,
    start: int = 0,
) -> list[SampledClass]:
    """Draw ``count`` class means independently from the mean distribution.

    With a seed or seed sequence, class ``i`` (global index ``start + i``)
    is a pure function of (seed, index): disjoint index ranges can be drawn
    concurrently and concatenate to the sequential result. A generator is
    also accepted for one-shot sequential use (``start`` must then be 0).
    """
    if count < 1:
        raise ValueError("count must be >= 1")
    z = _standard_rows(rng, (streams.CLASS_MEANS,), start, count, world.dim)
    means = z @ world._mean_sqrt.T + world.mean_center
    return [
        SampledClass(id=f"class-{start + i}", index=start + i, mean=means[i])
        for i in range(count)
    ]


def sample_points(
    cls: SampledClass,
    world: GaussianWorld,
    count: int,
    rng: int | np.random.SeedSequence | np.random.Generator,
    start: int = 0,
) -> np.ndarray:
    """Draw ``count`` points of class ``cls`` from N(cls.mean, class_cov).

    With a seed or seed sequence, point ``j`` of class ``cls.index`` is a
    pure function of (seed, class index, point index); see sample_classes
    for the range semantics.
    """
    if count < 1:
        raise ValueError("count must be >= 1")
    z = _standard_rows(rng, (streams.CLASS_POINTS, cls.index), start, count, world.dim)
    return z @ world._class_sqrt.T + cls.mean


def _standard_rows(rng, path: tuple[int, ...], start: int, count: int, width: int) -> np.ndarray:
    if isinstance(rng, np.random.Generator):
        if start != 0:
            raise ValueError("start offsets require a seed or SeedSequence, not a Generator")
        return rng.standard_normal((count, width))
    return streams.blocked_standard_normal(rng, path, start, count, width)


def world_moments(world: GaussianWorld) -> MomentBundle:
    """Closed-form moment bundle of a Gaussian world.

    The fourth moment uses the Gaussian quartic identity: the gap of two
    independent class means is N(0, 2 * mean_cov), and for x ~ N(0, C),
    E[(x^T x)^2] = Tr(C)^2 + 2 Tr(C^2).
    """
    sigma = world.mean_cov
    sigma_c = world.class_cov
    tr_signal = trace(sigma)
    fourth = 4.0 * tr_signal**2 + 8.0 * trace(sigma @ sigma)
    return MomentBundle(
        tr_signal=tr_signal,
        tr_noise_sq=trace(sigma_c @ sigma_c),
        tr_signal_noise=trace(sigma @ sigma_c),
        gap_fourth_moment=fourth,
    )


def save_world(world: GaussianWorld, path: str | Path) -> None:
    """Write the world configuration as JSON ({dim, mu, sigma, sigma_c})."""
    payload = {
        "dim": world.dim,
        "mu": world.mean_center.tolist(),
        "sigma": world.mean_cov.tolist(),
        "sigma_c": world.class_cov.tolist(),
    }
    Path(path).write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def load_world(path: str | Path) -> GaussianWorld:
    """Read a world configuration written by save_world."""
    payload = json.loads(Path(path).read_text(encoding="utf-8"))
    try:
        return GaussianWorld(
            dim=int(payload["dim"]),
            mean_center=np.asarray(payload["mu"], dtype=float),
            mean_cov=np.asarray(payload["sigma"], dtype=float),
            class_cov=np.asarray(payload["sigma_c"], dtype=float),
        )
    except (KeyError, TypeError) as exc:
        raise ValueError(f"{path} is not a world configuration: {exc!r}") from exc
