"""Closed-form accuracy bounds and their Monte Carlo estimators.

For a query of class ``a`` and prototypes built from ``k`` supports per
class, let the decision margin be the squared distance to the wrong
prototype minus the squared distance to the correct one; the two-way
prediction is correct exactly when the margin is positive. Under the
Gaussian modelling assumptions (class-conditional N(mean_c, class_cov)
with a shared class_cov, class means with covariance mean_cov), the
margin's moments are available in closed form:

* conditional on a class pair, its mean is the squared norm of the gap
  of the two class means, and marginally 2 Tr(mean_cov);
* the expected conditional variance is at most
  8 (1 + 1/k) Tr(class_cov ((1 + 1/k) class_cov + 2 mean_cov)).

One-sided Chebyshev then lower-bounds the expected two-way accuracy by

    4 Tr(S)^2 / (8 (1+1/k)^2 Tr(C^2) + 16 (1+1/k) Tr(S C) + F)

with S the class-mean covariance, C the within-class covariance, and F
the fourth moment of class-mean gaps. An N-way bound follows from
Frechet's inequality: (N-1) * pairwise - (N-2), which is frequently
vacuous (negative) and is therefore reported both raw and clamped.

Every closed form here is paired with a Monte Carlo estimator so the
formulas can be checked against simulation instead of trusted.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import streams
from .datasets import ClassStats
from .errors import DegenerateDenominatorError, DimensionMismatchError, InvalidDeltaError
from .linalg import trace
from .protonet import EvalConfig, evaluate
from .world import GaussianWorld, MomentBundle

#: Pairs drawn per keyed chunk in Monte Carlo sampling; estimates are a
#: pure function of (seed, draw index) at this granularity.
CHUNK = 8192


@dataclass(frozen=True)
class BoundReport:
    """A lower bound on expected episodic accuracy.

    ``raw`` may be negative for ways > 2 (a vacuous bound); ``clamped``
    is cut to [0, 1]. ``components`` holds the numerator and the three
    denominator terms of the pairwise bound.
    """

    k: int
    ways: int
    raw: float
    clamped: float
    components: dict

    def __post_init__(self):
        if not all(math.isfinite(v) for v in self.components.values()):
            raise ValueError("bound components must be finite")


@dataclass(frozen=True)
class MarginMoments:
    """Monte Carlo moments of the decision margin.

    ``mean_marginal`` and ``var_marginal`` describe the pooled margin
    sample (over whatever class pairs were drawn). ``var_conditional``
    estimates the expected within-pair variance via paired realizations:
    each drawn pair produces two independent margins whose half squared
    difference is an unbiased sample of the conditional variance. With a
    fixed pair, marginal and conditional quantities estimate the same
    thing. Standard errors accompany each moment; the variance standard
    errors come from fourth-moment asymptotics.
    """

    mean_conditional: float
    var_conditional: float
    mean_marginal: float
    var_marginal: float
    se_mean_conditional: float
    se_var_conditional: float
    se_mean_marginal: float
    se_var_marginal: float
    sample_count: int


def margin_mean_given_pair(mean_a, mean_b) -> float:
    """Expected margin conditional on a class pair: squared gap norm."""
    a = np.asarray(mean_a, dtype=float)
    b = np.asarray(mean_b, dtype=float)
    if a.shape != b.shape:
        raise DimensionMismatchError(f"mean shapes disagree: {a.shape} vs {b.shape}")
    gap = a - b
    return float(gap @ gap)


def margin_mean_marginal(tr_signal: float) -> float:
    """Expected margin over random class pairs: twice the signal trace."""
    if tr_signal < 0:
        raise ValueError(f"trace of a covariance cannot be negative, got {tr_signal}")
    return 2.0 * tr_signal


def margin_variance_bound(k: int, class_cov, mean_cov) -> float:
    """Upper bound on the expected conditional variance of the margin.

    Equals 8 (1 + 1/k) Tr(class_cov ((1 + 1/k) class_cov + 2 mean_cov)).
    Tightens as the shot count k grows, saturating at its k -> inf limit.
    """
    if k < 1:
        raise ValueError(f"k must be >= 1, got {k}")
    c = np.asarray(class_cov, dtype=float)
    s = np.asarray(mean_cov, dtype=float)
    if c.shape != s.shape:
        raise DimensionMismatchError(f"covariance shapes disagree: {c.shape} vs {s.shape}")
    factor = 1.0 + 1.0 / k
    return float(8.0 * factor * trace(c @ (factor * c + 2.0 * s)))


def accuracy_lower_bound(moments: MomentBundle, k: int) -> BoundReport:
    """One-sided Chebyshev lower bound on expected two-way accuracy."""
    if k < 1:
        raise ValueError(f"k must be >= 1, got {k}")
    factor = 1.0 + 1.0 / k
    numerator = 4.0 * moments.tr_signal**2
    term1 = 8.0 * factor**2 * moments.tr_noise_sq
    term2 = 16.0 * factor * moments.tr_signal_noise
    term3 = moments.gap_fourth_moment
    denominator = term1 + term2 + term3
    if denominator <= 0.0:
        raise DegenerateDenominatorError(
            "all moments are zero; the bound is undefined"
        )
    value = numerator / denominator
    return BoundReport(
        k=k,
        ways=2,
        raw=value,
        clamped=float(np.clip(value, 0.0, 1.0)),
        components={
            "numerator": numerator,
            "denom_term1": term1,
            "denom_term2": term2,
            "denom_term3": term3,
        },
    )


def nway_accuracy_lower_bound(moments: MomentBundle, k: int, ways: int) -> BoundReport:
    """Frechet extension of the pairwise bound to ``ways`` classes.

    raw = (ways - 1) * pairwise - (ways - 2); reduces to the pairwise
    bound at ways = 2 and may be negative (vacuous) for larger ways.
    """
    if ways < 2:
        raise ValueError(f"ways must be >= 2, got {ways}")
    pairwise = accuracy_lower_bound(moments, k)
    raw = (ways - 1) * pairwise.raw - (ways - 2)
    return BoundReport(
        k=k,
        ways=ways,
        raw=raw,
        clamped=float(np.clip(raw, 0.0, 1.0)),
        components=pairwise.components,
    )


def vc_gap(vc_dim: int, k: int, delta: float) -> float:
    """Capacity bound on the gap between training and true error.

    Computes sqrt((D (ln(4k/D) + 1) + ln(4/delta)) / (2k)) for a
    hypothesis class of VC dimension D fit on k samples per class, holding
    with probability at least 1 - delta.
    """
    if not 0.0 < delta < 1.0:
        raise InvalidDeltaError(f"delta must lie strictly in (0, 1), got {delta}")
    if vc_dim < 1:
        raise ValueError(f"vc_dim must be >= 1, got {vc_dim}")
    if k < 1:
        raise ValueError(f"k must be >= 1, got {k}")
    d = float(vc_dim)
    numerator = d * (math.log(4.0 * k / d) + 1.0) + math.log(4.0 / delta)
    if numerator < 0.0:
        raise ValueError(
            f"gap undefined for D={vc_dim}, k={k}: the capacity term "
            f"D(ln(4k/D)+1) + ln(4/delta) = {numerator:.3f} is negative"
        )
    return math.sqrt(numerator / (2.0 * k))


def moment_bundle_from_class_stats(stats: ClassStats, weighting: str = "equal-class") -> MomentBundle:
    """Moment bundle estimated from an empirical class set.

    Treats the class set itself as the class distribution: two classes are
    drawn independently with replacement, uniformly or by class size. All
    moments share one centering (the weighted mean of class means), so the
    identity "expected squared gap = twice the signal trace" holds exactly
    for the estimates.
    """
    if weighting == "equal-class":
        w = np.full(len(stats.labels), 1.0 / len(stats.labels))
    elif weighting == "class-size":
        w = stats.counts / stats.counts.sum()
    else:
        raise ValueError(f"unknown weighting {weighting!r}")
    center = w @ stats.means
    centered = stats.means - center
    signal = (centered * w[:, None]).T @ centered
    noise = np.einsum("n,nij->ij", w, stats.covariances)
    gram = stats.means @ stats.means.T
    sq_norms = np.diag(gram)
    gap_sq = sq_norms[:, None] + sq_norms[None, :] - 2.0 * gram
    fourth = float(w @ (gap_sq**2) @ w)
    return MomentBundle(
        tr_signal=trace(signal),
        tr_noise_sq=trace(noise @ noise),
        tr_signal_noise=trace(signal @ noise),
        gap_fourth_moment=fourth,
    )


def mc_margin_moments(
    world: GaussianWorld,
    k: int,
    samples: int,
    rng: int | np.random.SeedSequence,
    fixed_pair: tuple[np.ndarray, np.ndarray] | None = None,
) -> MarginMoments:
    """Monte Carlo margin moments on a Gaussian world.

    Each draw samples a class pair (or reuses ``fixed_pair``), two
    independent realizations of (k supports per class, one query from the
    first class), and computes both margins. ``samples`` counts margin
    realizations; it is rounded up to an even number. Draws are keyed by
    (seed, chunk), so results do not depend on evaluation order.
    """
    if k < 1:
        raise ValueError(f"k must be >= 1, got {k}")
    if samples < 1000:
        raise ValueError(f"need at least 1000 samples for stable moments, got {samples}")
    if isinstance(rng, np.random.Generator):
        raise TypeError("mc_margin_moments needs a seed or SeedSequence for order-free draws")
    n_pairs = (samples + 1) // 2
    dim = world.dim
    if fixed_pair is not None:
        fixed_a = np.asarray(fixed_pair[0], dtype=float)
        fixed_b = np.asarray(fixed_pair[1], dtype=float)
        if fixed_a.shape != (dim,) or fixed_b.shape != (dim,):
            raise DimensionMismatchError("fixed pair means must match the world dimension")

    first_chunks: list[np.ndarray] = []
    second_chunks: list[np.ndarray] = []
    done = 0
    chunk_index = 0
    while done < n_pairs:
        size = min(CHUNK, n_pairs - done)
        gen = streams.child_rng(rng, streams.PAIR_DRAWS, chunk_index)
        if fixed_pair is None:
            mean_a = gen.standard_normal((size, dim)) @ world._mean_sqrt.T + world.mean_center
            mean_b = gen.standard_normal((size, dim)) @ world._mean_sqrt.T + world.mean_center
        else:
            mean_a = np.broadcast_to(fixed_a, (size, dim))
            mean_b = np.broadcast_to(fixed_b, (size, dim))
        for sink in (first_chunks, second_chunks):
            sup_a = mean_a[:, None, :] + gen.standard_normal((size, k, dim)) @ world._class_sqrt.T
            sup_b = mean_b[:, None, :] + gen.standard_normal((size, k, dim)) @ world._class_sqrt.T
            query = mean_a + gen.standard_normal((size, dim)) @ world._class_sqrt.T
            to_b = query - sup_b.mean(axis=1)
            to_a = query - sup_a.mean(axis=1)
            sink.append(np.einsum("ij,ij->i", to_b, to_b) - np.einsum("ij,ij->i", to_a, to_a))
        done += size
        chunk_index += 1

    first = np.concatenate(first_chunks)
    second = np.concatenate(second_chunks)
    pooled = np.concatenate([first, second])
    n = pooled.size

    mean = float(pooled.mean())
    var = float(pooled.var(ddof=1)) if n > 1 else 0.0
    se_mean = math.sqrt(var / n) if n > 1 else 0.0
    centered = pooled - mean
    fourth_central = float(np.mean(centered**4))
    se_var = math.sqrt(max(fourth_central - var**2, 0.0) / n) if n > 1 else 0.0

    within = (first - second) ** 2 / 2.0
    var_cond = float(within.mean())
    se_var_cond = float(within.std(ddof=1) / math.sqrt(n_pairs)) if n_pairs > 1 else 0.0

    return MarginMoments(
        mean_conditional=mean,
        var_conditional=var_cond,
        mean_marginal=mean,
        var_marginal=var,
        se_mean_conditional=se_mean,
        se_var_conditional=se_var_cond,
        se_mean_marginal=se_mean,
        se_var_marginal=se_var,
        sample_count=n,
    )


def mc_accuracy(
    world: GaussianWorld,
    k: int,
    ways: int,
    episodes: int,
    queries: int,
    seed: int,
) -> tuple[float, float]:
    """Empirical episodic accuracy with its 95% confidence halfwidth."""
    if episodes < 100:
        raise ValueError(f"need at least 100 episodes for a stable estimate, got {episodes}")
    config = EvalConfig(ways=ways, shots=(k,), queries=queries, episodes=episodes, seed=seed)
    result = evaluate(config, world).results[0]
    return result.accuracy, result.ci95_halfwidth
