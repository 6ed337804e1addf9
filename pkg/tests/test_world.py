"""Tests for the Gaussian generative world."""

import numpy as np
import pytest

from protoshot.errors import DegenerateWorldError
from protoshot.linalg import covariance
from protoshot.world import (
    GaussianWorld,
    load_world,
    sample_classes,
    sample_points,
    save_world,
    world_moments,
)


def spherical_world(dim, signal=1.0, noise=1.0, center=None):
    return GaussianWorld(
        dim=dim,
        mean_center=np.zeros(dim) if center is None else center,
        mean_cov=signal * np.eye(dim),
        class_cov=noise * np.eye(dim),
    )


class TestConstruction:
    def test_rejects_negative_definite_covariance(self):
        with pytest.raises(DegenerateWorldError):
            GaussianWorld(
                dim=2,
                mean_center=np.zeros(2),
                mean_cov=np.diag([1.0, -1.0]),
                class_cov=np.eye(2),
            )

    def test_accepts_rank_deficient_covariance(self):
        world = GaussianWorld(
            dim=3,
            mean_center=np.zeros(3),
            mean_cov=np.diag([2.0, 0.0, 0.0]),
            class_cov=np.diag([0.0, 0.0, 1.0]),
        )
        cls = sample_classes(world, 5, 0)
        assert all(c.mean[1] == 0.0 and c.mean[2] == 0.0 for c in cls)

    def test_json_roundtrip(self, tmp_path):
        world = spherical_world(3, signal=2.0, noise=0.5, center=np.array([1.0, -1.0, 0.0]))
        path = tmp_path / "world.json"
        save_world(world, path)
        loaded = load_world(path)
        np.testing.assert_array_equal(loaded.mean_center, world.mean_center)
        np.testing.assert_array_equal(loaded.mean_cov, world.mean_cov)
        np.testing.assert_array_equal(loaded.class_cov, world.class_cov)


class TestSampleClasses:
    def test_zero_prior_collapses_to_center(self):
        center = np.array([3.0, -2.0])
        world = GaussianWorld(
            dim=2, mean_center=center, mean_cov=np.zeros((2, 2)), class_cov=np.eye(2)
        )
        for cls in sample_classes(world, 10, 123):
            np.testing.assert_array_equal(cls.mean, center)

    def test_sample_mean_concentrates(self):
        """Mean of 10^4 class means lands within 4 CLT standard errors."""
        world = spherical_world(2)
        classes = sample_classes(world, 10_000, 3)
        means = np.stack([c.mean for c in classes])
        se = 1.0 / np.sqrt(10_000)
        assert np.all(np.abs(means.mean(axis=0)) <= 4 * se)

    def test_same_seed_is_bitwise_identical(self):
        world = spherical_world(4)
        first = sample_classes(world, 20, 99)
        second = sample_classes(world, 20, 99)
        for a, b in zip(first, second):
            np.testing.assert_array_equal(a.mean, b.mean)
            assert a.id == b.id

    def test_disjoint_ranges_match_sequential(self):
        world = spherical_world(3)
        full = sample_classes(world, 100, 17)
        head = sample_classes(world, 60, 17)
        tail = sample_classes(world, 40, 17, start=60)
        for a, b in zip(full, head + tail):
            np.testing.assert_array_equal(a.mean, b.mean)
            assert a.index == b.index


class TestSamplePoints:
    def test_zero_noise_returns_mean(self):
        world = GaussianWorld(
            dim=2, mean_center=np.zeros(2), mean_cov=np.eye(2), class_cov=np.zeros((2, 2))
        )
        cls = sample_classes(world, 1, 5)[0]
        pts = sample_points(cls, world, 7, 5)
        np.testing.assert_array_equal(pts, np.broadcast_to(cls.mean, (7, 2)))

    def test_sample_covariance_within_bootstrap_error(self):
        """10^5 draws from class_cov diag(1,4), checked with a bootstrap oracle."""
        world = GaussianWorld(
            dim=2, mean_center=np.zeros(2), mean_cov=np.zeros((2, 2)),
            class_cov=np.diag([1.0, 4.0]),
        )
        cls = sample_classes(world, 1, 11)[0]
        pts = sample_points(cls, world, 100_000, 11)
        sample = covariance(pts)

        boot_rng = np.random.default_rng(110)
        replicas = np.empty((300, 2, 2))
        for b in range(300):
            rows = boot_rng.integers(0, pts.shape[0], size=pts.shape[0])
            replicas[b] = covariance(pts[rows])
        se = replicas.std(axis=0, ddof=1)
        assert np.all(np.abs(sample - np.diag([1.0, 4.0])) <= 4.0 * se)

    def test_same_seed_identical_and_ranges_compose(self):
        world = spherical_world(3)
        cls = sample_classes(world, 2, 8)[1]
        full = sample_points(cls, world, 50, 8)
        np.testing.assert_array_equal(full, sample_points(cls, world, 50, 8))
        head = sample_points(cls, world, 30, 8)
        tail = sample_points(cls, world, 20, 8, start=30)
        np.testing.assert_array_equal(full, np.vstack([head, tail]))

    def test_classes_get_independent_streams(self):
        world = spherical_world(2)
        first, second = sample_classes(world, 2, 42)
        pts_first = sample_points(first, world, 5, 42) - first.mean
        pts_second = sample_points(second, world, 5, 42) - second.mean
        assert not np.allclose(pts_first, pts_second)


class TestWorldMoments:
    def test_identity_signal_no_noise(self):
        world = GaussianWorld(
            dim=2, mean_center=np.zeros(2), mean_cov=np.eye(2), class_cov=np.zeros((2, 2))
        )
        m = world_moments(world)
        assert (m.tr_signal, m.tr_noise_sq, m.tr_signal_noise) == (2.0, 0.0, 0.0)
        # Gaussian quartic identity: 4 * Tr(S)^2 + 8 * Tr(S^2) = 16 + 16.
        assert m.gap_fourth_moment == 32.0

    def test_zero_signal(self):
        world = GaussianWorld(
            dim=2, mean_center=np.zeros(2), mean_cov=np.zeros((2, 2)),
            class_cov=np.diag([1.0, 3.0]),
        )
        m = world_moments(world)
        assert m.tr_signal == 0.0
        assert m.tr_noise_sq == 10.0  # 1^2 + 3^2
        assert m.tr_signal_noise == 0.0
        assert m.gap_fourth_moment == 0.0

    def test_orthogonal_supports(self):
        world = GaussianWorld(
            dim=2, mean_center=np.zeros(2), mean_cov=np.diag([1.0, 0.0]),
            class_cov=np.diag([0.0, 1.0]),
        )
        assert world_moments(world).tr_signal_noise == 0.0

    def test_fourth_moment_matches_monte_carlo(self):
        """10^5 simulated class-mean gaps land within 4 SE of the closed form."""
        world = GaussianWorld(
            dim=3, mean_center=np.array([0.5, -1.0, 2.0]),
            mean_cov=np.diag([2.0, 1.0, 0.25]), class_cov=np.eye(3),
        )
        closed = world_moments(world).gap_fourth_moment
        a = np.stack([c.mean for c in sample_classes(world, 100_000, 51)])
        b = np.stack([c.mean for c in sample_classes(world, 100_000, 52)])
        gaps_sq = ((a - b) ** 2).sum(axis=1) ** 2
        se = gaps_sq.std(ddof=1) / np.sqrt(gaps_sq.size)
        assert abs(gaps_sq.mean() - closed) <= 4 * se

    def test_pooled_variance_decomposes(self):
        """Pooled sample covariance approaches signal + noise covariance.

        The pooled sample is hierarchical (points nested in classes), so
        the oracle is a cluster bootstrap: whole classes are resampled,
        which is where the dominant sampling noise lives.
        """
        world = GaussianWorld(
            dim=2, mean_center=np.zeros(2),
            mean_cov=np.diag([1.5, 0.5]), class_cov=np.diag([0.5, 2.0]),
        )
        per_class = [
            sample_points(cls, world, 100, 77) for cls in sample_classes(world, 200, 77)
        ]
        sample = covariance(np.vstack(per_class))
        expected = world.mean_cov + world.class_cov

        boot_rng = np.random.default_rng(770)
        replicas = np.empty((300, 2, 2))
        for i in range(300):
            picks = boot_rng.integers(0, len(per_class), size=len(per_class))
            replicas[i] = covariance(np.vstack([per_class[c] for c in picks]))
        se = replicas.std(axis=0, ddof=1)
        assert np.all(np.abs(sample - expected) <= 4.0 * se)
