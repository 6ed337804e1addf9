"""Shared world builders for the test suite."""

import numpy as np

from protoshot.world import GaussianWorld


def spherical_world(dim, signal=1.0, noise=1.0):
    return GaussianWorld(
        dim=dim,
        mean_center=np.zeros(dim),
        mean_cov=signal * np.eye(dim),
        class_cov=noise * np.eye(dim),
    )


def random_psd_world(dim, seed, signal_scale=1.0, noise_scale=1.0):
    """A world with random PSD signal and noise covariances."""
    rng = np.random.default_rng(seed)
    a = rng.standard_normal((dim, dim))
    b = rng.standard_normal((dim, dim))
    return GaussianWorld(
        dim=dim,
        mean_center=rng.standard_normal(dim),
        mean_cov=signal_scale * (a @ a.T) / dim,
        class_cov=noise_scale * (b @ b.T) / dim,
    )
