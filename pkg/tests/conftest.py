"""Shared builders for the test suite.

Everything is seeded explicitly; tests that loop over trials derive one
Generator per trial so failures reproduce in isolation.
"""

import numpy as np
import pytest

from dyngrid.channel import OfdmArrayConfig, PathSet, generate_channel
from dyngrid.model import FourierDictionary, GridParams, synthesize_observation


@pytest.fixture
def rng():
    return np.random.default_rng(20260825)


@pytest.fixture
def desk_config():
    """Small array/bandwidth scenario used across the channel tests."""
    return OfdmArrayConfig.with_random_pilot(
        n_rx=32, m_sub=32, h_p=4, f0=120e3, observed_bwp=0, seed=7
    )


def fourier_scene(n=64, m=32, idx=(5, 20, 41), gains=None, snr_db=None, seed=0):
    """On-grid line-spectral scene: uniform N-point grid, K planted columns.

    Gains default to O(1) magnitudes spread in phase; pass ``snr_db=None``
    for a noiseless observation.
    """
    dictionary = FourierDictionary(m)
    grid = GridParams(np.arange(n)[:, None] / n)
    x = np.zeros(n, dtype=complex)
    if gains is None:
        gains = [1.0, 1.1 * np.exp(0.3j), 1.2 * np.exp(-1.1j)][: len(idx)]
    for i, g in zip(idx, gains):
        x[i] = g
    rng = np.random.default_rng(seed)
    if snr_db is None:
        obs = synthesize_observation(dictionary, grid, x, noiseless=True, rng=rng)
    else:
        sig = np.linalg.norm(
            np.stack([dictionary.column(grid.values[i]) for i in idx], axis=1)
            @ np.array(gains)
        )
        kappa = m * 10.0 ** (snr_db / 10.0) / sig**2
        obs = synthesize_observation(dictionary, grid, x, noise_precision=kappa, rng=rng)
    return dictionary, grid, x, obs


def two_path_scene(config, sep_scale=0.4, snr_db=20.0, seed=0):
    """Two channel paths separated by ``sep_scale`` of the DFT resolution in
    both sine-angle and delay; unit-magnitude random-phase gains."""
    rng = np.random.default_rng(seed)
    sin_sep = sep_scale * config.angle_resolution_sin
    tau_sep = sep_scale * config.delay_resolution
    sin0 = rng.uniform(-0.7, 0.7 - sin_sep)
    tau0 = rng.uniform(200e-9, 0.8 * config.delay_max - tau_sep)
    angles = np.arcsin([sin0, sin0 + sin_sep])
    delays = np.array([tau0, tau0 + tau_sep])
    gains = np.exp(1j * rng.uniform(0, 2 * np.pi, 2))
    paths = PathSet(gains, angles, delays)
    h_full, obs = generate_channel(config, paths, snr_db, rng=rng)
    return paths, h_full, obs
