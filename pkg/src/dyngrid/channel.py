"""Uplink channel extrapolation for a multi-antenna OFDM system.

A receive array with ``n_rx`` half-wavelength-spaced elements observes pilots
on one bandwidth part (BWP) of ``m_sub`` subcarriers out of ``h_p`` BWPs of a
wideband frequency grid with spacing ``f0``. The frequency response on
subcarrier n is a superposition of K propagation paths

    h_n = sum_k alpha_k exp(-2j pi n f0 tau_k) a_R(theta_k)

so estimating the per-path (theta_k, tau_k, alpha_k) from the observed BWP
extrapolates the channel to the full band. The estimation problem is exactly
the sparse model of :mod:`dyngrid.model`: the dictionary column for a
candidate (theta, tau) is kron(a_R(theta), diag(beta) W b(tau)) with beta the
unit-modulus pilot symbols and W the BWP row selector, and the measurement is
the column-major vectorization of the observed pilot matrix.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import List, Optional, Tuple

import numpy as np

from .model import GridParams, GroundTruth, Observation, ParametricDictionary

__all__ = [
    "OfdmArrayConfig",
    "PathSet",
    "InitConfig",
    "ula_steering",
    "delay_response",
    "AngleDelayDictionary",
    "build_channel_dictionary",
    "generate_channel",
    "coarse_grid_init",
    "extrapolate_channel",
    "nmse_db",
    "rmse_db",
]

NMSE_FLOOR_DB = -300.0
# keep refined angles strictly inside (-pi/2, pi/2)
ANGLE_MARGIN = 1e-6


@dataclass
class OfdmArrayConfig:
    """Array and frequency-grid geometry plus the pilot sequence.

    ``pilot`` must be unit-modulus with one entry per observed subcarrier.
    ``observed_bwp`` selects which of the ``h_p`` BWPs carries pilots.
    """

    n_rx: int
    m_sub: int
    h_p: int
    f0: float
    pilot: np.ndarray
    observed_bwp: int = 0

    def __post_init__(self) -> None:
        if self.n_rx < 1 or self.m_sub < 1 or self.h_p < 1:
            raise ValueError("n_rx, m_sub, h_p must be positive")
        if self.f0 <= 0:
            raise ValueError("f0 must be positive")
        if not (0 <= self.observed_bwp < self.h_p):
            raise ValueError("observed_bwp must lie in [0, h_p)")
        self.pilot = np.asarray(self.pilot, dtype=complex).ravel()
        if self.pilot.shape[0] != self.m_sub:
            raise ValueError("pilot length must equal m_sub")
        if np.any(np.abs(np.abs(self.pilot) - 1.0) > 1e-9):
            raise ValueError("pilot entries must be unit modulus")

    @classmethod
    def with_random_pilot(
        cls,
        n_rx: int,
        m_sub: int,
        h_p: int,
        f0: float,
        observed_bwp: int = 0,
        seed: Optional[int] = None,
    ) -> "OfdmArrayConfig":
        rng = np.random.default_rng(seed)
        phases = rng.uniform(0.0, 2.0 * np.pi, size=m_sub)
        return cls(
            n_rx=n_rx,
            m_sub=m_sub,
            h_p=h_p,
            f0=f0,
            pilot=np.exp(1j * phases),
            observed_bwp=observed_bwp,
        )

    @property
    def full_band_size(self) -> int:
        return self.h_p * self.m_sub

    @property
    def delay_resolution(self) -> float:
        """Inverse of the observed BWP bandwidth."""
        return 1.0 / (self.m_sub * self.f0)

    @property
    def delay_max(self) -> float:
        """Unambiguous delay range given subcarrier spacing f0."""
        return 1.0 / self.f0

    @property
    def angle_resolution_sin(self) -> float:
        """DFT resolution of the array in the sin(theta) domain."""
        return 2.0 / self.n_rx


@dataclass
class PathSet:
    """True multipath parameters used by the channel synthesizer."""

    gains: np.ndarray
    angles: np.ndarray
    delays: np.ndarray

    def __post_init__(self) -> None:
        self.gains = np.asarray(self.gains, dtype=complex).ravel()
        self.angles = np.asarray(self.angles, dtype=float).ravel()
        self.delays = np.asarray(self.delays, dtype=float).ravel()
        k = self.gains.shape[0]
        if self.angles.shape[0] != k or self.delays.shape[0] != k:
            raise ValueError("gains, angles, delays must have equal length")
        if k == 0:
            raise ValueError("need at least one path")
        if np.any(np.abs(self.angles) >= np.pi / 2):
            raise ValueError("angles must lie strictly inside (-pi/2, pi/2)")
        if np.any(self.delays < 0):
            raise ValueError("delays must be nonnegative")

    @property
    def k(self) -> int:
        return self.gains.shape[0]

    def as_grid(self) -> np.ndarray:
        """(K, 2) array of [angle, delay] rows."""
        return np.stack([self.angles, self.delays], axis=1)


def ula_steering(theta: float, n_rx: int) -> np.ndarray:
    """Half-wavelength ULA steering vector, entries exp(-j pi m sin(theta))."""
    theta = float(theta)
    if not (-np.pi / 2 < theta < np.pi / 2):
        raise ValueError(f"angle {theta!r} outside (-pi/2, pi/2)")
    m = np.arange(n_rx)
    return np.exp(-1j * np.pi * m * np.sin(theta))


def delay_response(tau: float, h_p: int, m_sub: int, f0: float) -> np.ndarray:
    """Full-band delay phase ramp, entries exp(-2j pi n f0 tau)."""
    tau = float(tau)
    if not (0.0 <= tau < 1.0 / f0):
        raise ValueError(f"delay {tau!r} outside [0, 1/f0)")
    n = np.arange(h_p * m_sub)
    return np.exp(-2j * np.pi * n * f0 * tau)


class AngleDelayDictionary(ParametricDictionary):
    """Dictionary over (angle, delay) for one observed BWP.

    Column at (theta, tau): kron(a_R(theta), diag(beta) W b(tau)), length
    m_sub * n_rx, matching the column-major vectorization of the observed
    pilot matrix (subcarrier index fastest).
    """

    def __init__(self, config: OfdmArrayConfig):
        self.config = config
        self.row_count = config.m_sub * config.n_rx
        self.param_dim = 2
        self.valid_range = np.array(
            [
                [-np.pi / 2 + ANGLE_MARGIN, np.pi / 2 - ANGLE_MARGIN],
                [0.0, (1.0 - 1e-9) / config.f0],
            ]
        )
        n0 = config.observed_bwp * config.m_sub
        self._sub_idx = n0 + np.arange(config.m_sub)  # absolute subcarriers
        self._ant_idx = np.arange(config.n_rx)
        self._beta = config.pilot

    def _parts(self, theta: np.ndarray):
        angle, tau = float(theta[0]), float(theta[1])
        a = np.exp(-1j * np.pi * self._ant_idx * np.sin(angle))
        g = self._beta * np.exp(-2j * np.pi * self._sub_idx * self.config.f0 * tau)
        return angle, a, g

    def column(self, theta: np.ndarray) -> np.ndarray:
        _, a, g = self._parts(np.atleast_1d(theta))
        return np.kron(a, g)

    def column_jacobian(self, theta: np.ndarray) -> np.ndarray:
        angle, a, g = self._parts(np.atleast_1d(theta))
        da = (-1j * np.pi * self._ant_idx * np.cos(angle)) * a
        dg = (-2j * np.pi * self._sub_idx * self.config.f0) * g
        jac = np.empty((self.row_count, 2), dtype=complex)
        jac[:, 0] = np.kron(da, g)
        jac[:, 1] = np.kron(a, dg)
        return jac

    def _batch_parts(self, thetas: np.ndarray):
        thetas = np.atleast_2d(np.asarray(thetas, dtype=float))
        ang, tau = thetas[:, 0], thetas[:, 1]
        a = np.exp(-1j * np.pi * np.outer(self._ant_idx, np.sin(ang)))
        g = self._beta[:, None] * np.exp(
            -2j * np.pi * self.config.f0 * np.outer(self._sub_idx, tau)
        )
        return ang, a, g

    def columns(self, thetas: np.ndarray) -> np.ndarray:
        # kron(a, g) per column == antenna-major outer product, batched
        _, a, g = self._batch_parts(thetas)
        return (a[:, None, :] * g[None, :, :]).reshape(self.row_count, -1)

    def column_jacobians(self, thetas: np.ndarray) -> np.ndarray:
        ang, a, g = self._batch_parts(thetas)
        da = (-1j * np.pi * np.cos(ang)) * self._ant_idx[:, None] * a
        dg = (-2j * np.pi * self.config.f0) * self._sub_idx[:, None] * g
        s = a.shape[1]
        jac = np.empty((self.row_count, s, 2), dtype=complex)
        jac[:, :, 0] = (da[:, None, :] * g[None, :, :]).reshape(self.row_count, s)
        jac[:, :, 1] = (a[:, None, :] * dg[None, :, :]).reshape(self.row_count, s)
        return jac


def build_channel_dictionary(config: OfdmArrayConfig) -> AngleDelayDictionary:
    """Dictionary whose columns match :func:`generate_channel`'s model."""
    return AngleDelayDictionary(config)


def generate_channel(
    config: OfdmArrayConfig,
    paths: PathSet,
    snr_db: Optional[float] = None,
    *,
    noiseless: bool = False,
    seed: Optional[int] = None,
    rng: Optional[np.random.Generator] = None,
) -> Tuple[np.ndarray, Observation]:
    """Draw the full-band channel and the noisy observed-BWP measurement.

    Returns (h_full, observation): ``h_full`` is the (h_p * m_sub, n_rx)
    frequency response over the full band, and the observation stacks
    vec(diag(beta) W h_full + noise) column-major. The per-entry complex
    noise variance is set so that the sample SNR on the observed BWP equals
    ``snr_db``.
    """
    if np.any(paths.delays >= config.delay_max):
        raise ValueError("path delays must lie inside [0, 1/f0)")
    b = np.exp(
        -2j
        * np.pi
        * np.outer(np.arange(config.full_band_size) * config.f0, paths.delays)
    )
    a = np.exp(-1j * np.pi * np.outer(np.arange(config.n_rx), np.sin(paths.angles)))
    h_full = (b * paths.gains) @ a.T  # (h_p*m_sub, n_rx)

    n0 = config.observed_bwp * config.m_sub
    y_clean = config.pilot[:, None] * h_full[n0 : n0 + config.m_sub, :]
    signal_energy = float(np.real(np.vdot(y_clean, y_clean)))
    if noiseless:
        y = y_clean
        noise_precision = np.inf
    else:
        if snr_db is None:
            raise ValueError("snr_db is required unless noiseless=True")
        n_entries = config.m_sub * config.n_rx
        noise_var = signal_energy / (n_entries * 10.0 ** (snr_db / 10.0))
        noise_precision = 1.0 / noise_var
        gen = rng if rng is not None else np.random.default_rng(seed)
        noise = np.sqrt(noise_var / 2.0) * (
            gen.standard_normal(y_clean.shape) + 1j * gen.standard_normal(y_clean.shape)
        )
        y = y_clean + noise
    meta = GroundTruth(
        theta=paths.as_grid(),
        gains=paths.gains.copy(),
        noise_precision=noise_precision,
        snr_db=snr_db,
    )
    obs = Observation(y=y.reshape(-1, order="F"), meta=meta)
    return h_full, obs


@dataclass
class InitConfig:
    """Coarse initialization settings for :func:`coarse_grid_init`."""

    k_expected: int = 1
    peaks: Optional[int] = None      # default: 2 * k_expected
    radius: int = 2                  # local grid half-width, in fine bins
    oversample: int = 4              # periodogram refinement over DFT bins
    max_points: int = 320
    fallback_shape: Tuple[int, int] = (12, 12)  # (angle, delay) uniform grid

    def __post_init__(self) -> None:
        if self.k_expected < 1 or self.radius < 0 or self.oversample < 1:
            raise ValueError("bad initialization settings")
        if self.peaks is not None and self.peaks < 1:
            raise ValueError("peaks must be positive when given")


def _local_peaks(power: np.ndarray) -> np.ndarray:
    """Indices (flat) of strict local maxima over the 8-neighborhood; edges
    compare against existing neighbors only."""
    p, q = power.shape
    padded = np.full((p + 2, q + 2), -np.inf)
    padded[1:-1, 1:-1] = power
    center = padded[1:-1, 1:-1]
    is_peak = np.ones_like(power, dtype=bool)
    for dp in (-1, 0, 1):
        for dq in (-1, 0, 1):
            if dp == 0 and dq == 0:
                continue
            neighbor = padded[1 + dp : 1 + dp + p, 1 + dq : 1 + dq + q]
            is_peak &= center > neighbor
    return np.flatnonzero(is_peak)


def coarse_grid_init(
    obs: Observation, config: OfdmArrayConfig, init: Optional[InitConfig] = None
) -> GridParams:
    """Place a dense local grid around the strongest periodogram peaks.

    The observed pilot matrix (pilot removed) is correlated against delay and
    angle steering vectors on a lattice ``oversample`` times finer than the
    DFT resolution; around each of the strongest local maxima a
    (2 radius + 1)^2 patch of lattice points becomes grid candidates.
    Duplicates are dropped exactly (patches live on the shared lattice) and
    the total is capped at ``max_points``, strongest peaks first. An all-zero
    observation falls back to a uniform grid of ``fallback_shape``.
    """
    cfg = init if init is not None else InitConfig()
    m, n_rx = config.m_sub, config.n_rx
    y = obs.y
    if y.shape[0] != m * n_rx:
        raise ValueError("observation length does not match config")
    n_peaks = cfg.peaks if cfg.peaks is not None else 2 * cfg.k_expected

    angle_lo, angle_hi = -np.pi / 2 + ANGLE_MARGIN, np.pi / 2 - ANGLE_MARGIN
    if not np.any(y):
        n_a, n_d = cfg.fallback_shape
        sin_vals = np.linspace(-0.95, 0.95, n_a)
        tau_vals = np.linspace(0.0, config.delay_max, n_d, endpoint=False)
        rows = [
            (float(np.arcsin(sv)), float(tv)) for tv in tau_vals for sv in sin_vals
        ]
        return GridParams(np.array(rows))

    y_mat = np.conj(config.pilot)[:, None] * y.reshape((m, n_rx), order="F")

    # correlation lattice, oversample x finer than the DFT bins
    p_bins = cfg.oversample * m
    q_bins = cfg.oversample * n_rx
    # delays live on [0, 1/f0); lattice step = delay_resolution / oversample
    tau_lattice = np.arange(p_bins) * (config.delay_resolution / cfg.oversample)
    sin_lattice = -1.0 + np.arange(q_bins) * (config.angle_resolution_sin / cfg.oversample)
    n0 = config.observed_bwp * m
    sub_idx = n0 + np.arange(m)
    d_steer = np.exp(-2j * np.pi * np.outer(sub_idx * config.f0, tau_lattice))
    a_steer = np.exp(-1j * np.pi * np.outer(np.arange(n_rx), sin_lattice))
    corr = d_steer.conj().T @ y_mat @ np.conj(a_steer)
    power = np.abs(corr) ** 2

    peak_flat = _local_peaks(power)
    if peak_flat.size == 0:
        peak_flat = np.array([int(np.argmax(power))])
    order = np.argsort(power.ravel()[peak_flat])[::-1]
    peak_flat = peak_flat[order[:n_peaks]]

    # lattice wraps in delay (phase ramp is periodic); angle does not
    seen = set()
    rows: List[Tuple[float, float]] = []
    span = range(-cfg.radius, cfg.radius + 1)
    done = False
    for flat in peak_flat:
        p0, q0 = divmod(int(flat), q_bins)
        for dp in span:
            for dq in span:
                p_idx = (p0 + dp) % p_bins
                q_idx = q0 + dq
                if q_idx < 0 or q_idx >= q_bins:
                    continue
                key = (p_idx, q_idx)
                if key in seen:
                    continue
                seen.add(key)
                sin_val = sin_lattice[q_idx]
                if abs(sin_val) >= 1.0:
                    continue
                angle = float(np.clip(np.arcsin(sin_val), angle_lo, angle_hi))
                tau = float(
                    np.clip(tau_lattice[p_idx], 0.0, (1.0 - 1e-9) / config.f0)
                )
                rows.append((angle, tau))
                if len(rows) >= cfg.max_points:
                    done = True
                    break
            if done:
                break
        if done:
            break
    rows.sort(key=lambda r: (r[1], r[0]))
    return GridParams(np.array(rows))


def extrapolate_channel(
    angles: np.ndarray,
    delays: np.ndarray,
    gains: np.ndarray,
    config: OfdmArrayConfig,
) -> np.ndarray:
    """Rebuild the full-band channel from estimated per-path parameters."""
    angles = np.asarray(angles, dtype=float).ravel()
    delays = np.asarray(delays, dtype=float).ravel()
    gains = np.asarray(gains, dtype=complex).ravel()
    if not (angles.shape == delays.shape == gains.shape):
        raise ValueError("angles, delays, gains must have equal length")
    b = np.exp(
        -2j * np.pi * np.outer(np.arange(config.full_band_size) * config.f0, delays)
    )
    a = np.exp(-1j * np.pi * np.outer(np.arange(config.n_rx), np.sin(angles)))
    return (b * gains) @ a.T


def nmse_db(h_hat: np.ndarray, h_true: np.ndarray) -> float:
    """10 log10(||h_hat - h_true||_F^2 / ||h_true||_F^2), floored at -300 dB."""
    h_hat = np.asarray(h_hat)
    h_true = np.asarray(h_true)
    if h_hat.shape != h_true.shape:
        raise ValueError("shape mismatch")
    denom = float(np.real(np.vdot(h_true, h_true)))
    if denom == 0.0:
        raise ValueError("reference channel is identically zero")
    err = float(np.real(np.vdot(h_hat - h_true, h_hat - h_true)))
    if err <= 0.0:
        return NMSE_FLOOR_DB
    return max(10.0 * np.log10(err / denom), NMSE_FLOOR_DB)


def rmse_db(
    est: np.ndarray,
    truth: np.ndarray,
    c_theta: Optional[float] = None,
    c_tau: Optional[float] = None,
    *,
    fallback_ranges: Optional[Tuple[float, float]] = None,
) -> float:
    """Normalized parameter error in dB after greedy nearest matching.

    ``est`` and ``truth`` are (K, 2) arrays of [angle, delay] rows. Each
    estimated pair is matched to the nearest unmatched true pair, greedily in
    ascending normalized distance; surplus estimates (K_est > K_true) fall
    back to their nearest true pair. The normalizers ``c_theta``/``c_tau``
    default to the true dynamic ranges; a degenerate range falls back to
    ``fallback_ranges`` (e.g. the grid's valid extents).

    Returns 10 log10( mean_k [ (d_theta_k / c_theta)^2 + (d_tau_k / c_tau)^2 ] ).
    """
    est = np.atleast_2d(np.asarray(est, dtype=float))
    truth = np.atleast_2d(np.asarray(truth, dtype=float))
    if est.shape[1] != 2 or truth.shape[1] != 2 or est.size == 0 or truth.size == 0:
        raise ValueError("est and truth must be nonempty (K, 2) arrays")

    def _normalizer(given: Optional[float], values: np.ndarray, fb: Optional[float]) -> float:
        if given is not None:
            if given <= 0:
                raise ValueError("normalizers must be positive")
            return float(given)
        span = float(np.ptp(values))
        if span > 0:
            return span
        if fb is not None and fb > 0:
            return float(fb)
        raise ValueError(
            "degenerate true dynamic range and no fallback normalizer given"
        )

    fb_theta, fb_tau = fallback_ranges if fallback_ranges is not None else (None, None)
    c_t = _normalizer(c_theta, truth[:, 0], fb_theta)
    c_d = _normalizer(c_tau, truth[:, 1], fb_tau)

    d_theta = (est[:, 0][:, None] - truth[:, 0][None, :]) / c_t
    d_tau = (est[:, 1][:, None] - truth[:, 1][None, :]) / c_d
    dist = d_theta**2 + d_tau**2  # (K_est, K_true)

    k_est, k_true = dist.shape
    assigned = np.full(k_est, -1)
    used_true = np.zeros(k_true, dtype=bool)
    order = np.argsort(dist, axis=None, kind="stable")
    for flat in order:
        i, j = divmod(int(flat), k_true)
        if assigned[i] >= 0 or used_true[j]:
            continue
        assigned[i] = j
        used_true[j] = True
        if np.all(assigned >= 0) or np.all(used_true):
            break
    for i in range(k_est):
        if assigned[i] < 0:  # surplus estimates reuse their nearest true pair
            assigned[i] = int(np.argmin(dist[i]))
    mean_err = float(np.mean(dist[np.arange(k_est), assigned]))
    return 10.0 * np.log10(max(mean_err, 1e-30))
