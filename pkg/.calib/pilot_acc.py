import time
import warnings

import numpy as np

warnings.filterwarnings("ignore")

from dyngrid.channel import (AngleDelayDictionary, InitConfig, OfdmArrayConfig,
                             PathSet, coarse_grid_init, generate_channel, nmse_db)
from dyngrid.framework import (FrameworkConfig, fit_scaling_exponent,
                               measure_sse_wall_times, run_alternating_map)
from dyngrid.harness import DEFAULT_CONFIG, run_cell, sparsity_profile
from dyngrid.oracles import exhaustive_small_mle
from dyngrid.vbi import SupportPolicy

desk = OfdmArrayConfig.with_random_pilot(
    n_rx=32, m_sub=32, h_p=4, f0=120e3, observed_bwp=0, seed=7)


def two_path(sep_scale, snr_db, seed):
    rng = np.random.default_rng(seed)
    ss = sep_scale * desk.angle_resolution_sin
    ts = sep_scale * desk.delay_resolution
    s0 = rng.uniform(-0.7, 0.7 - ss)
    t0 = rng.uniform(200e-9, 0.8 * desk.delay_max - ts)
    paths = PathSet(np.exp(1j * rng.uniform(0, 2 * np.pi, 2)),
                    np.arcsin([s0, s0 + ss]), np.array([t0, t0 + ts]))
    h, obs = generate_channel(desk, paths, snr_db, rng=rng)
    return paths, h, obs


# --- criterion 4a: full pipeline two-path super-resolution, pilot 10 seeds
t0 = time.perf_counter()
errs = []
for seed in range(10):
    paths, h, obs = two_path(0.4, 20.0, seed)
    grid0 = coarse_grid_init(obs, desk, InitConfig(k_expected=2))
    d = AngleDelayDictionary(desk)
    cfg = FrameworkConfig(i0=6, i1=30, i2=35, expected_components=2,
                          snr_db=20.0)
    res = run_alternating_map(obs, d, grid0, cfg)
    ss = 0.4 * desk.angle_resolution_sin
    ts = 0.4 * desk.delay_resolution
    per_path = []
    for k in range(2):
        best = np.inf
        for j in range(res.theta.shape[0]):
            e = max(abs(np.sin(res.theta[j, 0]) - np.sin(paths.angles[k])) / ss,
                    abs(res.theta[j, 1] - paths.delays[k]) / ts)
            best = min(best, e)
        per_path.append(best)
    errs.append(max(per_path))
print("C4a pipeline: median err", np.median(errs), "max", np.max(errs),
      "time/seed", (time.perf_counter() - t0) / 10)

# --- criterion 4b: K=1 noiseless pipeline vs exhaustive zoom
t0 = time.perf_counter()
gaps = []
for seed in (0, 1):
    rng = np.random.default_rng(100 + seed)
    paths = PathSet([1.1 * np.exp(0.3j)],
                    [np.arcsin(rng.uniform(-0.7, 0.7))],
                    [rng.uniform(0.1, 0.8) * desk.delay_max])
    h, obs = generate_channel(desk, paths, noiseless=True)
    grid0 = coarse_grid_init(obs, desk, InitConfig(k_expected=1))
    d = AngleDelayDictionary(desk)
    cfg = FrameworkConfig(i0=4, i1=20, i2=30, expected_components=1,
                          snr_db=40.0)
    res = run_alternating_map(obs, d, grid0, cfg)
    th_o, _ = exhaustive_small_mle(d, obs.y, 1, resolution=2e-5)
    widths = d.valid_range[:, 1] - d.valid_range[:, 0]
    j = int(np.argmax(np.abs(res.x)))
    gap = np.abs(res.theta[j] - th_o) / (2e-5 * widths)
    gaps.append(gap)
    print("  4b seed", seed, "support", res.theta.shape[0], "gap(units of res)", gap)
print("C4b time/seed", (time.perf_counter() - t0) / 2)

# --- criterion 6: convergence 5 -> 10 on the K=8 scenario, pilot 8 seeds
t0 = time.perf_counter()
imps = []
for seed in range(8):
    rng = np.random.default_rng(200 + seed)
    k = 8
    angles = np.arcsin(rng.uniform(-0.9, 0.9, k))
    start = rng.uniform(100e-9, 2500e-9 - 93.75e-9 * (k - 1))
    delays = start + 93.75e-9 * np.arange(k)
    paths = PathSet(np.exp(1j * rng.uniform(0, 2 * np.pi, k)), angles, delays)
    h, obs = generate_channel(desk, paths, 10.0, rng=rng)
    grid0 = coarse_grid_init(obs, desk, InitConfig(k_expected=8))
    d = AngleDelayDictionary(desk)
    cfg = FrameworkConfig(i0=10, i1=30, i2=35, expected_components=8,
                          snr_db=10.0, support=SupportPolicy(s_max=32))
    res = run_alternating_map(obs, d, grid0, cfg)
    nm = [r.signal_nmse_db for r in res.outer_trace]
    at5 = nm[min(4, len(nm) - 1)]
    at10 = nm[min(9, len(nm) - 1)]
    imps.append(at5 - at10)
    print("  c6 seed", seed, "outers", res.outer_iters, "nmse5", round(at5, 2),
          "nmse10", round(at10, 2), "imp", round(at5 - at10, 3))
print("C6 median improvement", np.median(imps), "time/seed",
      (time.perf_counter() - t0) / 8)

# --- criterion 8: sparsity counts on default scenario, pilot 10 trials
t0 = time.perf_counter()
wins = 0
for trial in range(10):
    prof = sparsity_profile(DEFAULT_CONFIG, 10.0, trial)
    tm = np.array([p["tanh_mag"] for p in prof])
    bm = np.array([p["bgg_mag"] for p in prof])
    nt = int(np.sum(tm**2 >= 0.01 * tm.max() ** 2))
    nb = int(np.sum(bm**2 >= 0.01 * bm.max() ** 2))
    wins += int(nt < nb)
    print("  c8 trial", trial, "tanh", nt, "bgg", nb)
print("C8 wins", wins, "/10, time/trial", (time.perf_counter() - t0) / 10)

# --- criterion 9: scaling exponent
t0 = time.perf_counter()
times = measure_sse_wall_times([64, 128, 256, 512], sweeps=4, repeats=2, seed=0)
expo = fit_scaling_exponent([64, 128, 256, 512], times)
print("C9 exponent", expo, "times", times, "elapsed", time.perf_counter() - t0)
