import time
import warnings

import numpy as np

warnings.filterwarnings("ignore")

from dyngrid.channel import (AngleDelayDictionary, InitConfig, OfdmArrayConfig,
                             PathSet, coarse_grid_init, generate_channel)
from dyngrid.framework import FrameworkConfig, run_alternating_map
from dyngrid.model import FourierDictionary, GridParams, assemble_matrix, synthesize_observation
from dyngrid.prior import BgtPrior
from dyngrid.vbi import SupportPolicy, run_sse

desk = OfdmArrayConfig.with_random_pilot(
    n_rx=32, m_sub=32, h_p=4, f0=120e3, observed_bwp=0, seed=7)

# --- criterion 3: noiseless exact recovery N=64 M=32 K=3
d = FourierDictionary(32)
grid = GridParams(np.arange(64)[:, None] / 64.0)
x = np.zeros(64, dtype=complex)
idx = [5, 20, 41]
gains = [1.0, 1.1 * np.exp(0.3j), 1.2 * np.exp(-1.1j)]
for i, g in zip(idx, gains):
    x[i] = g
obs = synthesize_observation(d, grid, x, noiseless=True)
prior = BgtPrior.default(64, 3)
for sweeps in (30, 50, 100):
    out = run_sse(obs, d, grid, prior, sweeps, variant="tanh",
                  support_policy=SupportPolicy(), converge_tol=0.0)
    err = np.linalg.norm(out.x_hat - x) ** 2 / np.linalg.norm(x) ** 2
    print("sweeps", sweeps, "support", out.support.tolist(),
          "x-nmse dB", 10 * np.log10(err))

cfg = FrameworkConfig(i0=4, i1=50, i2=30, expected_components=3, snr_db=60.0)
res = run_alternating_map(obs, d, grid, cfg)
a = assemble_matrix(d, GridParams(res.theta))
resid = obs.y - a @ res.x
nm = 10 * np.log10(np.linalg.norm(resid) ** 2 / np.linalg.norm(obs.y) ** 2)
print("pipeline signal nmse dB", nm, "support", res.support.tolist(),
      "theta", np.round(res.theta.ravel() * 64, 6).tolist())

# rerun determinism
res2 = run_alternating_map(obs, d, grid, cfg)
print("deterministic:", np.array_equal(res.theta, res2.theta),
      np.array_equal(res.x, res2.x))


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


# --- criterion 4a with a larger refinement budget, 10 seeds
for label, fw in (("i0=8,i2=50", dict(i0=8, i1=30, i2=50)),
                  ("i0=6,i2=35+merge", dict(i0=6, i1=30, i2=35))):
    t0 = time.perf_counter()
    errs = []
    viol = 0
    for seed in range(10):
        paths, h, obs = two_path(0.4, 20.0, seed)
        grid0 = coarse_grid_init(obs, desk, InitConfig(k_expected=2))
        dd = AngleDelayDictionary(desk)
        cfg = FrameworkConfig(expected_components=2, snr_db=20.0, **fw)
        res = run_alternating_map(obs, dd, grid0, cfg)
        ss = 0.4 * desk.angle_resolution_sin
        ts = 0.4 * desk.delay_resolution
        per = []
        for k in range(2):
            best = np.inf
            for j in range(res.theta.shape[0]):
                e = max(abs(np.sin(res.theta[j, 0]) - np.sin(paths.angles[k])) / ss,
                        abs(res.theta[j, 1] - paths.delays[k]) / ts)
                best = min(best, e)
            per.append(best)
        errs.append(max(per))
        for steps in res.srgu_traces:
            for rec in steps:
                if not rec.stalled and rec.objective_after > rec.objective_before:
                    viol += 1
    print(label, "median", round(float(np.median(errs)), 4),
          "max", round(float(np.max(errs)), 4), "violations", viol,
          "t/seed", round((time.perf_counter() - t0) / 10, 2))
