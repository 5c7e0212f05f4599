"""Acceptance gate: ten numbered criteria, one test and one verdict line each.

Each test prints a single [PASS]/[FAIL] line (visible with -s, or in captured
output on failure) and then asserts, so `pytest -v` gives one line per
criterion either way. Criterion 5 runs a full 50-trial sweep and dominates
the suite's runtime; everything else is seconds.
"""

import csv
import hashlib
import time

import numpy as np
import pytest

from dyngrid.channel import (
    AngleDelayDictionary,
    InitConfig,
    OfdmArrayConfig,
    PathSet,
    build_channel_dictionary,
    coarse_grid_init,
    generate_channel,
)
from dyngrid.framework import (
    FrameworkConfig,
    fit_scaling_exponent,
    measure_sse_wall_times,
    run_alternating_map,
)
from dyngrid.harness import (
    CSV_COLUMNS,
    DEFAULT_CONFIG,
    load_config,
    run_cell,
    run_experiment,
    sparsity_profile,
)
from dyngrid.model import (
    FourierDictionary,
    GridParams,
    Observation,
    assemble_matrix,
    synthesize_observation,
)
from dyngrid.oracles import dense_quadratic_map, exhaustive_small_mle, fd_gradient
from dyngrid.prior import BgtPrior
from dyngrid.refine import grid_gradient, grid_objective, lmmse_gain_update
from dyngrid.vbi import SupportPolicy, run_sse, update_qx


def _verdict(num, name, ok, detail):
    print(f"[{'PASS' if ok else 'FAIL'}] criterion {num} ({name}): {detail}")


def _desk():
    return OfdmArrayConfig.with_random_pilot(
        n_rx=32, m_sub=32, h_p=4, f0=120e3, observed_bwp=0, seed=7
    )


def _two_path_scene(config, sep_scale, snr_db, seed):
    rng = np.random.default_rng(seed)
    sin_sep = sep_scale * config.angle_resolution_sin
    tau_sep = sep_scale * config.delay_resolution
    sin0 = rng.uniform(-0.7, 0.7 - sin_sep)
    tau0 = rng.uniform(200e-9, 0.8 * config.delay_max - tau_sep)
    paths = PathSet(
        np.exp(1j * rng.uniform(0, 2 * np.pi, 2)),
        np.arcsin([sin0, sin0 + sin_sep]),
        np.array([tau0, tau0 + tau_sep]),
    )
    h_full, obs = generate_channel(config, paths, snr_db, rng=rng)
    return paths, h_full, obs


# --------------------------------------------------------------------------

def test_criterion_01_gradient_contract():
    rng = np.random.default_rng(11)
    t_start = time.perf_counter()
    worst = {}
    for kind in ("fourier", "angle-delay"):
        worst[kind] = 0.0
        for _ in range(200):
            if kind == "fourier":
                dictionary = FourierDictionary(int(rng.integers(8, 33)))
            else:
                dictionary = build_channel_dictionary(
                    OfdmArrayConfig.with_random_pilot(
                        n_rx=int(rng.integers(4, 9)),
                        m_sub=int(rng.integers(4, 9)),
                        h_p=2,
                        f0=120e3,
                        seed=int(rng.integers(0, 2**31)),
                    )
                )
            s = int(rng.integers(1, 4))
            lo = dictionary.valid_range[:, 0]
            hi = dictionary.valid_range[:, 1]
            margin = 0.05 * (hi - lo)
            theta = rng.uniform(lo + margin, hi - margin,
                                size=(s, dictionary.param_dim))
            x = rng.standard_normal(s) + 1j * rng.standard_normal(s)
            y = rng.standard_normal(dictionary.row_count) + 1j * rng.standard_normal(
                dictionary.row_count
            )
            analytic = grid_gradient(dictionary, theta, x, y).ravel()
            fd = fd_gradient(
                lambda t: grid_objective(dictionary, t.reshape(s, -1), x, y),
                theta.ravel(),
                step=1e-6,
                scale=np.tile(hi - lo, s),
            )
            rel = np.linalg.norm(analytic - fd) / max(np.linalg.norm(fd), 1e-12)
            worst[kind] = max(worst[kind], float(rel))
    elapsed = time.perf_counter() - t_start
    ok = all(w <= 1e-5 for w in worst.values()) and elapsed < 30.0
    _verdict(
        1, "gradient contract", ok,
        f"max rel err fourier {worst['fourier']:.2e}, "
        f"angle-delay {worst['angle-delay']:.2e}, elapsed {elapsed:.1f}s "
        f"(tol 1e-5, 200 instances each, < 30 s)",
    )
    assert ok


def test_criterion_02_quadratic_solver_equivalence():
    rng = np.random.default_rng(23)
    worst_qx = 0.0
    worst_lmmse = 0.0
    for _ in range(50):
        m, n = int(rng.integers(6, 14)), int(rng.integers(8, 18))
        a = rng.standard_normal((m, n)) + 1j * rng.standard_normal((m, n))
        y = rng.standard_normal(m) + 1j * rng.standard_normal(m)
        kappa = float(rng.uniform(0.5, 50.0))
        c_vec = rng.uniform(0.1, 10.0, size=n)
        mu, _ = update_qx(a, y, kappa, c_vec)
        ref = dense_quadratic_map(a, y, kappa, c_vec)
        worst_qx = max(worst_qx, float(np.linalg.norm(mu - ref) / np.linalg.norm(ref)))

        s = int(rng.integers(1, 7))
        a_s = rng.standard_normal((m, s)) + 1j * rng.standard_normal((m, s))
        u = rng.standard_normal(s) + 1j * rng.standard_normal(s)
        sigma = rng.uniform(0.05, 5.0, size=s)
        x_hat = lmmse_gain_update(a_s, y, kappa, u, sigma)
        ref = dense_quadratic_map(a_s, y, 1.0, (1.0 / kappa) / sigma, u)
        worst_lmmse = max(
            worst_lmmse, float(np.linalg.norm(x_hat - ref) / np.linalg.norm(ref))
        )
    ok = worst_qx <= 1e-9 and worst_lmmse <= 1e-9
    _verdict(
        2, "quadratic solver equivalence", ok,
        f"posterior mean max rel err {worst_qx:.2e}, gain refit {worst_lmmse:.2e} "
        f"(tol 1e-9, 50 instances each)",
    )
    assert ok


def test_criterion_03_exact_recovery():
    d = FourierDictionary(32)
    grid = GridParams(np.arange(64)[:, None] / 64.0)
    idx = [5, 20, 41]
    gains = [1.0, 1.1 * np.exp(0.3j), 1.2 * np.exp(-1.1j)]
    x = np.zeros(64, dtype=complex)
    for i, g in zip(idx, gains):
        x[i] = g
    obs = synthesize_observation(d, grid, x, noiseless=True)

    out = run_sse(obs, d, grid, BgtPrior.default(64, 3), 30, variant="tanh",
                  support_policy=SupportPolicy(), converge_tol=0.0)
    sse_support_ok = out.support.tolist() == idx
    x_nmse = 10 * np.log10(
        np.linalg.norm(out.x_hat - x) ** 2 / np.linalg.norm(x) ** 2
    )

    cfg = FrameworkConfig(i0=4, i1=30, i2=40, expected_components=3)
    res = run_alternating_map(obs, d, grid, cfg)
    a_hat = assemble_matrix(d, GridParams(res.theta))
    resid = obs.y - a_hat @ res.x
    pipe_nmse = 10 * np.log10(
        np.linalg.norm(resid) ** 2 / np.linalg.norm(obs.y) ** 2
    )
    res2 = run_alternating_map(obs, d, grid, cfg)
    deterministic = np.array_equal(res.theta, res2.theta) and np.array_equal(
        res.x, res2.x
    )
    ok = sse_support_ok and x_nmse < -60.0 and pipe_nmse < -80.0 and deterministic
    _verdict(
        3, "exact recovery", ok,
        f"support {out.support.tolist()}, x NMSE {x_nmse:.1f} dB (< -60), "
        f"pipeline NMSE {pipe_nmse:.1f} dB (< -80), deterministic {deterministic}",
    )
    assert ok


def test_criterion_04_super_resolution():
    desk = _desk()
    d = AngleDelayDictionary(desk)
    sin_sep = 0.4 * desk.angle_resolution_sin
    tau_sep = 0.4 * desk.delay_resolution
    errs = []
    for seed in range(50):
        paths, _, obs = _two_path_scene(desk, 0.4, 20.0, seed)
        grid0 = coarse_grid_init(obs, desk, InitConfig(k_expected=2))
        cfg = FrameworkConfig(i0=8, i1=30, i2=50, expected_components=2,
                              snr_db=20.0)
        res = run_alternating_map(obs, d, grid0, cfg)
        per_path = []
        for k in range(2):
            best = np.inf
            for j in range(res.theta.shape[0]):
                e = max(
                    abs(np.sin(res.theta[j, 0]) - np.sin(paths.angles[k])) / sin_sep,
                    abs(res.theta[j, 1] - paths.delays[k]) / tau_sep,
                )
                best = min(best, e)
            per_path.append(best)
        errs.append(max(per_path))
    median_err = float(np.median(errs))

    # K=1 noiseless: pipeline and exhaustive zoom must land on the same spot.
    # Run the outer loop to a fixed-point (tol 0) so a transient duplicate
    # component is pruned before comparing against the oracle.
    resolution = 2e-5
    widths = d.valid_range[:, 1] - d.valid_range[:, 0]
    agree = True
    gaps = []
    for seed in range(3):
        rng = np.random.default_rng(400 + seed)
        paths = PathSet(
            [1.1 * np.exp(0.3j)],
            [np.arcsin(rng.uniform(-0.7, 0.7))],
            [rng.uniform(0.1, 0.8) * desk.delay_max],
        )
        _, obs = generate_channel(desk, paths, noiseless=True)
        grid0 = coarse_grid_init(obs, desk, InitConfig(k_expected=1))
        cfg = FrameworkConfig(i0=8, i1=20, i2=60, expected_components=1,
                              tol_outer=0.0)
        res = run_alternating_map(obs, d, grid0, cfg)
        theta_o, _ = exhaustive_small_mle(d, obs.y, 1, resolution=resolution)
        j = int(np.argmax(np.abs(res.x)))
        gap = np.abs(res.theta[j] - theta_o) / (resolution * widths)
        gaps.append(float(np.max(gap)))
        agree &= bool(np.all(gap <= 2.0))
    ok = median_err < 0.05 and agree
    _verdict(
        4, "super resolution", ok,
        f"median two-path err {median_err:.4f}x separation (< 0.05, 50 seeds); "
        f"K=1 oracle gaps {[round(g, 3) for g in gaps]}x fine resolution (<= 2)",
    )
    assert ok


# Ablation sweep settings. The iteration budgets are raised over the shipped
# defaults and the support cap widened to 64 so the bgg variant is compared at
# its best on the K=8 sub-resolution ladder; the scene itself (path count, gap,
# SNR grid, trial count) is fixed by the check.
CRIT5_OVERRIDES = {
    "scenario": {"k_paths": 8, "delay_gap_ns": 93.75},
    "sweep": {"snr_db": [0.0, 5.0, 10.0, 15.0, 20.0]},
    "algorithms": ["proposed", "proposed-bgg", "proposed-gd"],
    "trials": 50,
    "framework": {"i0": 10, "i1": 50, "i2": 60, "support": {"s_max": 64}},
}


def test_criterion_05_ablation_orderings(tmp_path):
    over = dict(CRIT5_OVERRIDES)
    over["output"] = {
        "csv": str(tmp_path / "ablation.csv"),
        "summary": str(tmp_path / "ablation_summary.csv"),
        "trace": None,
    }
    cfg = load_config(overrides=over)
    result = run_experiment(cfg)
    med = {}
    for alg in cfg["algorithms"]:
        med[alg] = {}
        for snr in cfg["sweep"]["snr_db"]:
            vals = [
                r["nmse_db"]
                for r in result.rows
                if r["algorithm"] == alg
                and r["snr_db"] == float(snr)
                and r["status"] == "ok"
            ]
            med[alg][snr] = float(np.median(vals))
    details = []
    points = 0
    for snr in cfg["sweep"]["snr_db"]:
        t = med["proposed"][snr]
        b = med["proposed-bgg"][snr]
        g = med["proposed-gd"][snr]
        point_ok = (t <= b) and (b <= t + 3.0) and (t <= g)
        points += int(point_ok)
        details.append(
            f"snr {snr:g}: tanh {t:.2f} bgg {b:.2f} gd {g:.2f} "
            f"{'ok' if point_ok else 'X'}"
        )
    ok = points >= 4
    _verdict(5, "ablation orderings", ok,
             f"{points}/5 SNR points hold; " + "; ".join(details))
    assert ok


def test_criterion_06_rapid_convergence():
    over = {
        "scenario": {"k_paths": 8, "delay_gap_ns": 93.75},
        "framework": {"i0": 10, "i1": 30, "i2": 35, "support": {"s_max": 32}},
    }
    cfg = load_config(overrides=over)
    improvements = []
    for trial in range(9):
        row = run_cell(cfg, "proposed", 10.0, trial, collect_trace=True)
        assert row["status"] == "ok", row["error"]
        recs = row["_trace"]
        nm = [r["nmse_db"] for r in recs]
        at5 = nm[min(4, len(nm) - 1)]
        at10 = nm[min(9, len(nm) - 1)]
        improvements.append(at5 - at10)
    med = float(np.median(improvements))
    ok = med < 1.0
    _verdict(
        6, "rapid convergence", ok,
        f"median NMSE improvement outer 5 -> 10 is {med:.3f} dB (< 1 dB, "
        f"9 trials)",
    )
    assert ok


class _MatrixDictionary:
    def __init__(self, a):
        self.row_count, self._n = a.shape
        self.param_dim = 1
        self.valid_range = np.array([[0.0, 1.0]])

    def column(self, theta):
        raise NotImplementedError

    def column_jacobian(self, theta):
        raise NotImplementedError


def test_criterion_07_monotonicity_invariants():
    # (a) SR-GU never logs an accepted step that increases the objective
    over = {
        "scenario": {"n_rx": 16, "m_sub": 16, "h_p": 2, "k_paths": 3},
        "framework": {"i0": 3, "i1": 12, "i2": 15},
        "init": {"max_points": 200},
    }
    cfg = load_config(overrides=over)
    violations = 0
    runs = 0
    for trial in range(20):
        for alg in ("proposed", "proposed-gd"):
            snr = [5.0, 10.0, 20.0][trial % 3]
            row = run_cell(cfg, alg, snr, trial)
            assert row["status"] == "ok", row["error"]
            violations += row["srgu_violations"]
            runs += 1

    # (b) 1000 randomized sweeps keep lambda in [0, 1] and precisions finite
    rng = np.random.default_rng(77)
    sweeps_seen = 0
    ranges_ok = True
    while sweeps_seen < 1000:
        m = int(rng.integers(6, 20))
        n = int(rng.integers(m, 40))
        a = (rng.standard_normal((m, n)) + 1j * rng.standard_normal((m, n))) / np.sqrt(m)
        k = int(rng.integers(0, 4))
        x = np.zeros(n, dtype=complex)
        if k:
            x[rng.choice(n, k, replace=False)] = (
                rng.standard_normal(k) + 1j * rng.standard_normal(k)
            )
        y = a @ x + 0.1 * (rng.standard_normal(m) + 1j * rng.standard_normal(m))
        prior = BgtPrior.default(n, max(k, 1))
        variant = "tanh" if rng.uniform() < 0.5 else "bgg"
        out = run_sse(
            Observation(y=y),
            _MatrixDictionary(a),
            GridParams(np.linspace(0.0, 0.99, n)[:, None]),
            prior,
            int(rng.integers(1, 8)),
            variant=variant,
            converge_tol=0.0,
            a=a,
        )
        st = out.state
        ranges_ok &= bool(np.all((st.s_prob >= 0) & (st.s_prob <= 1)))
        for arr in (st.mu, st.sigma_diag, st.rho_shape, st.rho_rate):
            ranges_ok &= bool(np.all(np.isfinite(arr)))
        ranges_ok &= bool(
            np.isfinite(st.kappa_shape) and np.isfinite(st.kappa_rate)
            and st.kappa_shape > 0 and st.kappa_rate > 0
        )
        sweeps_seen += out.sweeps_run
    ok = violations == 0 and ranges_ok
    _verdict(
        7, "monotonicity invariants", ok,
        f"{violations} SR-GU violations over {runs} runs; "
        f"{sweeps_seen} randomized sweeps kept lambda in [0,1] and finite "
        f"precisions: {ranges_ok}",
    )
    assert ok


def test_criterion_08_sparsity_promotion():
    wins = 0
    for trial in range(50):
        profile = sparsity_profile(DEFAULT_CONFIG, 10.0, trial)
        tanh = np.array([p["tanh_mag"] for p in profile])
        bgg = np.array([p["bgg_mag"] for p in profile])
        n_tanh = int(np.sum(tanh**2 >= 0.01 * np.max(tanh) ** 2))
        n_bgg = int(np.sum(bgg**2 >= 0.01 * np.max(bgg) ** 2))
        wins += int(n_tanh < n_bgg)
    ok = wins >= 45
    _verdict(
        8, "sparsity promotion", ok,
        f"tanh profile strictly sparser in {wins}/50 seeds (need >= 45)",
    )
    assert ok


def test_criterion_09_scaling_audit():
    sizes = [64, 128, 256, 512]
    times = measure_sse_wall_times(sizes, sweeps=4, repeats=3, seed=0)
    exponent = fit_scaling_exponent(sizes, times)
    ok = 2.2 <= exponent <= 3.3
    _verdict(
        9, "scaling audit", ok,
        f"fitted SSE wall-time exponent {exponent:.2f} over N in {sizes} "
        f"(required [2.2, 3.3])",
    )
    assert ok


def test_criterion_10_deterministic_csv(tmp_path):
    def run_once(subdir):
        out = tmp_path / subdir
        out.mkdir()
        over = {
            "scenario": {"n_rx": 8, "m_sub": 8, "h_p": 2, "k_paths": 2},
            "sweep": {"snr_db": [10.0]},
            "algorithms": ["proposed", "omp-ongrid"],
            "trials": 2,
            "framework": {"i0": 2, "i1": 8, "i2": 10},
            "init": {"oversample": 2, "radius": 1, "max_points": 80},
            "output": {
                "csv": str(out / "results.csv"),
                "summary": str(out / "summary.csv"),
                "trace": None,
            },
        }
        cfg = load_config(overrides=over)
        run_experiment(cfg)
        runtime_col = CSV_COLUMNS.index("runtime_s")
        h = hashlib.sha256()
        with open(out / "results.csv", newline="") as fh:
            for row in csv.reader(fh):
                row[runtime_col] = ""
                h.update(repr(row).encode())
        return h.hexdigest()

    h1 = run_once("first")
    h2 = run_once("second")
    ok = h1 == h2
    _verdict(
        10, "deterministic csv", ok,
        f"run hashes {'match' if ok else 'differ'} after masking the runtime "
        f"column ({h1[:12]}.. vs {h2[:12]}..)",
    )
    assert ok
