"""Experiment harness: config schema, cell runner, CSV outputs.

An experiment is a JSON config describing one propagation scenario, a sweep
axis (SNR), a list of algorithms, and a trial count. Every (algorithm, SNR,
trial) cell runs deterministically from seeds derived by hashing the cell
coordinates, so re-running a config reproduces the CSV byte-for-byte except
for the wall-time column, and reordering sweep lists does not change any
cell's data.

The channel draw for a given (SNR, trial) is shared by all algorithms so
that per-cell comparisons are paired; the cell seed required by the seeding
contract (base seed, algorithm, sweep point, trial) is still derived and
recorded per cell.
"""

from __future__ import annotations

import copy
import csv
import hashlib
import json
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
from jsonschema import Draft202012Validator

from .channel import (
    InitConfig,
    OfdmArrayConfig,
    PathSet,
    build_channel_dictionary,
    coarse_grid_init,
    extrapolate_channel,
    generate_channel,
    nmse_db,
    rmse_db,
)
from .framework import FrameworkConfig, run_alternating_map
from .model import GridParams, Observation, assemble_matrix
from .prior import BgtPrior
from .refine import SrguConfig
from .vbi import SupportPolicy, run_sse

__all__ = [
    "ConfigError",
    "ALGORITHMS",
    "DEFAULT_CONFIG",
    "CONFIG_SCHEMA",
    "ExperimentResult",
    "derive_seed",
    "load_config",
    "validate_config",
    "apply_overrides",
    "build_system",
    "sample_paths",
    "omp_ongrid_baseline",
    "run_cell",
    "run_experiment",
    "sparsity_profile",
    "emit_plot_data",
]

ALGORITHMS = ("proposed", "proposed-bgg", "proposed-gd", "omp-ongrid")

CSV_COLUMNS = [
    "algorithm",
    "snr_db",
    "trial",
    "seed",
    "status",
    "nmse_db",
    "rmse_db",
    "support_size",
    "outer_iters",
    "converged",
    "objective",
    "kappa_hat",
    "srgu_violations",
    "runtime_s",
    "error",
]

SUMMARY_COLUMNS = [
    "algorithm",
    "snr_db",
    "n_ok",
    "n_failed",
    "nmse_db_med",
    "nmse_db_q25",
    "nmse_db_q75",
    "rmse_db_med",
    "rmse_db_q25",
    "rmse_db_q75",
    "runtime_s_med",
]


class ConfigError(ValueError):
    """The experiment config failed schema or consistency validation."""


DEFAULT_CONFIG: Dict = {
    "scenario": {
        "n_rx": 32,
        "m_sub": 32,
        "h_p": 4,
        "f0": 120000.0,
        "observed_bwp": 0,
        "k_paths": 3,
        "pilot_seed": 7,
        "angle_sin_range": [-0.8, 0.8],
        "delay_range_ns": [100.0, 2500.0],
        "delay_gap_ns": None,
        "gain_model": "unit",
    },
    "sweep": {"snr_db": [0.0, 5.0, 10.0, 15.0, 20.0]},
    "algorithms": ["proposed", "proposed-bgg", "proposed-gd", "omp-ongrid"],
    "trials": 50,
    "base_seed": 20260825,
    "framework": {
        "i0": 6,
        "i1": 20,
        "i2": 25,
        "tol_outer": 0.05,
        "warm_start": False,
        "converge_tol_sse": 1e-6,
        # cap ~8 active columns per expected path; uncapped supports at low
        # SNR drag in noise columns and wreck both extrapolation and runtime
        "support": {"prob_threshold": 0.5, "energy_ratio": 0.01, "s_max": 24},
        "refine": {
            "c_armijo": 0.01,
            "gamma": 0.5,
            "eps0": 1.0,
            "max_backtracks": 30,
            "sigma_inflation": 1.5,
            "x_max": 1000.0,
            "merge_enabled": False,
            "merge_tol": 0.1,
            "secant_reset": 3,
        },
    },
    "init": {"peaks": None, "radius": 2, "oversample": 4, "max_points": 320},
    "omp": {"k_max": None, "residual_stop": 0.01},
    "output": {"csv": "results.csv", "summary": "summary.csv", "trace": None},
    "workers": 1,
}

_NUM = {"type": "number"}
_INT = {"type": "integer"}

CONFIG_SCHEMA: Dict = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "type": "object",
    "additionalProperties": False,
    "properties": {
        "scenario": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "n_rx": {"type": "integer", "minimum": 1},
                "m_sub": {"type": "integer", "minimum": 1},
                "h_p": {"type": "integer", "minimum": 1},
                "f0": {"type": "number", "exclusiveMinimum": 0},
                "observed_bwp": {"type": "integer", "minimum": 0},
                "k_paths": {"type": "integer", "minimum": 1},
                "pilot_seed": _INT,
                "angle_sin_range": {
                    "type": "array",
                    "items": _NUM,
                    "minItems": 2,
                    "maxItems": 2,
                },
                "delay_range_ns": {
                    "type": "array",
                    "items": _NUM,
                    "minItems": 2,
                    "maxItems": 2,
                },
                "delay_gap_ns": {"type": ["number", "null"]},
                "gain_model": {"enum": ["unit", "gaussian"]},
            },
        },
        "sweep": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "snr_db": {"type": "array", "items": _NUM, "minItems": 1}
            },
        },
        "algorithms": {
            "type": "array",
            "items": {"enum": list(ALGORITHMS)},
            "minItems": 1,
        },
        "trials": {"type": "integer", "minimum": 1},
        "base_seed": _INT,
        "framework": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "i0": {"type": "integer", "minimum": 1},
                "i1": {"type": "integer", "minimum": 1},
                "i2": {"type": "integer", "minimum": 1},
                "tol_outer": {"type": "number", "exclusiveMinimum": 0},
                "warm_start": {"type": "boolean"},
                "converge_tol_sse": {"type": "number", "minimum": 0},
                "support": {
                    "type": "object",
                    "additionalProperties": False,
                    "properties": {
                        "prob_threshold": _NUM,
                        "energy_ratio": _NUM,
                        "s_max": {"type": ["integer", "null"]},
                    },
                },
                "refine": {
                    "type": "object",
                    "additionalProperties": False,
                    "properties": {
                        "c_armijo": _NUM,
                        "gamma": _NUM,
                        "eps0": _NUM,
                        "max_backtracks": {"type": "integer", "minimum": 0},
                        "sigma_inflation": _NUM,
                        "x_max": _NUM,
                        "merge_enabled": {"type": "boolean"},
                        "merge_tol": _NUM,
                        "secant_reset": {"type": "integer", "minimum": 1},
                    },
                },
            },
        },
        "init": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "peaks": {"type": ["integer", "null"]},
                "radius": {"type": "integer", "minimum": 0},
                "oversample": {"type": "integer", "minimum": 1},
                "max_points": {"type": "integer", "minimum": 1},
            },
        },
        "omp": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "k_max": {"type": ["integer", "null"]},
                "residual_stop": {"type": "number", "minimum": 0},
            },
        },
        "output": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "csv": {"type": "string"},
                "summary": {"type": "string"},
                "trace": {"type": ["string", "null"]},
            },
        },
        "workers": {"type": "integer", "minimum": 1},
    },
}


def _deep_merge(base: Dict, override: Dict) -> Dict:
    out = copy.deepcopy(base)
    for key, val in override.items():
        if isinstance(val, dict) and isinstance(out.get(key), dict):
            out[key] = _deep_merge(out[key], val)
        else:
            out[key] = copy.deepcopy(val)
    return out


def validate_config(config: Dict) -> Dict:
    """Schema-check a full config and cross-check scenario consistency."""
    errors = sorted(
        Draft202012Validator(CONFIG_SCHEMA).iter_errors(config),
        key=lambda e: list(e.absolute_path),
    )
    if errors:
        first = errors[0]
        path = ".".join(str(p) for p in first.absolute_path) or "<root>"
        raise ConfigError(f"config invalid at {path}: {first.message}")
    sc = config["scenario"]
    if sc["observed_bwp"] >= sc["h_p"]:
        raise ConfigError("scenario.observed_bwp must be < scenario.h_p")
    lo_s, hi_s = sc["angle_sin_range"]
    if not (-1.0 < lo_s < hi_s < 1.0):
        raise ConfigError("angle_sin_range must be increasing inside (-1, 1)")
    lo_d, hi_d = sc["delay_range_ns"]
    delay_max_ns = 1e9 / sc["f0"]
    if not (0.0 <= lo_d < hi_d <= delay_max_ns):
        raise ConfigError(
            f"delay_range_ns must be increasing inside [0, {delay_max_ns:.1f}]"
        )
    gap = sc["delay_gap_ns"]
    if gap is not None:
        span = gap * (sc["k_paths"] - 1)
        if gap <= 0 or lo_d + span > hi_d:
            raise ConfigError(
                "delay_gap_ns inconsistent with k_paths and delay_range_ns"
            )
    return config


def load_config(path: Optional[str] = None, overrides: Optional[Dict] = None) -> Dict:
    """Merge user config (if any) and overrides onto the defaults, validate."""
    config = copy.deepcopy(DEFAULT_CONFIG)
    if path is not None:
        with open(path, "r", encoding="utf-8") as fh:
            user = json.load(fh)
        if not isinstance(user, dict):
            raise ConfigError("config root must be a JSON object")
        config = _deep_merge(config, user)
    if overrides:
        config = _deep_merge(config, overrides)
    return validate_config(config)


def apply_overrides(config: Dict, assignments: Sequence[str]) -> Dict:
    """Apply ``key.path=json_value`` strings onto a config dict."""
    config = copy.deepcopy(config)
    for item in assignments:
        if "=" not in item:
            raise ConfigError(f"override {item!r} is not of the form key=value")
        key, raw = item.split("=", 1)
        try:
            value = json.loads(raw)
        except json.JSONDecodeError:
            value = raw  # bare strings allowed
        node = config
        parts = key.split(".")
        for part in parts[:-1]:
            if part not in node or not isinstance(node[part], dict):
                node[part] = {}
            node = node[part]
        node[parts[-1]] = value
    return validate_config(config)


def derive_seed(base_seed: int, *parts) -> int:
    """Stable 63-bit seed from hashing the cell coordinates.

    Uses a content hash, so seeds do not depend on list positions in the
    config; reordering sweep values or algorithms never changes a cell's
    seed.
    """
    canon = repr((int(base_seed),) + tuple(parts)).encode("utf-8")
    digest = hashlib.sha256(canon).digest()
    return int.from_bytes(digest[:8], "little") >> 1


def build_system(scenario: Dict) -> OfdmArrayConfig:
    return OfdmArrayConfig.with_random_pilot(
        n_rx=scenario["n_rx"],
        m_sub=scenario["m_sub"],
        h_p=scenario["h_p"],
        f0=scenario["f0"],
        observed_bwp=scenario["observed_bwp"],
        seed=scenario["pilot_seed"],
    )


def sample_paths(
    scenario: Dict, rng: np.random.Generator
) -> PathSet:
    """Draw one multipath scene.

    Angles are uniform in the sin domain. Delays are either uniform over the
    configured range or, when ``delay_gap_ns`` is set, an evenly spaced train
    of ``k_paths`` delays with that gap and a random offset (the controlled
    sub-resolution difficulty used by the ablation scenes).
    """
    k = scenario["k_paths"]
    lo_s, hi_s = scenario["angle_sin_range"]
    angles = np.arcsin(rng.uniform(lo_s, hi_s, size=k))
    lo_d, hi_d = (v * 1e-9 for v in scenario["delay_range_ns"])
    gap = scenario["delay_gap_ns"]
    if gap is not None:
        gap_s = gap * 1e-9
        span = gap_s * (k - 1)
        start = rng.uniform(lo_d, hi_d - span)
        delays = start + gap_s * np.arange(k)
    else:
        delays = np.sort(rng.uniform(lo_d, hi_d, size=k))
    if scenario["gain_model"] == "unit":
        gains = np.exp(1j * rng.uniform(0.0, 2.0 * np.pi, size=k))
    else:
        gains = (rng.standard_normal(k) + 1j * rng.standard_normal(k)) / np.sqrt(2.0)
    return PathSet(gains=gains, angles=angles, delays=delays)


def omp_ongrid_baseline(
    obs: Observation,
    dictionary,
    grid: GridParams,
    k_max: int,
    residual_stop: float = 0.0,
) -> Tuple[np.ndarray, np.ndarray]:
    """Orthogonal matching pursuit on the fixed grid (no refinement).

    Greedily selects the column maximizing |a^H r| / ||a||, re-fits all
    selected gains by least squares, and stops after ``k_max`` atoms or when
    the residual ratio drops below ``residual_stop``.

    Returns (support indices sorted ascending, gains aligned to them).
    """
    if k_max < 1:
        raise ValueError("k_max must be >= 1")
    a = assemble_matrix(dictionary, grid)
    norms = np.linalg.norm(a, axis=0)
    norms[norms == 0.0] = np.inf
    y = obs.y
    y_norm = float(np.linalg.norm(y))
    r = y.copy()
    chosen: List[int] = []
    gains = np.zeros(0, dtype=complex)
    for _ in range(min(k_max, grid.n)):
        scores = np.abs(a.conj().T @ r) / norms
        scores[chosen] = -np.inf
        idx = int(np.argmax(scores))
        chosen.append(idx)
        a_s = a[:, chosen]
        gains, *_ = np.linalg.lstsq(a_s, y, rcond=None)
        r = y - a_s @ gains
        if y_norm > 0 and float(np.linalg.norm(r)) / y_norm <= residual_stop:
            break
    order = np.argsort(chosen)
    support = np.asarray(chosen, dtype=int)[order]
    return support, gains[order]


def _framework_config(config: Dict, system: OfdmArrayConfig, snr_db: float,
                      variant: str, grid_update: str) -> FrameworkConfig:
    fw = config["framework"]
    sup = fw["support"]
    ref = fw["refine"]
    init = config["init"]
    lattice = np.array(
        [
            system.angle_resolution_sin / init["oversample"],
            system.delay_resolution / init["oversample"],
        ]
    )
    refine_cfg = SrguConfig(
        c_armijo=ref["c_armijo"],
        gamma=ref["gamma"],
        eps0=ref["eps0"],
        max_backtracks=ref["max_backtracks"],
        sigma_inflation=ref["sigma_inflation"],
        x_max=ref["x_max"],
        param_scale=lattice,
        direction_method=grid_update,
        merge_enabled=ref["merge_enabled"],
        merge_tol=ref["merge_tol"],
        secant_reset=ref["secant_reset"],
    )
    return FrameworkConfig(
        i0=fw["i0"],
        i1=fw["i1"],
        i2=fw["i2"],
        variant=variant,
        grid_update=grid_update,
        expected_components=config["scenario"]["k_paths"],
        snr_db=snr_db,
        support=SupportPolicy(
            prob_threshold=sup["prob_threshold"],
            energy_ratio=sup["energy_ratio"],
            s_max=sup["s_max"],
        ),
        refine=refine_cfg,
        tol_outer=fw["tol_outer"],
        warm_start=fw["warm_start"],
        converge_tol_sse=fw["converge_tol_sse"],
    )


_ALGO_ROUTES = {
    "proposed": ("tanh", "bfgs"),
    "proposed-bgg": ("bgg", "bfgs"),
    "proposed-gd": ("tanh", "gradient"),
}


def run_cell(
    config: Dict,
    algorithm: str,
    snr_db: float,
    trial: int,
    *,
    collect_trace: bool = False,
) -> Dict:
    """Run one (algorithm, SNR, trial) cell; never raises on algorithm
    failure, returning a row with status="failed" instead."""
    if algorithm not in ALGORITHMS:
        raise ConfigError(f"unknown algorithm {algorithm!r}")
    base = config["base_seed"]
    cell_seed = derive_seed(base, algorithm, "snr_db", float(snr_db), int(trial))
    row: Dict = {
        "algorithm": algorithm,
        "snr_db": float(snr_db),
        "trial": int(trial),
        "seed": cell_seed,
        "status": "ok",
        "nmse_db": np.nan,
        "rmse_db": np.nan,
        "support_size": 0,
        "outer_iters": 0,
        "converged": False,
        "objective": np.nan,
        "kappa_hat": np.nan,
        "srgu_violations": 0,
        "runtime_s": np.nan,
        "error": "",
    }
    trace_rows: List[Dict] = []
    t0 = time.perf_counter()
    try:
        system = build_system(config["scenario"])
        scene_rng = np.random.default_rng(
            derive_seed(base, "scene", "snr_db", float(snr_db), int(trial))
        )
        paths = sample_paths(config["scenario"], scene_rng)
        h_full, obs = generate_channel(system, paths, snr_db, rng=scene_rng)
        init_cfg = InitConfig(
            k_expected=config["scenario"]["k_paths"],
            peaks=config["init"]["peaks"],
            radius=config["init"]["radius"],
            oversample=config["init"]["oversample"],
            max_points=config["init"]["max_points"],
        )
        grid0 = coarse_grid_init(obs, system, init_cfg)
        dictionary = build_channel_dictionary(system)
        true_pairs = paths.as_grid()
        fallback = (
            float(np.diff(dictionary.valid_range[0])[0]),
            float(np.diff(dictionary.valid_range[1])[0]),
        )

        if algorithm == "omp-ongrid":
            k_max = config["omp"]["k_max"] or config["scenario"]["k_paths"]
            support, gains = omp_ongrid_baseline(
                obs, dictionary, grid0, k_max, config["omp"]["residual_stop"]
            )
            est_pairs = grid0.values[support]
            est_gains = gains
            row["support_size"] = int(support.size)
            row["outer_iters"] = 1
            row["converged"] = True
            resid = obs.y - assemble_matrix(dictionary, grid0)[:, support] @ gains
            row["objective"] = float(np.real(np.vdot(resid, resid)))
        else:
            variant, grid_update = _ALGO_ROUTES[algorithm]
            fw_cfg = _framework_config(config, system, snr_db, variant, grid_update)
            result = run_alternating_map(obs, dictionary, grid0, fw_cfg)
            est_pairs = result.theta
            est_gains = result.x
            row["support_size"] = int(result.support.size)
            row["outer_iters"] = result.outer_iters
            row["converged"] = bool(result.converged)
            row["objective"] = float(result.objective)
            row["kappa_hat"] = float(result.kappa_hat)
            violations = 0
            for steps in result.srgu_traces:
                for rec in steps:
                    if not rec.stalled and rec.objective_after > rec.objective_before:
                        violations += 1
            row["srgu_violations"] = violations
            if collect_trace:
                for rec in result.outer_trace:
                    h_t = extrapolate_channel(
                        rec.theta[:, 0], rec.theta[:, 1], rec.x, system
                    )
                    trace_rows.append(
                        {
                            "algorithm": algorithm,
                            "snr_db": float(snr_db),
                            "trial": int(trial),
                            "outer": rec.outer,
                            "nmse_db": nmse_db(h_t, h_full),
                            "objective": rec.objective,
                            "support_size": int(rec.support.size),
                        }
                    )

        h_hat = extrapolate_channel(est_pairs[:, 0], est_pairs[:, 1], est_gains, system)
        row["nmse_db"] = nmse_db(h_hat, h_full)
        row["rmse_db"] = rmse_db(est_pairs, true_pairs, fallback_ranges=fallback)
    except Exception as exc:  # failed cells are data, not crashes
        row["status"] = "failed"
        row["error"] = f"{type(exc).__name__}: {exc}"
    row["runtime_s"] = time.perf_counter() - t0
    if collect_trace:
        row["_trace"] = trace_rows
    return row


def _cell_worker(args: Tuple) -> Dict:
    config, algorithm, snr_db, trial, collect_trace = args
    return run_cell(config, algorithm, snr_db, trial, collect_trace=collect_trace)


@dataclass
class ExperimentResult:
    rows: List[Dict]
    csv_path: str
    summary_path: str
    trace_path: Optional[str] = None
    any_failed: bool = False


def _format_cell(value) -> str:
    if isinstance(value, (bool, np.bool_)):
        return "true" if value else "false"
    if isinstance(value, (float, np.floating)):
        return repr(float(value))
    return str(value)


def _write_csv(path: str, columns: List[str], rows: List[Dict]) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(columns)
        for row in rows:
            writer.writerow([_format_cell(row[c]) for c in columns])


def _quantiles(values: List[float]) -> Tuple[float, float, float]:
    arr = np.asarray(values, dtype=float)
    arr = arr[np.isfinite(arr)]
    if arr.size == 0:
        return (np.nan, np.nan, np.nan)
    return (
        float(np.median(arr)),
        float(np.percentile(arr, 25)),
        float(np.percentile(arr, 75)),
    )


def summarize(rows: List[Dict], algorithms: Sequence[str], snrs: Sequence[float]) -> List[Dict]:
    out: List[Dict] = []
    for alg in algorithms:
        for snr in snrs:
            cell = [
                r for r in rows if r["algorithm"] == alg and r["snr_db"] == float(snr)
            ]
            ok = [r for r in cell if r["status"] == "ok"]
            nm, n25, n75 = _quantiles([r["nmse_db"] for r in ok])
            rm, r25, r75 = _quantiles([r["rmse_db"] for r in ok])
            rt, _, _ = _quantiles([r["runtime_s"] for r in ok])
            out.append(
                {
                    "algorithm": alg,
                    "snr_db": float(snr),
                    "n_ok": len(ok),
                    "n_failed": len(cell) - len(ok),
                    "nmse_db_med": nm,
                    "nmse_db_q25": n25,
                    "nmse_db_q75": n75,
                    "rmse_db_med": rm,
                    "rmse_db_q25": r25,
                    "rmse_db_q75": r75,
                    "runtime_s_med": rt,
                }
            )
    return out


def run_experiment(config: Dict, workers: Optional[int] = None) -> ExperimentResult:
    """Run the full sweep and write results, summary, and optional traces.

    Cells are independent; with ``workers > 1`` they run in a process pool.
    All output files are written by this process only, in a deterministic
    row order (config order of algorithms and sweep values, then trial).
    """
    validate_config(config)
    n_workers = workers if workers is not None else config["workers"]
    snrs = config["sweep"]["snr_db"]
    algorithms = config["algorithms"]
    trials = config["trials"]
    collect_trace = config["output"]["trace"] is not None

    cells = [
        (config, alg, float(snr), trial, collect_trace)
        for alg in algorithms
        for snr in snrs
        for trial in range(trials)
    ]
    if n_workers > 1:
        with ProcessPoolExecutor(max_workers=n_workers) as pool:
            rows = list(pool.map(_cell_worker, cells, chunksize=1))
    else:
        rows = [_cell_worker(c) for c in cells]

    trace_rows: List[Dict] = []
    for row in rows:
        trace_rows.extend(row.pop("_trace", []))

    csv_path = config["output"]["csv"]
    summary_path = config["output"]["summary"]
    _write_csv(csv_path, CSV_COLUMNS, rows)
    _write_csv(summary_path, SUMMARY_COLUMNS, summarize(rows, algorithms, snrs))
    trace_path = config["output"]["trace"]
    if collect_trace and trace_path:
        with open(trace_path, "w", encoding="utf-8") as fh:
            for rec in trace_rows:
                fh.write(json.dumps(rec, sort_keys=True) + "\n")
    any_failed = any(r["status"] != "ok" for r in rows)
    return ExperimentResult(
        rows=rows,
        csv_path=csv_path,
        summary_path=summary_path,
        trace_path=trace_path if collect_trace else None,
        any_failed=any_failed,
    )


def sparsity_profile(config: Dict, snr_db: float, trial: int) -> List[Dict]:
    """|x_hat| per grid index after one slow-stage pass, tanh vs bgg.

    Uses the same scene both times, so the two magnitude profiles are
    directly comparable; feeds the sparsity figure and the sparsity
    acceptance check.
    """
    validate_config(config)
    base = config["base_seed"]
    system = build_system(config["scenario"])
    scene_rng = np.random.default_rng(
        derive_seed(base, "scene", "snr_db", float(snr_db), int(trial))
    )
    paths = sample_paths(config["scenario"], scene_rng)
    _, obs = generate_channel(system, paths, snr_db, rng=scene_rng)
    init_cfg = InitConfig(
        k_expected=config["scenario"]["k_paths"],
        peaks=config["init"]["peaks"],
        radius=config["init"]["radius"],
        oversample=config["init"]["oversample"],
        max_points=config["init"]["max_points"],
    )
    grid0 = coarse_grid_init(obs, system, init_cfg)
    dictionary = build_channel_dictionary(system)
    prior = BgtPrior.default(
        grid0.n, config["scenario"]["k_paths"], snr_db
    )
    fw = config["framework"]
    mags: Dict[str, np.ndarray] = {}
    for variant in ("tanh", "bgg"):
        out = run_sse(
            obs,
            dictionary,
            grid0,
            prior,
            fw["i1"],
            variant=variant,
            converge_tol=fw["converge_tol_sse"],
        )
        mags[variant] = np.abs(out.x_hat)
    return [
        {
            "grid_index": i,
            "angle": float(grid0.values[i, 0]),
            "delay": float(grid0.values[i, 1]),
            "tanh_mag": float(mags["tanh"][i]),
            "bgg_mag": float(mags["bgg"][i]),
        }
        for i in range(grid0.n)
    ]


def _text_table(headers: List[str], rows: List[List[str]]) -> str:
    widths = [len(h) for h in headers]
    for row in rows:
        for i, cell in enumerate(row):
            widths[i] = max(widths[i], len(cell))
    lines = ["  ".join(h.ljust(widths[i]) for i, h in enumerate(headers)).rstrip()]
    for row in rows:
        lines.append("  ".join(c.ljust(widths[i]) for i, c in enumerate(row)).rstrip())
    return "\n".join(lines) + "\n"


def _read_csv(path: str) -> List[Dict]:
    with open(path, "r", encoding="utf-8", newline="") as fh:
        return list(csv.DictReader(fh))


def emit_plot_data(source_path: str, figure_spec: Dict, out_path: Optional[str] = None) -> str:
    """Aggregate results into one plain-text table for a named figure.

    figure_spec["figure"] selects the aggregation:
      - "nmse_vs_snr" / "rmse_vs_snr": per-algorithm median and quartiles
        from a results CSV, one row per SNR point.
      - "convergence": per-algorithm median NMSE per outer iteration from a
        trace JSONL file.
      - "sparsity": per-grid-index magnitude profile (as produced by
        :func:`sparsity_profile`, stored as CSV), tanh vs bgg columns.
    """
    figure = figure_spec.get("figure")
    if figure in ("nmse_vs_snr", "rmse_vs_snr"):
        metric = "nmse_db" if figure == "nmse_vs_snr" else "rmse_db"
        rows = [r for r in _read_csv(source_path) if r["status"] == "ok"]
        algs = sorted({r["algorithm"] for r in rows})
        snrs = sorted({float(r["snr_db"]) for r in rows})
        headers = ["snr_db"]
        for alg in algs:
            headers += [f"{alg}_med", f"{alg}_q25", f"{alg}_q75"]
        table = []
        for snr in snrs:
            line = [f"{snr:g}"]
            for alg in algs:
                vals = [
                    float(r[metric])
                    for r in rows
                    if r["algorithm"] == alg and float(r["snr_db"]) == snr
                ]
                med, q25, q75 = _quantiles(vals)
                line += [f"{med:.3f}", f"{q25:.3f}", f"{q75:.3f}"]
            table.append(line)
    elif figure == "convergence":
        with open(source_path, "r", encoding="utf-8") as fh:
            recs = [json.loads(line) for line in fh if line.strip()]
        algs = sorted({r["algorithm"] for r in recs})
        outers = sorted({int(r["outer"]) for r in recs})
        headers = ["outer"] + [f"{alg}_nmse_med" for alg in algs]
        table = []
        for outer in outers:
            line = [str(outer)]
            for alg in algs:
                vals = [
                    float(r["nmse_db"])
                    for r in recs
                    if r["algorithm"] == alg and int(r["outer"]) == outer
                ]
                med, _, _ = _quantiles(vals)
                line.append(f"{med:.3f}")
            table.append(line)
    elif figure == "sparsity":
        rows = _read_csv(source_path)
        headers = ["grid_index", "tanh_mag", "bgg_mag"]
        table = [
            [r["grid_index"], f"{float(r['tanh_mag']):.6e}", f"{float(r['bgg_mag']):.6e}"]
            for r in rows
        ]
    else:
        raise ConfigError(f"unknown figure {figure!r}")
    text = _text_table(headers, table)
    if out_path:
        with open(out_path, "w", encoding="utf-8") as fh:
            fh.write(text)
    return text
