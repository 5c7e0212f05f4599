"""Command-line entry points.

Verbs:
  run           full sweep from a JSON config, writes results + summary CSV
  single        one (algorithm, snr, trial) cell with optional trace output
  oracle        quick self-check of analytic code against independent oracles
  print-config  dump the effective config (defaults merged with overrides)
  plot          aggregate results into a plain-text table for one figure

Exit codes: 0 success, 1 completed with failures, 2 bad config or usage,
3 unexpected internal error.
"""

from __future__ import annotations

import argparse
import json
import sys
from typing import List, Optional

import numpy as np

from .channel import build_channel_dictionary
from .harness import (
    ALGORITHMS,
    ConfigError,
    DEFAULT_CONFIG,
    apply_overrides,
    emit_plot_data,
    load_config,
    run_cell,
    run_experiment,
    sparsity_profile,
)
from .model import FourierDictionary, GridParams
from .oracles import OracleReport, dense_quadratic_map, exhaustive_small_mle, fd_gradient
from .refine import grid_gradient, grid_objective, lmmse_gain_update
from .vbi import update_qx

EXIT_OK = 0
EXIT_FAILED_CELLS = 1
EXIT_CONFIG = 2
EXIT_INTERNAL = 3


def _random_dictionary(kind: str, rng: np.random.Generator):
    if kind == "fourier":
        return FourierDictionary(int(rng.integers(8, 33)))
    from .channel import OfdmArrayConfig

    cfg = OfdmArrayConfig.with_random_pilot(
        n_rx=int(rng.integers(4, 9)),
        m_sub=int(rng.integers(4, 9)),
        h_p=2,
        f0=120e3,
        seed=int(rng.integers(0, 2**31)),
    )
    return build_channel_dictionary(cfg)


def _sample_instance(dictionary, rng: np.random.Generator, s: int):
    lo = dictionary.valid_range[:, 0]
    hi = dictionary.valid_range[:, 1]
    margin = 0.05 * (hi - lo)
    theta = rng.uniform(lo + margin, hi - margin, size=(s, dictionary.param_dim))
    x = rng.standard_normal(s) + 1j * rng.standard_normal(s)
    y = rng.standard_normal(dictionary.row_count) + 1j * rng.standard_normal(
        dictionary.row_count
    )
    return theta, x, y


def oracle_suite(seed: int = 0, n_grad: int = 40, n_quad: int = 20) -> List[OracleReport]:
    """Compact oracle pass used by the `oracle` verb (the test suite runs a
    larger version of the same checks)."""
    rng = np.random.default_rng(seed)
    reports: List[OracleReport] = []

    for kind in ("fourier", "angle-delay"):
        worst = 0.0
        for _ in range(n_grad):
            dictionary = _random_dictionary(kind, rng)
            s = int(rng.integers(1, 4))
            theta, x, y = _sample_instance(dictionary, rng, s)
            scale = np.tile(dictionary.valid_range[:, 1] - dictionary.valid_range[:, 0], s)
            analytic = grid_gradient(dictionary, theta, x, y).ravel()
            fd = fd_gradient(
                lambda t: grid_objective(dictionary, t.reshape(s, -1), x, y),
                theta.ravel(),
                step=1e-6,
                scale=scale,
            )
            denom = max(float(np.linalg.norm(fd)), 1e-12)
            worst = max(worst, float(np.linalg.norm(analytic - fd)) / denom)
        reports.append(
            OracleReport(
                name=f"gradient-contract[{kind}]",
                n_instances=n_grad,
                max_rel_error=worst,
                tol=1e-5,
            )
        )

    worst_qx = 0.0
    worst_lmmse = 0.0
    for _ in range(n_quad):
        m, n = int(rng.integers(6, 12)), int(rng.integers(8, 16))
        a = rng.standard_normal((m, n)) + 1j * rng.standard_normal((m, n))
        y = rng.standard_normal(m) + 1j * rng.standard_normal(m)
        kappa = float(rng.uniform(0.5, 50.0))
        c_vec = rng.uniform(0.1, 10.0, size=n)
        mu, _ = update_qx(a, y, kappa, c_vec)
        ref = dense_quadratic_map(a, y, kappa, c_vec)
        worst_qx = max(
            worst_qx,
            float(np.linalg.norm(mu - ref)) / max(float(np.linalg.norm(ref)), 1e-12),
        )
        s = int(rng.integers(1, 6))
        a_s = rng.standard_normal((m, s)) + 1j * rng.standard_normal((m, s))
        u = rng.standard_normal(s) + 1j * rng.standard_normal(s)
        sigma = rng.uniform(0.05, 5.0, size=s)
        x_hat = lmmse_gain_update(a_s, y, kappa, u, sigma)
        ref = dense_quadratic_map(a_s, y, 1.0, (1.0 / kappa) / sigma, u)
        worst_lmmse = max(
            worst_lmmse,
            float(np.linalg.norm(x_hat - ref)) / max(float(np.linalg.norm(ref)), 1e-12),
        )
    reports.append(
        OracleReport("posterior-mean-vs-dense-solve", n_quad, worst_qx, 1e-9)
    )
    reports.append(
        OracleReport("gain-refit-vs-dense-solve", n_quad, worst_lmmse, 1e-9)
    )

    # spot-check the exhaustive search on a planted single component
    dictionary = FourierDictionary(24)
    f_true = 0.3777
    y = 2.0 * np.exp(1j * 0.7) * dictionary.column(np.array([f_true]))
    theta, _ = exhaustive_small_mle(dictionary, y, k=1, resolution=1e-4)
    reports.append(
        OracleReport(
            "exhaustive-search-single-component",
            1,
            abs(float(theta[0]) - f_true),
            2e-4,
        )
    )
    return reports


def _cmd_run(args: argparse.Namespace) -> int:
    config = load_config(args.config)
    if args.set:
        config = apply_overrides(config, args.set)
    result = run_experiment(config, workers=args.workers)
    print(f"wrote {result.csv_path} and {result.summary_path}")
    if result.trace_path:
        print(f"wrote {result.trace_path}")
    n_failed = sum(1 for r in result.rows if r["status"] != "ok")
    if n_failed:
        print(f"{n_failed} of {len(result.rows)} cells failed", file=sys.stderr)
        return EXIT_FAILED_CELLS
    return EXIT_OK


def _cmd_single(args: argparse.Namespace) -> int:
    config = load_config(args.config)
    if args.set:
        config = apply_overrides(config, args.set)
    row = run_cell(
        config, args.algorithm, args.snr, args.trial, collect_trace=bool(args.trace)
    )
    trace = row.pop("_trace", [])
    if args.trace:
        with open(args.trace, "w", encoding="utf-8") as fh:
            for rec in trace:
                fh.write(json.dumps(rec, sort_keys=True) + "\n")
    if args.sparsity_out:
        profile = sparsity_profile(config, args.snr, args.trial)
        import csv as _csv

        with open(args.sparsity_out, "w", encoding="utf-8", newline="") as fh:
            writer = _csv.DictWriter(fh, fieldnames=list(profile[0].keys()))
            writer.writeheader()
            writer.writerows(profile)
    print(json.dumps({k: (v if not isinstance(v, float) else round(v, 6)) for k, v in row.items()}, sort_keys=True))
    return EXIT_OK if row["status"] == "ok" else EXIT_FAILED_CELLS


def _cmd_oracle(args: argparse.Namespace) -> int:
    reports = oracle_suite(seed=args.seed, n_grad=args.trials, n_quad=max(args.trials // 2, 5))
    failed = False
    for report in reports:
        print(report.line())
        failed |= not report.passed
    return EXIT_FAILED_CELLS if failed else EXIT_OK


def _cmd_print_config(args: argparse.Namespace) -> int:
    config = load_config(args.config) if args.config else load_config()
    if args.set:
        config = apply_overrides(config, args.set)
    print(json.dumps(config, indent=2, sort_keys=True))
    return EXIT_OK


def _cmd_plot(args: argparse.Namespace) -> int:
    spec = {"figure": args.figure}
    text = emit_plot_data(args.source, spec, out_path=args.out)
    if not args.out:
        sys.stdout.write(text)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="dyngrid",
        description="Super-resolution sparse recovery experiments",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="run a full sweep from a JSON config")
    p_run.add_argument("--config", help="JSON config path (defaults used if omitted)")
    p_run.add_argument(
        "--set",
        action="append",
        default=[],
        metavar="KEY.PATH=JSON",
        help="override a config entry, e.g. --set framework.i1=30",
    )
    p_run.add_argument("--workers", type=int, default=None)
    p_run.set_defaults(func=_cmd_run)

    p_single = sub.add_parser("single", help="run one cell")
    p_single.add_argument("--config")
    p_single.add_argument("--set", action="append", default=[], metavar="KEY.PATH=JSON")
    p_single.add_argument("--algorithm", choices=ALGORITHMS, default="proposed")
    p_single.add_argument("--snr", type=float, default=10.0)
    p_single.add_argument("--trial", type=int, default=0)
    p_single.add_argument("--trace", help="write per-outer-iteration JSONL here")
    p_single.add_argument(
        "--sparsity-out", help="write tanh-vs-bgg magnitude profile CSV here"
    )
    p_single.set_defaults(func=_cmd_single)

    p_oracle = sub.add_parser("oracle", help="check analytic code against oracles")
    p_oracle.add_argument("--seed", type=int, default=0)
    p_oracle.add_argument("--trials", type=int, default=40)
    p_oracle.set_defaults(func=_cmd_oracle)

    p_print = sub.add_parser("print-config", help="dump the effective config")
    p_print.add_argument("--config")
    p_print.add_argument("--set", action="append", default=[], metavar="KEY.PATH=JSON")
    p_print.set_defaults(func=_cmd_print_config)

    p_plot = sub.add_parser("plot", help="emit a plain-text table for a figure")
    p_plot.add_argument(
        "--figure",
        required=True,
        choices=["nmse_vs_snr", "rmse_vs_snr", "convergence", "sparsity"],
    )
    p_plot.add_argument("--source", required=True, help="results CSV or trace JSONL")
    p_plot.add_argument("--out", help="write the table here instead of stdout")
    p_plot.set_defaults(func=_cmd_plot)
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except FileNotFoundError as exc:
        print(f"file not found: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except Exception as exc:  # pragma: no cover - defensive
        print(f"internal error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_INTERNAL


if __name__ == "__main__":
    sys.exit(main())
