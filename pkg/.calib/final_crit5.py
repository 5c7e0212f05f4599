import copy
import json
import time
import warnings

import numpy as np

warnings.filterwarnings("ignore")
from dyngrid.harness import DEFAULT_CONFIG, run_experiment


def deep(a, b):
    for k, v in b.items():
        if isinstance(v, dict):
            deep(a[k], v)
        else:
            a[k] = v


cfg = copy.deepcopy(DEFAULT_CONFIG)
deep(cfg, {
    "scenario": {"k_paths": 8, "delay_gap_ns": 93.75},
    "framework": {"i0": 10, "i1": 50, "i2": 60, "support": {"s_max": 64}},
    "algorithms": ["proposed", "proposed-bgg", "proposed-gd"],
    "trials": 50,
    "sweep": {"snr_db": [0.0, 5.0, 10.0, 15.0, 20.0]},
    "output": {"csv": "/root/pkg/.calib/final5.csv",
               "summary": "/root/pkg/.calib/final5_summary.csv",
               "trace": None},
})

t0 = time.perf_counter()
res = run_experiment(cfg)
dt = time.perf_counter() - t0

med = {}
for alg in cfg["algorithms"]:
    med[alg] = {}
    for snr in cfg["sweep"]["snr_db"]:
        vals = [r["nmse_db"] for r in res.rows
                if r["algorithm"] == alg and r["snr_db"] == snr
                and r["status"] == "ok"]
        med[alg][str(snr)] = float(np.median(vals))

points = 0
lines = []
for snr in cfg["sweep"]["snr_db"]:
    t = med["proposed"][str(snr)]
    b = med["proposed-bgg"][str(snr)]
    g = med["proposed-gd"][str(snr)]
    ok = (t <= b) and (b <= t + 3.0) and (t <= g)
    points += int(ok)
    lines.append(f"snr {snr}: tanh {t:.3f} bgg {b:.3f} gd {g:.3f} "
                 f"gap {b - t:.3f} gd-margin {g - t:.3f} "
                 f"{'PASS' if ok else 'FAIL'}")

out = {"elapsed_min": dt / 60.0, "medians": med, "points": points,
       "lines": lines}
with open("/root/pkg/.calib/final5_medians.json", "w") as fh:
    json.dump(out, fh, indent=2)
print("\n".join(lines))
print("points", points, "/5, elapsed", round(dt / 60.0, 1), "min", flush=True)
