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


CANDIDATES = {
    "C1_i1_50": {"framework": {"i1": 50}},
    "C2_defaults": {"framework": {"i0": 10, "i1": 50, "i2": 60}},
}

results = {}
for name, extra in CANDIDATES.items():
    cfg = copy.deepcopy(DEFAULT_CONFIG)
    deep(cfg, {
        "scenario": {"k_paths": 8, "delay_gap_ns": 93.75},
        "framework": {"support": {"s_max": 64}},
        "algorithms": ["proposed", "proposed-bgg", "proposed-gd"],
        "trials": 16,
        "sweep": {"snr_db": [0.0, 10.0, 15.0, 20.0]},
        "output": {"csv": f"/root/pkg/.calib/cand_{name}.csv",
                   "summary": f"/root/pkg/.calib/cand_{name}_summary.csv",
                   "trace": None},
    })
    deep(cfg, extra)
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
    results[name] = {"elapsed_min": dt / 60.0, "medians": med}
    with open("/root/pkg/.calib/cand_medians.json", "w") as fh:
        json.dump(results, fh, indent=2)
    print(name, json.dumps(med, indent=1), flush=True)
