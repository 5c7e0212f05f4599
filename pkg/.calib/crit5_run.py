import json, time, warnings, copy
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
    "framework": {"support": {"s_max": 64}},
    "algorithms": ["proposed", "proposed-bgg", "proposed-gd"],
    "trials": 50,
    "output": {"csv": "/root/pkg/.calib/crit5_results.csv",
               "summary": "/root/pkg/.calib/crit5_summary.csv",
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
                if r["algorithm"] == alg and r["snr_db"] == snr and r["status"] == "ok"]
        med[alg][str(snr)] = float(np.median(vals))
out = {"elapsed_min": dt / 60.0, "medians": med}
with open("/root/pkg/.calib/crit5_medians.json", "w") as fh:
    json.dump(out, fh, indent=2)
print(json.dumps(out, indent=2))
