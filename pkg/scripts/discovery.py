"""Linear-switch feature discovery, P-MSE and LXI on the high-dimensional setting."""
import argparse
import json

import numpy as np

from sdpexplain import experiments as E

ap = argparse.ArgumentParser(description=__doc__)
ap.add_argument("--n", type=int, default=10_000)
ap.add_argument("--p", type=int, default=100)
ap.add_argument("--k", type=int, default=20)
ap.add_argument("--instances", type=int, default=1000)
args = ap.parse_args()

setup = E.linear_switch_setup(args.n, args.p, args.k)
cache = E.ExplanationCache(setup.forest, setup.test, pi=0.9, s=10)
rows = np.sort(np.random.default_rng(0).choice(setup.test.n, args.instances, replace=False))
r = E.discovery_run(setup, cache, rows)
pos = np.flatnonzero(setup.test.features[:, 4] > 0)[: args.instances]
print(json.dumps({"r2": r.r2, "tpr": r.tpr, "fdr": r.fdr, "p_mse": r.p_mse, "n": r.n,
                  "lxi_x5_positive": np.round(E.mean_lxi(cache, pos)[:10], 4).tolist()}, indent=2))
