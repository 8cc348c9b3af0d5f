"""Moon+noise classification: share of instances whose M-SE is {{x1,z1},{x2,z1}}."""
import argparse
import json

import numpy as np

from sdpexplain import experiments as E

ap = argparse.ArgumentParser(description=__doc__)
ap.add_argument("--n", type=int, default=10_000)
ap.add_argument("--noise-columns", type=int, default=100)
ap.add_argument("--instances", type=int, default=200)
ap.add_argument("--pi", type=float, default=0.95)
ap.add_argument("--margin", type=float, default=0.3)
args = ap.parse_args()

setup = E.moon_setup(args.n, args.noise_columns)
cache = E.ExplanationCache(setup.forest, setup.test, pi=args.pi, s=10)
r = E.moon_run(setup, cache, args.instances, args.margin)
print(json.dumps({"match_rate": r.match_rate, "lxi": np.round(r.lxi[:6], 4).tolist(), "n": r.n},
                 indent=2))
