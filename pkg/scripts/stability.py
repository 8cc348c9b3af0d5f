"""Distinct sufficient rules under N(0, eps I) perturbations on reduced moon+noise data."""
import argparse
import json

from sdpexplain import experiments as E

ap = argparse.ArgumentParser(description=__doc__)
ap.add_argument("--n", type=int, default=2000)
ap.add_argument("--noise-columns", type=int, default=10)
ap.add_argument("--instances", type=int, default=100)
ap.add_argument("--draws", type=int, default=50)
ap.add_argument("--epsilon", type=float, default=0.1)
args = ap.parse_args()

setup = E.moon_setup(args.n, args.noise_columns)
r = E.stability_run(setup, args.instances, args.draws, args.epsilon)
print(json.dumps({"mean_distinct": r.mean, "std_distinct": r.std,
                  "eps0_single": r.zero_noise_all_one, "n": r.n, "unstable": r.n_unstable},
                 indent=2))
