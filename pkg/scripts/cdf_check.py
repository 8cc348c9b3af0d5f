"""Projected CDF against the Monte-Carlo conditional-Gaussian oracle, plus the trend over n."""
import argparse
import json

from sdpexplain import experiments as E

ap = argparse.ArgumentParser(description=__doc__)
ap.add_argument("--instances", type=int, default=50)
ap.add_argument("--n-mc", type=int, default=100_000)
ap.add_argument("--trend", action="store_true", help="also fit n = 1e3, 3e3, 1e4")
args = ap.parse_args()

setup = E.linear_switch_setup(10_000, 100, 20)
out = {}
for S in ([0, 4], [0, 1, 4]):
    r = E.cdf_run(setup, S, args.instances, args.n_mc)
    out[str(S)] = {"mks": r.mks, "mad": r.mad, "pointwise_within_0.05": r.pointwise}
if args.trend:
    out["mks_trend"] = E.mks_trend(n_instances=args.instances, n_mc=args.n_mc)
print(json.dumps(out, indent=2))
