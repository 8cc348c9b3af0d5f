"""Global-SR on the bike-like stand-in: test coverage and covered-point R2."""
import argparse
import json
import sys

from sdpexplain import experiments as E

ap = argparse.ArgumentParser(description=__doc__)
ap.add_argument("--n", type=int, default=3000)
ap.add_argument("--anchors", type=int, default=10**9, help="default: every training row")
ap.add_argument("--pi", type=float, default=0.9)
ap.add_argument("--chunk", type=int, default=250)
args = ap.parse_args()

r = E.global_sr_run(args.n, args.anchors, args.pi, chunk=args.chunk,
                    progress=lambda row: print("anchors=%d coverage=%.3f r2_rules=%.3f r2_forest=%.3f"
                                               % row, file=sys.stderr, flush=True))
print(json.dumps({"coverage": r.coverage, "r2_rules": r.r2_rules, "r2_forest_covered": r.r2_forest,
                  "r2_forest_all": r.r2_forest_all, "n_rules": r.n_rules,
                  "mean_rule_size": r.mean_size, "n_anchors": r.n_anchors}, indent=2))
