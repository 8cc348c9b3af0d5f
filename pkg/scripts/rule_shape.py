"""Sufficient rule around a linear-switch anchor whose M-SE is {X3, X4, X5}."""
import json

import numpy as np

from sdpexplain import experiments as E

setup = E.linear_switch_setup(10_000, 100, 20)
cache = E.ExplanationCache(setup.forest, setup.test, pi=0.9, s=10)
r = E.rule_shape_run(setup, cache)
if r is None:
    print(json.dumps({"error": "no anchor with M-SE {X3,X4,X5}"}))
else:
    print(json.dumps({"anchor": np.round(r.anchor, 3).tolist(), "rule": r.text, "shape_ok": r.ok},
                     indent=2))
