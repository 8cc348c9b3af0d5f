"""End-to-end experiment runners shared by the acceptance suite and scripts/."""

from __future__ import annotations

import time
import warnings
from dataclasses import dataclass, field

import numpy as np

from .data import gen_bike_like, gen_linear_switch, gen_moon_noise, split
from .evaluate import (
    cdf_validation, default_y_grid, discovery_metrics, mc_projected_cdf_oracle, p_mse, stability,
)
from .explain import MSE, ExplanationQuery, find_explanations, lxi, select_features
from .forest import CLASSIFICATION, Dataset, Forest, ForestParams, fit_forest, predict
from .projected import SubsetEvaluator
from .rules import RuleModel, build_global_sr, grow_rule
from .sdp import decision_for


def r2_score(y, pred) -> float:
    y = np.asarray(y, dtype=float)
    ss = float(np.sum((y - y.mean()) ** 2))
    return 1.0 - float(np.sum((y - pred) ** 2)) / ss if ss > 0 else float("nan")


def _quiet_explain(forest, q, ev):
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        return find_explanations(forest, q, ev)


@dataclass
class Setup:
    forest: Forest
    train: Dataset
    test: Dataset
    train_truth: list | None
    test_truth: list | None
    fit_seconds: float


def linear_switch_setup(n: int = 10_000, p: int = 100, k: int = 20, seed: int = 0) -> Setup:
    train, tr_truth = gen_linear_switch(n, p, seed)
    test, te_truth = gen_linear_switch(n, p, seed + 1)
    t0 = time.time()
    forest = fit_forest(train, ForestParams(k=k, seed=seed))
    return Setup(forest, train, test, tr_truth, te_truth, time.time() - t0)


def moon_setup(n: int = 10_000, n_noise: int = 100, k: int = 20, seed: int = 0) -> Setup:
    train, tr_truth = gen_moon_noise(n, seed, n_noise=n_noise)
    test, te_truth = gen_moon_noise(n, seed + 1, n_noise=n_noise)
    t0 = time.time()
    forest = fit_forest(train, ForestParams(k=k, seed=seed, task=CLASSIFICATION))
    return Setup(forest, train, test, tr_truth, te_truth, time.time() - t0)


class ExplanationCache:
    """M-SE searches per test row, shared between experiments on one forest."""

    def __init__(self, forest: Forest, data: Dataset, pi: float = 0.9, s: int = 10):
        self.forest, self.data, self.pi, self.s = forest, data, pi, s
        self.ev = SubsetEvaluator(forest)
        self._cache: dict[int, object] = {}

    def __call__(self, i: int):
        if i not in self._cache:
            x = self.data.features[i]
            if self.forest.task == CLASSIFICATION:
                dec = int(predict(self.forest, x))
            else:
                _, dec = decision_for(self.forest, x)
            q = ExplanationQuery(x, dec, self.pi, self.s, stop_at_minimal=True)
            self._cache[i] = (dec, _quiet_explain(self.forest, q, self.ev))
        return self._cache[i]


@dataclass
class DiscoveryResult:
    r2: float
    tpr: float
    fdr: float
    p_mse: float
    n: int


def discovery_run(setup: Setup, cache: ExplanationCache, rows) -> DiscoveryResult:
    rows = list(rows)
    chosen = [select_features(cache(i)[1]) for i in rows]
    rep = discovery_metrics(chosen, [setup.test_truth[i] for i in rows])
    gap = p_mse(setup.forest, chosen, setup.test.features[rows])
    r2 = r2_score(setup.test.targets, predict(setup.forest, setup.test.features))
    return DiscoveryResult(r2, rep.tpr, rep.fdr, gap, len(rows))


def mean_lxi(cache: ExplanationCache, rows, mode: str = MSE) -> np.ndarray:
    p = cache.data.p
    vals = []
    for i in rows:
        expl = cache(i)[1]
        if expl.ase:
            vals.append(lxi(expl, p, mode))
        else:
            vals.append(np.zeros(p))
    return np.mean(vals, axis=0)


@dataclass
class MoonResult:
    match_rate: float
    lxi: np.ndarray
    n: int


def moon_run(setup: Setup, cache: ExplanationCache, n_instances: int = 200,
             margin: float = 0.3) -> MoonResult:
    """Share of z1 > 0 rows, where either signal coordinate alone settles the
    arc, whose M-SE is exactly {{x1, z1}, {x2, z1}}."""
    X = setup.test.features
    x1_dec = (X[:, 0] < -margin) | (X[:, 0] > 1.0 + margin)
    x2_dec = (X[:, 1] > 0.5 + margin) | (X[:, 1] < -margin)
    rows = np.flatnonzero((X[:, 2] > 0) & x1_dec & x2_dec)[:n_instances]
    hits = [sorted(e.features for e in cache(i)[1].mse) == [(0, 2), (1, 2)] for i in rows]
    return MoonResult(float(np.mean(hits)), mean_lxi(cache, rows), len(rows))


@dataclass
class CdfResult:
    mks: float
    mad: float
    pointwise: float
    n: int


def cdf_run(setup: Setup, S, n_instances: int = 50, n_mc: int = 100_000, seed: int = 0,
            grid_points: int = 512) -> CdfResult:
    p = setup.train.p
    grid = default_y_grid(setup.train.targets, grid_points)
    X = setup.test.features[:n_instances]

    def oracle(x_S):
        return mc_projected_cdf_oracle("linear_switch", x_S, S, grid, n_mc, seed, p=p)

    v = cdf_validation(setup.forest, oracle, X, S, grid)
    return CdfResult(v.mks, v.mad, v.pointwise_within(0.05), X.shape[0])


def mks_trend(ns=(1_000, 3_000, 10_000), S=(0, 4), p: int = 100, k: int = 20,
              n_instances: int = 50, n_mc: int = 100_000) -> list[float]:
    out = []
    for n in ns:
        setup = linear_switch_setup(n, p, k)
        out.append(cdf_run(setup, S, n_instances, n_mc).mks)
    return out


@dataclass
class RuleShapeResult:
    anchor: np.ndarray
    box: dict
    text: str
    ok: bool


def rule_shape_run(setup: Setup, cache: ExplanationCache, target=(-3.64, -4.41, 0.68),
                   n_candidates: int = 200) -> RuleShapeResult | None:
    """Rule around the test row nearest ``target`` in (X3, X4, X5) whose M-SE is {X3, X4, X5}."""
    S = (2, 3, 4)
    X = setup.test.features
    order = np.argsort(np.linalg.norm(X[:, list(S)] - np.asarray(target), axis=1))
    for i in order[:n_candidates]:
        dec, expl = cache(int(i))
        if [e.features for e in expl.mse] != [S]:
            continue
        x = X[i]
        rule = grow_rule(setup.forest, x, dec, S, cache.pi, evaluator=cache.ev)
        lo5, hi5 = rule.box[4]
        ok = (np.isposinf(hi5) and abs(lo5) <= 0.3
              and all(np.all(np.isfinite(rule.box[j])) and rule.box[j][0] < x[j] <= rule.box[j][1]
                      for j in (2, 3)))
        return RuleShapeResult(x[list(S)], rule.box, rule.render(setup.train.feature_names), ok)
    return None


@dataclass
class GlobalSrResult:
    coverage: float
    r2_rules: float
    r2_forest: float
    r2_forest_all: float
    n_rules: int
    mean_size: float
    n_anchors: int
    trace: list = field(default_factory=list)


def global_sr_run(n: int = 3000, n_anchors: int = 400, pi: float = 0.9, k: int = 20,
                  seed: int = 0, chunk: int = 50, progress=None) -> GlobalSrResult:
    """Bike-like Global-SR on a 75/25 split, anchors drawn from the training rows."""
    data, _ = gen_bike_like(n, seed)
    train, test = split(data, 0.25, seed)
    forest = fit_forest(train, ForestParams(k=k, seed=seed))
    fpred = predict(forest, test.features)
    ev_rows = np.random.default_rng(seed).permutation(train.n)[:n_anchors]
    rules: dict = {}
    trace = []
    for c in range(0, len(ev_rows), chunk):
        part = build_global_sr(forest, train, pi, instances=ev_rows[c:c + chunk])
        for r in part.rules:
            rules.setdefault(r.key, r)
        model = RuleModel(list(rules.values()))
        out, ids = model.predict_many(test.features)
        cov = ids >= 0
        row = (c + len(ev_rows[c:c + chunk]), float(cov.mean()),
               r2_score(test.targets[cov], out[cov]) if cov.sum() > 1 else float("nan"),
               r2_score(test.targets[cov], fpred[cov]) if cov.sum() > 1 else float("nan"))
        trace.append(row)
        if progress is not None:
            progress(row)
    _, cov_rows, r2r, r2f = trace[-1]
    sizes = [r.size for r in rules.values()]
    return GlobalSrResult(cov_rows, r2r, r2f, r2_score(test.targets, fpred), len(rules),
                          float(np.mean(sizes)) if sizes else 0.0, len(ev_rows), trace)


@dataclass
class StabilityRunResult:
    mean: float
    std: float
    zero_noise_all_one: bool
    n: int
    n_unstable: int


def stability_run(setup: Setup, n_instances: int = 100, n_perturb: int = 50,
                  epsilon: float = 0.1, pi: float = 0.9, s: int = 10) -> StabilityRunResult:
    forest = setup.forest
    ev = SubsetEvaluator(forest)

    def explainer(z):
        dec = int(predict(forest, z)) if forest.task == CLASSIFICATION else decision_for(forest, z)[1]
        expl = _quiet_explain(forest, ExplanationQuery(z, dec, pi, s, stop_at_minimal=True), ev)
        return frozenset(grow_rule(forest, z, dec, e.features, pi, evaluator=ev).key
                         for e in expl.mse)

    counts, zero_ok, unstable = [], [], 0
    for i in range(n_instances):
        x = setup.test.features[i]
        y0 = predict(forest, x)
        same = lambda z: predict(forest, z) == y0
        zero_ok.append(stability(explainer, x, 0.0, 3, seed=i).n_distinct == 1)
        res = stability(explainer, x, epsilon, n_perturb, seed=i, same_prediction=same)
        if res.n_distinct is None:
            unstable += 1
            continue
        counts.append(res.n_distinct)
    return StabilityRunResult(float(np.mean(counts)), float(np.std(counts)), all(zero_ok),
                              len(counts), unstable)
