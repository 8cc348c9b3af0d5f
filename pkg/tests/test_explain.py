import itertools
import warnings

import numpy as np
import pytest
from hypothesis import given, strategies as st

from sdpexplain.explain import (
    ASE, MSE, Explanation, ExplanationQuery, ExplanationSet, explanation_report,
    find_explanations, lxi, preselect, select_features,
)
from sdpexplain.forest import CLASSIFICATION, Dataset, ForestParams, fit_forest, predict, split_frequency
from sdpexplain.projected import SubsetEvaluator
from sdpexplain.sdp import decision_for, hit_vector


def brute_force(forest, x, decision, pi, pre):
    """Subset-minimal sufficient sets by checking every proper subset."""
    hit = hit_vector(forest, decision)
    ev = SubsetEvaluator(forest)
    subsets = [c for r in range(1, len(pre) + 1) for c in itertools.combinations(pre, r)]
    val = dict(zip(subsets, ev(x, subsets, hit)))
    out = []
    for S in subsets:
        if val[S] < pi:
            continue
        proper = [c for r in range(1, len(S)) for c in itertools.combinations(S, r)]
        if all(val[c] < pi for c in proper):
            out.append(S)
    return out


@pytest.fixture(scope="module")
def forests():
    out = []
    for seed in range(3):
        rng = np.random.default_rng(seed)
        X = rng.normal(size=(200, 4))
        y = (X[:, 0] > 0) & (X[:, 1] + X[:, 2] > 0) | (X[:, 3] > 1.2)
        data = Dataset(X, y.astype(int), task=CLASSIFICATION)
        out.append(fit_forest(data, ForestParams(k=5 + seed * 2, min_samples_leaf=3, seed=seed,
                                                 task=CLASSIFICATION)))
    return out


@pytest.mark.parametrize("pi", [0.6, 0.8, 0.95])
def test_minimality_oracle(forests, pi):
    rng = np.random.default_rng(int(pi * 100))
    for f in forests:
        for _ in range(8):
            x = rng.normal(size=4)
            y = int(predict(f, x))
            for s in (2, 3, 4):
                q = ExplanationQuery(x, y, pi, s)
                res = find_explanations(f, q)
                assert [e.features for e in res.ase] == brute_force(f, x, y, pi, res.preselected)
                if res.ase:
                    m = min(len(e.features) for e in res.ase)
                    assert [e.features for e in res.mse] == [e.features for e in res.ase
                                                             if len(e.features) == m]
                    assert res.best_fallback is None
                else:
                    assert res.best_fallback is not None and res.best_fallback.sdp < pi


def test_antichain_and_sufficiency(small_reg):
    rng = np.random.default_rng(5)
    for _ in range(10):
        x = rng.normal(size=4)
        _, band = decision_for(small_reg, x)
        res = find_explanations(small_reg, ExplanationQuery(x, band, 0.7, 4))
        sets = [frozenset(e.features) for e in res.ase]
        assert not any(a < b for a in sets for b in sets)
        ev = SubsetEvaluator(small_reg)
        for e in res.ase:
            assert ev(x, [e.features], hit_vector(small_reg, band))[0] >= 0.7


def test_stop_at_minimal_keeps_mse(forests):
    f = forests[0]
    x = np.array([0.5, 0.4, 0.3, 0.0])
    y = int(predict(f, x))
    full = find_explanations(f, ExplanationQuery(x, y, 0.8, 4))
    quick = find_explanations(f, ExplanationQuery(x, y, 0.8, 4, stop_at_minimal=True))
    assert quick.mse == full.mse


def test_preselect(small_reg):
    counts = split_frequency(small_reg)
    pre = preselect(small_reg, 2)
    assert len(pre) == 2 and set(pre) == set(np.argsort(-counts, kind="stable")[:2])
    assert preselect(small_reg, 4) == [0, 1, 2, 3]
    with pytest.warns(UserWarning):
        assert preselect(small_reg, 9) == [0, 1, 2, 3]


def test_query_validation():
    with pytest.raises(ValueError):
        ExplanationQuery(np.zeros(2), 0, pi=0.0)
    with pytest.raises(ValueError):
        ExplanationQuery(np.zeros(2), 0, pi=1.0)
    with pytest.raises(ValueError):
        ExplanationQuery(np.zeros(2), 0, s=0)


def test_lxi_values():
    one = ExplanationSet([Explanation((2, 3, 4), 0.95)], [Explanation((2, 3, 4), 0.95)], [0, 1, 2, 3, 4])
    assert lxi(one, 6).tolist() == [0, 0, 1, 1, 1, 0]
    two = [Explanation((0, 2), 0.97), Explanation((1, 2), 0.96)]
    moon = ExplanationSet(two, two, [0, 1, 2])
    assert lxi(moon, 4, MSE).tolist() == [0.5, 0.5, 1.0, 0.0]
    assert select_features(moon) == (0, 2)
    empty = ExplanationSet([], [], [0], Explanation((0,), 0.3))
    with pytest.raises(ValueError):
        lxi(empty, 2)
    assert select_features(empty) == (0,)


@given(st.lists(st.lists(st.integers(0, 7), min_size=1, max_size=4, unique=True), min_size=1, max_size=6))
def test_lxi_bounds(sets):
    ex = [Explanation(tuple(sorted(s)), 0.9) for s in sets]
    v = lxi(ExplanationSet(ex, ex, list(range(8))), 8, ASE)
    assert np.all((v >= 0) & (v <= 1))
    common = set.intersection(*[set(s) for s in sets])
    assert all(v[j] == 1.0 for j in common)
    assert all(v[j] == 0.0 for j in set(range(8)) - set.union(*[set(s) for s in sets]))


def test_single_feature_dataset():
    rng = np.random.default_rng(0)
    X = rng.normal(size=(200, 1))
    data = Dataset(X, (X[:, 0] > 0).astype(int), task=CLASSIFICATION)
    f = fit_forest(data, ForestParams(k=5, min_samples_leaf=3, task=CLASSIFICATION))
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        res = find_explanations(f, ExplanationQuery(np.array([1.5]), 1, 0.9, 10))
    assert [e.features for e in res.mse] == [(0,)]


def test_report_shape(small_reg):
    x = np.zeros(4)
    y, band = decision_for(small_reg, x)
    q = ExplanationQuery(x, band, 0.6, 4)
    rep = explanation_report(find_explanations(small_reg, q), q, y, 4, instance_id=3)
    assert set(rep) == {"instance_id", "prediction", "band", "pi", "preselected", "ase", "mse",
                        "lxi", "fallback"}
    assert rep["band"]["provenance"] == "adaptive_quantile"
