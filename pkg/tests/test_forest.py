import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from sdpexplain import _kernels
from sdpexplain.forest import (
    CLASSIFICATION, Dataset, ForestParams, default_min_samples_leaf, fit_forest,
    forest_weights, predict, predict_proba, split_frequency, tree_leaf,
)


def test_default_leaf_size_at_ten_thousand():
    # floor(100 * ln(1e4)^1.5 / 250) = floor(11.18)
    assert default_min_samples_leaf(10_000) == 11
    assert default_min_samples_leaf(2) == 1


def test_hand_weights(hand_forest):
    # tree 1: x=1 goes left of 1.5 -> {0,1}, boot 1+2 -> (1/3, 2/3)
    # tree 2: x=1 goes right of 0.5 -> {1,2,3}, boot 0+1+1 -> (0, 1/2, 1/2)
    w = forest_weights(hand_forest, [1.0, 0.0])
    np.testing.assert_allclose(w, [1 / 6, 1 / 3, 1 / 4, 1 / 4], atol=1e-15)
    assert predict(hand_forest, np.array([1.0, 0.0])) == pytest.approx(w @ [0, 1, 2, 3])


def test_ties_route_left(hand_forest):
    t = hand_forest.trees[0]
    assert tree_leaf(t, [1.5, 0.0]) == 1
    assert tree_leaf(t, [1.5 + 1e-12, 0.0]) == 2


def _brute_split(x, y, w, min_leaf):
    best = (-np.inf, None)
    vals = np.unique(x)
    for a, b in zip(vals[:-1], vals[1:]):
        t = 0.5 * (a + b)
        L = x <= t
        if w[L].sum() < min_leaf or w[~L].sum() < min_leaf:
            continue
        def sse(m):
            mu = np.average(y[m], weights=w[m])
            return np.sum(w[m] * (y[m] - mu) ** 2)
        gain = sse(np.ones_like(L)) - sse(L) - sse(~L)
        if gain > best[0] + 1e-12:
            best = (gain, t)
    return best


def test_eight_point_split_matches_brute_force():
    x = np.array([1.0, 2, 3, 4, 5, 6, 7, 8])
    y = np.array([0.0, 0, 0, 1, 1, 1, 1, 1])
    X = x[:, None]
    w = np.ones(8)
    f, t, gain = _kernels.best_split_regression(X, y, np.arange(8), w, np.array([0]), 1.0)
    g_ref, t_ref = _brute_split(x, y, w, 1)
    assert (f, t) == (0, 3.5) and t_ref == 3.5
    assert gain == pytest.approx(g_ref)


@given(st.integers(0, 2 ** 31 - 1))
def test_split_against_brute_force(seed):
    rng = np.random.default_rng(seed)
    x = np.round(rng.normal(size=12), 1)
    y = rng.normal(size=12)
    w = rng.integers(1, 4, size=12).astype(float)
    f, t, gain = _kernels.best_split_regression(x[:, None], y, np.arange(12), w, np.array([0]), 2.0)
    g_ref, t_ref = _brute_split(x, y, w, 2)
    if t_ref is None:
        assert f < 0
    else:
        assert t == pytest.approx(t_ref) and gain == pytest.approx(g_ref)


@given(st.lists(st.floats(-3, 3), min_size=4, max_size=4))
def test_weights_normalised(small_reg, x):
    w = forest_weights(small_reg, np.array(x))
    assert np.all(w >= 0)
    assert abs(w.sum() - 1.0) <= 1e-12
    assert predict(small_reg, np.array(x)) == pytest.approx(w @ small_reg.training_data.targets, abs=1e-10)


def test_leaf_sizes_and_split_counts(small_reg):
    mins = small_reg.params.min_samples_leaf
    internal = 0
    for t in small_reg.trees:
        assert t.bootstrap_counts.sum() == small_reg.params.bootstrap_size
        assert np.all(t.leaf_bootstrap_total[t.leaves()] >= mins)
        internal += int(np.sum(t.left != -1))
    assert split_frequency(small_reg).sum() == internal


def test_refit_is_bit_identical(small_reg):
    again = fit_forest(small_reg.training_data, small_reg.params)
    for a, b in zip(small_reg.trees, again.trees):
        for name in ("feature", "threshold", "left", "right", "bootstrap_counts"):
            np.testing.assert_array_equal(getattr(a, name), getattr(b, name))


def test_classification_predict(small_clf):
    X = small_clf.training_data.features
    proba = predict_proba(small_clf, X)
    np.testing.assert_allclose(proba.sum(axis=1), 1.0)
    acc = np.mean(predict(small_clf, X) == small_clf.training_data.targets)
    assert acc > 0.9


def test_constant_features_give_single_leaves():
    data = Dataset(np.ones((20, 2)), np.arange(20.0))
    f = fit_forest(data, ForestParams(k=3, min_samples_leaf=1))
    assert all(t.n_nodes == 1 for t in f.trees)
    assert split_frequency(f).tolist() == [0, 0]


def test_param_and_data_errors():
    data = Dataset(np.zeros((5, 2)), np.zeros(5))
    with pytest.raises(ValueError):
        fit_forest(data, ForestParams(k=0))
    with pytest.raises(ValueError):
        fit_forest(data, ForestParams(mtry=3))
    with pytest.raises(ValueError):
        fit_forest(Dataset(np.zeros((0, 2)), np.zeros(0)))
    with pytest.raises(ValueError):
        Dataset(np.array([[np.nan]]), np.zeros(1))
    with pytest.raises(ValueError):
        Dataset(np.zeros((2, 1)), np.array([0.5, 1]), task=CLASSIFICATION)


def test_default_mtry_uses_all_features(small_clf):
    assert small_clf.params.mtry == small_clf.training_data.p
    assert ForestParams(task=CLASSIFICATION).resolved(100, 9).mtry == 9
