import numpy as np
import pytest
from hypothesis import given, strategies as st

from sdpexplain.data import gen_linear_switch
from sdpexplain.forest import ForestParams, fit_forest, predict
from sdpexplain.projected import projected_weights
from sdpexplain.sdp import (
    ADAPTIVE_QUANTILE, FIXED_T, DecisionBand, adaptive_band, decision_for, sdp_classification,
    sdp_regression,
)


def test_fixed_band():
    b = DecisionBand.fixed(2.0, 0.25)
    assert (b.lo, b.hi, b.provenance) == (1.5, 2.5, FIXED_T)
    assert b.contains([1.5, 2.5, 2.51]).tolist() == [True, True, False]
    with pytest.raises(ValueError):
        DecisionBand(1.0, 0.0)


def test_sdp_is_weighted_count(small_reg):
    rng = np.random.default_rng(0)
    y = small_reg.training_data.targets
    for _ in range(20):
        x = rng.normal(size=4)
        S = tuple(np.flatnonzero(rng.random(4) < 0.5))
        band = DecisionBand(*np.sort(rng.normal(size=2)))
        w = projected_weights(small_reg, x, S)
        ref = sum(w[i] for i in range(y.shape[0]) if band.lo <= y[i] <= band.hi)
        assert sdp_regression(small_reg, x, 0.0, band, S).value == pytest.approx(ref, abs=1e-12)


@given(st.floats(-2, 2), st.floats(0, 1), st.floats(0, 1))
def test_sdp_monotone_in_band(small_reg, c, r1, r2):
    x = np.array([0.1, -0.4, 0.3, 0.2])
    inner = DecisionBand(c - min(r1, r2), c + min(r1, r2))
    outer = DecisionBand(c - max(r1, r2), c + max(r1, r2))
    a = sdp_regression(small_reg, x, c, inner, (0, 2)).value
    b = sdp_regression(small_reg, x, c, outer, (0, 2)).value
    assert a <= b + 1e-12


def test_full_band_full_subset_is_one(small_reg):
    y = small_reg.training_data.targets
    band = DecisionBand(y.min(), y.max())
    assert sdp_regression(small_reg, np.zeros(4), 0.0, band, range(4)).value == pytest.approx(1.0)


def test_classification_sdp(small_clf):
    x = np.array([1.0, -1.0, 0.0, 0.0])
    y = int(predict(small_clf, x))
    full = sdp_classification(small_clf, x, y, range(4)).value
    assert full > 0.5
    other = sdp_classification(small_clf, x, 1 - y, range(4)).value
    assert full + other == pytest.approx(1.0)
    with pytest.raises(ValueError):
        sdp_classification(small_clf, x, 5, (0,))
    with pytest.raises(ValueError):
        sdp_regression(small_clf, x, y, DecisionBand(0, 1), (0,))


def test_adaptive_band(small_reg):
    x = np.array([0.5, 0.5, -0.5, 1.0])
    b = adaptive_band(small_reg, x, 0.05, 0.05)
    assert b.provenance == ADAPTIVE_QUANTILE and b.lo <= b.hi
    wide = adaptive_band(small_reg, x, 1e-9, 1e-9)
    w = projected_weights(small_reg, x, range(4))
    support = small_reg.training_data.targets[w > 0]
    assert (wide.lo, wide.hi) == (support.min(), support.max())
    with pytest.raises(ValueError):
        adaptive_band(small_reg, x, 0.6, 0.5)
    _, fixed = decision_for(small_reg, x, t=1.0)
    assert fixed.provenance == FIXED_T


def test_adaptive_band_coverage_on_held_out():
    # alpha1 = alpha2 = 0.05 -> about 90% of held-out targets inside their band;
    # on this noiseless response the forest bands over-cover (about 0.98)
    train, _ = gen_linear_switch(3000, p=10, seed=11)
    test, _ = gen_linear_switch(400, p=10, seed=12)
    f = fit_forest(train, ForestParams(k=20, seed=0))
    inside = [adaptive_band(f, x).contains(y) for x, y in zip(test.features, test.targets)]
    assert abs(np.mean(inside) - 0.90) <= 0.03


def test_adaptive_band_holds_weight_mass(small_reg):
    rng = np.random.default_rng(3)
    y = small_reg.training_data.targets
    for x in rng.normal(size=(30, 4)):
        b = adaptive_band(small_reg, x)
        w = projected_weights(small_reg, x, range(4))
        inside = w[(y >= b.lo) & (y <= b.hi)].sum()
        assert inside >= 0.90 - 1e-12
        assert w[y < b.lo].sum() < 0.05 + 1e-12 and w[y > b.hi].sum() < 0.05 + 1e-12
