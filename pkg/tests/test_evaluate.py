import numpy as np
import pytest

from sdpexplain.data import equicorrelated_cov, gen_linear_switch, linear_switch_response
from sdpexplain.evaluate import (
    cdf_validation, conditional_gaussian, discovery_metrics, mc_conditional_sample,
    mc_projected_cdf_oracle, near_distinct, p_mse, rule_metrics, sparsity, stability,
)
from sdpexplain.forest import Dataset, ForestParams, fit_forest, predict
from sdpexplain.rules import Rule, RuleModel
from sdpexplain.sdp import DecisionBand


def test_discovery_hand_cases():
    r = discovery_metrics([{1, 2, 9}], [{1, 2, 5}])
    assert r.tpr == pytest.approx(2 / 3) and r.fdr == pytest.approx(1 / 3)
    r = discovery_metrics([{1, 2}], [{1, 2}])
    assert (r.tpr, r.fdr) == (1.0, 0.0)
    r = discovery_metrics([{0, 2}, {4}], [[(0, 2), (1, 2)], set()])
    assert (r.tpr, r.fdr, r.n, r.n_skipped) == (1.0, 0.0, 1, 1)
    r = discovery_metrics([set()], [{1}])
    assert (r.tpr, r.fdr) == (0.0, 0.0)


def test_sparsity():
    m, s, mx = sparsity([1, 1, 2])
    assert m == pytest.approx(4 / 3) and s == pytest.approx(np.sqrt(2) / 3) and mx == 2


def test_p_mse_limits(small_reg):
    Z = np.random.default_rng(0).normal(size=(40, 4))
    assert p_mse(small_reg, [range(4)] * 40, Z) == 0.0
    y = small_reg.training_data.targets
    pred = predict(small_reg, Z)
    # S empty: projected mean is the bootstrap-weighted unconditional mean
    from sdpexplain.projected import projected_weights
    mu = projected_weights(small_reg, Z[0], ()) @ y
    assert p_mse(small_reg, [()] * 40, Z) == pytest.approx(np.mean((pred - mu) ** 2))


def test_rule_metrics():
    band = DecisionBand(-1.0, 1.0)
    everything = RuleModel([Rule((0,), {0: (-np.inf, np.inf)}, 0.0, band, 1.0)])
    X = np.random.default_rng(0).normal(size=(50, 2))
    y = np.where(np.arange(50) < 40, 0.0, 5.0)
    rep = rule_metrics(everything, Dataset(X, y))
    assert rep.coverage == 1.0 and rep.correctness == pytest.approx(0.8)
    assert rep.sparsity[2] >= rep.sparsity[0]


def test_conditional_gaussian_matches_sample_moments():
    cov = equicorrelated_cov(4)
    xs = np.array([1.0, -2.0])
    mu, c = conditional_gaussian(np.zeros(4), cov, [1, 3], xs)
    # least squares of the rest on X_S recovers the conditional mean map and residual covariance
    X = np.random.default_rng(0).multivariate_normal(np.zeros(4), cov, size=200_000)
    K, *_ = np.linalg.lstsq(X[:, [1, 3]], X[:, [0, 2]], rcond=None)
    resid = X[:, [0, 2]] - X[:, [1, 3]] @ K
    assert np.allclose(xs @ K, mu, atol=0.05)
    assert np.allclose(np.cov(resid, rowvar=False), c, atol=0.1)


def test_oracle_properties():
    x = np.array([0.3, -1.0, 2.0, 0.5, 1.2])
    y_grid = np.linspace(-20, 20, 200)
    F = mc_projected_cdf_oracle("linear_switch", x[[0, 4]], [0, 4], y_grid, n_mc=5000, p=10)
    assert np.all(np.diff(F) >= 0) and F[0] == 0.0 and F[-1] == 1.0
    full = mc_projected_cdf_oracle("linear_switch", x, range(5), y_grid, n_mc=100, p=5)
    v = linear_switch_response(x)[0]
    assert np.array_equal(full, (y_grid >= v).astype(float))
    draws = mc_conditional_sample("linear_switch", x[[4]], [4], 2000, p=10)
    assert draws.std() > 0
    with pytest.raises(ValueError):
        mc_projected_cdf_oracle("moon_noise", x[:1], [0], y_grid)


def test_cdf_validation_small():
    train, _ = gen_linear_switch(2000, p=6, seed=0)
    f = fit_forest(train, ForestParams(k=10, seed=0))
    X = gen_linear_switch(10, p=6, seed=1)[0].features
    oracle = lambda xs: mc_projected_cdf_oracle("linear_switch", xs, [0, 4], grid, 20_000, p=6)
    grid = np.linspace(-15, 15, 128)
    v = cdf_validation(f, oracle, X, [0, 4], grid)
    assert 0.0 <= v.mks <= 1.0 and v.mad >= 0.0 and v.mks < 0.5


def test_stability():
    explainer = lambda z: round(float(z[0]), 1)
    x = np.array([0.0, 0.0])
    assert stability(explainer, x, 0.0, 20).n_distinct == 1
    r = stability(explainer, x, 1.0, 20, seed=1)
    assert 1 < r.n_distinct <= 20
    r = stability(explainer, x, 1.0, 10, same_prediction=lambda z: False, max_draws=30)
    assert r.unstable_prediction and r.n_rejected == 30


def test_near_distinct():
    a = ((0, 0.0, 1.0),)
    b = ((0, 0.0, 1.01),)
    c = ((0, 0.5, 1.0),)
    lo, hi = np.array([-2.0]), np.array([2.0])
    assert near_distinct([(a,), (b,), (c,)], lo, hi) == 2
