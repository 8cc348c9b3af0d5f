import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from sdpexplain.forest import CLASSIFICATION, Dataset, ForestParams, Tree, Forest, fit_forest

settings.register_profile(
    "default", deadline=None, max_examples=40,
    suppress_health_check=[HealthCheck.too_slow, HealthCheck.function_scoped_fixture],
)
settings.load_profile("default")


def make_tree(feature, threshold, left, right, boot, X):
    """Tree from explicit node arrays; leaves use left = right = -1."""
    t = Tree(
        feature=np.asarray(feature, dtype=np.int64),
        threshold=np.asarray(threshold, dtype=np.float64),
        left=np.asarray(left, dtype=np.int64),
        right=np.asarray(right, dtype=np.int64),
        bootstrap_counts=np.asarray(boot, dtype=np.int64),
        leaf_of_sample=np.empty(0, dtype=np.int64),
        rng_seed=0,
    )
    t.leaf_of_sample = t.apply(X)
    return t


@pytest.fixture(scope="session")
def small_reg():
    rng = np.random.default_rng(3)
    X = rng.normal(size=(300, 4))
    y = X[:, 0] + np.where(X[:, 3] > 0, X[:, 1], -X[:, 2]) + 0.1 * rng.normal(size=300)
    data = Dataset(X, y)
    return fit_forest(data, ForestParams(k=8, min_samples_leaf=5, seed=1))


@pytest.fixture(scope="session")
def small_clf():
    rng = np.random.default_rng(4)
    X = rng.normal(size=(300, 4))
    y = ((X[:, 0] > 0) ^ (X[:, 1] > 0.5)).astype(int)
    data = Dataset(X, y, task=CLASSIFICATION)
    return fit_forest(data, ForestParams(k=8, min_samples_leaf=5, seed=2, task=CLASSIFICATION))


@pytest.fixture(scope="session")
def hand_forest():
    """4 samples, 2 one-split trees on feature 0 with fixed bootstrap counts."""
    X = np.array([[0.0, 5.0], [1.0, 6.0], [2.0, 7.0], [3.0, 8.0]])
    y = np.array([0.0, 1.0, 2.0, 3.0])
    t1 = make_tree([0, -1, -1], [1.5, np.nan, np.nan], [1, -1, -1], [2, -1, -1], [1, 2, 0, 1], X)
    t2 = make_tree([0, -1, -1], [0.5, np.nan, np.nan], [1, -1, -1], [2, -1, -1], [2, 0, 1, 1], X)
    data = Dataset(X, y)
    return Forest([t1, t2], ForestParams(k=2, min_samples_leaf=1, mtry=2, bootstrap_size=4), data)
