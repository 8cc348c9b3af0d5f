"""CART random forests with the bookkeeping needed for adaptive-neighbour weights.

Each tree keeps its bootstrap multiplicities and the leaf every training
sample routes to, so the forest can be read as a weighted nearest-neighbour
estimator rather than only a predictor.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from . import _kernels

REGRESSION = "regression"
CLASSIFICATION = "classification"
TASKS = (REGRESSION, CLASSIFICATION)


@dataclass
class Dataset:
    features: np.ndarray
    targets: np.ndarray
    feature_names: list[str] = field(default_factory=list)
    task: str = REGRESSION

    def __post_init__(self):
        self.features = np.ascontiguousarray(np.asarray(self.features, dtype=np.float64))
        if self.features.ndim != 2:
            raise ValueError("features must be a 2-D array")
        n, p = self.features.shape
        # n = 0 is representable (an empty test split); fitting rejects it
        if p < 1:
            raise ValueError(f"dataset must have p >= 1, got {self.features.shape}")
        if not np.all(np.isfinite(self.features)):
            raise ValueError("features contain non-finite values")
        if self.task not in TASKS:
            raise ValueError(f"unknown task {self.task!r}")
        targets = np.asarray(self.targets)
        if targets.shape != (n,):
            raise ValueError(f"targets must have shape ({n},), got {targets.shape}")
        if self.task == CLASSIFICATION:
            if not np.all(np.equal(np.mod(targets, 1), 0)) or np.any(targets < 0):
                raise ValueError("classification labels must be non-negative integers")
            self.targets = targets.astype(np.int64)
        else:
            self.targets = targets.astype(np.float64)
            if not np.all(np.isfinite(self.targets)):
                raise ValueError("targets contain non-finite values")
        if not self.feature_names:
            self.feature_names = [f"X{j + 1}" for j in range(p)]
        if len(self.feature_names) != p:
            raise ValueError("feature_names length does not match number of columns")

    @property
    def n(self) -> int:
        return self.features.shape[0]

    @property
    def p(self) -> int:
        return self.features.shape[1]

    @cached_property
    def features_t(self) -> np.ndarray:
        return np.ascontiguousarray(self.features.T)

    @cached_property
    def sort_order(self) -> np.ndarray:
        return np.ascontiguousarray(np.argsort(self.features_t, axis=1, kind="stable"))

    @cached_property
    def sorted_values(self) -> np.ndarray:
        return np.ascontiguousarray(np.take_along_axis(self.features_t, self.sort_order, axis=1))

    @property
    def n_classes(self) -> int:
        if self.task != CLASSIFICATION:
            return 0
        return max(int(self.targets.max(initial=0)) + 1, 2)

    def subset(self, rows) -> "Dataset":
        rows = np.asarray(rows, dtype=np.int64)
        return Dataset(self.features[rows], self.targets[rows], list(self.feature_names), self.task)


def default_min_samples_leaf(n: int) -> int:
    """Leaf-size rule floor(sqrt(n) * ln(n)^1.5 / 250), never below 1."""
    if n <= 1:
        return 1
    return max(1, math.floor(math.sqrt(n) * math.log(n) ** 1.5 / 250))


@dataclass
class ForestParams:
    k: int = 20
    min_samples_leaf: int | None = None
    mtry: int | None = None
    bootstrap_size: int | None = None
    seed: int = 0
    task: str = REGRESSION

    def resolved(self, n: int, p: int) -> "ForestParams":
        """Copy with every ``None`` replaced by its data-dependent default."""
        # default: every feature is a split candidate (bagged CART); narrower
        # draws miss interaction-only signal such as XOR-like label flips
        mtry = p if self.mtry is None else self.mtry
        return ForestParams(
            k=self.k,
            min_samples_leaf=self.min_samples_leaf or default_min_samples_leaf(n),
            mtry=max(1, min(p, mtry)),
            bootstrap_size=self.bootstrap_size or n,
            seed=self.seed,
            task=self.task,
        )

    def validate(self, n: int, p: int) -> None:
        if self.task not in TASKS:
            raise ValueError(f"unknown task {self.task!r}")
        if self.k < 1:
            raise ValueError("k must be >= 1")
        if self.min_samples_leaf is not None and self.min_samples_leaf < 1:
            raise ValueError("min_samples_leaf must be >= 1")
        if self.mtry is not None and not 1 <= self.mtry <= p:
            raise ValueError(f"mtry must be in [1, {p}]")
        if self.bootstrap_size is not None and self.bootstrap_size < 1:
            raise ValueError("bootstrap_size must be >= 1")


@dataclass(frozen=True)
class TreeNode:
    """View of one node. Internal nodes carry a split, leaves carry samples."""

    node_id: int
    split_feature: int = -1
    threshold: float = math.nan
    left: int = -1
    right: int = -1
    sample_ids: np.ndarray | None = None
    bootstrap_total: int = 0

    @property
    def is_leaf(self) -> bool:
        return self.left == _kernels.LEAF


@dataclass
class Tree:
    """Flat-array binary tree; node 0 is the root, leaves have ``left == -1``.

    ``leaf_of_sample`` maps every training row (in-bag or not) to its leaf,
    so ``sample_ids`` of a leaf is every training point inside that cell.
    """

    feature: np.ndarray
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    bootstrap_counts: np.ndarray
    leaf_of_sample: np.ndarray
    rng_seed: int
    root: int = 0

    @property
    def n_nodes(self) -> int:
        return self.feature.shape[0]

    def is_leaf(self, node: int) -> bool:
        return self.left[node] == _kernels.LEAF

    def node(self, node_id: int) -> TreeNode:
        if self.is_leaf(node_id):
            ids = np.flatnonzero(self.leaf_of_sample == node_id)
            return TreeNode(node_id, sample_ids=ids,
                            bootstrap_total=int(self.bootstrap_counts[ids].sum()))
        return TreeNode(node_id, int(self.feature[node_id]), float(self.threshold[node_id]),
                        int(self.left[node_id]), int(self.right[node_id]))

    @property
    def nodes(self) -> list[TreeNode]:
        return [self.node(i) for i in range(self.n_nodes)]

    def leaves(self) -> np.ndarray:
        return np.flatnonzero(self.left == _kernels.LEAF)

    @cached_property
    def leaf_bootstrap_total(self) -> np.ndarray:
        return np.bincount(self.leaf_of_sample, weights=self.bootstrap_counts,
                           minlength=self.n_nodes).astype(np.int64)

    @cached_property
    def inbag(self) -> np.ndarray:
        return np.flatnonzero(self.bootstrap_counts > 0)

    def apply(self, X: np.ndarray) -> np.ndarray:
        X = np.ascontiguousarray(np.atleast_2d(X), dtype=np.float64)
        return _kernels.apply_tree(self.feature, self.threshold, self.left, self.right, X)


def tree_leaf(tree: Tree, x) -> int:
    """Leaf reached by ``x``; ties ``x_f == threshold`` go left."""
    return int(tree.apply(np.asarray(x, dtype=np.float64)[None, :])[0])


@dataclass
class Forest:
    trees: list[Tree]
    params: ForestParams
    training_data: Dataset

    @property
    def k(self) -> int:
        return len(self.trees)

    @property
    def task(self) -> str:
        return self.training_data.task

    @cached_property
    def packed(self) -> dict:
        """All trees concatenated into flat arrays for the compiled kernels."""
        node_off = np.zeros(self.k + 1, dtype=np.int64)
        node_off[1:] = np.cumsum([t.n_nodes for t in self.trees])
        inbag_off = np.zeros(self.k + 1, dtype=np.int64)
        inbag_off[1:] = np.cumsum([t.inbag.shape[0] for t in self.trees])
        return {
            "feature": np.concatenate([t.feature for t in self.trees]),
            "threshold": np.concatenate([t.threshold for t in self.trees]),
            "left": np.concatenate([t.left for t in self.trees]),
            "right": np.concatenate([t.right for t in self.trees]),
            "node_off": node_off,
            "boot": np.ascontiguousarray(np.stack([t.bootstrap_counts for t in self.trees])),
            "inbag": np.concatenate([t.inbag for t in self.trees]).astype(np.int64),
            "inbag_off": inbag_off,
        }

    @cached_property
    def _leaf_values(self) -> list[np.ndarray]:
        # bootstrap-weighted mean target (or class distribution) per node
        data = self.training_data
        out = []
        for t in self.trees:
            tot = t.leaf_bootstrap_total.astype(np.float64)
            safe = np.where(tot > 0, tot, 1.0)
            if data.task == REGRESSION:
                s = np.bincount(t.leaf_of_sample, weights=t.bootstrap_counts * data.targets,
                                minlength=t.n_nodes)
                out.append(s / safe)
            else:
                C = data.n_classes
                vals = np.zeros((t.n_nodes, C))
                np.add.at(vals, (t.leaf_of_sample, data.targets), t.bootstrap_counts)
                out.append(vals / safe[:, None])
        return out


def _grow_tree(data: Dataset, params: ForestParams, seed_seq: np.random.SeedSequence) -> Tree:
    rng = np.random.default_rng(seed_seq)
    n, p = data.n, data.p
    draws = rng.integers(0, n, size=params.bootstrap_size)
    counts = np.bincount(draws, minlength=n).astype(np.int64)
    X = data.features
    y = data.targets
    is_reg = data.task == REGRESSION
    C = data.n_classes
    min_leaf = params.min_samples_leaf

    feature, threshold, left, right = [], [], [], []

    def new_node():
        feature.append(-1)
        threshold.append(np.nan)
        left.append(_kernels.LEAF)
        right.append(_kernels.LEAF)
        return len(feature) - 1

    root = new_node()
    stack = [(root, np.flatnonzero(counts))]
    while stack:
        node, idx = stack.pop()
        w = counts[idx].astype(np.float64)
        if w.sum() < 2 * min_leaf or idx.shape[0] < 2:
            continue
        cand = np.sort(rng.choice(p, size=params.mtry, replace=False)).astype(np.int64)
        if is_reg:
            f, t, gain = _kernels.best_split_regression(X, y, idx, w, cand, float(min_leaf))
        else:
            f, t, gain = _kernels.best_split_classification(X, y, idx, w, cand, float(min_leaf), C)
        if f < 0:
            continue
        go_left = X[idx, f] <= t
        lnode, rnode = new_node(), new_node()
        feature[node], threshold[node] = int(f), float(t)
        left[node], right[node] = lnode, rnode
        # right pushed first so the left subtree is numbered first
        stack.append((rnode, idx[~go_left]))
        stack.append((lnode, idx[go_left]))

    tree = Tree(
        feature=np.array(feature, dtype=np.int64),
        threshold=np.array(threshold, dtype=np.float64),
        left=np.array(left, dtype=np.int64),
        right=np.array(right, dtype=np.int64),
        bootstrap_counts=counts,
        leaf_of_sample=np.empty(0, dtype=np.int64),
        rng_seed=int(seed_seq.generate_state(1)[0]),
    )
    tree.leaf_of_sample = tree.apply(X)
    return tree


def fit_forest(data: Dataset, params: ForestParams | None = None) -> Forest:
    """Grow ``params.k`` CART trees on bootstrap draws of ``data``.

    Per-tree seeds are spawned from ``params.seed`` so the result does not
    depend on the order in which trees are built.
    """
    params = params or ForestParams(task=data.task)
    if data.n == 0:
        raise ValueError("cannot fit a forest on an empty dataset")
    if params.task != data.task:
        raise ValueError(f"params.task={params.task!r} but dataset task is {data.task!r}")
    params.validate(data.n, data.p)
    params = params.resolved(data.n, data.p)
    children = np.random.SeedSequence(params.seed).spawn(params.k)
    trees = [_grow_tree(data, params, ss) for ss in children]
    return Forest(trees=trees, params=params, training_data=data)


def forest_weights(forest: Forest, x) -> np.ndarray:
    """Adaptive-neighbour weights of the training samples for query ``x``.

    w_i = (1/k) sum_l B_l(i) 1{i in leaf_l(x)} / N_l(x).
    """
    x = np.asarray(x, dtype=np.float64)
    n = forest.training_data.n
    w = np.zeros(n)
    for t in forest.trees:
        leaf = tree_leaf(t, x)
        members = t.leaf_of_sample == leaf
        total = t.leaf_bootstrap_total[leaf]
        assert total > 0, "leaf without bootstrap mass: corrupted model"
        w[members] += t.bootstrap_counts[members] / total
    return w / forest.k


def predict_proba(forest: Forest, X) -> np.ndarray:
    if forest.task != CLASSIFICATION:
        raise ValueError("predict_proba requires a classification forest")
    X = np.atleast_2d(np.asarray(X, dtype=np.float64))
    out = np.zeros((X.shape[0], forest.training_data.n_classes))
    for t, vals in zip(forest.trees, forest._leaf_values):
        out += vals[t.apply(X)]
    return out / forest.k


def predict(forest: Forest, X):
    """Forest prediction for one row (scalar / label) or a matrix of rows.

    Regression returns the weighted mean target; classification returns the
    arg-max class, ties to the smallest label. For class probabilities use
    :func:`predict_proba`.
    """
    X = np.asarray(X, dtype=np.float64)
    single = X.ndim == 1
    X2 = np.atleast_2d(X)
    if forest.task == REGRESSION:
        out = np.zeros(X2.shape[0])
        for t, vals in zip(forest.trees, forest._leaf_values):
            out += vals[t.apply(X2)]
        out /= forest.k
    else:
        out = np.argmax(predict_proba(forest, X2), axis=1)
    return out[0] if single else out


def split_frequency(forest: Forest) -> np.ndarray:
    """Number of internal nodes splitting on each feature, over all trees."""
    p = forest.training_data.p
    counts = np.zeros(p, dtype=np.int64)
    for t in forest.trees:
        internal = t.feature[t.left != _kernels.LEAF]
        counts += np.bincount(internal, minlength=p)
    return counts
