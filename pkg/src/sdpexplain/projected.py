"""Projected forest: conditional CDF of Y given only a coordinate subset X_S.

A tree is projected on S by ignoring its splits on features outside S: the
query descends both children there, and the training samples compatible with
``x_S`` are those on the query's side of every S-split met on the way. The
compatible set is therefore an axis-aligned box over S.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import _kernels
from .forest import CLASSIFICATION, Forest, Tree


def as_subset(S, p: int) -> tuple[int, ...]:
    """Normalise a feature subset to a sorted tuple of unique indices."""
    s = tuple(sorted({int(i) for i in S}))
    if s and (s[0] < 0 or s[-1] >= p):
        raise ValueError(f"subset {s} out of range for p={p}")
    return s


def subset_mask(S, p: int) -> np.ndarray:
    mask = np.zeros(p, dtype=np.bool_)
    mask[list(as_subset(S, p))] = True
    return mask


@dataclass
class ProjectedCell:
    """Compatible training samples plus the box ``(lo, hi]`` they live in.

    ``box`` maps each feature of S to its bounds (``-inf``/``inf`` when
    unconstrained). ``sample_ids`` lists every training row inside the box,
    in-bag or not; ``bootstrap_total`` counts bootstrap draws among them.
    """

    subset: tuple[int, ...]
    box: dict[int, tuple[float, float]]
    sample_ids: np.ndarray
    bootstrap_total: int
    empty: bool = field(default=False)

    def contains(self, z) -> bool:
        z = np.asarray(z, dtype=np.float64)
        return all(lo < z[j] <= hi for j, (lo, hi) in self.box.items())


def _default_min_node_size(forest: Forest, min_node_size):
    return forest.params.min_samples_leaf if min_node_size is None else int(min_node_size)


def _in_box(X: np.ndarray, box: dict[int, tuple[float, float]]) -> np.ndarray:
    inside = np.ones(X.shape[0], dtype=bool)
    for j, (lo, hi) in box.items():
        inside &= (X[:, j] > lo) & (X[:, j] <= hi)
    return inside


def projected_traverse(tree: Tree, X: np.ndarray, x, S, min_node_size: int = 1,
                       XT: np.ndarray | None = None) -> ProjectedCell:
    """Projected cell of ``x`` in one tree.

    ``X`` is the training feature matrix the tree was grown on; pass its
    contiguous transpose as ``XT`` to skip the copy on repeated calls.
    """
    if min_node_size < 1:
        raise ValueError("min_node_size must be >= 1")
    X = np.ascontiguousarray(X, dtype=np.float64)
    x = np.ascontiguousarray(x, dtype=np.float64)
    p = X.shape[1]
    S = as_subset(S, p)
    lo = np.empty(p)
    hi = np.empty(p)
    _kernels.projected_traverse(
        tree.feature, tree.threshold, tree.left, tree.right, x, subset_mask(S, p),
        np.ascontiguousarray(X.T) if XT is None else XT, tree.bootstrap_counts, tree.inbag, min_node_size,
        np.empty(X.shape[0], dtype=np.int64), np.empty(tree.n_nodes, dtype=np.int64), lo, hi)
    box = {j: (float(lo[j]), float(hi[j])) for j in S}
    ids = np.flatnonzero(_in_box(X, box))
    return ProjectedCell(S, box, ids, int(tree.bootstrap_counts[ids].sum()))


def projected_weights(forest: Forest, x, S, min_node_size=None) -> np.ndarray:
    """Eq.-5 style weights: bootstrap share of each sample in each projected cell."""
    mns = _default_min_node_size(forest, min_node_size)
    X = forest.training_data.features
    w = np.zeros(X.shape[0])
    for t in forest.trees:
        cell = projected_traverse(t, X, x, S, mns, forest.training_data.features_t)
        assert cell.bootstrap_total > 0, "projected cell without bootstrap mass"
        ids = cell.sample_ids
        w[ids] += t.bootstrap_counts[ids] / cell.bootstrap_total
    return w / forest.k


def _require_regression(forest: Forest):
    if forest.task == CLASSIFICATION:
        raise ValueError("projected CDF/quantile/mean need a regression forest; "
                         "use sdp_classification for labels")


def projected_cdf(forest: Forest, x, S, y, min_node_size=None):
    """Estimate of P(Y <= y | X_S = x_S); ``y`` may be a scalar or an array."""
    _require_regression(forest)
    w = projected_weights(forest, x, S, min_node_size)
    targets = forest.training_data.targets
    ys = np.atleast_1d(np.asarray(y, dtype=np.float64))
    order = np.argsort(targets, kind="stable")
    cum = np.concatenate([[0.0], np.cumsum(w[order])])
    pos = np.searchsorted(targets[order], ys, side="right")
    out = np.clip(cum[pos], 0.0, 1.0)
    return float(out[0]) if np.ndim(y) == 0 else out


def weighted_quantile(values: np.ndarray, weights: np.ndarray, alpha: float) -> float:
    """Smallest value v with sum(weights[values <= v]) >= alpha."""
    order = np.argsort(values, kind="stable")
    v = values[order]
    cum = np.cumsum(weights[order])
    # guard against cumulative rounding just under alpha at the top
    pos = np.searchsorted(cum, alpha - 1e-12 * cum[-1], side="left")
    return float(v[min(pos, v.shape[0] - 1)])


def projected_quantile(forest: Forest, x, S, alpha: float, min_node_size=None) -> float:
    _require_regression(forest)
    if not 0.0 < alpha < 1.0:
        raise ValueError("alpha must lie in (0, 1)")
    w = projected_weights(forest, x, S, min_node_size)
    return weighted_quantile(forest.training_data.targets, w, alpha)


def projected_mean(forest: Forest, x, S, min_node_size=None) -> float:
    _require_regression(forest)
    w = projected_weights(forest, x, S, min_node_size)
    return float(w @ forest.training_data.targets)


def intersection_cell(forest: Forest, x, S, min_node_size=None) -> ProjectedCell:
    """Intersection over trees of the projected cells of ``x``.

    The result is flagged ``empty`` when no training row lies in every
    per-tree cell; the box is still returned.
    """
    mns = _default_min_node_size(forest, min_node_size)
    X = forest.training_data.features
    S = as_subset(S, X.shape[1])
    box = {j: (-np.inf, np.inf) for j in S}
    for t in forest.trees:
        cell = projected_traverse(t, X, x, S, mns, forest.training_data.features_t)
        for j, (lo, hi) in cell.box.items():
            blo, bhi = box[j]
            box[j] = (max(blo, lo), min(bhi, hi))
    ids = np.flatnonzero(_in_box(X, box))
    boot_total = int(sum(t.bootstrap_counts[ids].sum() for t in forest.trees))
    return ProjectedCell(S, box, ids, boot_total, empty=ids.shape[0] == 0)


class SubsetEvaluator:
    """Batched projected estimates of P(hit | X_S = x_S) for one query point.

    Used by the explanation search, which needs thousands of subsets for the
    same ``x`` and the same hit vector.
    """

    def __init__(self, forest: Forest, min_node_size=None):
        self.forest = forest
        self.min_node_size = _default_min_node_size(forest, min_node_size)

    def __call__(self, x, subsets, hit) -> np.ndarray:
        P = self.forest.packed
        XT = self.forest.training_data.features_t
        p = XT.shape[0]
        masks = np.zeros((len(subsets), p), dtype=np.bool_)
        for r, S in enumerate(subsets):
            masks[r, list(S)] = True
        return _kernels.projected_sdp_batch(
            P["feature"], P["threshold"], P["left"], P["right"], P["node_off"], P["boot"],
            self.forest.training_data.sort_order, self.forest.training_data.sorted_values,
            XT, np.ascontiguousarray(x, dtype=np.float64),
            masks, np.ascontiguousarray(hit, dtype=np.float64), self.min_node_size)

    def at_points(self, Z, S, hit) -> np.ndarray:
        """Estimates for a single subset at every row of ``Z``."""
        P = self.forest.packed
        data = self.forest.training_data
        Z = np.ascontiguousarray(np.atleast_2d(Z), dtype=np.float64)
        return _kernels.projected_sdp_points(
            P["feature"], P["threshold"], P["left"], P["right"], P["node_off"], P["boot"],
            data.sort_order, data.sorted_values, data.features_t, Z,
            subset_mask(S, data.p), np.ascontiguousarray(hit, dtype=np.float64),
            self.min_node_size)

    def tree_values(self, tree_ids, Z, S, hit) -> np.ndarray:
        """Single-tree estimates for each ``(tree_ids[r], Z[r])`` pair."""
        P = self.forest.packed
        data = self.forest.training_data
        return _kernels.projected_sdp_pairs(
            P["feature"], P["threshold"], P["left"], P["right"], P["node_off"], P["boot"],
            data.sort_order, data.sorted_values, data.features_t,
            np.ascontiguousarray(tree_ids, dtype=np.int64),
            np.ascontiguousarray(np.atleast_2d(Z), dtype=np.float64),
            subset_mask(S, data.p), np.ascontiguousarray(hit, dtype=np.float64),
            self.min_node_size)
