"""Sufficient rules around an instance and the global rule model built from them.

The projected SDP estimate depends on ``z_S`` only through comparisons with
forest thresholds on S, so it is constant on every cell of the grid those
thresholds form. A box made of grid cells satisfies the SDP condition
everywhere iff every cell does, and one probe point per cell decides that.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field

import numpy as np

from . import _kernels
from .explain import ExplanationQuery, find_explanations
from .forest import CLASSIFICATION, REGRESSION, Dataset, Forest, predict
from .projected import SubsetEvaluator, as_subset, intersection_cell
from .sdp import DecisionBand, decision_for, hit_vector

PROBABILITY = "probability"
LEBESGUE = "lebesgue"
GREEDY = "greedy"
EXHAUSTIVE = "exhaustive"
AUTO = "auto"


@dataclass
class Rule:
    """Axis-aligned box over ``subset`` with intervals ``(lo, hi]``."""

    subset: tuple[int, ...]
    box: dict[int, tuple[float, float]]
    output: float | int
    decision: DecisionBand | int
    sdp_at_anchor: float
    coverage: float = 0.0
    precision: float = 0.0
    n_covered: int = 0

    @property
    def size(self) -> int:
        return len(self.subset)

    @property
    def key(self) -> tuple:
        return tuple((j, self.box[j][0], self.box[j][1]) for j in self.subset)

    def contains(self, X) -> np.ndarray | bool:
        X = np.asarray(X, dtype=np.float64)
        X2 = np.atleast_2d(X)
        inside = np.ones(X2.shape[0], dtype=bool)
        for j, (lo, hi) in self.box.items():
            inside &= (X2[:, j] > lo) & (X2[:, j] <= hi)
        return bool(inside[0]) if X.ndim == 1 else inside

    def to_dict(self, feature_names=None) -> dict:
        names = feature_names or [f"X{j + 1}" for j in range(max(self.subset, default=-1) + 1)]
        dec = self.decision.to_dict() if isinstance(self.decision, DecisionBand) else self.decision
        return {
            "features": [names[j] for j in self.subset],
            "feature_ids": list(self.subset),
            "intervals": [[_jnum(self.box[j][0]), _jnum(self.box[j][1])] for j in self.subset],
            "output": self.output,
            "decision": dec,
            "sdp_at_anchor": self.sdp_at_anchor,
            "precision": self.precision,
            "coverage": self.coverage,
        }

    def render(self, feature_names=None) -> str:
        names = feature_names or [f"X{j + 1}" for j in range(max(self.subset, default=-1) + 1)]
        parts = []
        for j in self.subset:
            lo, hi = self.box[j]
            if np.isinf(lo) and np.isinf(hi):
                continue
            if np.isinf(lo):
                parts.append(f"{names[j]} <= {hi:.4g}")
            elif np.isinf(hi):
                parts.append(f"{names[j]} > {lo:.4g}")
            else:
                parts.append(f"{lo:.4g} < {names[j]} <= {hi:.4g}")
        cond = " AND ".join(parts) if parts else "TRUE"
        out = f"{self.output:.4g}" if isinstance(self.output, float) else str(self.output)
        return f"IF {cond} THEN {out}"


def _jnum(v: float):
    # JSON has no infinity; use strings so the file stays standard
    if np.isposinf(v):
        return "inf"
    if np.isneginf(v):
        return "-inf"
    return float(v)


def _unjnum(v) -> float:
    return float(v)


def rule_from_dict(d: dict) -> Rule:
    subset = tuple(d["feature_ids"])
    box = {j: (_unjnum(a), _unjnum(b)) for j, (a, b) in zip(subset, d["intervals"])}
    dec = d["decision"]
    if isinstance(dec, dict):
        dec = DecisionBand(dec["lo"], dec["hi"], dec["provenance"])
    return Rule(subset, box, d["output"], dec, d["sdp_at_anchor"], d["coverage"], d["precision"])


class _Grid:
    """Threshold grid over the subset dimensions and cached cell verdicts."""

    dense_budget = 20_000_000

    def __init__(self, forest: Forest, x, S, hit, pi, evaluator: SubsetEvaluator):
        P = forest.packed
        internal = P["left"] != -1
        self.S = S
        self.x = np.asarray(x, dtype=np.float64)
        self.edges = []
        for j in S:
            g = np.unique(P["threshold"][internal & (P["feature"] == j)])
            self.edges.append(g)
        self.m = [g.shape[0] for g in self.edges]  # cells per dim = m + 1
        self.anchor = tuple(int(np.searchsorted(g, self.x[j], side="left"))
                            for g, j in zip(self.edges, S))
        self.hit = hit
        self.pi = pi
        self.evaluator = evaluator
        X = forest.training_data.features
        self.train_cells = np.column_stack(
            [np.searchsorted(g, X[:, j], side="left") for g, j in zip(self.edges, S)]
        ) if S else np.zeros((X.shape[0], 0), dtype=np.int64)
        lo = X[:, list(S)].min(axis=0) if S else np.zeros(0)
        hi = X[:, list(S)].max(axis=0) if S else np.zeros(0)
        self.span = (lo, np.where(hi > lo, hi - lo, 1.0))
        self.probes = [np.array([self.probe(d, c) for c in range(m + 1)])
                       for d, m in enumerate(self.m)]
        self._tree_luts(forest)

    def bounds(self, d: int, a: int, b: int) -> tuple[float, float]:
        """Real interval ``(lo, hi]`` of cells ``a..b`` along dim ``d``."""
        g = self.edges[d]
        lo = -np.inf if a == 0 else float(g[a - 1])
        hi = np.inf if b == self.m[d] else float(g[b])
        return lo, hi

    def probe(self, d: int, c: int) -> float:
        g = self.edges[d]
        if self.m[d] == 0:
            return self.x[self.S[d]]
        if c == 0:
            return g[0] - 1.0
        if c == self.m[d]:
            return g[-1] + 1.0
        return 0.5 * (g[c - 1] + g[c])

    def _tree_luts(self, forest: Forest):
        # per tree and dim: grid cell -> cell of that tree's own thresholds
        P = forest.packed
        self.luts = []
        shapes = []
        for l in range(forest.k):
            sl = slice(P["node_off"][l], P["node_off"][l + 1])
            f, t, internal = P["feature"][sl], P["threshold"][sl], P["left"][sl] != -1
            own = [np.unique(t[internal & (f == j)]) for j in self.S]
            self.luts.append([np.searchsorted(g, self.probes[d], side="left")
                              for d, g in enumerate(own)])
            shapes.append([g.shape[0] + 1 for g in own])
        D = len(self.S)
        self.full_shape = np.array(shapes, dtype=np.int64).reshape(forest.k, D)
        self.doff = np.concatenate([[0], np.cumsum([m + 1 for m in self.m])]).astype(np.int64)
        self.lut = np.ascontiguousarray(
            np.stack([np.concatenate(lu) if D else np.zeros(0, np.int64) for lu in self.luts]),
            dtype=np.int64)
        # dense per-tree windows over tree cells, grown on demand and stored
        # back to back in one flat array; a grown window moves to the end
        self.wlo = np.zeros((forest.k, D), dtype=np.int64)
        self.wsh = np.zeros((forest.k, D), dtype=np.int64)
        self.toff = np.zeros(forest.k, dtype=np.int64)
        self.tstride = np.zeros((forest.k, D), dtype=np.int64)
        self.tab = np.full(1, np.nan)
        self.used = 0
        self.dense = True

    def _window(self, l: int) -> np.ndarray:
        n = int(np.prod(self.wsh[l]))
        return self.tab[self.toff[l]: self.toff[l] + n].reshape(tuple(self.wsh[l]))

    def _place(self, l: int, w: np.ndarray):
        if self.used + w.size > self.tab.shape[0]:
            live = {j: self._window(j).copy() for j in range(len(self.toff)) if j != l}
            need = sum(v.size for v in live.values()) + w.size
            self.tab = np.full(max(2 * need, 1), np.nan)
            self.used = 0
            for j, v in live.items():
                self._put(j, v)
        self._put(l, w)

    def _put(self, l: int, w: np.ndarray):
        self.toff[l] = self.used
        self.tab[self.used: self.used + w.size] = w.ravel()
        self.used += w.size
        st = 1
        for d in range(w.ndim - 1, -1, -1):
            self.tstride[l, d] = st
            st *= w.shape[d]

    def _ensure(self, lo_idx, hi_idx) -> bool:
        """Grow the per-tree windows to cover the box; False if over budget."""
        if not self.dense:
            return False
        a = self.lut[:, self.doff[:-1] + np.asarray(lo_idx, np.int64)]
        b = self.lut[:, self.doff[:-1] + np.asarray(hi_idx, np.int64)] + 1
        grow = np.any((a < self.wlo) | (b > self.wlo + self.wsh), axis=1)
        if not grow.any():
            return True
        wlo, wsh = self.wlo.copy(), self.wsh.copy()
        for l in np.flatnonzero(grow):
            if not np.prod(self.wsh[l]):
                wlo[l], wsh[l] = a[l], b[l] - a[l]
                continue
            lo_n = np.minimum(a[l], wlo[l])
            hi_n = np.maximum(b[l], wlo[l] + wsh[l])
            # geometric slack so a window is rebuilt O(log) times per dim
            slack = hi_n - lo_n
            lo_n = np.where(a[l] < wlo[l], np.maximum(lo_n - slack, 0), lo_n)
            hi_n = np.where(b[l] > wlo[l] + wsh[l],
                            np.minimum(hi_n + slack, self.full_shape[l]), hi_n)
            wlo[l], wsh[l] = lo_n, hi_n - lo_n
        if int(np.prod(wsh, axis=1, dtype=float).sum()) > self.dense_budget:
            wlo, wsh = a, b - a
            if int(np.prod(wsh, axis=1, dtype=float).sum()) > self.dense_budget:
                self.dense = False
                self.tables = [dict() for _ in self.luts]
                return False
            # restart from exact windows; cached values are dropped
            self.wlo, self.wsh = wlo, wsh
            self.tab = np.full(max(int(np.prod(wsh, axis=1).sum()), 1), np.nan)
            self.used = 0
            for l in range(wsh.shape[0]):
                self._put(l, np.full(tuple(wsh[l]), np.nan))
            return True
        for l in np.flatnonzero(grow):
            w = np.full(tuple(wsh[l]), np.nan)
            old = self._window(l)
            if old.size:
                off = self.wlo[l] - wlo[l]
                w[tuple(slice(o, o + n) for o, n in zip(off, old.shape))] = old
            self.wlo[l], self.wsh[l] = wlo[l], wsh[l]
            self._place(l, w)
        return True

    def _fill(self, lo_idx, hi_idx):
        lo = np.asarray(lo_idx, dtype=np.int64)
        hi = np.asarray(hi_idx, dtype=np.int64)
        D = lo.shape[0]
        args = (self.lut, self.doff, self.toff, self.tstride, self.wlo, self.tab, lo, hi)
        e1, e2 = np.empty(0, np.int64), np.empty((0, D), np.int64)
        n = _kernels.grid_missing(*args, True, e1, e2, e2)
        if n == 0:
            return
        ls = np.empty(n, np.int64)
        cs = np.empty((n, D), np.int64)
        gs = np.empty((n, D), np.int64)
        _kernels.grid_missing(*args, False, ls, cs, gs)
        Z = np.repeat(self.x[None, :], n, axis=0)
        for d, j in enumerate(self.S):
            Z[:, j] = self.probes[d][gs[:, d]]
        vals = self.evaluator.tree_values(ls, Z, self.S, self.hit)
        self.tab[self.toff[ls] + np.sum((cs - self.wlo[ls]) * self.tstride[ls], axis=1)] = vals

    def values(self, lo_idx, hi_idx) -> np.ndarray:
        """SDP of every grid cell in the box, as an array over cell offsets.

        A tree's term only depends on the cell of its own thresholds, so terms
        are computed once per tree cell, cached, and broadcast back.
        """
        shape = tuple(b - a + 1 for a, b in zip(lo_idx, hi_idx))
        if self._ensure(lo_idx, hi_idx):
            self._fill(lo_idx, hi_idx)
            out = np.empty(int(np.prod(shape)))
            _kernels.grid_values(self.lut, self.doff, self.toff, self.tstride, self.wlo, self.tab,
                                 np.asarray(lo_idx, np.int64), np.asarray(hi_idx, np.int64),
                                 -1.0, out)
            return out.reshape(shape)
        dims = range(len(self.S))
        axes_all = []
        need_tree, need_cells = [], []
        for l, lut in enumerate(self.luts):
            axes = []
            for d in dims:
                seg = lut[d][lo_idx[d]: hi_idx[d] + 1]
                u, first, inv = np.unique(seg, return_index=True, return_inverse=True)
                axes.append((u, first + lo_idx[d], inv.ravel()))
            axes_all.append(axes)
            table = self.tables[l]
            for combo in itertools.product(*[range(ax[0].shape[0]) for ax in axes]):
                key = tuple(int(axes[d][0][i]) for d, i in enumerate(combo))
                if key not in table:
                    table[key] = np.nan
                    need_tree.append(l)
                    need_cells.append([int(axes[d][1][i]) for d, i in enumerate(combo)])
        if need_tree:
            cells = np.asarray(need_cells, dtype=np.int64)
            Z = np.repeat(self.x[None, :], len(need_tree), axis=0)
            for d, j in enumerate(self.S):
                Z[:, j] = self.probes[d][cells[:, d]]
            vals = self.evaluator.tree_values(np.array(need_tree), Z, self.S, self.hit)
            for l, c, v in zip(need_tree, cells, vals):
                self.tables[l][tuple(int(self.luts[l][d][c[d]]) for d in dims)] = float(v)
        acc = np.zeros(shape)
        for l, axes in enumerate(axes_all):
            table = self.tables[l]
            V = np.empty(tuple(ax[0].shape[0] for ax in axes))
            for combo in itertools.product(*[range(n) for n in V.shape]):
                V[combo] = table[tuple(int(axes[d][0][i]) for d, i in enumerate(combo))]
            acc += V[np.ix_(*[ax[2] for ax in axes])]
        return acc / len(self.luts)

    def good(self, lo_idx, hi_idx) -> bool:
        """True iff every cell of the box meets the SDP threshold."""
        if self._ensure(lo_idx, hi_idx):
            self._fill(lo_idx, hi_idx)
            return bool(_kernels.grid_all_good(
                self.lut, self.doff, self.toff, self.tstride, self.wlo, self.tab,
                np.asarray(lo_idx, np.int64), np.asarray(hi_idx, np.int64), self.pi))
        return bool(np.all(self.values(lo_idx, hi_idx) >= self.pi))

    def mass(self, lo_idx, hi_idx) -> int:
        tc = self.train_cells
        inside = np.ones(tc.shape[0], dtype=bool)
        for d, (a, b) in enumerate(zip(lo_idx, hi_idx)):
            inside &= (tc[:, d] >= a) & (tc[:, d] <= b)
        return int(inside.sum())

    def lebesgue(self, lo_idx, hi_idx) -> float:
        # product of lengths after min-max scaling, clipped to the data range
        vol = 1.0
        for d, (a, b) in enumerate(zip(lo_idx, hi_idx)):
            lo, hi = self.bounds(d, a, b)
            mn, sp = self.span[0][d], self.span[1][d]
            lo = max(0.0, (lo - mn) / sp) if np.isfinite(lo) else 0.0
            hi = min(1.0, (hi - mn) / sp) if np.isfinite(hi) else 1.0
            vol *= max(hi - lo, 0.0)
        return vol

    def volume(self, lo_idx, hi_idx, mode: str) -> tuple:
        mass = self.mass(lo_idx, hi_idx)
        leb = self.lebesgue(lo_idx, hi_idx)
        return (mass, leb) if mode == PROBABILITY else (leb, mass)


def _start_box(grid: _Grid, forest: Forest, x, S, min_node_size, max_cells: int):
    """Cell ranges of the trees' intersection box if it is uniformly good,
    else the anchor cell alone."""
    cell = intersection_cell(forest, x, S, min_node_size)
    lo_idx, hi_idx = [], []
    for d, j in enumerate(S):
        lo, hi = cell.box[j]
        g = grid.edges[d]
        lo_idx.append(0 if np.isneginf(lo) else int(np.searchsorted(g, lo)) + 1)
        hi_idx.append(grid.m[d] if np.isposinf(hi) else int(np.searchsorted(g, hi)))
    n_cells = int(np.prod([b - a + 1 for a, b in zip(lo_idx, hi_idx)], dtype=float))
    if n_cells <= max_cells and grid.good(lo_idx, hi_idx):
        return lo_idx, hi_idx, True
    return list(grid.anchor), list(grid.anchor), False


def _greedy_steps(grid: _Grid, lo_idx, hi_idx, mode: str):
    """Grow one grid cell at a time, always taking the acceptable step with
    the largest resulting volume (lower dimension, then lower bound, on ties).

    A rejected step is never retried: its face only gains cells while the
    box grows, so the offending cell stays in it.
    """
    lo_idx, hi_idx = list(lo_idx), list(hi_idx)
    cur = grid.volume(lo_idx, hi_idx, mode)
    dead = set()
    while True:
        props = []
        for d in range(len(grid.S)):
            for side in (0, 1):
                if (d, side) in dead:
                    continue
                nlo, nhi = list(lo_idx), list(hi_idx)
                if side == 0:
                    if nlo[d] == 0:
                        continue
                    nlo[d] -= 1
                    new = nlo[d]
                else:
                    if nhi[d] == grid.m[d]:
                        continue
                    nhi[d] += 1
                    new = nhi[d]
                vol = grid.volume(nlo, nhi, mode)
                if vol > cur:
                    props.append((vol, len(props), d, side, new, nlo, nhi))
        props.sort(key=lambda t: (tuple(-v for v in t[0]), t[1]))
        for vol, _, d, side, new, nlo, nhi in props:
            slo, shi = list(lo_idx), list(hi_idx)
            slo[d] = shi[d] = new
            if grid.good(slo, shi):
                lo_idx, hi_idx, cur = nlo, nhi, vol
                break
            dead.add((d, side))
        else:
            return lo_idx, hi_idx, cur


def _greedy(grid: _Grid, lo_idx, hi_idx, mode: str):
    lo_idx, hi_idx, _ = _greedy_steps(grid, lo_idx, hi_idx, mode)
    return lo_idx, hi_idx


def _exhaustive(grid: _Grid, lo_idx, hi_idx, mode: str):
    """Best box (by volume) made of good cells and containing the start box."""
    ok = grid.values([0] * len(grid.m), list(grid.m)) >= grid.pi
    best = (lo_idx, hi_idx, grid.volume(lo_idx, hi_idx, mode))
    choices = [[(a, b) for a in range(lo_idx[d] + 1) for b in range(hi_idx[d], grid.m[d] + 1)]
               for d in range(len(grid.S))]
    for combo in itertools.product(*choices):
        sl = tuple(slice(a, b + 1) for a, b in combo)
        if not ok[sl].all():
            continue
        nlo = [a for a, _ in combo]
        nhi = [b for _, b in combo]
        vol = grid.volume(nlo, nhi, mode)
        if vol > best[2]:
            best = (nlo, nhi, vol)
    return best[0], best[1]


def _n_boxes(grid: _Grid, lo_idx, hi_idx) -> int:
    n = 1
    for d in range(len(grid.S)):
        n *= (lo_idx[d] + 1) * (grid.m[d] - hi_idx[d] + 1)
    return n


def _summarize(forest: Forest, inside: np.ndarray, fallback):
    y = forest.training_data.targets[inside]
    if y.shape[0] == 0:
        return fallback, 0.0
    if forest.task == CLASSIFICATION:
        out = int(np.argmax(np.bincount(y, minlength=forest.training_data.n_classes)))
        return out, float(np.mean(y == out))
    out = float(y.mean())
    return out, -float(np.mean(np.abs(y - out)))


def grow_rule(forest: Forest, x, decision, S, pi: float, volume_mode: str = PROBABILITY,
              search: str = AUTO, min_node_size=None, evaluator=None,
              max_exhaustive_boxes: int = 20_000, max_exhaustive_cells: int = 4_096,
              max_start_cells: int = 1_000_000) -> Rule:
    """Largest box around ``x_S`` on which the SDP stays at least ``pi``.

    ``search="greedy"`` grows one grid step at a time, taking the acceptable
    step with the largest volume; ``"exhaustive"`` scans every grid-aligned
    box containing the start box; ``"auto"`` runs the exhaustive scan when the
    grid is small enough and greedy otherwise.
    """
    if volume_mode not in (PROBABILITY, LEBESGUE):
        raise ValueError(f"volume_mode must be {PROBABILITY!r} or {LEBESGUE!r}")
    if search not in (GREEDY, EXHAUSTIVE, AUTO):
        raise ValueError(f"unknown search {search!r}")
    p = forest.training_data.p
    S = as_subset(S, p)
    if not S:
        raise ValueError("a rule needs a nonempty subset")
    x = np.asarray(x, dtype=np.float64)
    evaluator = evaluator or SubsetEvaluator(forest, min_node_size)
    hit = hit_vector(forest, decision)
    anchor_sdp = float(evaluator.at_points(x, S, hit)[0])
    if anchor_sdp < pi:
        raise ValueError(f"subset {S} is not sufficient at the anchor "
                         f"(SDP {anchor_sdp:.4f} < pi={pi})")
    grid = _Grid(forest, x, S, hit, pi, evaluator)
    lo_idx, hi_idx, _ = _start_box(grid, forest, x, S, evaluator.min_node_size, max_start_cells)
    small = (np.prod([m + 1 for m in grid.m], dtype=float) <= max_exhaustive_cells
             and _n_boxes(grid, lo_idx, hi_idx) <= max_exhaustive_boxes)
    if search == EXHAUSTIVE or (search == AUTO and small):
        lo_idx, hi_idx = _exhaustive(grid, lo_idx, hi_idx, volume_mode)
    else:
        lo_idx, hi_idx = _greedy(grid, lo_idx, hi_idx, volume_mode)
    box = {j: grid.bounds(d, lo_idx[d], hi_idx[d]) for d, j in enumerate(S)}
    rule = Rule(S, box, None, decision, anchor_sdp)
    inside = rule.contains(forest.training_data.features)
    fallback = int(decision) if forest.task == CLASSIFICATION else float(predict(forest, x))
    rule.output, rule.precision = _summarize(forest, inside, fallback)
    rule.n_covered = int(inside.sum())
    rule.coverage = rule.n_covered / forest.training_data.n
    return rule


@dataclass
class RuleModel:
    """Rules resolved by best precision; uncovered points get no answer."""

    rules: list[Rule]
    task: str = REGRESSION
    n_skipped: int = 0
    n_instances: int = 0
    meta: dict = field(default_factory=dict)

    def cover_matrix(self, X) -> np.ndarray:
        X = np.atleast_2d(np.asarray(X, dtype=np.float64))
        if not self.rules:
            return np.zeros((X.shape[0], 0), dtype=bool)
        return np.column_stack([r.contains(X) for r in self.rules])

    def predict_many(self, X):
        """Outputs and winning rule ids (-1 where no rule covers the row)."""
        cov = self.cover_matrix(X)
        prec = np.array([r.precision for r in self.rules])
        ids = np.full(cov.shape[0], -1, dtype=np.int64)
        if cov.shape[1]:
            # first rule among the most precise covering ones
            score = np.where(cov, prec[None, :], -np.inf)
            best = np.argmax(score, axis=1)
            ids = np.where(cov.any(axis=1), best, -1)
        outs = np.array([self.rules[i].output if i >= 0 else np.nan for i in ids], dtype=float)
        return outs, ids

    def to_dict(self, feature_names=None) -> dict:
        return {
            "task": self.task,
            "n_instances": self.n_instances,
            "n_skipped": self.n_skipped,
            "meta": self.meta,
            "rules": [r.to_dict(feature_names) for r in self.rules],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "RuleModel":
        return cls([rule_from_dict(r) for r in d["rules"]], d["task"], d["n_skipped"],
                   d["n_instances"], d.get("meta", {}))


def rule_predict(model: RuleModel, x):
    """``{"output", "rule_id"}`` of the most precise covering rule, or None."""
    outs, ids = model.predict_many(np.asarray(x, dtype=np.float64)[None, :])
    if ids[0] < 0:
        return None
    out = model.rules[ids[0]].output
    return {"output": out, "rule_id": int(ids[0])}


def build_global_sr(forest: Forest, train: Dataset | None = None, pi: float = 0.9,
                    band_policy: dict | None = None, s: int = 10, instances=None,
                    volume_mode: str = PROBABILITY, min_node_size=None,
                    progress=None) -> RuleModel:
    """Grow one rule per M-SE member of each instance and pool them.

    ``instances`` selects the training rows used as anchors (all by default).
    Rules with identical boxes are kept once. Outputs and precisions are
    measured on the forest's training data.
    """
    train = train or forest.training_data
    band_policy = band_policy or {}
    evaluator = SubsetEvaluator(forest, min_node_size)
    rows = np.arange(train.n) if instances is None else np.asarray(instances)
    rules: dict[tuple, Rule] = {}
    skipped = 0
    for r_i, i in enumerate(rows):
        x = train.features[i]
        _, decision = decision_for(forest, x, band_policy.get("alpha1", 0.05),
                                   band_policy.get("alpha2", 0.05), band_policy.get("t"))
        q = ExplanationQuery(x, decision, pi, s, min_node_size, stop_at_minimal=True)
        expl = find_explanations(forest, q, evaluator)
        if not expl.mse:
            skipped += 1
            continue
        for e in expl.mse:
            rule = grow_rule(forest, x, decision, e.features, pi, volume_mode,
                             evaluator=evaluator)
            rules.setdefault(rule.key, rule)
        if progress is not None:
            progress(r_i + 1, rows.shape[0])
    return RuleModel(list(rules.values()), forest.task, skipped, int(rows.shape[0]),
                     {"pi": pi, "s": s, "volume_mode": volume_mode, "band_policy": band_policy})
