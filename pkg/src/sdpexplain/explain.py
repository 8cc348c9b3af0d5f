"""Sufficient explanations: subset search over preselected features, and LXI."""

from __future__ import annotations

import itertools
import warnings
from dataclasses import dataclass, field

import numpy as np

from .forest import Forest, split_frequency
from .projected import SubsetEvaluator
from .sdp import DecisionBand, hit_vector

ASE = "ase"
MSE = "mse"


@dataclass
class ExplanationQuery:
    """What to explain at ``x``.

    ``decision`` is a :class:`DecisionBand` for regression and the class label
    for classification. ``stop_at_minimal`` ends the search after the first
    cardinality that yields a sufficient set: M-SE is then complete but A-SE
    only holds the minimum-size members.
    """

    x: np.ndarray
    decision: DecisionBand | int
    pi: float = 0.9
    s: int = 10
    min_node_size: int | None = None
    stop_at_minimal: bool = False

    def __post_init__(self):
        self.x = np.asarray(self.x, dtype=np.float64)
        if not 0.0 < self.pi < 1.0:
            raise ValueError("pi must lie in (0, 1)")
        if self.s < 1:
            raise ValueError("s must be >= 1")


@dataclass(frozen=True)
class Explanation:
    features: tuple[int, ...]
    sdp: float


@dataclass
class ExplanationSet:
    ase: list[Explanation]
    mse: list[Explanation]
    preselected: list[int]
    best_fallback: Explanation | None = None
    n_evaluated: int = 0
    complete: bool = field(default=True)

    @property
    def found(self) -> bool:
        return bool(self.ase)


def preselect(forest: Forest, s: int) -> list[int]:
    """The ``s`` most split-on features, ties to the lower index."""
    p = forest.training_data.p
    if s > p:
        warnings.warn(f"s={s} exceeds p={p}; using all features", stacklevel=2)
        s = p
    counts = split_frequency(forest)
    order = np.lexsort((np.arange(p), -counts))
    return sorted(int(j) for j in order[:s])


def _is_superset(S: tuple[int, ...], accepted: list[frozenset]) -> bool:
    fs = frozenset(S)
    return any(a < fs for a in accepted)


def find_explanations(forest: Forest, q: ExplanationQuery, evaluator=None) -> ExplanationSet:
    """Enumerate nonempty subsets of the preselected features by size, then
    lexicographically, keeping those with SDP >= pi that contain no
    previously kept set.

    ``evaluator`` maps ``(x, subsets, hit)`` to SDP values; the default is the
    projected-forest estimator.
    """
    if evaluator is None:
        evaluator = SubsetEvaluator(forest, q.min_node_size)
    pre = preselect(forest, q.s)
    hit = hit_vector(forest, q.decision)
    accepted: list[frozenset] = []
    ase: list[Explanation] = []
    best: Explanation | None = None
    n_eval = 0
    complete = True
    for r in range(1, len(pre) + 1):
        cands = [c for c in itertools.combinations(pre, r) if not _is_superset(c, accepted)]
        if not cands:
            continue
        vals = evaluator(q.x, cands, hit)
        n_eval += len(cands)
        for c, v in zip(cands, vals):
            v = float(v)
            if best is None or v > best.sdp:
                best = Explanation(c, v)
            if v >= q.pi:
                accepted.append(frozenset(c))
                ase.append(Explanation(c, v))
        if ase and q.stop_at_minimal:
            complete = r == len(pre)
            break
    mse = []
    if ase:
        m = min(len(e.features) for e in ase)
        mse = [e for e in ase if len(e.features) == m]
    return ExplanationSet(ase, mse, pre, None if ase else best, n_eval, complete)


def lxi(expl: ExplanationSet, p: int, mode: str = ASE) -> np.ndarray:
    """Share of the sets in the chosen collection that contain each feature."""
    if mode not in (ASE, MSE):
        raise ValueError(f"mode must be {ASE!r} or {MSE!r}")
    coll = expl.ase if mode == ASE else expl.mse
    if not coll:
        raise ValueError("no sufficient explanation; inspect best_fallback instead")
    out = np.zeros(p)
    for e in coll:
        out[list(e.features)] += 1.0
    return out / len(coll)


def select_features(expl: ExplanationSet) -> tuple[int, ...]:
    """Single feature set standing for an instance in discovery metrics.

    The M-SE member with the highest SDP (first in search order on ties), or
    the best subset seen when nothing is sufficient.
    """
    if expl.mse:
        return max(expl.mse, key=lambda e: e.sdp).features
    return expl.best_fallback.features if expl.best_fallback else ()


def explanation_report(expl: ExplanationSet, q: ExplanationQuery, prediction, p: int,
                       feature_names=None, instance_id=None, lxi_mode: str = ASE) -> dict:
    names = feature_names or [f"X{j + 1}" for j in range(p)]

    def enc(e: Explanation) -> dict:
        return {"features": list(e.features), "names": [names[j] for j in e.features],
                "sdp": e.sdp}

    band = q.decision.to_dict() if isinstance(q.decision, DecisionBand) else None
    return {
        "instance_id": instance_id,
        "prediction": prediction,
        "band": band,
        "pi": q.pi,
        "preselected": expl.preselected,
        "ase": [enc(e) for e in expl.ase],
        "mse": [enc(e) for e in expl.mse],
        "lxi": lxi(expl, p, lxi_mode).tolist() if expl.ase else None,
        "fallback": enc(expl.best_fallback) if expl.best_fallback else None,
    }
