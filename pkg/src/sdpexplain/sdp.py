"""Same Decision Probabilities estimated with the projected forest."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .forest import CLASSIFICATION, REGRESSION, Forest, forest_weights, predict
from .projected import as_subset, projected_weights, weighted_quantile

FIXED_T = "fixed_t"
ADAPTIVE_QUANTILE = "adaptive_quantile"


@dataclass(frozen=True)
class DecisionBand:
    """Closed interval ``[lo, hi]`` of responses counted as the same decision."""

    lo: float
    hi: float
    provenance: str = ADAPTIVE_QUANTILE

    def __post_init__(self):
        if not self.lo <= self.hi:
            raise ValueError(f"band lower bound {self.lo} exceeds upper bound {self.hi}")
        if self.provenance not in (FIXED_T, ADAPTIVE_QUANTILE):
            raise ValueError(f"unknown band provenance {self.provenance!r}")

    @classmethod
    def fixed(cls, y: float, t: float) -> "DecisionBand":
        """Band of squared radius ``t`` around ``y``."""
        if t < 0:
            raise ValueError("t must be nonnegative")
        r = math.sqrt(t)
        return cls(float(y) - r, float(y) + r, FIXED_T)

    def contains(self, values) -> np.ndarray:
        values = np.asarray(values, dtype=np.float64)
        return (values >= self.lo) & (values <= self.hi)

    def to_dict(self) -> dict:
        return {"lo": self.lo, "hi": self.hi, "provenance": self.provenance}


@dataclass
class SdpResult:
    value: float
    subset: tuple[int, ...]
    band: DecisionBand | int


def hit_vector(forest: Forest, decision) -> np.ndarray:
    """0/1 indicator over training targets of "same decision".

    ``decision`` is a :class:`DecisionBand` for regression and a class label
    for classification.
    """
    targets = forest.training_data.targets
    if forest.task == REGRESSION:
        if not isinstance(decision, DecisionBand):
            raise TypeError("regression decisions must be a DecisionBand")
        return decision.contains(targets).astype(np.float64)
    label = int(decision)
    if not 0 <= label < forest.training_data.n_classes:
        raise ValueError(f"unknown class label {decision!r}")
    return (targets == label).astype(np.float64)


def sdp_regression(forest: Forest, x, y, band: DecisionBand, S, min_node_size=None) -> SdpResult:
    """Weighted share of training targets inside ``band`` given ``x_S``.

    ``y`` is the decision being explained; it is carried for reporting only,
    the band already encodes it.
    """
    if forest.task != REGRESSION:
        raise ValueError("sdp_regression needs a regression forest")
    S = as_subset(S, forest.training_data.p)
    w = projected_weights(forest, x, S, min_node_size)
    return SdpResult(float(np.clip(w @ hit_vector(forest, band), 0.0, 1.0)), S, band)


def sdp_classification(forest: Forest, x, y, S, min_node_size=None) -> SdpResult:
    if forest.task != CLASSIFICATION:
        raise ValueError("sdp_classification needs a classification forest")
    S = as_subset(S, forest.training_data.p)
    hit = hit_vector(forest, y)
    w = projected_weights(forest, x, S, min_node_size)
    return SdpResult(float(np.clip(w @ hit, 0.0, 1.0)), S, int(y))


def adaptive_band(forest: Forest, x, alpha1: float = 0.05, alpha2: float = 0.05) -> DecisionBand:
    """Conditional quantile band ``[q_alpha1(x), q_{1-alpha2}(x)]``.

    With every feature conditioned on, the projected weights are the forest
    weights, so those are used directly.
    """
    if forest.task != REGRESSION:
        raise ValueError("adaptive_band needs a regression forest")
    if not (0.0 < alpha1 < 1.0 and 0.0 < alpha2 < 1.0 and alpha1 + alpha2 < 1.0):
        raise ValueError("need alpha1, alpha2 in (0, 1) with alpha1 + alpha2 < 1")
    w = forest_weights(forest, x)
    targets = forest.training_data.targets
    lo = weighted_quantile(targets, w, alpha1)
    hi = weighted_quantile(targets, w, 1.0 - alpha2)
    assert lo <= hi, "quantile crossing"
    return DecisionBand(lo, hi, ADAPTIVE_QUANTILE)


def decision_for(forest: Forest, x, alpha1: float = 0.05, alpha2: float = 0.05,
                 t: float | None = None):
    """Prediction at ``x`` and the decision it induces (band or label).

    For regression a fixed squared radius ``t`` overrides the adaptive band.
    """
    y = predict(forest, np.asarray(x, dtype=np.float64))
    if forest.task == CLASSIFICATION:
        return int(y), int(y)
    if t is not None:
        return float(y), DecisionBand.fixed(y, t)
    return float(y), adaptive_band(forest, x, alpha1, alpha2)
