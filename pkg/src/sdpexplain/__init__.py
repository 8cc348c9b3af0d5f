"""Sufficient explanations and rules for random forests via projected-forest
estimates of the Same Decision Probability."""

__version__ = "0.1.0"

from .forest import (  # noqa: E402
    CLASSIFICATION,
    REGRESSION,
    Dataset,
    Forest,
    ForestParams,
    fit_forest,
    forest_weights,
    predict,
    predict_proba,
    split_frequency,
    tree_leaf,
)
from .projected import (  # noqa: E402
    ProjectedCell,
    SubsetEvaluator,
    intersection_cell,
    projected_cdf,
    projected_mean,
    projected_quantile,
    projected_traverse,
    projected_weights,
)
from .sdp import DecisionBand, adaptive_band, decision_for, sdp_classification, sdp_regression  # noqa: E402
from .explain import ExplanationQuery, ExplanationSet, find_explanations, lxi, preselect  # noqa: E402
from .rules import Rule, RuleModel, build_global_sr, grow_rule, rule_predict  # noqa: E402
from .persist import load_forest, save_forest  # noqa: E402

__all__ = [
    "CLASSIFICATION", "REGRESSION", "Dataset", "Forest", "ForestParams", "fit_forest",
    "forest_weights", "predict", "predict_proba", "split_frequency", "tree_leaf",
    "ProjectedCell", "SubsetEvaluator", "intersection_cell", "projected_cdf", "projected_mean",
    "projected_quantile", "projected_traverse", "projected_weights",
    "DecisionBand", "adaptive_band", "decision_for", "sdp_classification", "sdp_regression",
    "ExplanationQuery", "ExplanationSet", "find_explanations", "lxi", "preselect",
    "Rule", "RuleModel", "build_global_sr", "grow_rule", "rule_predict",
    "load_forest", "save_forest",
]
