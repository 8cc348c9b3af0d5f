"""Metrics: feature discovery, projected-predictor gap, rule quality, stability,
and a Monte-Carlo check of the projected CDF against a known Gaussian law."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .data import LINEAR_SWITCH, equicorrelated_cov, linear_switch_response, standard_normals
from .forest import CLASSIFICATION, Dataset, Forest, predict
from .projected import SubsetEvaluator, as_subset, projected_weights
from .rules import RuleModel
from .sdp import DecisionBand


@dataclass
class DiscoveryReport:
    tpr: float
    fdr: float
    n: int
    n_skipped: int = 0
    per_instance: list = field(default_factory=list)

    def to_dict(self) -> dict:
        return {"tpr": self.tpr, "fdr": self.fdr, "n": self.n, "n_skipped": self.n_skipped}


def _as_alternatives(t) -> list[frozenset]:
    t = list(t)
    if t and isinstance(t[0], (tuple, list, set, frozenset)):
        return [frozenset(int(j) for j in a) for a in t]
    return [frozenset(int(j) for j in t)]


def discovery_metrics(selected, truth) -> DiscoveryReport:
    """Mean TPR |sel & truth| / |truth| and FDR |sel - truth| / max(|sel|, 1).

    A truth entry may list alternative sets; the one giving the best
    (TPR, -FDR) is used. Instances with an empty truth set are skipped.
    """
    if len(selected) != len(truth):
        raise ValueError("selected and truth must be aligned per instance")
    tprs, fdrs, rows = [], [], []
    skipped = 0
    for sel, tr in zip(selected, truth):
        sel = frozenset(int(j) for j in sel)
        alts = [a for a in _as_alternatives(tr) if a]
        if not alts:
            skipped += 1
            continue
        scores = [(len(sel & a) / len(a), len(sel - a) / max(len(sel), 1)) for a in alts]
        tpr, fdr = max(scores, key=lambda s: (s[0], -s[1]))
        tprs.append(tpr)
        fdrs.append(fdr)
        rows.append({"selected": sorted(sel), "tpr": tpr, "fdr": fdr})
    if not tprs:
        return DiscoveryReport(float("nan"), float("nan"), 0, skipped, rows)
    return DiscoveryReport(float(np.mean(tprs)), float(np.mean(fdrs)), len(tprs), skipped, rows)


def p_mse(forest: Forest, subsets, Z, min_node_size=None) -> float:
    """Mean of (forest prediction - projected mean on S_i)^2 over probe rows.

    ``subsets[i]`` is the explanation attached to probe ``Z[i]``.
    """
    Z = np.atleast_2d(np.asarray(Z, dtype=np.float64))
    if len(subsets) != Z.shape[0]:
        raise ValueError("one subset per probe row is required")
    ev = SubsetEvaluator(forest, min_node_size)
    targets = forest.training_data.targets.astype(np.float64)
    everything = tuple(range(Z.shape[1]))
    # the full-subset projection is the forest prediction; same arithmetic path for both
    full = np.array([ev(z, [everything], targets)[0] for z in Z])
    proj = np.array([ev(z, [as_subset(S, Z.shape[1])], targets)[0] for z, S in zip(Z, subsets)])
    return float(np.mean((full - proj) ** 2))


@dataclass
class RuleReport:
    correctness: float
    coverage: float
    sparsity: tuple[float, float, float]
    n_test: int
    stability: tuple[float, float] | None = None

    def to_dict(self) -> dict:
        return {"correctness": self.correctness, "coverage": self.coverage,
                "sparsity": {"mean": self.sparsity[0], "std": self.sparsity[1],
                             "max": self.sparsity[2]},
                "n_test": self.n_test, "stability": self.stability}


def sparsity(sizes) -> tuple[float, float, float]:
    sizes = np.asarray(sizes, dtype=float)
    if sizes.size == 0:
        return (0.0, 0.0, 0.0)
    return float(sizes.mean()), float(sizes.std()), float(sizes.max())


def rule_metrics(model: RuleModel, test: Dataset, forest: Forest | None = None) -> RuleReport:
    """Coverage of ``test`` and correctness of the answering rule.

    A covered point is correct when its output agrees with the decision of
    the rule's anchor: same label, or inside the anchor's band. The output
    is the forest's prediction when ``forest`` is given, the observed target
    otherwise.
    """
    _, ids = model.predict_many(test.features)
    covered = ids >= 0
    outcome = predict(forest, test.features) if forest is not None else test.targets
    hits = []
    for i in np.flatnonzero(covered):
        dec = model.rules[ids[i]].decision
        if isinstance(dec, DecisionBand):
            hits.append(bool(dec.contains(outcome[i])))
        else:
            hits.append(int(outcome[i]) == int(dec))
    corr = float(np.mean(hits)) if hits else float("nan")
    cov = float(covered.mean()) if test.n else float("nan")
    return RuleReport(corr, cov, sparsity([r.size for r in model.rules]), test.n)


@dataclass
class StabilityResult:
    n_distinct: int | None
    n_near_distinct: int | None
    n_runs: int
    n_rejected: int
    unstable_prediction: bool = False


def _iou(a: tuple[float, float], b: tuple[float, float]) -> float:
    inter = min(a[1], b[1]) - max(a[0], b[0])
    union = max(a[1], b[1]) - min(a[0], b[0])
    if union <= 0:
        return 1.0
    return max(inter, 0.0) / union


def near_distinct(outputs, lo: np.ndarray, hi: np.ndarray, threshold: float = 0.95) -> int:
    """Count of rule sets after merging near-equal ones.

    Two outputs match when they hold the same subsets and each interval,
    clipped to ``[lo, hi]`` per feature, has IoU >= ``threshold``.
    """
    reps: list = []
    for out in outputs:
        for rep in reps:
            if _near(out, rep, lo, hi, threshold):
                break
        else:
            reps.append(out)
    return len(reps)


def _near(a, b, lo, hi, threshold) -> bool:
    a, b = sorted(a), sorted(b)
    if len(a) != len(b):
        return False
    for ra, rb in zip(a, b):
        if [j for j, *_ in ra] != [j for j, *_ in rb]:
            return False
        for (j, la, ha), (_, lb, hb) in zip(ra, rb):
            ia = (max(la, lo[j]), min(ha, hi[j]))
            ib = (max(lb, lo[j]), min(hb, hi[j]))
            if _iou(ia, ib) < threshold:
                return False
    return True


def stability(explainer, x, epsilon: float, n_perturb: int = 50, seed: int = 0,
              same_prediction=None, max_draws: int | None = None,
              clip: tuple[np.ndarray, np.ndarray] | None = None) -> StabilityResult:
    """Distinct explainer outputs over ``n_perturb`` noisy copies of ``x``.

    Noise is N(0, epsilon * I). ``explainer(z)`` must return a hashable
    description of the rules at ``z`` (e.g. a frozenset of rule keys).
    Draws for which ``same_prediction(z)`` is false are redrawn, at most
    ``max_draws`` in total; exceeding that marks the instance unstable.
    """
    x = np.asarray(x, dtype=np.float64)
    rng = np.random.default_rng(seed)
    max_draws = max_draws or 20 * n_perturb
    outs = []
    draws = rejected = 0
    std = np.sqrt(epsilon)
    while len(outs) < n_perturb:
        if draws >= max_draws:
            return StabilityResult(None, None, len(outs), rejected, True)
        z = x + std * standard_normals(rng, x.shape[0]) if epsilon > 0 else x
        draws += 1
        if same_prediction is not None and not same_prediction(z):
            rejected += 1
            continue
        outs.append(explainer(z))
    n_near = None
    if clip is not None:
        n_near = near_distinct(outs, clip[0], clip[1])
    return StabilityResult(len(set(outs)), n_near, len(outs), rejected)


def conditional_gaussian(mean: np.ndarray, cov: np.ndarray, S, x_S):
    """Mean and covariance of the complement of S given ``X_S = x_S``."""
    p = mean.shape[0]
    S = list(S)
    Sb = [j for j in range(p) if j not in S]
    if not S:
        return mean[Sb].copy(), cov[np.ix_(Sb, Sb)].copy()
    A = cov[np.ix_(Sb, S)]
    B = cov[np.ix_(S, S)]
    K = np.linalg.solve(B, A.T).T
    mu = mean[Sb] + K @ (np.asarray(x_S, dtype=np.float64) - mean[S])
    c = cov[np.ix_(Sb, Sb)] - K @ A.T
    return mu, 0.5 * (c + c.T)


def mc_conditional_sample(kind: str, x_S, S, n_mc: int, seed: int = 0, p: int = 100,
                          rho: float = 0.8, var: float = 5.0) -> np.ndarray:
    """Responses drawn from the generator law given ``X_S = x_S``."""
    if kind != LINEAR_SWITCH:
        raise ValueError(f"no closed-form law for generator {kind!r}")
    S = list(as_subset(S, p))
    x_S = np.asarray(x_S, dtype=np.float64)
    # the response reads only the first five columns
    used = sorted(set(range(5)) | set(S))
    cov = equicorrelated_cov(p, rho, var)[np.ix_(used, used)]
    loc = [used.index(j) for j in S]
    mu, c = conditional_gaussian(np.zeros(len(used)), cov, loc, x_S)
    rest = [j for j in used if j not in S]
    rng = np.random.default_rng(seed)
    X = np.zeros((n_mc, 5))
    for a, j in enumerate(S):
        if j < 5:
            X[:, j] = x_S[a]
    if rest:
        L = np.linalg.cholesky(c + 1e-12 * np.eye(len(rest)))
        draw = mu + standard_normals(rng, (n_mc, len(rest))) @ L.T
        for a, j in enumerate(rest):
            if j < 5:
                X[:, j] = draw[:, a]
    return linear_switch_response(X)


def mc_projected_cdf_oracle(kind: str, x_S, S, y_grid, n_mc: int = 100_000, seed: int = 0,
                            **law) -> np.ndarray:
    """Empirical CDF of the conditional response on ``y_grid``."""
    y = np.sort(mc_conditional_sample(kind, x_S, S, n_mc, seed, **law))
    return np.searchsorted(y, np.asarray(y_grid, dtype=np.float64), side="right") / y.shape[0]


@dataclass
class CdfValidation:
    mks: float
    mad: float
    y_grid: np.ndarray
    estimates: np.ndarray
    oracle: np.ndarray

    @property
    def sup_per_instance(self) -> np.ndarray:
        return np.abs(self.estimates - self.oracle).max(axis=1)

    def pointwise_within(self, tol: float) -> float:
        """Share of (instance, grid point) pairs with |gap| <= tol."""
        return float(np.mean(np.abs(self.estimates - self.oracle) <= tol))

    def to_dict(self) -> dict:
        return {"mks": self.mks, "mad": self.mad, "n_instances": int(self.estimates.shape[0]),
                "grid_points": int(self.y_grid.shape[0])}


def default_y_grid(targets: np.ndarray, n: int = 512, pad: float = 0.05) -> np.ndarray:
    lo, hi = float(np.min(targets)), float(np.max(targets))
    span = hi - lo if hi > lo else 1.0
    return np.linspace(lo - pad * span, hi + pad * span, n)


def cdf_validation(forest: Forest, oracle, X, S, y_grid=None, min_node_size=None) -> CdfValidation:
    """Compare the projected CDF with ``oracle(x_S) -> CDF on y_grid``.

    MKS is the mean over instances of the sup gap on the grid; MAD the mean
    trapezoid integral of the absolute gap over the grid.
    """
    if forest.task == CLASSIFICATION:
        raise ValueError("CDF validation needs a regression forest")
    X = np.atleast_2d(np.asarray(X, dtype=np.float64))
    S = as_subset(S, X.shape[1])
    targets = forest.training_data.targets
    y_grid = default_y_grid(targets) if y_grid is None else np.asarray(y_grid, dtype=np.float64)
    order = np.argsort(targets, kind="stable")
    pos = np.searchsorted(targets[order], y_grid, side="right")
    est, ora = [], []
    for x in X:
        w = projected_weights(forest, x, S, min_node_size)
        cum = np.concatenate([[0.0], np.cumsum(w[order])])
        est.append(np.clip(cum[pos], 0.0, 1.0))
        ora.append(np.asarray(oracle(x[list(S)]), dtype=np.float64))
    est, ora = np.array(est), np.array(ora)
    gap = np.abs(est - ora)
    mad = np.trapezoid(gap, y_grid, axis=1) if hasattr(np, "trapezoid") else np.trapz(gap, y_grid, axis=1)
    return CdfValidation(float(gap.max(axis=1).mean()), float(mad.mean()), y_grid, est, ora)
