"""Synthetic generators, CSV ingestion and train/test splitting."""

from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np
from scipy.special import ndtri

from .forest import CLASSIFICATION, REGRESSION, Dataset

LINEAR_SWITCH = "linear_switch"
MOON_NOISE = "moon_noise"
BIKE_LIKE = "bike_like"
KINDS = (LINEAR_SWITCH, MOON_NOISE, BIKE_LIKE)

_U53 = float(2 ** 53)


@dataclass
class GeneratorSpec:
    kind: str = LINEAR_SWITCH
    n: int = 10_000
    p: int = 100
    seed: int = 0
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown generator {self.kind!r}; choose from {KINDS}")
        if self.n < 1:
            raise ValueError("n must be >= 1")
        if self.kind == LINEAR_SWITCH and self.p < 5:
            raise ValueError("linear_switch needs p >= 5")

    def generate(self):
        if self.kind == LINEAR_SWITCH:
            return gen_linear_switch(self.n, self.p, self.seed, **self.params)
        if self.kind == MOON_NOISE:
            return gen_moon_noise(self.n, self.seed, **self.params)
        return gen_bike_like(self.n, self.seed, **self.params)


def standard_normals(rng: np.random.Generator, size) -> np.ndarray:
    """N(0, 1) draws by inverse CDF of 53-bit uniforms on the open unit interval."""
    u = (rng.integers(0, 2 ** 53, size=size, dtype=np.int64).astype(np.float64) + 0.5) / _U53
    return ndtri(u)


def equicorrelated_cov(p: int, rho: float = 0.8, var: float = 5.0) -> np.ndarray:
    """``rho * J + var * I``."""
    return rho * np.ones((p, p)) + var * np.eye(p)


def gaussian_rows(rng: np.random.Generator, n: int, cov: np.ndarray) -> np.ndarray:
    L = np.linalg.cholesky(cov)
    return standard_normals(rng, (n, cov.shape[0])) @ L.T


def linear_switch_response(X: np.ndarray) -> np.ndarray:
    X = np.atleast_2d(X)
    on = X[:, 4] > 0
    return np.where(on, X[:, 2] + X[:, 3], X[:, 0] + X[:, 1])


def linear_switch_truth(X: np.ndarray) -> list[tuple[int, ...]]:
    return [(2, 3, 4) if v > 0 else (0, 1, 4) for v in np.atleast_2d(X)[:, 4]]


def gen_linear_switch(n: int, p: int = 100, seed: int = 0, rho: float = 0.8,
                      var: float = 5.0):
    """Gaussian features with a sign switch on the fifth coordinate.

    Returns the dataset and, per row, the 0-based active feature set.
    """
    if p < 5:
        raise ValueError("linear_switch needs p >= 5")
    rng = np.random.default_rng(seed)
    X = gaussian_rows(rng, n, equicorrelated_cov(p, rho, var))
    y = linear_switch_response(X)
    return Dataset(X, y), linear_switch_truth(X)


def moon_truth(X: np.ndarray, margin: float = 0.3) -> list[list[tuple[int, ...]]]:
    """Alternative sufficient sets per row of a moon+noise matrix.

    A signal coordinate alone settles the arc when it lies outside the other
    arc's range by ``margin``; the flip coordinate (column 2) is always
    needed. Rows where neither coordinate settles the arc need both.
    """
    X = np.atleast_2d(X)
    x1, x2 = X[:, 0], X[:, 1]
    # arc ranges: upper x1 in [-1, 1], x2 in [0, 1]; lower x1 in [0, 2], x2 in [-0.5, 0.5]
    x1_dec = (x1 < -margin) | (x1 > 1.0 + margin)
    x2_dec = (x2 > 0.5 + margin) | (x2 < -margin)
    out = []
    for a, b in zip(x1_dec, x2_dec):
        alts = [s for s, ok in (((0, 2), a), ((1, 2), b)) if ok]
        out.append(alts or [(0, 1, 2)])
    return out


def gen_moon_noise(n: int, seed: int = 0, noise_std: float = 0.1, n_noise: int = 100,
                   flip: bool = True, rho: float = 0.8, var: float = 5.0):
    """Two interleaving half circles plus correlated Gaussian noise columns.

    Columns are ``[x1, x2, z1, ..., z_{n_noise}]``; the label of a row is
    flipped where ``z1 > 0``.
    """
    if n < 2:
        raise ValueError("moon_noise needs n >= 2")
    rng = np.random.default_rng(seed)
    n_up = n // 2 + n % 2
    n_lo = n // 2
    t_up = np.pi * rng.random(n_up)
    t_lo = np.pi * rng.random(n_lo)
    sig = np.concatenate([
        np.column_stack([np.cos(t_up), np.sin(t_up)]),
        np.column_stack([1.0 - np.cos(t_lo), 0.5 - np.sin(t_lo)]),
    ])
    label = np.concatenate([np.zeros(n_up, np.int64), np.ones(n_lo, np.int64)])
    perm = rng.permutation(n)
    sig, label = sig[perm], label[perm]
    sig = sig + noise_std * standard_normals(rng, sig.shape)
    cols = [sig]
    if n_noise:
        Z = gaussian_rows(rng, n, equicorrelated_cov(n_noise, rho, var))
        cols.append(Z)
        if flip:
            label = np.where(Z[:, 0] > 0, 1 - label, label)
    X = np.hstack(cols)
    names = ["x1", "x2"] + [f"z{j + 1}" for j in range(n_noise)]
    return Dataset(X, label, names, CLASSIFICATION), moon_truth(X)


_HOUR_WORK = np.array([0.1, 0.05, 0.05, 0.05, 0.05, 0.2, 0.8, 2.5, 4.0, 2.0, 1.0, 1.2,
                       1.5, 1.5, 1.2, 1.5, 2.5, 4.5, 4.0, 2.5, 1.5, 1.0, 0.6, 0.3])
_HOUR_FREE = np.array([0.4, 0.3, 0.25, 0.1, 0.05, 0.05, 0.1, 0.3, 0.8, 1.5, 2.5, 3.2,
                       3.5, 3.5, 3.4, 3.3, 3.0, 2.6, 2.0, 1.5, 1.1, 0.9, 0.7, 0.5])


def bike_like_response(X: np.ndarray) -> np.ndarray:
    """Noise-free hourly rental count for bike-like features."""
    X = np.atleast_2d(X)
    hour = X[:, 0].astype(np.int64)
    work = X[:, 1] > 0.5
    temp, hum, season, year = X[:, 2], X[:, 3], X[:, 4], X[:, 5]
    base = np.where(work, _HOUR_WORK[hour], _HOUR_FREE[hour])
    tf = np.select([temp < 0.25, temp < 0.7], [0.5, 1.0], 0.8)
    hf = np.where(hum > 0.85, 0.5, 1.0)
    sf = np.where(season == 1, 0.7, 1.0)
    return 60.0 * base * tf * hf * sf * (1.0 + 0.6 * year)


def gen_bike_like(n: int, seed: int = 0, noise_std: float = 15.0):
    """Hourly bike-rental stand-in: mostly piecewise-constant count plus noise.

    Columns: hour, workingday, temp, humidity, season, year, windspeed (the
    last one does not enter the response).
    """
    rng = np.random.default_rng(seed)
    hour = rng.integers(0, 24, n)
    work = (rng.random(n) < 0.68).astype(np.float64)
    season = rng.integers(1, 5, n)
    temp = np.clip(0.15 + 0.2 * (season - 1) - 0.2 * (season == 4)
                   + 0.15 * standard_normals(rng, n), 0.0, 1.0)
    hum = np.clip(0.6 + 0.2 * standard_normals(rng, n), 0.0, 1.0)
    year = rng.integers(0, 2, n)
    wind = np.clip(0.2 + 0.1 * standard_normals(rng, n), 0.0, 1.0)
    X = np.column_stack([hour, work, temp, hum, season, year, wind]).astype(np.float64)
    y = bike_like_response(X) + noise_std * standard_normals(rng, n)
    names = ["hour", "workingday", "temp", "humidity", "season", "year", "windspeed"]
    return Dataset(X, y, names, REGRESSION), None


def load_csv(path, target: str, task: str = REGRESSION) -> Dataset:
    """Numeric CSV with a header row; ``target`` names the response column."""
    task = {"reg": REGRESSION, "clf": CLASSIFICATION}.get(task, task)
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise ValueError(f"{path}: empty file")
    header = [h.strip() for h in rows[0]]
    if target not in header:
        raise ValueError(f"{path}: no target column {target!r} (columns: {header})")
    body = rows[1:]
    vals = np.empty((len(body), len(header)))
    for r, row in enumerate(body, start=2):
        if len(row) != len(header):
            raise ValueError(f"{path}: row {r} has {len(row)} fields, expected {len(header)}")
        for c, cell in enumerate(row):
            try:
                vals[r - 2, c] = float(cell)
            except ValueError:
                raise ValueError(f"{path}: non-numeric value {cell!r} at row {r}, "
                                 f"column {header[c]!r}") from None
    t = header.index(target)
    feat_idx = [c for c in range(len(header)) if c != t]
    y = vals[:, t]
    if task == CLASSIFICATION:
        if not np.all(y == np.round(y)):
            raise ValueError(f"{path}: classification target must be integer-valued")
        y = y.astype(np.int64)
    return Dataset(vals[:, feat_idx], y, [header[c] for c in feat_idx], task)


def write_csv(data: Dataset, path, target: str = "y") -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(list(data.feature_names) + [target])
        for row, yv in zip(data.features, data.targets):
            w.writerow([repr(float(v)) for v in row] + [repr(yv.item())])


def write_truth(truth, path) -> None:
    """Sidecar ``instance_id,features``; alternatives are separated by ``|``."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["instance_id", "features"])
        for i, t in enumerate(truth):
            alts = t if t and isinstance(t[0], tuple) else [t]
            w.writerow([i, "|".join(" ".join(str(j) for j in a) for a in alts)])


def read_selections(path) -> dict[int, list[tuple[int, ...]]]:
    """Per-instance feature sets from ``instance_id,features`` CSV files.

    Features are space-separated 0-based indices; ``|`` separates
    alternatives. Used both for truth sidecars and for selections made by
    external explainers.
    """
    out = {}
    with open(path, newline="") as fh:
        rd = csv.reader(fh)
        header = next(rd, None)
        if header is None or [h.strip() for h in header[:2]] != ["instance_id", "features"]:
            raise ValueError(f"{path}: expected header 'instance_id,features'")
        for r, row in enumerate(rd, start=2):
            try:
                iid = int(row[0])
                out[iid] = [tuple(int(v) for v in alt.split()) for alt in row[1].split("|")]
            except (ValueError, IndexError):
                raise ValueError(f"{path}: malformed row {r}: {row!r}") from None
    return out


def split(data: Dataset, test_fraction: float, seed: int = 0):
    """Seeded train/test split, stratified by label for classification."""
    if not 0.0 <= test_fraction < 1.0:
        raise ValueError("test_fraction must lie in [0, 1)")
    rng = np.random.default_rng(seed)
    if data.task == CLASSIFICATION:
        test = []
        for c in np.unique(data.targets):
            idx = np.flatnonzero(data.targets == c)
            idx = idx[rng.permutation(idx.shape[0])]
            test.append(idx[: int(round(test_fraction * idx.shape[0]))])
        test_idx = np.sort(np.concatenate(test))
    else:
        perm = rng.permutation(data.n)
        test_idx = np.sort(perm[: int(round(test_fraction * data.n))])
    mask = np.zeros(data.n, dtype=bool)
    mask[test_idx] = True
    return data.subset(np.flatnonzero(~mask)), data.subset(test_idx)
