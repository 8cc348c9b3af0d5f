"""Forest persistence: one ``.npz`` holding all tree arrays plus a JSON header.

The training data travels with the model (weights and projected traversal
need it) together with a SHA-256 of its contents, so a dataset supplied at
load time can be checked against the one the model was fit on.
"""

from __future__ import annotations

import hashlib
import json
import warnings
from dataclasses import asdict

import numpy as np

from .forest import Dataset, Forest, ForestParams, Tree

FORMAT_VERSION = 1


class HashMismatch(ValueError):
    pass


def data_hash(data: Dataset) -> str:
    h = hashlib.sha256()
    h.update(data.task.encode())
    h.update(np.ascontiguousarray(data.features, dtype=np.float64).tobytes())
    h.update(np.ascontiguousarray(data.targets).astype(np.float64).tobytes())
    h.update("\x1f".join(data.feature_names).encode())
    return h.hexdigest()


def save_forest(forest: Forest, path, extra: dict | None = None) -> None:
    """Write ``forest`` to ``path`` (an ``.npz`` file); ``extra`` lands in the header."""
    from . import __version__

    data = forest.training_data
    header = {
        "format_version": FORMAT_VERSION,
        "library_version": __version__,
        "params": asdict(forest.params),
        "task": data.task,
        "feature_names": list(data.feature_names),
        "data_sha256": data_hash(data),
        "tree_seeds": [int(t.rng_seed) for t in forest.trees],
        "extra": extra or {},
    }
    pk = forest.packed
    arrays = {
        "header": np.frombuffer(json.dumps(header, sort_keys=True).encode(), dtype=np.uint8),
        "X": data.features,
        "y": data.targets,
        "feature": pk["feature"],
        "threshold": pk["threshold"],
        "left": pk["left"],
        "right": pk["right"],
        "node_off": pk["node_off"],
        "boot": pk["boot"],
        "leaf_of_sample": np.stack([t.leaf_of_sample for t in forest.trees]),
    }
    with open(path, "wb") as fh:
        np.savez_compressed(fh, **arrays)


def read_header(path) -> dict:
    with np.load(path, allow_pickle=False) as z:
        return json.loads(bytes(z["header"]).decode())


def load_forest(path, data: Dataset | None = None, strict: bool = True) -> Forest:
    """Read a forest written by :func:`save_forest`.

    When ``data`` is given its hash must match the stored one; a mismatch
    raises :class:`HashMismatch` if ``strict`` and otherwise warns and keeps
    the stored training data.
    """
    with np.load(path, allow_pickle=False) as z:
        header = json.loads(bytes(z["header"]).decode())
        if header.get("format_version") != FORMAT_VERSION:
            raise ValueError(f"{path}: unsupported model format {header.get('format_version')!r}")
        a = {k: z[k] for k in z.files if k != "header"}
    stored = Dataset(a["X"], a["y"], header["feature_names"], header["task"])
    if data_hash(stored) != header["data_sha256"]:
        raise HashMismatch(f"{path}: embedded training data is corrupted")
    if data is not None and data_hash(data) != header["data_sha256"]:
        msg = f"{path}: dataset does not match the one the model was trained on"
        if strict:
            raise HashMismatch(msg)
        warnings.warn(msg, stacklevel=2)
    params = ForestParams(**header["params"])
    off = a["node_off"]
    trees = []
    for l in range(off.shape[0] - 1):
        sl = slice(off[l], off[l + 1])
        trees.append(Tree(
            feature=a["feature"][sl].copy(),
            threshold=a["threshold"][sl].copy(),
            left=a["left"][sl].copy(),
            right=a["right"][sl].copy(),
            bootstrap_counts=a["boot"][l].copy(),
            leaf_of_sample=a["leaf_of_sample"][l].copy(),
            rng_seed=header["tree_seeds"][l],
        ))
    return Forest(trees=trees, params=params, training_data=stored)
