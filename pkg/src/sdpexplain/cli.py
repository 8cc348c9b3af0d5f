"""Command-line entry point: ``sdpexplain <subcommand> [flags]``.

Every command prints one JSON document (or writes it to ``--out``) carrying
the run configuration and library version. Failures exit with status 1 and
``{"error": {"code", "message"}}``.
"""

from __future__ import annotations

import argparse
import datetime as _dt
import json
import os
import sys
from dataclasses import asdict, dataclass, field

import numpy as np

from . import __version__
from .data import (
    KINDS,
    LINEAR_SWITCH,
    GeneratorSpec,
    load_csv,
    read_selections,
    split,
    write_csv,
    write_truth,
)
from .evaluate import (
    cdf_validation,
    default_y_grid,
    discovery_metrics,
    mc_projected_cdf_oracle,
    p_mse,
    rule_metrics,
    stability,
)
from .explain import ASE, MSE, ExplanationQuery, explanation_report, find_explanations, select_features
from .forest import CLASSIFICATION, REGRESSION, Dataset, ForestParams, fit_forest, predict, split_frequency
from .persist import HashMismatch, load_forest, save_forest
from .projected import SubsetEvaluator
from .rules import AUTO, EXHAUSTIVE, GREEDY, LEBESGUE, PROBABILITY, RuleModel, build_global_sr, grow_rule
from .sdp import decision_for

THREADS_ENV = "SDPEXPLAIN_THREADS"


class CliError(Exception):
    def __init__(self, code: str, message: str):
        super().__init__(message)
        self.code = code
        self.message = message


@dataclass
class RunConfig:
    subcommand: str
    seed: int
    options: dict = field(default_factory=dict)

    @classmethod
    def from_args(cls, args: argparse.Namespace) -> "RunConfig":
        opts = {k: v for k, v in sorted(vars(args).items())
                if k not in ("func", "subcommand", "seed", "no_timestamp", "threads")}
        cfg = cls(args.subcommand, args.seed, opts)
        cfg.validate()
        return cfg

    def validate(self) -> None:
        o = self.options
        if "pi" in o and not 0.0 < o["pi"] < 1.0:
            raise CliError("invalid_argument", "--pi must lie in (0, 1)")
        if "s" in o and o["s"] < 1:
            raise CliError("invalid_argument", "--s must be >= 1")
        for a in ("alpha1", "alpha2"):
            if a in o and not 0.0 < o[a] < 1.0:
                raise CliError("invalid_argument", f"--{a} must lie in (0, 1)")
        if "alpha1" in o and o["alpha1"] + o["alpha2"] >= 1.0:
            raise CliError("invalid_argument", "--alpha1 + --alpha2 must be < 1")
        if o.get("t") is not None and o["t"] < 0:
            raise CliError("invalid_argument", "--t must be nonnegative")


def _emit(doc: dict, args, cfg: RunConfig) -> None:
    doc = {"version": __version__, "config": asdict(cfg), **doc}
    if not args.no_timestamp:
        doc["created"] = _dt.datetime.now(_dt.timezone.utc).isoformat(timespec="seconds")
    text = json.dumps(doc, indent=2, sort_keys=True, default=_json_default)
    if args.out:
        with open(args.out, "w") as fh:
            fh.write(text + "\n")
    else:
        sys.stdout.write(text + "\n")


def _json_default(o):
    if isinstance(o, np.integer):
        return int(o)
    if isinstance(o, np.floating):
        return float(o)
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, tuple):
        return list(o)
    raise TypeError(f"not JSON serializable: {type(o).__name__}")


def _progress(label):
    def cb(i, total):
        if i == total or i % max(1, total // 20) == 0:
            print(f"{label}: {i}/{total}", file=sys.stderr, flush=True)
    return cb


def _parse_ints(text: str | None) -> list[int] | None:
    if text is None:
        return None
    try:
        return [int(v) for v in text.replace(",", " ").split()]
    except ValueError:
        raise CliError("invalid_argument", f"expected integers, got {text!r}") from None


def _read_data(path, target, task) -> Dataset:
    if not os.path.exists(path):
        raise CliError("missing_file", f"{path}: no such file")
    try:
        return load_csv(path, target, task)
    except ValueError as e:
        raise CliError("bad_input", str(e)) from None


def _load_model(args):
    if not os.path.exists(args.model):
        raise CliError("missing_file", f"{args.model}: no such file")
    train = None
    if getattr(args, "train_data", None):
        train = _read_data(args.train_data, args.target, args.task)
    try:
        return load_forest(args.model, train, strict=not args.allow_mismatch)
    except HashMismatch as e:
        raise CliError("hash_mismatch", str(e)) from None
    except (ValueError, KeyError, OSError) as e:
        raise CliError("bad_model", f"{args.model}: {e}") from None


def _instances(args, forest):
    """Rows to work on: ``--data`` (default: the training data) at ``--rows``."""
    if args.data:
        data = _read_data(args.data, args.target, _task_flag(forest.task))
    else:
        data = forest.training_data
    if data.p != forest.training_data.p:
        raise CliError("bad_input", f"data has {data.p} features, model expects {forest.training_data.p}")
    rows = _parse_ints(args.rows)
    if rows is None:
        rows = list(range(min(data.n, args.max_instances)))
    bad = [r for r in rows if not 0 <= r < data.n]
    if bad:
        raise CliError("invalid_argument", f"rows out of range [0, {data.n}): {bad}")
    return data, rows


def _task_flag(task: str) -> str:
    return "reg" if task == REGRESSION else "clf"


def _decision(forest, x, args):
    return decision_for(forest, x, args.alpha1, args.alpha2, args.t)


# ---- subcommands -----------------------------------------------------------

def cmd_synth(args, cfg):
    params = {}
    if args.noise_std is not None:
        params["noise_std"] = args.noise_std
    spec = GeneratorSpec(args.kind, args.n, args.p, args.seed, params)
    data, truth = spec.generate()
    write_csv(data, args.csv, args.target)
    if truth is not None and args.truth:
        write_truth(truth, args.truth)
    return {"dataset": {"path": args.csv, "n": data.n, "p": data.p, "task": data.task,
                        "target": args.target},
            "truth": args.truth if truth is not None else None}


def cmd_train(args, cfg):
    data = _read_data(args.data, args.target, args.task)
    test = None
    if args.test_fraction > 0:
        data, test = split(data, args.test_fraction, args.seed)
    params = ForestParams(args.k, args.min_samples_leaf, args.mtry, args.bootstrap_size,
                          args.seed, data.task)
    try:
        forest = fit_forest(data, params)
    except ValueError as e:
        raise CliError("invalid_argument", str(e)) from None
    save_forest(forest, args.model, extra={"config": asdict(cfg)})
    report = {"model": args.model, "params": asdict(forest.params), "n_train": data.n,
              "split_frequency": split_frequency(forest).tolist(),
              "train_score": _score(forest, data)}
    if test is not None:
        report["test_score"] = _score(forest, test)
        report["n_test"] = test.n
    return report


def _score(forest, data: Dataset) -> dict:
    if data.n == 0:
        return {}
    pred = predict(forest, data.features)
    if data.task == CLASSIFICATION:
        return {"accuracy": float(np.mean(pred == data.targets))}
    ss = float(np.sum((data.targets - data.targets.mean()) ** 2))
    r2 = 1.0 - float(np.sum((data.targets - pred) ** 2)) / ss if ss > 0 else float("nan")
    return {"r2": r2, "mae": float(np.mean(np.abs(data.targets - pred)))}


def cmd_explain(args, cfg):
    forest = _load_model(args)
    data, rows = _instances(args, forest)
    ev = SubsetEvaluator(forest, args.min_node_size)
    names = forest.training_data.feature_names
    reports = []
    cb = _progress("explain")
    for c, r in enumerate(rows, 1):
        x = data.features[r]
        y, decision = _decision(forest, x, args)
        q = ExplanationQuery(x, decision, args.pi, args.s, args.min_node_size, args.stop_at_minimal)
        expl = _safe_explain(forest, q, ev)
        reports.append(explanation_report(expl, q, y, data.p, names, r, args.lxi_mode))
        cb(c, len(rows))
    return {"explanations": reports}


def _safe_explain(forest, q, ev):
    import warnings
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        return find_explanations(forest, q, ev)


def cmd_rule(args, cfg):
    forest = _load_model(args)
    data, rows = _instances(args, forest)
    ev = SubsetEvaluator(forest, args.min_node_size)
    names = forest.training_data.feature_names
    out = []
    cb = _progress("rule")
    for c, r in enumerate(rows, 1):
        x = data.features[r]
        y, decision = _decision(forest, x, args)
        forced = _parse_ints(args.subset)
        if forced is not None:
            subsets = [tuple(sorted(forced))]
        else:
            q = ExplanationQuery(x, decision, args.pi, args.s, args.min_node_size,
                                 stop_at_minimal=True)
            subsets = [e.features for e in _safe_explain(forest, q, ev).mse]
        rules = []
        for S in subsets:
            try:
                rule = grow_rule(forest, x, decision, S, args.pi, args.volume_mode, args.search,
                                 args.min_node_size, ev)
            except ValueError as e:
                rules.append({"subset": list(S), "error": str(e)})
                continue
            d = rule.to_dict(names)
            d["text"] = rule.render(names)
            rules.append(d)
        out.append({"instance_id": r, "prediction": y, "rules": rules})
        cb(c, len(rows))
    return {"rules": out}


def cmd_global_sr(args, cfg):
    forest = _load_model(args)
    train = forest.training_data
    rows = _parse_ints(args.rows)
    if rows is None:
        rng = np.random.default_rng(args.seed)
        m = min(train.n, args.max_instances)
        rows = np.sort(rng.choice(train.n, size=m, replace=False)).tolist()
    band = {"alpha1": args.alpha1, "alpha2": args.alpha2, "t": args.t}
    model = build_global_sr(forest, train, args.pi, band, args.s, rows, args.volume_mode,
                            args.min_node_size, _progress("global-sr"))
    names = train.feature_names
    doc = model.to_dict(names)
    with open(args.rules_out, "w") as fh:
        json.dump({"version": __version__, "config": asdict(cfg), "model": doc}, fh, indent=2,
                  sort_keys=True, default=_json_default)
    summary = {"rules_file": args.rules_out, "n_rules": len(model.rules),
               "n_instances": model.n_instances, "n_skipped": model.n_skipped,
               "train": rule_metrics(model, train, forest).to_dict()}
    if args.data:
        test = _read_data(args.data, args.target, _task_flag(forest.task))
        summary["test"] = rule_metrics(model, test, forest).to_dict()
    summary["text"] = [r.render(names) for r in model.rules]
    return summary


def _load_rules(path) -> RuleModel:
    if not os.path.exists(path):
        raise CliError("missing_file", f"{path}: no such file")
    try:
        with open(path) as fh:
            return RuleModel.from_dict(json.load(fh)["model"])
    except (ValueError, KeyError) as e:
        raise CliError("bad_input", f"{path}: {e}") from None


def cmd_eval(args, cfg):
    forest = _load_model(args)
    data, rows = _instances(args, forest)
    out: dict = {}
    truth = None
    if args.truth:
        truth = _read_sel(args.truth)
    if args.selections:
        if truth is None:
            raise CliError("invalid_argument", "--selections needs --truth")
        sel = _read_sel(args.selections)
        ids = [r for r in rows if r in sel and r in truth]
        out["external"] = discovery_metrics([sel[r][0] for r in ids],
                                            [truth[r] for r in ids]).to_dict()
    if truth is not None or args.p_mse:
        ev = SubsetEvaluator(forest, args.min_node_size)
        chosen = []
        cb = _progress("eval")
        for c, r in enumerate(rows, 1):
            x = data.features[r]
            _, decision = _decision(forest, x, args)
            q = ExplanationQuery(x, decision, args.pi, args.s, args.min_node_size,
                                 stop_at_minimal=True)
            chosen.append(select_features(_safe_explain(forest, q, ev)))
            cb(c, len(rows))
        if truth is not None:
            ids = [i for i, r in enumerate(rows) if r in truth]
            out["discovery"] = discovery_metrics([chosen[i] for i in ids],
                                                 [truth[rows[i]] for i in ids]).to_dict()
        if args.p_mse:
            if forest.task != REGRESSION:
                raise CliError("invalid_argument", "--p-mse needs a regression model")
            out["p_mse"] = p_mse(forest, chosen, data.features[rows], args.min_node_size)
    if args.rules:
        model = _load_rules(args.rules)
        test = data.subset(rows)
        rep = rule_metrics(model, test, forest)
        if args.stability:
            rep.stability = _rule_stability(forest, model, test, args)
        out["rules"] = rep.to_dict()
    if not out:
        raise CliError("invalid_argument", "nothing to evaluate: pass --truth, --p-mse or --rules")
    return out


def _read_sel(path):
    if not os.path.exists(path):
        raise CliError("missing_file", f"{path}: no such file")
    try:
        return read_selections(path)
    except ValueError as e:
        raise CliError("bad_input", str(e)) from None


def _rule_stability(forest, model, test, args):
    ev = SubsetEvaluator(forest, args.min_node_size)
    lo, hi = forest.training_data.features.min(0), forest.training_data.features.max(0)
    counts = []
    for i in range(min(args.stability, test.n)):
        x = test.features[i]
        y0 = predict(forest, x)

        def explainer(z):
            _, dec = _decision(forest, z, args)
            q = ExplanationQuery(z, dec, args.pi, args.s, args.min_node_size, stop_at_minimal=True)
            expl = _safe_explain(forest, q, ev)
            return frozenset(grow_rule(forest, z, dec, e.features, args.pi, args.volume_mode,
                                       args.search, args.min_node_size, ev).key
                             for e in expl.mse)

        same = (lambda z: predict(forest, z) == y0) if forest.task == CLASSIFICATION else None
        res = stability(explainer, x, args.epsilon, args.n_perturb, args.seed + i, same,
                        clip=(lo, hi))
        if res.n_distinct is not None:
            counts.append(res.n_distinct)
    if not counts:
        return None
    return [float(np.mean(counts)), float(np.std(counts))]


def cmd_oracle_check(args, cfg):
    forest = _load_model(args)
    if forest.task != REGRESSION:
        raise CliError("invalid_argument", "oracle-check needs a regression model")
    data, rows = _instances(args, forest)
    S = _parse_ints(args.subset)
    if not S:
        raise CliError("invalid_argument", "--subset is required")
    p = forest.training_data.p
    grid = default_y_grid(forest.training_data.targets, args.grid_points)

    def oracle(x_S):
        return mc_projected_cdf_oracle(args.kind, x_S, S, grid, args.n_mc, args.seed, p=p)

    try:
        res = cdf_validation(forest, oracle, data.features[rows], S, grid, args.min_node_size)
    except ValueError as e:
        raise CliError("invalid_argument", str(e)) from None
    if args.curves:
        with open(args.curves, "w") as fh:
            fh.write("instance_id,y,estimate,oracle\n")
            for a, r in enumerate(rows):
                for g, y in enumerate(grid):
                    fh.write(f"{r},{y!r},{res.estimates[a, g]!r},{res.oracle[a, g]!r}\n")
    return {**res.to_dict(), "subset": S, "pointwise_within_0.05": res.pointwise_within(0.05),
            "curves": args.curves}


# ---- parser ----------------------------------------------------------------

def _add_common(sp):
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--out", help="write the JSON report here instead of stdout")
    sp.add_argument("--no-timestamp", action="store_true", help="omit the creation time")
    sp.add_argument("--threads", type=int, default=None,
                    help=f"cap on compiled-kernel threads (default ${THREADS_ENV} or all cores)")


def _add_model(sp, instances=True):
    sp.add_argument("--model", required=True)
    sp.add_argument("--train-data", help="CSV the model was trained on, checked by hash")
    sp.add_argument("--allow-mismatch", action="store_true",
                    help="warn instead of failing when --train-data does not match")
    sp.add_argument("--target", default="y")
    sp.add_argument("--task", choices=["reg", "clf"], default="reg")
    if instances:
        sp.add_argument("--data", help="CSV of instances (default: the training data)")
        sp.add_argument("--rows", help="comma-separated row indices")
        sp.add_argument("--max-instances", type=int, default=100)


def _add_explain(sp):
    sp.add_argument("--pi", type=float, default=0.9)
    sp.add_argument("--s", type=int, default=10)
    sp.add_argument("--alpha1", type=float, default=0.05)
    sp.add_argument("--alpha2", type=float, default=0.05)
    sp.add_argument("--t", type=float, default=None, help="fixed radius around the prediction instead of quantiles")
    sp.add_argument("--min-node-size", type=int, default=None)


def _add_rule(sp):
    sp.add_argument("--volume-mode", choices=[PROBABILITY, LEBESGUE], default=PROBABILITY)
    sp.add_argument("--search", choices=[AUTO, GREEDY, EXHAUSTIVE], default=AUTO)


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="sdpexplain", description=__doc__.splitlines()[0])
    ap.add_argument("--version", action="version", version=__version__)
    sub = ap.add_subparsers(dest="subcommand", required=True)

    sp = sub.add_parser("synth", help="generate a synthetic dataset")
    _add_common(sp)
    sp.add_argument("--kind", choices=KINDS, default=LINEAR_SWITCH)
    sp.add_argument("--n", type=int, default=10_000)
    sp.add_argument("--p", type=int, default=100)
    sp.add_argument("--noise-std", type=float, default=None)
    sp.add_argument("--csv", required=True)
    sp.add_argument("--truth")
    sp.add_argument("--target", default="y")
    sp.set_defaults(func=cmd_synth)

    sp = sub.add_parser("train", help="fit and save a forest")
    _add_common(sp)
    sp.add_argument("--data", required=True)
    sp.add_argument("--target", default="y")
    sp.add_argument("--task", choices=["reg", "clf"], default="reg")
    sp.add_argument("--model", required=True)
    sp.add_argument("--k", type=int, default=20)
    sp.add_argument("--min-samples-leaf", type=int, default=None)
    sp.add_argument("--mtry", type=int, default=None)
    sp.add_argument("--bootstrap-size", type=int, default=None)
    sp.add_argument("--test-fraction", type=float, default=0.0)
    sp.set_defaults(func=cmd_train)

    sp = sub.add_parser("explain", help="sufficient explanations and LXI")
    _add_common(sp)
    _add_model(sp)
    _add_explain(sp)
    sp.add_argument("--lxi-mode", choices=[ASE, MSE], default=ASE)
    sp.add_argument("--stop-at-minimal", action="store_true")
    sp.set_defaults(func=cmd_explain)

    sp = sub.add_parser("rule", help="minimal sufficient rules around instances")
    _add_common(sp)
    _add_model(sp)
    _add_explain(sp)
    _add_rule(sp)
    sp.add_argument("--subset", help="grow on this feature subset instead of each M-SE member")
    sp.set_defaults(func=cmd_rule)

    sp = sub.add_parser("global-sr", help="pool rules into a global rule model")
    _add_common(sp)
    _add_model(sp)
    _add_explain(sp)
    _add_rule(sp)
    sp.add_argument("--rules-out", required=True)
    sp.set_defaults(func=cmd_global_sr)

    sp = sub.add_parser("eval", help="discovery, P-MSE, rule metrics and stability")
    _add_common(sp)
    _add_model(sp)
    _add_explain(sp)
    _add_rule(sp)
    sp.add_argument("--truth", help="instance_id,features CSV of true active sets")
    sp.add_argument("--selections", help="external per-instance selections to score")
    sp.add_argument("--p-mse", action="store_true")
    sp.add_argument("--rules", help="rule model JSON from global-sr")
    sp.add_argument("--stability", type=int, default=0, help="instances for the stability test")
    sp.add_argument("--epsilon", type=float, default=0.1)
    sp.add_argument("--n-perturb", type=int, default=50)
    sp.set_defaults(func=cmd_eval)

    sp = sub.add_parser("oracle-check", help="projected CDF vs Monte-Carlo oracle")
    _add_common(sp)
    _add_model(sp)
    _add_explain(sp)
    sp.add_argument("--kind", choices=KINDS, default=LINEAR_SWITCH)
    sp.add_argument("--subset", required=True)
    sp.add_argument("--n-mc", type=int, default=100_000)
    sp.add_argument("--grid-points", type=int, default=512)
    sp.add_argument("--curves", help="CSV of per-point curves")
    sp.set_defaults(func=cmd_oracle_check)
    return ap


def _set_threads(n):
    n = n or (int(os.environ[THREADS_ENV]) if os.environ.get(THREADS_ENV) else None)
    if n:
        import numba
        numba.set_num_threads(max(1, min(n, numba.config.NUMBA_NUM_THREADS)))


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = RunConfig.from_args(args)
        _set_threads(args.threads)
        doc = args.func(args, cfg)
        _emit(doc, args, cfg)
        return 0
    except CliError as e:
        err = {"code": e.code, "message": e.message}
    except (ValueError, TypeError) as e:
        err = {"code": "rejected", "message": str(e)}
    except OSError as e:
        err = {"code": "io_error", "message": str(e)}
    sys.stdout.write(json.dumps({"error": err}) + "\n")
    return 1


if __name__ == "__main__":
    sys.exit(main())
