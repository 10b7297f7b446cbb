"""Command-line interface: ``mnarec <subcommand> [options]``.

Every subcommand accepts ``--seed``, ``--out`` and ``--config``. A config file
holds flat ``key = value`` lines whose keys are option names; they replace the
built-in defaults and explicit command-line flags override them. Results go to
``--out`` and a one-line JSON summary goes to stdout. Failures print a JSON
``{"error": ..., "message": ...}`` line to stderr and exit nonzero.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import replace
from pathlib import Path
from typing import List, Optional

import numpy as np

from .core import LossKind, PropensityMatrix, RatingMatrix
from .estimators import ESTIMATORS, estimate
from .exceptions import MnarError
from .experiments import ExperimentSpec, build_ground_truth, run, run_train_real
from .factorization import DEFAULT_LAMBDAS, DEFAULT_RANKS, TrainConfig, cross_validate, fit
from .fileio import (
    IdMapping,
    ingest_triplets,
    is_internal_file,
    joint_mapping,
    load_model,
    read_config,
    read_feature_file,
    read_mapping,
    read_matrix,
    read_observations,
    save_model,
    write_mapping,
    write_matrix,
    write_csv,
    write_observations,
)
from .propensity import (
    fit_logistic,
    fit_naive_bayes,
    lr_propensity_matrix,
    nb_propensity_matrix,
    uniform_propensities,
)
from .synthdata import (
    DEFAULT_MARGINAL,
    MarginalDistribution,
    ObservationModelConfig,
    complete_and_adjust,
    observation_propensities,
    sample_observations,
    select_completion_config,
)

logger = logging.getLogger("mnarec")

FULL_SCALE = (944, 1683)


class UsageError(Exception):
    """Bad command-line usage."""


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _floats(text: str) -> tuple:
    try:
        return tuple(float(x) for x in text.replace(" ", "").split(",") if x)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None


def _ints(text: str) -> tuple:
    try:
        return tuple(int(x) for x in text.replace(" ", "").split(",") if x)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None


def _words(text: str) -> tuple:
    return tuple(x for x in text.replace(" ", "").split(",") if x)


# --------------------------------------------------------------------------- inputs

def _load_obs(path, fmt, mapping: Optional[IdMapping] = None):
    """Observation sample from an internal file or a raw triplet file."""
    if is_internal_file(path):
        return read_observations(path), mapping
    return ingest_triplets(path, fmt, mapping)


def _load_mapping(args) -> Optional[IdMapping]:
    return read_mapping(args.mapping) if getattr(args, "mapping", None) else None


def _load_props(path, obs) -> Optional[PropensityMatrix]:
    if not path:
        return None
    values = read_matrix(path)
    if values.shape != obs.shape:
        raise ValueError(f"propensity matrix is {values.shape}, observations are {obs.shape}")
    return PropensityMatrix(values)


def _train_config(args, **overrides) -> TrainConfig:
    cfg = TrainConfig(lam=args.lam, rank=args.rank, loss=args.loss, max_iterations=args.max_iterations,
                      tolerance=args.tolerance, seed=args.seed, method=args.optimizer)
    return replace(cfg, **overrides)


def _require_out(args):
    if not args.out:
        raise UsageError(f"{args.command} needs --out")
    return args.out


# --------------------------------------------------------------------------- commands

def cmd_ingest(args):
    out_dir = Path(_require_out(args))
    out_dir.mkdir(parents=True, exist_ok=True)
    mapping = joint_mapping(args.inputs, args.format)
    write_mapping(out_dir / "mapping.tsv", mapping)
    files = []
    for path in args.inputs:
        obs, _ = ingest_triplets(path, args.format, mapping)
        target = out_dir / (Path(path).stem + ".obs")
        write_observations(target, obs)
        files.append({"input": str(path), "output": str(target), "ratings": len(obs)})
    return {"n_users": mapping.shape[0], "n_items": mapping.shape[1], "files": files,
            "mapping": str(out_dir / "mapping.tsv")}


def cmd_complete(args):
    out = _require_out(args)
    n_users, n_items = FULL_SCALE if args.full_scale else (args.n_users, args.n_items)
    marginal = MarginalDistribution(args.marginal)
    if args.input:
        partial, _ = _load_obs(args.input, args.format)
        base = TrainConfig(rank=args.rank, seed=args.seed, max_iterations=args.max_iterations)
        cfg = select_completion_config(partial, args.lambdas, [args.rank], base, seed=args.seed)
        truth = complete_and_adjust(partial, marginal, cfg)
        lam = cfg.lam
    else:
        spec = ExperimentSpec(seed=args.seed, n_users=n_users, n_items=n_items, marginal=marginal.p,
                              completion_lambdas=args.lambdas, completion_rank=args.rank,
                              max_iterations=args.max_iterations)
        truth = build_ground_truth(spec)
        lam = None
    write_matrix(out, truth.values)
    hist = [float(np.mean(truth.values == r)) for r in range(1, 6)]
    return {"shape": list(truth.shape), "marginal": hist, "completion_lambda": lam, "out": out}


def cmd_propensities(args):
    out = _require_out(args)
    if args.method == "alpha":
        if not args.truth:
            raise UsageError("--method alpha needs --truth")
        truth = read_matrix(args.truth)
        props = observation_propensities(truth, ObservationModelConfig(args.alpha, args.target_fraction))
        summary = {"alpha": args.alpha, "target_fraction": args.target_fraction}
    else:
        if not args.obs:
            raise UsageError(f"--method {args.method} needs --obs")
        obs, mapping = _load_obs(args.obs, args.format, _load_mapping(args))
        if args.method == "uniform":
            props = uniform_propensities(obs)
            summary = {"reveal_rate": len(obs) / obs.n_cells}
        elif args.method == "naive-bayes":
            if not args.mcar:
                raise UsageError("--method naive-bayes needs --mcar")
            mcar, _ = _load_obs(args.mcar, args.format, mapping)
            model = fit_naive_bayes(obs, mcar.ratings, args.laplace_alpha)
            props = nb_propensity_matrix(model, obs)
            summary = {"table": dict(zip(map(str, model.scale), model.propensity_table().tolist())),
                       "reveal_rate": model.reveal_rate}
        else:
            if not args.features or mapping is None:
                raise UsageError("--method logistic needs --features and an id mapping")
            feats = read_feature_file(args.features, mapping)
            model = fit_logistic(obs.mask(), feats, args.regularization)
            props = lr_propensity_matrix(model, feats)
            summary = {"weights": model.weights.tolist()}
    write_matrix(out, props.values)
    summary.update(method=args.method, shape=list(props.values.shape), out=out)
    return summary


def cmd_sample(args):
    out = _require_out(args)
    if not (args.truth and args.propensities):
        raise UsageError("sample needs --truth and --propensities")
    truth = RatingMatrix(read_matrix(args.truth))
    props = PropensityMatrix(read_matrix(args.propensities))
    obs = sample_observations(truth, props, args.seed)
    write_observations(out, obs)
    return {"observed": len(obs), "fraction": len(obs) / obs.n_cells, "out": out}


def _predictions(args, shape):
    if bool(args.pred) == bool(args.model):
        raise UsageError("give exactly one of --pred and --model")
    values = read_matrix(args.pred) if args.pred else load_model(args.model).predict().values
    if values.shape != tuple(shape):
        raise ValueError(f"predictions are {values.shape}, observations are {tuple(shape)}")
    return values


def cmd_estimate(args):
    if not args.obs:
        raise UsageError("estimate needs --obs")
    obs, _ = _load_obs(args.obs, args.format, _load_mapping(args))
    pred = _predictions(args, obs.shape)
    props = _load_props(args.propensities, obs)
    rows = []
    for metric in args.metrics:
        kind = LossKind.parse(metric)
        for name in args.estimators:
            if name != "naive" and props is None:
                raise UsageError(f"estimator {name} needs --propensities")
            rep = estimate(name, obs, pred, kind, props)
            rows.append({"estimator": name, "metric": str(kind), "value": rep.value,
                         "observed": rep.observed_count})
    if args.out:
        write_csv(args.out, ("estimator", "metric", "value", "observed"), rows)
    return {"estimates": rows}


def _require(args, *names):
    missing = [n for n in names if not getattr(args, n)]
    if missing:
        raise UsageError(f"{args.command} needs " + ", ".join("--" + n for n in missing))


def cmd_train(args):
    out = _require_out(args)
    _require(args, "obs")
    obs, _ = _load_obs(args.obs, args.format, _load_mapping(args))
    props = _load_props(args.propensities, obs)
    result = fit(obs, props, _train_config(args))
    save_model(out, result.model)
    return {"objective": result.objective, "iterations": result.n_iter, "converged": result.converged,
            "out": out}


def cmd_cv(args):
    _require(args, "obs")
    obs, _ = _load_obs(args.obs, args.format, _load_mapping(args))
    props = _load_props(args.propensities, obs)
    res = cross_validate(obs, props, args.lambdas, args.ranks, args.folds, _train_config(args))
    if args.out:
        save_model(args.out, res.model)
    return {"best_lambda": res.best_lambda, "best_rank": res.best_rank,
            "train_scale": res.train_scale, "valid_scale": res.valid_scale,
            "scores": [{"lambda": l, "rank": d, "score": s} for (l, d), s in sorted(res.scores.items())],
            "out": args.out}


def _spec(args, kind, **extra) -> ExperimentSpec:
    n_users, n_items = FULL_SCALE if args.full_scale else (args.n_users, args.n_items)
    trials = args.trials if args.trials is not None else (30 if kind == "alpha-sweep-learn" else 50)
    return ExperimentSpec(kind=kind, trials=trials, alphas=args.alphas, seed=args.seed,
                          metrics=args.metrics, output=args.out, n_users=n_users, n_items=n_items,
                          target_fraction=args.target_fraction, marginal=args.marginal,
                          lambdas=args.lambdas, rank=args.rank, folds=args.folds,
                          max_iterations=args.max_iterations, workers=args.workers, **extra)


def _experiment(args, spec):
    truth = RatingMatrix(read_matrix(args.truth)) if args.truth else None
    report = run(spec, truth)
    return {"experiment": spec.kind, "rows": len(report.rows), "out": spec.output}


def cmd_sweep(args):
    kind = "alpha-sweep-learn" if args.learn else "alpha-sweep-eval"
    return _experiment(args, _spec(args, kind))


def cmd_table1(args):
    return _experiment(args, _spec(args, "estimator-table"))


def cmd_robustness(args):
    return _experiment(args, _spec(args, "robustness-sweep", mcar_sizes=args.mcar_sizes, learn=args.learn))


def cmd_train_real(args):
    _require(args, "train", "test")
    spec = ExperimentSpec(kind="train-real", seed=args.seed, lambdas=args.lambdas, rank=args.rank,
                          folds=args.folds, max_iterations=args.max_iterations, output=args.out)
    report = run_train_real(spec, args.train, args.test, args.format, args.mcar_fraction)
    if args.out:
        report.to_csv(args.out)
    return {"results": [{k: r[k] for k in ("estimator", "metric", "mean", "value")} for r in report.rows]}


# --------------------------------------------------------------------------- parser

def _common(p):
    p.add_argument("--seed", type=int, default=0, help="master random seed")
    p.add_argument("--out", help="output path")
    p.add_argument("--config", help="flat key=value file of option defaults")


def _data_opts(p):
    p.add_argument("--format", choices=("ml100k-tsv", "tsv", "csv"), default="ml100k-tsv",
                   help="format of raw triplet inputs")
    p.add_argument("--mapping", help="id mapping written by `ingest`, for raw inputs")


def _train_opts(p, lam=1e-3):
    p.add_argument("--lam", type=float, default=lam)
    p.add_argument("--rank", type=int, default=20)
    p.add_argument("--loss", choices=("mse", "mae"), default="mse")
    p.add_argument("--max-iterations", type=int, default=500)
    p.add_argument("--tolerance", type=float, default=1e-5)
    p.add_argument("--optimizer", choices=("lbfgs", "gd"), default="lbfgs")


def _experiment_opts(p, metrics="mae,dcg@50"):
    p.add_argument("--trials", type=int, help="default 50, or 30 for learning sweeps")
    p.add_argument("--alphas", type=_floats, default=_floats("0.25"))
    p.add_argument("--metrics", type=_words, default=_words(metrics))
    p.add_argument("--truth", help="ground-truth matrix file; built from --seed when omitted")
    p.add_argument("--n-users", type=int, default=200)
    p.add_argument("--n-items", type=int, default=300)
    p.add_argument("--full-scale", action="store_true", help=f"use {FULL_SCALE[0]}x{FULL_SCALE[1]}")
    p.add_argument("--target-fraction", type=float, default=0.05)
    p.add_argument("--marginal", type=_floats, default=DEFAULT_MARGINAL)
    p.add_argument("--lambdas", type=_floats, default=_floats("1,10,100,1000"))
    p.add_argument("--rank", type=int, default=20)
    p.add_argument("--folds", type=int, default=4)
    p.add_argument("--max-iterations", type=int, default=300)
    p.add_argument("--workers", type=int, default=1)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="mnarec", description="Propensity-scored recommender evaluation and training.")
    parser.add_argument("-v", "--verbose", action="count", default=0)
    sub = parser.add_subparsers(dest="command", parser_class=_Parser)
    sub.required = True

    p = sub.add_parser("ingest", help="convert raw rating files to observation files with a shared id mapping")
    p.add_argument("inputs", nargs="+")
    p.add_argument("--format", choices=("ml100k-tsv", "tsv", "csv"), default="ml100k-tsv")
    _common(p)
    p.set_defaults(func=cmd_ingest)

    p = sub.add_parser("complete", help="build a semi-synthetic ground-truth matrix")
    p.add_argument("--input", help="partial ratings to complete; synthetic when omitted")
    p.add_argument("--format", choices=("ml100k-tsv", "tsv", "csv"), default="ml100k-tsv")
    p.add_argument("--n-users", type=int, default=200)
    p.add_argument("--n-items", type=int, default=300)
    p.add_argument("--full-scale", action="store_true")
    p.add_argument("--marginal", type=_floats, default=DEFAULT_MARGINAL)
    p.add_argument("--lambdas", type=_floats, default=_floats("0.1,1,3,10,30"))
    p.add_argument("--rank", type=int, default=20)
    p.add_argument("--max-iterations", type=int, default=300)
    _common(p)
    p.set_defaults(func=cmd_complete)

    p = sub.add_parser("propensities", help="write a propensity matrix")
    p.add_argument("--method", choices=("alpha", "uniform", "naive-bayes", "logistic"), default="alpha")
    p.add_argument("--truth")
    p.add_argument("--alpha", type=float, default=0.25)
    p.add_argument("--target-fraction", type=float, default=0.05)
    p.add_argument("--obs")
    p.add_argument("--mcar", help="ratings of uniformly chosen cells")
    p.add_argument("--laplace-alpha", type=float, default=1.0)
    p.add_argument("--features", help="per-pair feature file for --method logistic")
    p.add_argument("--regularization", type=float, default=1.0)
    _data_opts(p)
    _common(p)
    p.set_defaults(func=cmd_propensities)

    p = sub.add_parser("sample", help="reveal cells of a truth matrix with given propensities")
    p.add_argument("--truth")
    p.add_argument("--propensities")
    _common(p)
    p.set_defaults(func=cmd_sample)

    p = sub.add_parser("estimate", help="estimate prediction quality from observed ratings")
    p.add_argument("--obs")
    p.add_argument("--pred", help="prediction matrix file")
    p.add_argument("--model", help="model file")
    p.add_argument("--propensities")
    p.add_argument("--metrics", type=_words, default=_words("mse,mae"))
    p.add_argument("--estimators", type=_words, default=ESTIMATORS)
    _data_opts(p)
    _common(p)
    p.set_defaults(func=cmd_estimate)

    p = sub.add_parser("train", help="fit propensity-weighted matrix factorization")
    p.add_argument("--obs")
    p.add_argument("--propensities", help="omit for unweighted training")
    _train_opts(p)
    _data_opts(p)
    _common(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("cv", help="cross-validate lambda and rank, then refit")
    p.add_argument("--obs")
    p.add_argument("--propensities")
    p.add_argument("--lambdas", type=_floats, default=DEFAULT_LAMBDAS)
    p.add_argument("--ranks", type=_ints, default=DEFAULT_RANKS)
    p.add_argument("--folds", type=int, default=4)
    _train_opts(p)
    _data_opts(p)
    _common(p)
    p.set_defaults(func=cmd_cv)

    p = sub.add_parser("sweep", help="estimator or learning accuracy across alpha")
    _experiment_opts(p)
    p.set_defaults(alphas=_floats("0.03125,0.0625,0.125,0.25,0.5,1"))
    p.add_argument("--learn", action="store_true", help="compare trained models instead of estimators")
    _common(p)
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("table1", help="estimator mean and spread for the five predictors")
    _experiment_opts(p)
    _common(p)
    p.set_defaults(func=cmd_table1)

    p = sub.add_parser("robustness", help="accuracy with Naive Bayes propensities from MCAR samples")
    _experiment_opts(p, metrics="mse")
    p.add_argument("--mcar-sizes", type=_ints, default=(100, 1000, 10000))
    p.add_argument("--learn", action="store_true", help="also train MF per propensity source")
    _common(p)
    p.set_defaults(func=cmd_robustness)

    p = sub.add_parser("train-real", help="MNAR train file plus MCAR test file, weighted vs unweighted MF")
    p.add_argument("--train")
    p.add_argument("--test")
    p.add_argument("--format", choices=("ml100k-tsv", "tsv", "csv"), default="ml100k-tsv")
    p.add_argument("--mcar-fraction", type=float, default=0.05)
    p.add_argument("--lambdas", type=_floats, default=_floats("0.01,0.1,1,10"))
    p.add_argument("--rank", type=int, default=5)
    p.add_argument("--folds", type=int, default=4)
    p.add_argument("--max-iterations", type=int, default=300)
    _common(p)
    p.set_defaults(func=cmd_train_real)
    return parser


def _subparser(parser, command):
    for action in parser._subparsers._group_actions:
        if isinstance(action, argparse._SubParsersAction):
            return action.choices[command]
    raise UsageError(f"unknown command {command!r}")


def _apply_config(parser, argv: List[str]):
    """Install config-file values as defaults of the chosen subcommand."""
    pre = _Parser(add_help=False)
    pre.add_argument("--config")
    known, _ = pre.parse_known_args(argv)
    if not known.config:
        return
    first = parser.parse_known_args(argv)[0]
    sub = _subparser(parser, first.command)
    actions = {a.dest: a for a in sub._actions}
    defaults = {}
    for key, value in read_config(known.config).items():
        action = actions.get(key)
        if action is None or key in ("config", "help"):
            raise UsageError(f"unknown config key {key!r} for {first.command}")
        if isinstance(action, (argparse._StoreTrueAction, argparse._StoreFalseAction)):
            lowered = value.lower()
            if lowered not in ("true", "false", "1", "0", "yes", "no"):
                raise UsageError(f"config key {key!r} needs a boolean, got {value!r}")
            defaults[key] = lowered in ("true", "1", "yes")
        elif action.type is not None:
            try:
                defaults[key] = action.type(value)
            except (argparse.ArgumentTypeError, ValueError) as err:
                raise UsageError(f"config key {key!r}: {err}") from None
        else:
            defaults[key] = value
        action.required = False
    sub.set_defaults(**defaults)


def _jsonable(obj):
    if isinstance(obj, (np.floating, np.integer)):
        return obj.item()
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    raise TypeError(f"cannot serialize {type(obj).__name__}")


def main(argv: Optional[List[str]] = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    try:
        parser = build_parser()
        _apply_config(parser, argv)
        args = parser.parse_args(argv)
        logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2),
                            format="%(levelname)s %(name)s: %(message)s")
        result = args.func(args)
    except UsageError as err:
        _fail("usage", str(err))
        return 2
    except (MnarError, ValueError, OSError) as err:
        _fail(type(err).__name__, str(err))
        return 1
    print(json.dumps({"command": args.command, **result}, default=_jsonable))
    return 0


def _fail(kind, message):
    print(json.dumps({"error": kind, "message": message}), file=sys.stderr)


if __name__ == "__main__":
    sys.exit(main())
