"""Semi-synthetic experiment runners and their CSV reports.

Every run is reproducible from ``(spec, seed)``: each trial draws its random
streams from a seed derived from the master seed, a stream tag and the trial
index, so trials can run in any order or in parallel.
"""
from __future__ import annotations

import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from functools import partial
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from .core import MSE, LossKind, RatingMatrix, loss_matrix, true_risk
from .estimators import ESTIMATORS, estimates_from_losses, naive_estimate
from .factorization import TrainConfig, cross_validate
from .fileio import ingest_triplets, joint_mapping, write_csv
from .propensity import (
    fit_naive_bayes,
    nb_propensity_for_ratings,
    nb_propensity_matrix,
    uniform_propensities,
)
from .synthdata import (
    DEFAULT_MARGINAL,
    PREDICTORS,
    MarginalDistribution,
    ObservationModelConfig,
    complete_and_adjust,
    exact_naive_bayes,
    make_predictor,
    observation_propensities,
    sample_mcar_ratings,
    sample_observations,
    select_completion_config,
    synthetic_partial_ratings,
)

logger = logging.getLogger(__name__)

KINDS = ("estimator-table", "alpha-sweep-eval", "alpha-sweep-learn", "robustness-sweep", "train-real")
REPORT_COLUMNS = ("experiment", "setting", "value", "predictor", "estimator", "metric",
                  "true_value", "mean", "std", "bias", "rmse", "trials")

_STREAMS = {"partial": 1, "completion": 2, "predictor": 3, "obs": 4, "mcar": 5, "train": 6}


def derive_seed(seed: int, stream: str, *keys: int) -> int:
    """Independent 32-bit seed for one random stream of one trial."""
    ss = np.random.SeedSequence([int(seed), _STREAMS[stream], *(int(k) for k in keys)])
    return int(ss.generate_state(1)[0])


@dataclass(frozen=True)
class ExperimentSpec:
    """Configuration of one experiment run.

    ``lambdas`` and ``rank`` drive the learning experiments; completion
    settings control how the ground truth is built.
    """

    kind: str = "estimator-table"
    trials: int = 50
    alphas: Tuple[float, ...] = (0.25,)
    seed: int = 0
    metrics: Tuple[str, ...] = ("mae", "dcg@50")
    output: Optional[str] = None
    n_users: int = 200
    n_items: int = 300
    target_fraction: float = 0.05
    marginal: Tuple[float, ...] = DEFAULT_MARGINAL
    predictors: Tuple[str, ...] = PREDICTORS
    mcar_sizes: Tuple[int, ...] = (100, 1000, 10000)
    include_exact: bool = True
    laplace_alpha: float = 1.0
    lambdas: Tuple[float, ...] = (1.0, 10.0, 100.0, 1000.0)
    rank: int = 20
    folds: int = 4
    max_iterations: int = 300
    learn: bool = False
    partial_density: float = 0.06
    completion_lambdas: Tuple[float, ...] = (0.1, 1.0, 3.0, 10.0, 30.0)
    completion_rank: int = 20
    workers: int = 1

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown experiment kind {self.kind!r}")
        if self.trials < 1:
            raise ValueError("trials must be >= 1")
        if not self.alphas or any(not 0 < a <= 1 for a in self.alphas):
            raise ValueError("alphas must lie in (0, 1]")
        for m in self.metrics:
            LossKind.parse(m)

    @property
    def loss_kinds(self) -> List[LossKind]:
        return [LossKind.parse(m) for m in self.metrics]


@dataclass
class SweepReport:
    """Rows of a report plus per-trial raw values keyed by row identity."""

    experiment: str
    rows: List[dict] = field(default_factory=list)
    raw: Dict[tuple, List[float]] = field(default_factory=dict)
    truth: Optional[RatingMatrix] = None

    def add(self, **row):
        for key in REPORT_COLUMNS:
            row.setdefault(key, None)
        row["experiment"] = self.experiment
        self.rows.append(row)

    def select(self, **filters) -> List[dict]:
        return [r for r in self.rows if all(r.get(k) == v for k, v in filters.items())]

    def to_csv(self, path) -> None:
        write_csv(path, REPORT_COLUMNS, self.rows)


def build_ground_truth(spec: ExperimentSpec) -> RatingMatrix:
    """Complete a synthetic partial rating set and adjust it to ``spec.marginal``.

    The completion rank is fixed and lambda is chosen on a 90/10 split by 0/1
    accuracy.
    """
    partial = synthetic_partial_ratings(spec.n_users, spec.n_items, density=spec.partial_density,
                                        seed=derive_seed(spec.seed, "partial"))
    base = TrainConfig(rank=spec.completion_rank, seed=derive_seed(spec.seed, "completion"),
                       max_iterations=spec.max_iterations)
    cfg = select_completion_config(partial, spec.completion_lambdas, [spec.completion_rank], base,
                                   seed=derive_seed(spec.seed, "completion", 1))
    logger.info("ground truth: %d partial ratings, completion lam=%g rank=%d", len(partial), cfg.lam, cfg.rank)
    return complete_and_adjust(partial, MarginalDistribution(spec.marginal), cfg)


def _summary(values, true_value):
    values = np.asarray(values, dtype=np.float64)
    n = values.size
    std = float(values.std(ddof=1)) if n > 1 else 0.0
    out = {"mean": float(values.mean()), "std": std, "trials": n}
    if true_value is not None:
        err = values - true_value
        out.update(true_value=float(true_value), bias=float(err.mean()),
                   rmse=float(math.sqrt(np.mean(err**2))))
    return out


def _predictors(spec, truth):
    return {name: make_predictor(name, truth, derive_seed(spec.seed, "predictor", k))
            for k, name in enumerate(spec.predictors)}


def _loss_tables(spec, truth, preds):
    """Full loss matrices per (predictor, metric); the harness knows the truth."""
    return {(p, str(k)): loss_matrix(truth, preds[p], k) for p in preds for k in spec.loss_kinds}


def run_estimator_table(spec: ExperimentSpec, truth: Optional[RatingMatrix] = None) -> SweepReport:
    """Mean and spread of Naive/IPS/SNIPS over sampled observation patterns."""
    truth = truth if truth is not None else build_ground_truth(spec)
    alpha = spec.alphas[0]
    props = observation_propensities(truth, ObservationModelConfig(alpha, spec.target_fraction))
    preds = _predictors(spec, truth)
    losses = _loss_tables(spec, truth, preds)
    n_cells = truth.values.size
    raw: Dict[tuple, List[float]] = {}
    for t in range(spec.trials):
        obs = sample_observations(truth, props, derive_seed(spec.seed, "obs", t))
        p_obs = props.at(obs)
        for (pred, metric), L in losses.items():
            ests = estimates_from_losses(L[obs.users, obs.items], p_obs, n_cells)
            for est, value in ests.items():
                raw.setdefault((pred, metric, est), []).append(value)
    report = SweepReport("estimator-table", raw=raw, truth=truth)
    for (pred, metric), L in losses.items():
        true_value = float(L.mean())
        report.add(setting="alpha", value=alpha, predictor=pred, estimator="true", metric=metric,
                   true_value=true_value, mean=true_value, std=0.0, bias=0.0, rmse=0.0, trials=spec.trials)
        for est in ESTIMATORS:
            report.add(setting="alpha", value=alpha, predictor=pred, estimator=est, metric=metric,
                       **_summary(raw[(pred, metric, est)], true_value))
    return report


def _eval_at_alpha(spec, truth, preds, losses, alpha):
    props = observation_propensities(truth, ObservationModelConfig(alpha, spec.target_fraction))
    n_cells = truth.values.size
    raw: Dict[tuple, List[float]] = {}
    for t in range(spec.trials):
        obs = sample_observations(truth, props, derive_seed(spec.seed, "obs", t, int(alpha * 1e6)))
        p_obs = props.at(obs)
        for (pred, metric), L in losses.items():
            for est, value in estimates_from_losses(L[obs.users, obs.items], p_obs, n_cells).items():
                raw.setdefault((pred, metric, est), []).append(value)
    return raw


def _add_aggregate_rows(report, setting, value, losses, raw, estimators, predictors):
    """Per-predictor rows plus an ``ALL`` row pooling errors across predictors."""
    metrics = sorted({m for _, m in losses})
    for metric in metrics:
        for est in estimators:
            errors = []
            for pred in predictors:
                true_value = float(losses[(pred, metric)].mean())
                vals = raw[(pred, metric, est)]
                report.add(setting=setting, value=value, predictor=pred, estimator=est, metric=metric,
                           **_summary(vals, true_value))
                errors.extend(np.asarray(vals) - true_value)
            errors = np.asarray(errors)
            report.add(setting=setting, value=value, predictor="ALL", estimator=est, metric=metric,
                       bias=float(errors.mean()), rmse=float(math.sqrt(np.mean(errors**2))),
                       std=float(errors.std(ddof=1)) if errors.size > 1 else 0.0,
                       trials=len(next(iter(raw.values()))))


def run_alpha_sweep(spec: ExperimentSpec, truth: Optional[RatingMatrix] = None) -> SweepReport:
    """Estimator accuracy (``alpha-sweep-eval``) or learned-model error
    (``alpha-sweep-learn``) as selection bias varies with alpha."""
    truth = truth if truth is not None else build_ground_truth(spec)
    if spec.kind == "alpha-sweep-learn":
        return _learning_sweep(spec, truth)
    preds = _predictors(spec, truth)
    losses = _loss_tables(spec, truth, preds)
    report = SweepReport("alpha-sweep-eval", truth=truth)
    for alpha in spec.alphas:
        raw = _eval_at_alpha(spec, truth, preds, losses, alpha)
        report.raw.update({(alpha,) + k: v for k, v in raw.items()})
        _add_aggregate_rows(report, "alpha", alpha, losses, raw, ESTIMATORS, list(preds))
    return report


def _learning_trial(args):
    spec, truth_values, alpha, t, sources = args
    truth = RatingMatrix(truth_values)
    props = observation_propensities(truth_values, ObservationModelConfig(alpha, spec.target_fraction))
    obs = sample_observations(truth, props, derive_seed(spec.seed, "obs", t, int(alpha * 1e6)))
    config = TrainConfig(rank=spec.rank, seed=derive_seed(spec.seed, "train", t),
                         max_iterations=spec.max_iterations)
    out = {}
    for name, make_props in sources.items():
        p = make_props(spec, truth_values, props, obs, t)
        cv = cross_validate(obs, p, spec.lambdas, [spec.rank], spec.folds, config)
        out[name] = (true_risk(truth, cv.model.predict(), MSE), cv.best_lambda)
    return out


def _true_source(spec, truth, props, obs, t):
    return props


def _uniform_source(spec, truth, props, obs, t):
    return uniform_propensities(obs)


def _map_trials(spec, fn, jobs):
    if spec.workers > 1:
        with ProcessPoolExecutor(max_workers=spec.workers) as pool:
            return list(pool.map(fn, jobs))
    return [fn(job) for job in jobs]


def _learning_sweep(spec, truth):
    report = SweepReport("alpha-sweep-learn", truth=truth)
    sources = {"mf-ips": _true_source, "mf-naive": _uniform_source}
    for alpha in spec.alphas:
        jobs = [(spec, truth.values, alpha, t, sources) for t in range(spec.trials)]
        results = _map_trials(spec, _learning_trial, jobs)
        for name in sources:
            mses = [r[name][0] for r in results]
            report.raw[(alpha, name, "mse")] = mses
            report.raw[(alpha, name, "lambda")] = [r[name][1] for r in results]
            report.add(setting="alpha", value=alpha, predictor="learned", estimator=name, metric="mse",
                       **_summary(mses, None))
    return report


def run_robustness_sweep(spec: ExperimentSpec, truth: Optional[RatingMatrix] = None) -> SweepReport:
    """Estimator accuracy with Naive Bayes propensities fit from MCAR samples of varying size.

    IPS with true propensities and Naive are emitted at every size as
    reference rows. With ``spec.learn``, MF trained with each propensity
    source is also scored by its true MSE.
    """
    truth = truth if truth is not None else build_ground_truth(spec)
    alpha = spec.alphas[0]
    props = observation_propensities(truth, ObservationModelConfig(alpha, spec.target_fraction))
    preds = _predictors(spec, truth)
    losses = _loss_tables(spec, truth, preds)
    n_cells = truth.values.size
    sizes: List = list(spec.mcar_sizes) + (["inf"] if spec.include_exact else [])
    raw: Dict[tuple, List[float]] = {}
    exact = exact_naive_bayes(truth, props)
    for t in range(spec.trials):
        obs = sample_observations(truth, props, derive_seed(spec.seed, "obs", t))
        p_true = props.at(obs)
        for size in sizes:
            if size == "inf":
                model = exact
            else:
                mcar = sample_mcar_ratings(truth, int(size), derive_seed(spec.seed, "mcar", t, int(size)))
                model = fit_naive_bayes(obs, mcar, spec.laplace_alpha)
            p_nb = nb_propensity_for_ratings(model, obs.ratings)
            for (pred, metric), L in losses.items():
                delta = L[obs.users, obs.items]
                nb = estimates_from_losses(delta, p_nb, n_cells)
                ref = estimates_from_losses(delta, p_true, n_cells)
                for name, value in (("ips-nb", nb["ips"]), ("snips-nb", nb["snips"]),
                                    ("ips-true", ref["ips"]), ("snips-true", ref["snips"]),
                                    ("naive", ref["naive"])):
                    raw.setdefault((size, pred, metric, name), []).append(value)
    report = SweepReport("robustness-sweep", truth=truth)
    report.raw.update(raw)
    names = ("ips-nb", "snips-nb", "ips-true", "snips-true", "naive")
    for size in sizes:
        sub = {k[1:]: v for k, v in raw.items() if k[0] == size}
        _add_aggregate_rows(report, "mcar_size", size, losses, sub, names, list(preds))
    if spec.learn:
        _robustness_learning(spec, truth, sizes, report)
    return report


def _nb_source(size, spec, truth, props, obs, t):
    if size == "inf":
        model = exact_naive_bayes(truth, props)
    else:
        mcar = sample_mcar_ratings(truth, int(size), derive_seed(spec.seed, "mcar", t, int(size)))
        model = fit_naive_bayes(obs, mcar, spec.laplace_alpha)
    return nb_propensity_matrix(model, obs)


def _robustness_learning(spec, truth, sizes, report):
    alpha = spec.alphas[0]
    sources = {"mf-ips": _true_source, "mf-naive": _uniform_source}
    sources.update({f"mf-nb@{s}": partial(_nb_source, s) for s in sizes})
    jobs = [(spec, truth.values, alpha, t, sources) for t in range(spec.trials)]
    results = _map_trials(spec, _learning_trial, jobs)
    for name in sources:
        mses = [r[name][0] for r in results]
        report.raw[("learn", name)] = mses
        size = name.split("@")[1] if "@" in name else ""
        report.add(setting="mcar_size", value=size, predictor="learned", estimator=name.split("@")[0],
                   metric="mse", **_summary(mses, None))


def run_train_real(spec: ExperimentSpec, train_path, test_path, fmt: str = "ml100k-tsv",
                   mcar_fraction: float = 0.05) -> SweepReport:
    """Train propensity-weighted and unweighted MF on MNAR data, score on MCAR test data.

    A random ``mcar_fraction`` of the test ratings is set aside to fit the
    Naive Bayes marginal and the rest is used for scoring.
    """
    mapping = joint_mapping([train_path, test_path], fmt)
    train_obs, _ = ingest_triplets(train_path, fmt, mapping)
    test_obs, _ = ingest_triplets(test_path, fmt, mapping)
    rng = np.random.default_rng(derive_seed(spec.seed, "mcar"))
    held = np.zeros(len(test_obs), dtype=bool)
    held[rng.permutation(len(test_obs))[:max(1, int(round(mcar_fraction * len(test_obs))))]] = True
    nb = fit_naive_bayes(train_obs, test_obs.ratings[held], spec.laplace_alpha)
    eval_obs = test_obs.subset(~held)
    config = TrainConfig(rank=spec.rank, seed=derive_seed(spec.seed, "train"), max_iterations=spec.max_iterations)
    report = SweepReport("train-real")
    for name, props in (("mf-ips", nb_propensity_matrix(nb, train_obs)),
                        ("mf-naive", uniform_propensities(train_obs))):
        cv = cross_validate(train_obs, props, spec.lambdas, [spec.rank], spec.folds, config)
        pred = cv.model.predict()
        for metric in ("mae", "mse"):
            value = naive_estimate(eval_obs, pred, LossKind(metric)).value
            report.add(setting="lambda", value=cv.best_lambda, predictor="learned", estimator=name,
                       metric=metric, mean=value, trials=1)
    return report


def run(spec: ExperimentSpec, truth: Optional[RatingMatrix] = None) -> SweepReport:
    if spec.kind == "estimator-table":
        report = run_estimator_table(spec, truth)
    elif spec.kind in ("alpha-sweep-eval", "alpha-sweep-learn"):
        report = run_alpha_sweep(spec, truth)
    elif spec.kind == "robustness-sweep":
        report = run_robustness_sweep(spec, truth)
    else:
        raise ValueError("train-real needs input files; call run_train_real")
    if spec.output:
        report.to_csv(spec.output)
    return report
