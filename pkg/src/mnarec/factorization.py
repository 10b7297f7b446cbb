"""Propensity-weighted matrix factorization.

The model predicts ``v_u . w_i + a_u + b_i + c``. Training minimizes the sum of
observed losses weighted by inverse propensities plus an L2 penalty on the
user and item factors. Offsets are not penalized.
"""
from __future__ import annotations

import itertools
import logging
import math
from dataclasses import dataclass, field, replace
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from . import _backend
from .core import LossKind, ObservationSample, PropensityMatrix, RatingMatrix
from .estimators import ips_estimate
from .exceptions import TrainingDivergedError, UndefinedEstimateError
from .optim import minimize
from .propensity import scale_for_cv

logger = logging.getLogger(__name__)

_LOSS_CODES = {"mse": 0, "mae": 1}
DEFAULT_LAMBDAS = tuple(10.0**e for e in range(-6, 1))
DEFAULT_RANKS = (5, 10, 20, 40)


@dataclass(frozen=True)
class FactorModel:
    """Rank-``d`` factorization with user, item and global offsets.

    ``user_factors`` has one row per user (shape ``(U, d)``) and
    ``item_factors`` one row per item (shape ``(I, d)``).
    """

    user_factors: np.ndarray
    item_factors: np.ndarray
    user_offsets: np.ndarray
    item_offsets: np.ndarray
    global_offset: float

    def __post_init__(self):
        V = np.asarray(self.user_factors, dtype=np.float64)
        W = np.asarray(self.item_factors, dtype=np.float64)
        a = np.asarray(self.user_offsets, dtype=np.float64).ravel()
        b = np.asarray(self.item_offsets, dtype=np.float64).ravel()
        if V.ndim != 2 or W.ndim != 2 or V.shape[1] != W.shape[1]:
            raise ValueError("factor matrices must be 2-D with a shared rank")
        if V.shape[1] < 1:
            raise ValueError("rank must be >= 1")
        if a.size != V.shape[0] or b.size != W.shape[0]:
            raise ValueError("offset lengths do not match factor shapes")
        c = float(self.global_offset)
        if not (np.all(np.isfinite(V)) and np.all(np.isfinite(W)) and np.all(np.isfinite(a))
                and np.all(np.isfinite(b)) and math.isfinite(c)):
            raise ValueError("model parameters must be finite")
        object.__setattr__(self, "user_factors", V)
        object.__setattr__(self, "item_factors", W)
        object.__setattr__(self, "user_offsets", a)
        object.__setattr__(self, "item_offsets", b)
        object.__setattr__(self, "global_offset", c)

    @property
    def rank(self) -> int:
        return self.user_factors.shape[1]

    @property
    def shape(self) -> Tuple[int, int]:
        return self.user_factors.shape[0], self.item_factors.shape[0]

    def predict(self) -> RatingMatrix:
        return predict(self)

    def to_vector(self) -> np.ndarray:
        return np.concatenate([
            self.user_factors.ravel(), self.item_factors.ravel(),
            self.user_offsets, self.item_offsets, [self.global_offset],
        ])

    @classmethod
    def from_vector(cls, x, n_users: int, n_items: int, rank: int) -> "FactorModel":
        V, W, a, b, c = _split(x, n_users, n_items, rank)
        return cls(V.copy(), W.copy(), a.copy(), b.copy(), float(c))


def _split(x, n_users, n_items, rank):
    nv = n_users * rank
    nw = n_items * rank
    V = x[:nv].reshape(n_users, rank)
    W = x[nv:nv + nw].reshape(n_items, rank)
    a = x[nv + nw:nv + nw + n_users]
    b = x[nv + nw + n_users:nv + nw + n_users + n_items]
    return V, W, a, b, x[-1]


@dataclass(frozen=True)
class TrainConfig:
    """Hyperparameters and optimizer settings for :func:`train`.

    ``init_scale`` defaults to ``0.1 / sqrt(rank)``. ``method`` is ``lbfgs``
    (memory 10) or ``gd`` for plain gradient descent.
    """

    lam: float = 1e-3
    rank: int = 20
    loss: str = "mse"
    max_iterations: int = 500
    tolerance: float = 1e-5
    seed: int = 0
    init_scale: Optional[float] = None
    method: str = "lbfgs"
    memory: int = 10

    def __post_init__(self):
        if self.lam < 0:
            raise ValueError("lambda must be >= 0")
        if int(self.rank) < 1:
            raise ValueError("rank must be >= 1")
        if self.loss not in _LOSS_CODES:
            raise ValueError(f"loss must be one of {sorted(_LOSS_CODES)}")
        if not self.tolerance > 0:
            raise ValueError("tolerance must be > 0")
        if self.init_scale is not None and not self.init_scale > 0:
            raise ValueError("init_scale must be > 0")
        if self.max_iterations < 0:
            raise ValueError("max_iterations must be >= 0")

    @property
    def effective_init_scale(self) -> float:
        return self.init_scale if self.init_scale is not None else 0.1 / math.sqrt(self.rank)


def predict(model: FactorModel) -> RatingMatrix:
    values = (model.user_factors @ model.item_factors.T
              + model.user_offsets[:, None] + model.item_offsets[None, :] + model.global_offset)
    return RatingMatrix(values)


def observation_weights(obs: ObservationSample, props) -> np.ndarray:
    """Inverse propensities at the observed entries (all ones if ``props`` is None)."""
    if props is None:
        return np.ones(len(obs))
    p = props.at(obs) if isinstance(props, PropensityMatrix) else np.asarray(props, np.float64)[obs.users, obs.items]
    if np.any(~(p > 0)):
        raise ValueError("nonpositive propensity at an observed entry")
    return 1.0 / p


class _Problem:
    """Objective over a flat parameter vector for a fixed data set."""

    def __init__(self, obs, weights, config):
        self.n_users, self.n_items = obs.shape
        self.rank = int(config.rank)
        self.users = np.ascontiguousarray(obs.users, dtype=np.int64)
        self.items = np.ascontiguousarray(obs.items, dtype=np.int64)
        self.ratings = np.ascontiguousarray(obs.ratings, dtype=np.float64)
        self.weights = np.ascontiguousarray(weights, dtype=np.float64)
        self.lam = float(config.lam)
        self.loss_code = _LOSS_CODES[config.loss]
        self.evaluations = 0

    def __call__(self, x):
        self.evaluations += 1
        V, W, a, b, c = _split(x, self.n_users, self.n_items, self.rank)
        grad = np.empty_like(x)
        gV, gW, ga, gb, _ = _split(grad, self.n_users, self.n_items, self.rank)
        f, gc = _backend.mf_objective_grad(
            self.users, self.items, self.ratings, self.weights,
            np.ascontiguousarray(V), np.ascontiguousarray(W), a, b, float(c),
            self.lam, self.loss_code, gV, gW, ga, gb,
        )
        grad[-1] = gc
        return float(f), grad


def objective(model: FactorModel, obs: ObservationSample, props, config: TrainConfig) -> float:
    """Inverse-propensity-weighted training loss plus the factor penalty."""
    problem = _Problem(obs, observation_weights(obs, props), replace(config, rank=model.rank))
    return problem(model.to_vector())[0]


def gradient(model: FactorModel, obs: ObservationSample, props, config: TrainConfig) -> FactorModel:
    """Exact gradient of :func:`objective`, packed like a model.

    Absolute error uses the sign subgradient (0 at a zero residual).
    """
    problem = _Problem(obs, observation_weights(obs, props), replace(config, rank=model.rank))
    _, g = problem(model.to_vector())
    return FactorModel.from_vector(g, *model.shape, model.rank)


def initial_model(obs: ObservationSample, weights, config: TrainConfig) -> FactorModel:
    """Seeded starting point: small Gaussian factors, weighted-mean global offset."""
    n_users, n_items = obs.shape
    rng = np.random.default_rng(config.seed)
    scale = config.effective_init_scale
    V = rng.normal(0.0, scale, size=(n_users, config.rank))
    W = rng.normal(0.0, scale, size=(n_items, config.rank))
    c = float(np.sum(weights * obs.ratings) / np.sum(weights))
    return FactorModel(V, W, np.zeros(n_users), np.zeros(n_items), c)


@dataclass
class TrainResult:
    model: FactorModel
    objective: float
    n_iter: int
    converged: bool
    history: List[float] = field(default_factory=list)


def fit(obs: ObservationSample, props, config: TrainConfig) -> TrainResult:
    """Train and return the model together with optimizer diagnostics."""
    if len(obs) == 0:
        raise UndefinedEstimateError("cannot train on an empty observation sample")
    weights = observation_weights(obs, props)
    start = initial_model(obs, weights, config)
    problem = _Problem(obs, weights, config)
    try:
        res = minimize(problem, start.to_vector(), method=config.method, memory=config.memory,
                       max_iter=config.max_iterations, tol=config.tolerance)
    except TrainingDivergedError as err:
        raise TrainingDivergedError(str(err), last_model=start) from None
    model = FactorModel.from_vector(res.x, *obs.shape, config.rank)
    logger.debug("trained rank=%d lam=%g: objective %.6g after %d iterations (converged=%s)",
                 config.rank, config.lam, res.fun, res.n_iter, res.converged)
    return TrainResult(model, res.fun, res.n_iter, res.converged, res.history)


def train(obs: ObservationSample, props, config: TrainConfig) -> FactorModel:
    return fit(obs, props, config).model


@dataclass
class CVResult:
    """Outcome of :func:`cross_validate`.

    ``scores`` maps ``(lam, rank)`` to the mean validation IPS loss and
    ``fold_scores`` to the per-fold values.
    """

    best_lambda: float
    best_rank: int
    scores: Dict[Tuple[float, int], float]
    fold_scores: Dict[Tuple[float, int], List[float]]
    train_scale: float
    valid_scale: float
    folds: np.ndarray
    model: Optional[FactorModel] = None


def assign_folds(n: int, k: int, seed: int) -> np.ndarray:
    """Random entry-level fold labels with fold sizes differing by at most one."""
    if k < 2:
        raise ValueError("need at least 2 folds")
    if n < k:
        raise ValueError(f"cannot split {n} observations into {k} non-empty folds")
    perm = np.random.default_rng(seed).permutation(n)
    folds = np.empty(n, dtype=np.int64)
    folds[perm] = np.arange(n) % k
    return folds


def cross_validate(obs: ObservationSample, props, lambda_grid: Sequence[float] = DEFAULT_LAMBDAS,
                   rank_grid: Sequence[int] = DEFAULT_RANKS, folds: int = 4,
                   config: TrainConfig = TrainConfig(), refit: bool = True) -> CVResult:
    """Select ``(lam, rank)`` by k-fold CV scored with IPS on the held-out fold.

    Training folds see propensities scaled by ``(k-1)/k`` and the validation
    fold by ``1/k``, since each holds only that share of the revealed entries.
    Ties go to the smallest lambda, then the smallest rank. The winner is
    retrained on all observations with the unscaled propensities.
    """
    if props is None:
        props = PropensityMatrix(np.ones(obs.shape))
    if not isinstance(props, PropensityMatrix):
        props = PropensityMatrix(props)
    labels = assign_folds(len(obs), folds, config.seed)
    train_scale = (folds - 1) / folds
    valid_scale = 1.0 / folds
    logger.info("cv: %d folds, training propensities x%.6g, validation propensities x%.6g",
                folds, train_scale, valid_scale)
    train_props = scale_for_cv(props, train_scale)
    valid_props = scale_for_cv(props, valid_scale)
    kind = LossKind(config.loss)

    grid = list(itertools.product(sorted(set(float(l) for l in lambda_grid)),
                                  sorted(set(int(d) for d in rank_grid))))
    if not grid:
        raise ValueError("empty hyperparameter grid")
    fold_scores: Dict[Tuple[float, int], List[float]] = {}
    for lam, rank in grid:
        cell_config = replace(config, lam=lam, rank=rank)
        per_fold = []
        for f in range(folds):
            held = labels == f
            train_obs = obs.subset(~held)
            valid_obs = obs.subset(held)
            model = train(train_obs, train_props, cell_config)
            per_fold.append(ips_estimate(valid_obs, model.predict(), valid_props, kind).value)
        fold_scores[(lam, rank)] = per_fold
    scores = {key: float(np.mean(vals)) for key, vals in fold_scores.items()}
    best = min(grid, key=lambda key: (scores[key], key[0], key[1]))
    logger.info("cv: selected lam=%g rank=%d (score %.6g)", best[0], best[1], scores[best])
    model = train(obs, props, replace(config, lam=best[0], rank=best[1])) if refit else None
    return CVResult(best[0], best[1], scores, fold_scores, train_scale, valid_scale, labels, model)
