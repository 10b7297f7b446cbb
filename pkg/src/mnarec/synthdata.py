"""Semi-synthetic ground truth, the alpha observation model and test predictors.

Ground truth is built by completing partial ratings with unweighted matrix
factorization and re-labelling the completed values so that the rating
histogram matches a target marginal distribution. Observations are then
revealed with propensity ``k`` for ratings 4 and 5 and ``k * alpha**(4 - r)``
below that, with ``k`` solved so a fixed fraction is revealed in expectation.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Optional, Sequence

import numpy as np

from .core import ObservationSample, PropensityMatrix, RatingMatrix, round_to_scale
from .exceptions import InfeasibleTargetError
from .factorization import TrainConfig, train

RATINGS = (1, 2, 3, 4, 5)
DEFAULT_MARGINAL = (0.5263, 0.2425, 0.1458, 0.0572, 0.0282)
PREDICTORS = ("REC_ONES", "REC_FOURS", "ROTATE", "SKEWED", "COARSENED")


@dataclass(frozen=True)
class MarginalDistribution:
    """Probabilities of ratings 1..5."""

    p: tuple = DEFAULT_MARGINAL

    def __post_init__(self):
        p = tuple(float(x) for x in self.p)
        if len(p) != 5 or min(p) < 0 or abs(sum(p) - 1.0) > 1e-9:
            raise ValueError("marginal must be five non-negative probabilities summing to 1")
        object.__setattr__(self, "p", p)

    def __getitem__(self, rating: int) -> float:
        return self.p[rating - 1]


@dataclass(frozen=True)
class ObservationModelConfig:
    alpha: float = 0.25
    target_fraction: float = 0.05

    def __post_init__(self):
        if not 0 < self.alpha <= 1:
            raise ValueError("alpha must lie in (0, 1]")
        if not 0 < self.target_fraction <= 1:
            raise ValueError("target_fraction must lie in (0, 1]")


def quantile_adjust(values, marginal: MarginalDistribution) -> np.ndarray:
    """Relabel values 1..5 by rank so the histogram follows ``marginal``.

    Cells are sorted ascending by value (ties by row-major position); the
    first ``floor(p1*N)`` get rating 1, the next ``floor(p2*N)`` rating 2, and
    so on, with rating 5 taking the remainder. A tiny slack keeps products
    like ``0.5263 * 10000`` from losing a count to rounding.
    """
    values = np.asarray(values, dtype=np.float64)
    n = values.size
    order = np.argsort(values.ravel(), kind="stable")
    labels = np.empty(n, dtype=np.float64)
    start = 0
    for rating, p in zip(RATINGS[:-1], marginal.p[:-1]):
        count = min(math.floor(p * n + 1e-9), n - start)
        labels[order[start:start + count]] = rating
        start += count
    labels[order[start:]] = 5
    return labels.reshape(values.shape)


def select_completion_config(partial: ObservationSample, lambdas: Sequence[float],
                             ranks: Sequence[int], base: TrainConfig = TrainConfig(),
                             test_fraction: float = 0.1, seed: int = 0) -> TrainConfig:
    """Pick ``(lam, rank)`` by a random train/test split maximizing 0/1 accuracy."""
    rng = np.random.default_rng(seed)
    n = len(partial)
    perm = rng.permutation(n)
    n_test = max(1, int(round(test_fraction * n)))
    test = np.zeros(n, dtype=bool)
    test[perm[:n_test]] = True
    train_obs, test_obs = partial.subset(~test), partial.subset(test)
    best = None
    for lam in sorted(lambdas):
        for rank in sorted(ranks):
            cfg = replace(base, lam=float(lam), rank=int(rank))
            pred = train(train_obs, None, cfg).predict().values
            acc = float(np.mean(round_to_scale(pred[test_obs.users, test_obs.items]) == test_obs.ratings))
            if best is None or acc > best[0]:
                best = (acc, cfg)
    return best[1]


def complete_and_adjust(partial: ObservationSample, marginal: MarginalDistribution = MarginalDistribution(),
                        mf_config: Optional[TrainConfig] = None) -> RatingMatrix:
    """Complete ``partial`` with unweighted MF, then quantile-adjust to ``marginal``."""
    if len(partial) == 0:
        raise ValueError("need at least one partial rating")
    config = mf_config if mf_config is not None else TrainConfig(rank=20, lam=1.0)
    completed = train(partial, None, config).predict().values
    return RatingMatrix(quantile_adjust(completed, marginal), scale=RATINGS)


def observation_scale(truth, config: ObservationModelConfig) -> float:
    """Solve for the base propensity ``k`` that hits the target reveal fraction."""
    y = np.asarray(getattr(truth, "values", truth))
    counts = {r: int(np.sum(y == r)) for r in RATINGS}
    mass = sum(counts[r] * config.alpha ** max(4 - r, 0) for r in RATINGS)
    k = config.target_fraction * y.size / mass
    if k > 1.0:
        raise InfeasibleTargetError(
            f"observation scale k={k:.4g} exceeds 1 for alpha={config.alpha} "
            f"and target fraction {config.target_fraction}"
        )
    return k


def observation_propensities(truth, config: ObservationModelConfig = ObservationModelConfig()) -> PropensityMatrix:
    """Reveal probabilities ``k * alpha**max(4 - r, 0)``."""
    y = np.asarray(getattr(truth, "values", truth))
    k = observation_scale(y, config)
    exponent = np.maximum(4 - y, 0)
    return PropensityMatrix(k * config.alpha ** exponent)


def sample_observations(truth, props, seed) -> ObservationSample:
    """Reveal each cell independently with its propensity.

    One uniform draw per cell in row-major order from ``default_rng(seed)``.
    """
    y = truth if isinstance(truth, RatingMatrix) else RatingMatrix(truth)
    p = np.asarray(getattr(props, "values", props), dtype=np.float64)
    if p.shape != y.shape:
        raise ValueError("dims mismatch between truth and propensities")
    draws = np.random.default_rng(seed).random(y.shape)
    return ObservationSample.from_mask(y, draws < p)


def sample_mcar_ratings(truth, size: int, seed) -> np.ndarray:
    """Ratings of ``size`` cells drawn uniformly without replacement."""
    y = np.asarray(getattr(truth, "values", truth)).ravel()
    if size > y.size:
        raise ValueError("MCAR sample larger than the matrix")
    idx = np.random.default_rng(seed).choice(y.size, size=size, replace=False)
    return y[idx]


def _flip(y, source, rng):
    n_target = int(np.sum(y == 5))
    candidates = np.flatnonzero(y.ravel() == source)
    if candidates.size < n_target:
        raise ValueError(
            f"only {candidates.size} cells rated {source}, need {n_target} to flip"
        )
    chosen = rng.choice(candidates, size=n_target, replace=False)
    out = y.ravel().copy()
    out[chosen] = 5
    return out.reshape(y.shape)


def make_predictor(kind: str, truth, seed=0) -> RatingMatrix:
    """Build one of the five test prediction matrices from the ground truth."""
    y = np.asarray(getattr(truth, "values", truth), dtype=np.float64)
    rng = np.random.default_rng(seed)
    kind = kind.upper()
    if kind == "REC_ONES":
        out = _flip(y, 1, rng)
    elif kind == "REC_FOURS":
        out = _flip(y, 4, rng)
    elif kind == "ROTATE":
        out = np.where(y >= 2, y - 1, 5.0)
    elif kind == "SKEWED":
        out = np.clip(rng.normal(y, (6.0 - y) / 2.0), 0.0, 6.0)
    elif kind == "COARSENED":
        out = np.where(y <= 3, 3.0, 4.0)
    else:
        raise ValueError(f"unknown predictor {kind!r}")
    return RatingMatrix(out)


def closed_form_true_mae(kind: str, marginal: MarginalDistribution = MarginalDistribution()) -> float:
    """Population MAE of a deterministic predictor under ``marginal``."""
    p1, p2, _, _, p5 = marginal.p
    kind = kind.upper()
    if kind == "REC_ONES":
        return 4.0 * p5
    if kind == "REC_FOURS":
        return p5
    if kind == "ROTATE":
        return 1.0 + 3.0 * p1
    if kind == "COARSENED":
        return 2.0 * p1 + p2 + p5
    if kind == "SKEWED":
        raise ValueError("SKEWED is stochastic and has no closed form")
    raise ValueError(f"unknown predictor {kind!r}")


def synthetic_partial_ratings(n_users: int, n_items: int, density: float = 0.06, rank: int = 5,
                              noise: float = 0.5, seed=0) -> ObservationSample:
    """Stand-in for a real partial rating set such as ML100K.

    Draws a low-rank score matrix with user and item effects, maps it to 1..5
    with an ML100K-like histogram, and reveals about ``density`` of the cells,
    favouring high ratings.
    """
    rng = np.random.default_rng(seed)
    V = rng.normal(size=(n_users, rank))
    W = rng.normal(size=(n_items, rank))
    scores = (V @ W.T / math.sqrt(rank) + rng.normal(0, 0.7, size=(n_users, 1))
              + rng.normal(0, 0.7, size=(1, n_items)) + rng.normal(0, noise, size=(n_users, n_items)))
    ratings = quantile_adjust(scores, MarginalDistribution((0.06, 0.11, 0.27, 0.35, 0.21)))
    weight = 2.0 ** (ratings - 3)
    p = np.minimum(1.0, weight * density * ratings.size / weight.sum())
    mask = rng.random(ratings.shape) < p
    return ObservationSample.from_mask(RatingMatrix(ratings), mask)


def exact_naive_bayes(truth, props, floor: float = 1e-6):
    """Naive Bayes propensity model built from exact population distributions.

    This is the infinite-MCAR-sample limit; its propensities reproduce any
    rating-only observation mechanism.
    """
    from .propensity import NaiveBayesPropensityModel

    y = np.asarray(getattr(truth, "values", truth))
    p = np.asarray(getattr(props, "values", props), dtype=np.float64)
    revealed = p.sum()
    cond = np.array([p[y == r].sum() / revealed for r in RATINGS])
    marg = np.array([np.sum(y == r) / y.size for r in RATINGS])
    return NaiveBayesPropensityModel(RATINGS, cond / cond.sum(), float(revealed / y.size),
                                     marg / marg.sum(), 0.0, floor)
