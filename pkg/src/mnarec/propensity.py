"""Reveal-probability estimation for observational data.

Every emitted propensity is clamped to ``[floor, 1]`` with ``floor`` defaulting
to ``1e-6``; this keeps the strict-positivity invariant, it is not a
variance-reduction device.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from typing import Sequence, Tuple

import numpy as np

from .core import DEFAULT_SCALE, ObservationSample, PropensityMatrix
from .optim import minimize

DEFAULT_FLOOR = 1e-6


class PropensityClampWarning(UserWarning):
    """A model produced a raw propensity above 1 and it was clamped."""


def _clamp(values, floor):
    return np.clip(values, floor, 1.0)


def uniform_propensities(obs: ObservationSample, floor: float = DEFAULT_FLOOR) -> PropensityMatrix:
    """Every cell gets the overall reveal rate ``|obs| / (U*I)``."""
    rate = len(obs) / obs.n_cells
    return PropensityMatrix(np.full(obs.shape, max(rate, floor)))


def scale_for_cv(props, factor: float, floor: float = DEFAULT_FLOOR) -> PropensityMatrix:
    """Multiply propensities by ``factor`` to account for a fold split."""
    if not 0 < factor <= 1:
        raise ValueError("factor must lie in (0, 1]")
    values = np.asarray(getattr(props, "values", props), dtype=np.float64)
    return PropensityMatrix(_clamp(values * factor, floor))


@dataclass(frozen=True)
class NaiveBayesPropensityModel:
    """Reveal probability as a function of the rating value alone.

    Propensity for rating ``r`` is ``P(Y=r | O=1) P(O=1) / P(Y=r)``. The
    conditional distribution and reveal rate come from the MNAR data, the
    marginal from a small MCAR sample.
    """

    scale: Tuple[int, ...]
    cond_rating_dist: np.ndarray
    reveal_rate: float
    marginal_rating_dist: np.ndarray
    laplace_alpha: float = 1.0
    floor: float = DEFAULT_FLOOR

    def __post_init__(self):
        cond = np.asarray(self.cond_rating_dist, dtype=np.float64)
        marg = np.asarray(self.marginal_rating_dist, dtype=np.float64)
        if cond.shape != (len(self.scale),) or marg.shape != (len(self.scale),):
            raise ValueError("distributions must have one entry per scale value")
        for name, dist in (("conditional", cond), ("marginal", marg)):
            if np.any(dist < 0) or abs(dist.sum() - 1.0) > 1e-9:
                raise ValueError(f"{name} rating distribution must be a probability vector")
        if not 0 < self.reveal_rate <= 1:
            raise ValueError("reveal rate must lie in (0, 1]")
        object.__setattr__(self, "scale", tuple(int(s) for s in self.scale))
        object.__setattr__(self, "cond_rating_dist", cond)
        object.__setattr__(self, "marginal_rating_dist", marg)

    def raw_propensity(self, r) -> float:
        try:
            k = self.scale.index(int(r))
        except ValueError:
            raise ValueError(f"rating {r} is not on the scale {self.scale}") from None
        if int(r) != r:
            raise ValueError(f"rating {r} is not on the scale {self.scale}")
        cond = self.cond_rating_dist[k]
        marg = self.marginal_rating_dist[k]
        if marg == 0.0:
            return math.inf
        return float(cond * self.reveal_rate / marg)

    def propensity_table(self) -> np.ndarray:
        """Clamped propensity per scale value, in scale order."""
        return np.array([nb_propensity(self, r, warn=False) for r in self.scale])


def _smoothed(ratings, scale, alpha):
    ratings = np.asarray(ratings, dtype=np.float64).ravel()
    if not np.isin(ratings, scale).all():
        raise ValueError("ratings off the rating scale")
    counts = np.array([np.sum(ratings == s) for s in scale], dtype=np.float64) + alpha
    total = counts.sum()
    if total <= 0:
        raise ValueError("empty sample with zero smoothing leaves the distribution undefined")
    return counts / total


def fit_naive_bayes(mnar_obs: ObservationSample, mcar_ratings, laplace_alpha: float = 1.0,
                    scale: Sequence[int] = DEFAULT_SCALE,
                    floor: float = DEFAULT_FLOOR) -> NaiveBayesPropensityModel:
    """Fit the Naive Bayes propensity model.

    Parameters
    ----------
    mnar_obs : ObservationSample
        Self-selected observations; gives ``P(Y=r | O=1)`` and ``P(O=1)``.
    mcar_ratings : sequence of int
        Ratings from uniformly chosen cells; gives ``P(Y=r)``.
    laplace_alpha : float
        Pseudo-count added to every rating value in both distributions.
    """
    if len(mnar_obs) == 0:
        raise ValueError("need at least one MNAR observation")
    if laplace_alpha < 0:
        raise ValueError("laplace_alpha must be >= 0")
    scale = tuple(int(s) for s in scale)
    if len(mcar_ratings) == 0 and laplace_alpha == 0:
        raise ValueError("empty MCAR sample with laplace_alpha=0 leaves P(Y=r) undefined")
    cond = _smoothed(mnar_obs.ratings, scale, laplace_alpha)
    marg = _smoothed(mcar_ratings, scale, laplace_alpha)
    return NaiveBayesPropensityModel(scale, cond, len(mnar_obs) / mnar_obs.n_cells, marg,
                                     laplace_alpha, floor)


def nb_propensity(model: NaiveBayesPropensityModel, r, warn: bool = True) -> float:
    """Propensity of a cell whose rating is ``r``, clamped to ``[floor, 1]``."""
    raw = model.raw_propensity(r)
    if raw > 1.0:
        if warn:
            warnings.warn(f"propensity {raw:.4g} for rating {r} clamped to 1", PropensityClampWarning,
                          stacklevel=2)
        return 1.0
    return max(raw, model.floor)


def nb_propensity_matrix(model: NaiveBayesPropensityModel, obs: ObservationSample) -> PropensityMatrix:
    """Propensities at observed cells; unobserved cells get the reveal rate.

    The ``imputed`` mask of the result flags the unobserved cells.
    """
    table = dict(zip(model.scale, model.propensity_table()))
    values = np.full(obs.shape, max(min(model.reveal_rate, 1.0), model.floor))
    if len(obs):
        values[obs.users, obs.items] = [table[int(r)] for r in obs.ratings]
    return PropensityMatrix(values, imputed=~obs.mask())


def nb_propensity_for_ratings(model: NaiveBayesPropensityModel, ratings) -> np.ndarray:
    """Vectorized :func:`nb_propensity` over an array of ratings."""
    table = model.propensity_table()
    ratings = np.asarray(ratings)
    idx = np.searchsorted(np.asarray(model.scale), ratings)
    return table[idx]


@dataclass(frozen=True)
class LogisticPropensityModel:
    """``sigmoid(w . x_ui + beta_i + gamma_u)`` reveal model."""

    weights: np.ndarray
    item_offsets: np.ndarray
    user_offsets: np.ndarray
    regularization: float
    penalize_offsets: bool = False
    floor: float = DEFAULT_FLOOR

    @property
    def n_features(self) -> int:
        return int(np.asarray(self.weights).size)


def _sigmoid(z):
    return 0.5 * (1.0 + np.tanh(0.5 * z))


def _log1pexp(z):
    return np.logaddexp(0.0, z)


def _unpack(theta, n_users, n_items, n_features):
    return theta[:n_features], theta[n_features:n_features + n_items], theta[n_features + n_items:]


def logistic_objective(theta, reveal, features, regularization, penalize_all=False):
    """Negative penalized log-likelihood and its gradient.

    ``theta`` packs ``(w, beta, gamma)``. The penalty is
    ``regularization / 2 * ||w||^2`` (plus the offsets if ``penalize_all``).
    """
    reveal = np.asarray(reveal, dtype=np.float64)
    n_users, n_items, n_features = features.shape
    w, beta, gamma = _unpack(theta, n_users, n_items, n_features)
    z = features @ w + beta[None, :] + gamma[:, None]
    nll = float(np.sum(_log1pexp(z) - reveal * z))
    resid = _sigmoid(z) - reveal
    g_w = np.tensordot(resid, features, axes=([0, 1], [0, 1]))
    g_beta = resid.sum(axis=0)
    g_gamma = resid.sum(axis=1)
    pen = float(w @ w)
    g_w = g_w + regularization * w
    if penalize_all:
        pen += float(beta @ beta + gamma @ gamma)
        g_beta = g_beta + regularization * beta
        g_gamma = g_gamma + regularization * gamma
    return nll + 0.5 * regularization * pen, np.concatenate([g_w, g_beta, g_gamma])


def fit_logistic(reveal_indicator, pair_features, regularization: float = 1.0,
                 penalize_all: bool = False, max_iter: int = 500, tol: float = 1e-6,
                 floor: float = DEFAULT_FLOOR) -> LogisticPropensityModel:
    """Fit the logistic propensity model on the full reveal matrix.

    Unrevealed cells are negative examples. Optimization is full-batch
    L-BFGS from all-zero parameters, stopping at gradient max-norm ``tol`` or
    ``max_iter`` iterations.
    """
    reveal = np.asarray(reveal_indicator, dtype=np.float64)
    if reveal.ndim != 2 or not np.isin(reveal, (0.0, 1.0)).all():
        raise ValueError("reveal indicator must be a binary U x I matrix")
    features = np.asarray(pair_features, dtype=np.float64)
    if features.ndim == 2:
        features = features[:, :, None]
    if features.ndim != 3 or features.shape[:2] != reveal.shape:
        raise ValueError("need one feature vector per cell")
    if not np.all(np.isfinite(features)):
        raise ValueError("features must be finite")
    if regularization < 0:
        raise ValueError("regularization must be >= 0")
    n_users, n_items, n_features = features.shape
    theta0 = np.zeros(n_features + n_items + n_users)
    res = minimize(lambda t: logistic_objective(t, reveal, features, regularization, penalize_all),
                   theta0, max_iter=max_iter, tol=tol)
    w, beta, gamma = _unpack(res.x, n_users, n_items, n_features)
    return LogisticPropensityModel(w.copy(), beta.copy(), gamma.copy(), float(regularization),
                                   penalize_all, floor)


def lr_propensity(model: LogisticPropensityModel, pair_feature, u: int, i: int) -> float:
    x = np.atleast_1d(np.asarray(pair_feature, dtype=np.float64))
    if x.shape != (model.n_features,):
        raise ValueError(f"expected {model.n_features} features, got {x.size}")
    z = float(x @ model.weights) + float(model.item_offsets[i]) + float(model.user_offsets[u])
    return float(max(_sigmoid(z), model.floor))


def lr_propensity_matrix(model: LogisticPropensityModel, pair_features) -> PropensityMatrix:
    features = np.asarray(pair_features, dtype=np.float64)
    if features.ndim == 2:
        features = features[:, :, None]
    z = features @ model.weights + model.item_offsets[None, :] + model.user_offsets[:, None]
    return PropensityMatrix(_clamp(_sigmoid(z), model.floor))


def pair_features(user_covariates, item_covariates) -> np.ndarray:
    """All pairwise products of user and item covariates, shape ``(U, I, p*q)``."""
    uc = np.asarray(user_covariates, dtype=np.float64)
    ic = np.asarray(item_covariates, dtype=np.float64)
    if uc.ndim == 1:
        uc = uc[:, None]
    if ic.ndim == 1:
        ic = ic[:, None]
    out = uc[:, None, :, None] * ic[None, :, None, :]
    return out.reshape(uc.shape[0], ic.shape[0], -1)
