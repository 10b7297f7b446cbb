"""Naive, IPS and SNIPS risk estimators over revealed entries.

Estimators read true ratings from the observation sample only, so the same
code runs on real data where the rest of the rating matrix is unknown.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import _backend
from .core import (
    DEFAULT_SCALE,
    LossKind,
    ObservationSample,
    PropensityMatrix,
    RatingMatrix,
    entry_losses,
    loss_matrix,
)
from .exceptions import InstanceTooLargeError, UndefinedEstimateError

ESTIMATORS = ("naive", "ips", "snips")
_CODES = {"naive": 0, "ips": 1, "snips": 2}
MAX_ENUMERATION_CELLS = 20


@dataclass(frozen=True)
class EstimateReport:
    """Result of one estimator run.

    ``normalizer`` is what the loss sum was divided by: the observed count for
    Naive, ``U*I`` for IPS and the realized inverse-propensity sum for SNIPS.
    """

    estimator: str
    value: float
    observed_count: int
    normalizer: float

    def __float__(self):
        return self.value


def _pred_values(pred):
    return pred.values if isinstance(pred, RatingMatrix) else np.asarray(pred, dtype=np.float64)


def observed_losses(obs: ObservationSample, pred, kind: LossKind, scale=DEFAULT_SCALE) -> np.ndarray:
    values = _pred_values(pred)
    if values.shape != obs.shape:
        raise ValueError(f"dims mismatch: observations {obs.shape} vs predictions {values.shape}")
    return entry_losses(obs.users, obs.items, obs.ratings, values, kind, scale)


def _observed_props(obs, props):
    p = props.at(obs) if isinstance(props, PropensityMatrix) else np.asarray(props, np.float64)[obs.users, obs.items]
    if np.any(~(p > 0)):
        raise ValueError("nonpositive propensity at an observed entry")
    return p


def naive_estimate(obs: ObservationSample, pred, kind: LossKind) -> EstimateReport:
    """Plain average of the loss over revealed entries."""
    if len(obs) == 0:
        raise UndefinedEstimateError("naive estimate is undefined for an empty observation sample")
    delta = observed_losses(obs, pred, kind)
    return EstimateReport("naive", float(delta.sum() / len(obs)), len(obs), float(len(obs)))


def ips_estimate(obs: ObservationSample, pred, props, kind: LossKind) -> EstimateReport:
    """Inverse-propensity-scored risk estimate.

    An empty sample gives 0, the value of the empty sum.
    """
    n_cells = obs.n_cells
    if len(obs) == 0:
        return EstimateReport("ips", 0.0, 0, float(n_cells))
    p = _observed_props(obs, props)
    delta = observed_losses(obs, pred, kind)
    return EstimateReport("ips", float(np.sum(delta / p) / n_cells), len(obs), float(n_cells))


def _self_normalized(delta, p):
    # The ratio is unchanged by rescaling the weights; scaling by the smallest
    # propensity makes equal propensities give weights of exactly 1, so the
    # result is then bit-identical to the naive average.
    w = p.min() / p
    return float(np.sum(delta * w) / np.sum(w))


def snips_estimate(obs: ObservationSample, pred, props, kind: LossKind) -> EstimateReport:
    """Self-normalized IPS: divides by the realized sum of inverse propensities."""
    if len(obs) == 0:
        raise UndefinedEstimateError("SNIPS is 0/0 on an empty observation sample")
    p = _observed_props(obs, props)
    delta = observed_losses(obs, pred, kind)
    norm = float(np.sum(1.0 / p))
    return EstimateReport("snips", _self_normalized(delta, p), len(obs), norm)


def estimate(estimator: str, obs, pred, kind, props=None) -> EstimateReport:
    if estimator == "naive":
        return naive_estimate(obs, pred, kind)
    if props is None:
        raise ValueError(f"{estimator} needs propensities")
    if estimator == "ips":
        return ips_estimate(obs, pred, props, kind)
    if estimator == "snips":
        return snips_estimate(obs, pred, props, kind)
    raise ValueError(f"unknown estimator {estimator!r}")


def estimates_from_losses(delta, props_at_obs, n_cells: int) -> dict:
    """Naive, IPS and SNIPS values from losses and propensities at revealed cells.

    Used by the experiment runners, which already hold the loss matrix.
    """
    delta = np.asarray(delta, dtype=np.float64)
    p = np.asarray(props_at_obs, dtype=np.float64)
    if delta.size == 0:
        return {"naive": float("nan"), "ips": 0.0, "snips": float("nan")}
    weighted = float(np.sum(delta / p))
    return {
        "naive": float(delta.sum() / delta.size),
        "ips": weighted / n_cells,
        "snips": _self_normalized(delta, p),
    }


@dataclass(frozen=True)
class Moments:
    mean: float
    variance: float
    empty_mass: float


def enumerate_estimator(delta, true_props, eval_props, estimator: str) -> Moments:
    """Exact moments of an estimator given the full loss matrix ``delta``.

    Every cell is revealed independently with its true propensity; the
    estimator weighs revealed losses with ``eval_props``. Naive and SNIPS are
    conditioned on a non-empty pattern and ``empty_mass`` reports the
    probability that was conditioned away.
    """
    delta = np.ascontiguousarray(np.asarray(delta, dtype=np.float64).ravel())
    tp = np.ascontiguousarray(np.asarray(getattr(true_props, "values", true_props), np.float64).ravel())
    ep = np.ascontiguousarray(np.asarray(getattr(eval_props, "values", eval_props), np.float64).ravel())
    if not (delta.size == tp.size == ep.size):
        raise ValueError("dimension mismatch")
    if delta.size > MAX_ENUMERATION_CELLS:
        raise InstanceTooLargeError(
            f"exact enumeration supports at most {MAX_ENUMERATION_CELLS} cells, got {delta.size}"
        )
    if estimator not in _CODES:
        raise ValueError(f"unknown estimator {estimator!r}")
    if np.any(ep <= 0):
        raise ValueError("evaluation propensities must be positive")
    mean, var, empty = _backend.enumerate_moments(delta, tp, ep, _CODES[estimator])
    return Moments(float(mean), float(max(var, 0.0)), float(empty))


def exact_expectation(truth, pred, true_props, eval_props, kind: LossKind, estimator: str) -> Moments:
    """Exact mean and variance of an estimator on a small instance (at most 20 cells)."""
    y = truth.values if isinstance(truth, RatingMatrix) else np.asarray(truth)
    if y.size > MAX_ENUMERATION_CELLS:
        raise InstanceTooLargeError(
            f"exact enumeration supports at most {MAX_ENUMERATION_CELLS} cells, got {y.size}"
        )
    return enumerate_estimator(loss_matrix(truth, pred, kind), true_props, eval_props, estimator)
