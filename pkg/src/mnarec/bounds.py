"""Tail and generalization bounds for propensity-scored estimation and ERM.

All logarithms are natural. The bias helper follows the ``truth - expectation``
sign convention: a positive value means IPS with the estimated propensities
underestimates the true risk on average.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .core import LossKind, loss_matrix


@dataclass(frozen=True)
class BoundInputs:
    """Loss range ``delta_max``, confidence ``eta`` and hypothesis count."""

    delta_max: float
    eta: float
    hypothesis_count: int = 1

    def __post_init__(self):
        if not self.delta_max >= 0:
            raise ValueError("delta_max must be non-negative")
        if not 0 < self.eta < 1:
            raise ValueError("eta must lie in (0, 1)")
        if int(self.hypothesis_count) < 1:
            raise ValueError("hypothesis_count must be >= 1")


def _values(m):
    return np.asarray(getattr(m, "values", m), dtype=np.float64)


def _check_props(p):
    if np.any(~(p > 0)) or np.any(p > 1):
        raise ValueError("propensities must lie in (0, 1]")


def ips_tail_bound(truth, pred, props, kind: LossKind, eta: float) -> float:
    """Deviation that IPS exceeds with probability at most ``eta``.

    Cells observed with certainty do not contribute.
    """
    if not 0 < eta < 1:
        raise ValueError("eta must lie in (0, 1)")
    p = _values(props)
    _check_props(p)
    delta = loss_matrix(truth, pred, kind)
    rho = np.where(p < 1.0, delta / p, 0.0)
    return float(math.sqrt(math.log(2.0 / eta) / 2.0 * np.sum(rho**2)) / p.size)


def _complexity(inputs: BoundInputs, inv_sq_sum: float, n_cells: int) -> float:
    log_term = math.log(2.0 * inputs.hypothesis_count / inputs.eta) / 2.0
    return inputs.delta_max / n_cells * math.sqrt(log_term) * math.sqrt(inv_sq_sum)


def erm_bound(ips_value: float, inputs: BoundInputs, props) -> float:
    """Upper bound on the true risk of the IPS empirical risk minimizer."""
    p = _values(props)
    _check_props(p)
    return float(ips_value + _complexity(inputs, float(np.sum(1.0 / p**2)), p.size))


def ips_bias(truth, pred, true_props, est_props, kind: LossKind) -> float:
    """Bias of IPS when ``est_props`` replace the true propensities.

    Equals ``true_risk - E[IPS(est_props)]``.
    """
    p = _values(true_props)
    p_hat = _values(est_props)
    if p.shape != p_hat.shape:
        raise ValueError("propensity shapes differ")
    if np.any(~(p_hat > 0)):
        raise ValueError("estimated propensities must be positive")
    delta = loss_matrix(truth, pred, kind)
    return float(np.sum(delta / delta.size * (1.0 - p / p_hat)))


def erm_bound_inaccurate(ips_value: float, inputs: BoundInputs, truth, pred,
                         true_props, est_props, kind: LossKind) -> float:
    """ERM bound when training used estimated propensities.

    The bias term bounds every per-entry loss by ``delta_max``; ``truth``,
    ``pred`` and ``kind`` are only checked for shape.
    """
    p = _values(true_props)
    p_hat = _values(est_props)
    if p.shape != p_hat.shape:
        raise ValueError("propensity shapes differ")
    if np.any(~(p_hat > 0)):
        raise ValueError("estimated propensities must be positive")
    if _values(truth).shape != p.shape or _values(pred).shape != p.shape:
        raise ValueError("dimension mismatch")
    n_cells = p.size
    bias = inputs.delta_max / n_cells * float(np.sum(np.abs(1.0 - p / p_hat)))
    return float(ips_value + bias + _complexity(inputs, float(np.sum(1.0 / p_hat**2)), n_cells))
