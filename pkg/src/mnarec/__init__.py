"""Propensity-scored evaluation and learning for ratings missing not at random."""
from ._backend import BACKEND
from .core import (
    ACCURACY,
    DCG,
    DEFAULT_SCALE,
    MAE,
    MSE,
    LossKind,
    ObservationSample,
    PropensityMatrix,
    RatingMatrix,
    cg,
    dcg_at,
    loss_matrix,
    pointwise_loss,
    prec_at,
    ranking_loss,
    ranks,
    true_risk,
)
from .estimators import (
    EstimateReport,
    exact_expectation,
    ips_estimate,
    naive_estimate,
    snips_estimate,
)
from .factorization import FactorModel, TrainConfig, cross_validate, predict, train

__version__ = "0.1.0"
