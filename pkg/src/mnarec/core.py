"""Domain types, per-entry losses and exact risk over fully known matrices.

All matrices are indexed ``[user, item]``. Ranking losses rank items per user
by descending predicted value; ties go to the smaller item index.
"""
from __future__ import annotations

import re
from dataclasses import dataclass, field
from typing import Optional, Sequence, Tuple

import numpy as np

DEFAULT_SCALE: Tuple[int, ...] = (1, 2, 3, 4, 5)


@dataclass(frozen=True)
class RatingMatrix:
    """Dense ``U x I`` matrix of true or predicted ratings.

    Parameters
    ----------
    values : array-like, shape (n_users, n_items)
        Rating values. Predictions may be any real number.
    scale : tuple of int, optional
        When given, the matrix is a true-rating matrix and every value must
        lie on this scale.
    """

    values: np.ndarray
    scale: Optional[Tuple[int, ...]] = None

    def __post_init__(self):
        values = np.array(self.values, dtype=np.float64)
        if values.ndim != 2 or values.shape[0] < 1 or values.shape[1] < 1:
            raise ValueError(f"rating matrix must be 2-D and non-empty, got shape {values.shape}")
        values.setflags(write=False)
        object.__setattr__(self, "values", values)
        if self.scale is not None:
            scale = tuple(int(s) for s in self.scale)
            object.__setattr__(self, "scale", scale)
            if not np.isin(values, scale).all():
                raise ValueError("true-rating matrix has values off the rating scale")

    @classmethod
    def truth(cls, values, scale: Sequence[int] = DEFAULT_SCALE) -> "RatingMatrix":
        return cls(values, tuple(scale))

    @property
    def shape(self) -> Tuple[int, int]:
        return self.values.shape

    @property
    def n_users(self) -> int:
        return self.values.shape[0]

    @property
    def n_items(self) -> int:
        return self.values.shape[1]


@dataclass(frozen=True)
class ObservationSample:
    """Revealed ``(user, item, rating)`` entries of a ``U x I`` matrix.

    This is the support of the observation indicator matrix together with the
    revealed ratings. Entries keep the order they were given in.
    """

    shape: Tuple[int, int]
    users: np.ndarray
    items: np.ndarray
    ratings: np.ndarray

    def __post_init__(self):
        n_users, n_items = (int(s) for s in self.shape)
        if n_users < 1 or n_items < 1:
            raise ValueError(f"invalid dims {self.shape}")
        users = np.array(self.users, dtype=np.int64).ravel()
        items = np.array(self.items, dtype=np.int64).ravel()
        ratings = np.array(self.ratings, dtype=np.float64).ravel()
        if not (users.shape == items.shape == ratings.shape):
            raise ValueError("users, items and ratings must have equal length")
        if users.size:
            if users.min() < 0 or users.max() >= n_users or items.min() < 0 or items.max() >= n_items:
                raise IndexError("observation index out of range")
            flat = users * n_items + items
            if np.unique(flat).size != flat.size:
                raise ValueError("duplicate (user, item) pair in observations")
        for arr in (users, items, ratings):
            arr.setflags(write=False)
        object.__setattr__(self, "shape", (n_users, n_items))
        object.__setattr__(self, "users", users)
        object.__setattr__(self, "items", items)
        object.__setattr__(self, "ratings", ratings)

    @classmethod
    def from_entries(cls, shape, entries) -> "ObservationSample":
        entries = list(entries)
        if not entries:
            return cls(shape, [], [], [])
        u, i, r = zip(*entries)
        return cls(shape, u, i, r)

    @classmethod
    def from_mask(cls, truth: RatingMatrix, mask) -> "ObservationSample":
        """Reveal the cells of ``truth`` where ``mask`` is true (row-major order)."""
        mask = np.asarray(mask, dtype=bool)
        if mask.shape != truth.shape:
            raise ValueError("mask shape does not match truth")
        users, items = np.nonzero(mask)
        return cls(truth.shape, users, items, truth.values[users, items])

    def __len__(self) -> int:
        return int(self.users.size)

    @property
    def n_cells(self) -> int:
        return self.shape[0] * self.shape[1]

    def entries(self):
        return list(zip(self.users.tolist(), self.items.tolist(), self.ratings.tolist()))

    def mask(self) -> np.ndarray:
        out = np.zeros(self.shape, dtype=bool)
        out[self.users, self.items] = True
        return out

    def subset(self, index) -> "ObservationSample":
        return ObservationSample(self.shape, self.users[index], self.items[index], self.ratings[index])

    def check_against(self, truth: RatingMatrix) -> None:
        """Raise if any revealed rating disagrees with ``truth``."""
        if truth.shape != self.shape:
            raise ValueError("dimension mismatch between observations and truth")
        if not np.array_equal(truth.values[self.users, self.items], self.ratings):
            raise ValueError("revealed ratings differ from the ground truth")


@dataclass(frozen=True)
class PropensityMatrix:
    """Dense ``U x I`` matrix of reveal probabilities in ``(0, 1]``.

    ``imputed`` optionally marks cells whose value was filled in rather than
    modelled (only bound calculators should rely on those).
    """

    values: np.ndarray
    imputed: Optional[np.ndarray] = field(default=None, compare=False)

    def __post_init__(self):
        values = np.array(self.values, dtype=np.float64)
        if values.ndim != 2 or values.shape[0] < 1 or values.shape[1] < 1:
            raise ValueError(f"propensity matrix must be 2-D and non-empty, got shape {values.shape}")
        if not np.all(np.isfinite(values)) or values.min() <= 0.0 or values.max() > 1.0:
            raise ValueError("propensities must lie in (0, 1]")
        values.setflags(write=False)
        object.__setattr__(self, "values", values)
        if self.imputed is not None:
            imputed = np.array(self.imputed, dtype=bool)
            if imputed.shape != values.shape:
                raise ValueError("imputed mask shape mismatch")
            object.__setattr__(self, "imputed", imputed)

    @classmethod
    def uniform(cls, shape, value: float) -> "PropensityMatrix":
        return cls(np.full(shape, float(value)))

    @property
    def shape(self) -> Tuple[int, int]:
        return self.values.shape

    def at(self, obs: ObservationSample) -> np.ndarray:
        if obs.shape != self.shape:
            raise ValueError(f"dims mismatch: observations {obs.shape} vs propensities {self.shape}")
        return self.values[obs.users, obs.items]


_POINTWISE = ("mae", "mse", "accuracy")
_RANKING = ("cg", "dcg", "dcg@k", "prec@k")


@dataclass(frozen=True)
class LossKind:
    """Which per-entry loss to use.

    ``cutoff`` is the recommendation budget for ``cg`` and the rank cutoff for
    ``dcg@k`` and ``prec@k``.
    """

    name: str
    cutoff: Optional[int] = None

    def __post_init__(self):
        if self.name not in _POINTWISE + _RANKING:
            raise ValueError(f"unknown loss kind {self.name!r}")
        needs_cutoff = self.name in ("cg", "dcg@k", "prec@k")
        if needs_cutoff:
            if self.cutoff is None or int(self.cutoff) < 1:
                raise ValueError(f"{self.name} needs a cutoff >= 1")
            object.__setattr__(self, "cutoff", int(self.cutoff))
        elif self.cutoff is not None:
            raise ValueError(f"{self.name} takes no cutoff")

    @property
    def is_pointwise(self) -> bool:
        return self.name in _POINTWISE

    @property
    def is_ranking(self) -> bool:
        return self.name in _RANKING

    @classmethod
    def parse(cls, text: str) -> "LossKind":
        """Parse ``mae``, ``mse``, ``accuracy``, ``dcg``, ``dcg@50``, ``prec@5``, ``cg@10``."""
        text = text.strip().lower()
        m = re.fullmatch(r"(cg|dcg|prec)@(\d+)", text)
        if m:
            base, k = m.groups()
            name = {"cg": "cg", "dcg": "dcg@k", "prec": "prec@k"}[base]
            return cls(name, int(k))
        return cls(text)

    def __str__(self) -> str:
        if self.cutoff is None:
            return self.name
        return f"{self.name.split('@')[0]}@{self.cutoff}"


MAE = LossKind("mae")
MSE = LossKind("mse")
ACCURACY = LossKind("accuracy")
DCG = LossKind("dcg")


def cg(budget: int) -> LossKind:
    return LossKind("cg", budget)


def dcg_at(cutoff: int) -> LossKind:
    return LossKind("dcg@k", cutoff)


def prec_at(cutoff: int) -> LossKind:
    return LossKind("prec@k", cutoff)


def _as_values(m) -> np.ndarray:
    if isinstance(m, (RatingMatrix, PropensityMatrix)):
        return m.values
    return np.asarray(m, dtype=np.float64)


def round_to_scale(values, scale: Sequence[int] = DEFAULT_SCALE) -> np.ndarray:
    """Snap each value to the nearest scale point (ties go to the lower point)."""
    levels = np.asarray(sorted(scale), dtype=np.float64)
    values = np.asarray(values, dtype=np.float64)
    idx = np.abs(values[..., None] - levels).argmin(axis=-1)
    return levels[idx]


def ranks(pred) -> np.ndarray:
    """Per-user rank (1 = best) of every item by descending prediction."""
    pred = _as_values(pred)
    order = np.argsort(-pred, axis=1, kind="stable")
    out = np.empty(pred.shape, dtype=np.int64)
    rows = np.arange(pred.shape[0])[:, None]
    out[rows, order] = np.arange(1, pred.shape[1] + 1)
    return out


def _check_recommendation_matrix(pred: np.ndarray, budget: int) -> None:
    if budget > pred.shape[1]:
        raise ValueError("budget exceeds the number of items")
    if not np.isin(pred, (0.0, 1.0)).all():
        raise ValueError("CG needs a binary recommendation matrix")
    counts = pred.sum(axis=1)
    bad = np.nonzero(counts != budget)[0]
    if bad.size:
        raise ValueError(
            f"CG recommendation row {int(bad[0])} has {int(counts[bad[0]])} ones, expected {budget}"
        )


def entry_losses(users, items, ratings, pred, kind: LossKind,
                 scale: Sequence[int] = DEFAULT_SCALE) -> np.ndarray:
    """Loss of ``pred`` at each listed cell, with true ratings supplied per entry.

    Rank-based losses still use the full row of ``pred`` to rank items.
    """
    pred = _as_values(pred)
    users = np.asarray(users, dtype=np.int64)
    items = np.asarray(items, dtype=np.int64)
    y = np.asarray(ratings, dtype=np.float64)
    n_items = pred.shape[1]
    if users.size and (users.min() < 0 or users.max() >= pred.shape[0]
                       or items.min() < 0 or items.max() >= n_items):
        raise IndexError("loss index out of range")
    if kind.cutoff is not None and kind.cutoff > n_items:
        raise ValueError(f"cutoff {kind.cutoff} exceeds item count {n_items}")
    yhat = pred[users, items]
    if kind.name == "mae":
        return np.abs(y - yhat)
    if kind.name == "mse":
        return (y - yhat) ** 2
    if kind.name == "accuracy":
        return (round_to_scale(yhat, scale) == y).astype(np.float64)
    if kind.name == "cg":
        _check_recommendation_matrix(pred, kind.cutoff)
        return (n_items / kind.cutoff) * yhat * y
    r = ranks(pred)[users, items]
    if kind.name == "dcg":
        return n_items / np.log2(r + 1.0) * y
    if kind.name == "dcg@k":
        return np.where(r <= kind.cutoff, n_items / np.log2(r + 1.0) * y, 0.0)
    # prec@k
    return (n_items / kind.cutoff) * y * (r <= kind.cutoff)


def loss_matrix(truth, pred, kind: LossKind) -> np.ndarray:
    """Full ``U x I`` matrix of per-entry losses."""
    y = _as_values(truth)
    p = _as_values(pred)
    if y.shape != p.shape:
        raise ValueError(f"dimension mismatch: {y.shape} vs {p.shape}")
    scale = truth.scale if isinstance(truth, RatingMatrix) and truth.scale else DEFAULT_SCALE
    users, items = np.indices(y.shape)
    return entry_losses(users.ravel(), items.ravel(), y.ravel(), p, kind, scale).reshape(y.shape)


def pointwise_loss(u: int, i: int, truth, pred, kind: LossKind) -> float:
    if not kind.is_pointwise:
        raise ValueError(f"{kind} is not a pointwise loss")
    return _single(u, i, truth, pred, kind)


def ranking_loss(u: int, i: int, truth, pred, kind: LossKind) -> float:
    if not kind.is_ranking:
        raise ValueError(f"{kind} is not a ranking loss")
    return _single(u, i, truth, pred, kind)


def _single(u, i, truth, pred, kind):
    y = _as_values(truth)
    p = _as_values(pred)
    if y.shape != p.shape:
        raise ValueError(f"dimension mismatch: {y.shape} vs {p.shape}")
    if not (0 <= u < y.shape[0] and 0 <= i < y.shape[1]):
        raise IndexError(f"cell ({u}, {i}) out of range for shape {y.shape}")
    scale = truth.scale if isinstance(truth, RatingMatrix) and truth.scale else DEFAULT_SCALE
    return float(entry_losses([u], [i], [y[u, i]], p, kind, scale)[0])


def true_risk(truth, pred, kind: LossKind) -> float:
    """Average loss over every cell of the matrix."""
    return float(loss_matrix(truth, pred, kind).mean())
