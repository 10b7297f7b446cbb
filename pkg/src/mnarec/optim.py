"""Full-batch L-BFGS and gradient descent with Armijo backtracking.

Both methods only accept steps that satisfy the Armijo condition, so the
objective never increases across accepted iterates. Both are invariant to
rescaling the objective by a constant: with a power-of-two factor the
iterates are bit-identical.
"""
from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass, field
from typing import Callable, List, Tuple

import numpy as np

from .exceptions import TrainingDivergedError

Objective = Callable[[np.ndarray], Tuple[float, np.ndarray]]


@dataclass
class OptimResult:
    x: np.ndarray
    fun: float
    grad: np.ndarray
    n_iter: int
    converged: bool
    stalled: bool = False
    history: List[float] = field(default_factory=list)


def _armijo(fun, x, f, g, direction, step, c1, shrink, max_backtracks):
    slope = float(g @ direction)
    for _ in range(max_backtracks):
        x_new = x + step * direction
        f_new, g_new = fun(x_new)
        if math.isfinite(f_new) and f_new <= f + c1 * step * slope:
            return x_new, f_new, g_new, step
        step *= shrink
    return None


def minimize(fun: Objective, x0: np.ndarray, *, method: str = "lbfgs", memory: int = 10,
             max_iter: int = 500, tol: float = 1e-6, c1: float = 1e-4, shrink: float = 0.5,
             max_backtracks: int = 60) -> OptimResult:
    """Minimize ``fun`` (returning value and gradient) from ``x0``.

    Stops when the gradient max-norm drops below ``tol``, after ``max_iter``
    iterations, or when the line search can make no further progress.

    Raises
    ------
    TrainingDivergedError
        If the objective is non-finite at ``x0``.
    """
    if method not in ("lbfgs", "gd"):
        raise ValueError(f"unknown method {method!r}")
    x = np.array(x0, dtype=np.float64)
    f, g = fun(x)
    if not math.isfinite(f) or not np.all(np.isfinite(g)):
        raise TrainingDivergedError("objective is not finite at the initial point", last_model=x)
    history = [f]
    pairs: deque = deque(maxlen=memory)
    step0 = None
    for it in range(max_iter):
        if float(np.max(np.abs(g))) < tol:
            return OptimResult(x, f, g, it, True, history=history)
        if method == "lbfgs" and pairs:
            direction = -_two_loop(g, pairs)
            if not float(g @ direction) < 0:
                pairs.clear()
        if method == "gd" or not pairs:
            gnorm = math.sqrt(float(g @ g))
            direction = -g / gnorm
            # first step length is the scale of x; 1 if x starts at zero
            step0 = step0 if step0 is not None else (math.sqrt(float(x @ x)) or 1.0)
            step = step0
        else:
            step = 1.0
        found = _armijo(fun, x, f, g, direction, step, c1, shrink, max_backtracks)
        if found is None:
            return OptimResult(x, f, g, it, False, stalled=True, history=history)
        x_new, f_new, g_new, used = found
        if method == "gd" or not pairs:
            step0 = used / shrink
        s = x_new - x
        y = g_new - g
        sy = float(s @ y)
        if method == "lbfgs" and sy > 1e-10 * math.sqrt(float(s @ s) * float(y @ y)):
            pairs.append((s, y, 1.0 / sy))
        x, f, g = x_new, f_new, g_new
        history.append(f)
    return OptimResult(x, f, g, max_iter, float(np.max(np.abs(g))) < tol, history=history)


def _two_loop(g, pairs):
    q = g.copy()
    alphas = []
    for s, y, rho in reversed(pairs):
        alpha = rho * float(s @ q)
        q -= alpha * y
        alphas.append(alpha)
    s, y, _ = pairs[-1]
    q *= float(s @ y) / float(y @ y)
    for (s, y, rho), alpha in zip(pairs, reversed(alphas)):
        beta = rho * float(y @ q)
        q += (alpha - beta) * s
    return q
