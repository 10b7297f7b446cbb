import numpy as np
import pytest

from mnarec.exceptions import TrainingDivergedError
from mnarec.optim import minimize


def quadratic(A, b):
    def f(x):
        return 0.5 * float(x @ A @ x) - float(b @ x), A @ x - b
    return f


def rosenbrock(x):
    f = (1 - x[0]) ** 2 + 100 * (x[1] - x[0] ** 2) ** 2
    g = np.array([-2 * (1 - x[0]) - 400 * x[0] * (x[1] - x[0] ** 2), 200 * (x[1] - x[0] ** 2)])
    return float(f), g


@pytest.mark.parametrize("method", ["lbfgs", "gd"])
def test_quadratic(rng, method):
    M = rng.normal(size=(6, 6))
    A = M @ M.T + 6 * np.eye(6)
    b = rng.normal(size=6)
    res = minimize(quadratic(A, b), np.zeros(6), method=method, max_iter=20000, tol=1e-7)
    assert res.converged
    np.testing.assert_allclose(res.x, np.linalg.solve(A, b), atol=1e-6)


def test_rosenbrock():
    res = minimize(rosenbrock, np.array([-1.2, 1.0]), max_iter=1000, tol=1e-8)
    assert res.converged
    np.testing.assert_allclose(res.x, [1.0, 1.0], atol=1e-6)


def test_monotone_history():
    res = minimize(rosenbrock, np.array([-1.2, 1.0]), max_iter=200)
    assert all(b <= a for a, b in zip(res.history, res.history[1:]))


def test_scale_equivariant_bitwise():
    def scaled(f, k):
        return lambda x: tuple(k * v for v in f(x))
    a = minimize(rosenbrock, np.array([-1.2, 1.0]), max_iter=50, tol=1e-300)
    b = minimize(scaled(rosenbrock, 8.0), np.array([-1.2, 1.0]), max_iter=50, tol=1e-300)
    np.testing.assert_array_equal(a.x, b.x)


def test_non_finite_start():
    with pytest.raises(TrainingDivergedError):
        minimize(lambda x: (float("nan"), x), np.zeros(2))


def test_unknown_method():
    with pytest.raises(ValueError):
        minimize(rosenbrock, np.zeros(2), method="newton")
