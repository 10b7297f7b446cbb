"""Parity between the compiled kernels and the numpy fallback."""
import numpy as np
import pytest

from mnarec import _backend, _fallback

IMPLS = _backend.implementations()
needs_ext = pytest.mark.skipif("cython" not in IMPLS, reason="compiled extension not built")


def mf_inputs(rng, U=7, I=9, d=3, n=30):
    cells = rng.choice(U * I, size=n, replace=False)
    users, items = np.divmod(cells, I)
    return dict(users=users.astype(np.int64), items=items.astype(np.int64),
                ratings=rng.integers(1, 6, size=n).astype(float), weights=rng.uniform(1, 10, size=n),
                V=rng.normal(size=(U, d)), W=rng.normal(size=(I, d)), a=rng.normal(size=U),
                b=rng.normal(size=I), c=3.0)


def run_mf(mod, inp, lam, code):
    U, d = inp["V"].shape
    I = inp["W"].shape[0]
    gV, gW, ga, gb = np.zeros((U, d)), np.zeros((I, d)), np.zeros(U), np.zeros(I)
    obj, gc = mod.mf_objective_grad(inp["users"], inp["items"], inp["ratings"], inp["weights"], inp["V"],
                                    inp["W"], inp["a"], inp["b"], inp["c"], lam, code, gV, gW, ga, gb)
    return obj, gc, gV, gW, ga, gb


@needs_ext
@pytest.mark.parametrize("code", [0, 1])
def test_mf_kernel_parity(rng, code):
    inp = mf_inputs(rng)
    ref = run_mf(_fallback, inp, 0.3, code)
    fast = run_mf(IMPLS["cython"], inp, 0.3, code)
    for r, f in zip(ref, fast):
        np.testing.assert_allclose(f, r, rtol=1e-12, atol=1e-12)


@needs_ext
@pytest.mark.parametrize("estimator", [0, 1, 2])
def test_enumeration_parity(rng, estimator):
    delta = rng.uniform(0, 5, size=12)
    P = rng.uniform(0.1, 0.9, size=12)
    Q = rng.uniform(0.1, 0.9, size=12)
    ref = _fallback.enumerate_moments(delta, P, Q, estimator)
    fast = IMPLS["cython"].enumerate_moments(delta, P, Q, estimator)
    np.testing.assert_allclose(fast, ref, rtol=1e-11, atol=1e-14)


def test_backend_selected():
    assert _backend.BACKEND in IMPLS
