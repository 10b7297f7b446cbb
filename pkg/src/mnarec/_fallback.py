"""Pure numpy versions of the compiled kernels in ``_kernels.pyx``."""
import numpy as np

_CHUNK_BITS = 16


def mf_objective_grad(users, items, ratings, weights, V, W, a, b, c, lam, loss_code,
                      gV, gW, ga, gb):
    # Divergent iterates overflow silently, as in the compiled kernel; the
    # trainer checks for non-finite values itself.
    with np.errstate(over="ignore", invalid="ignore"):
        return _mf_objective_grad(users, items, ratings, weights, V, W, a, b, c, lam, loss_code,
                                  gV, gW, ga, gb)


def _mf_objective_grad(users, items, ratings, weights, V, W, a, b, c, lam, loss_code,
                       gV, gW, ga, gb):
    pred = np.einsum("ij,ij->i", V[users], W[items]) + a[users] + b[items] + c
    r = pred - ratings
    if loss_code == 0:
        data = np.sum(weights * (r * r))
        coef = 2.0 * r * weights
    else:
        data = np.sum(weights * np.abs(r))
        coef = np.sign(r) * weights
    gV[...] = 0.0
    gW[...] = 0.0
    np.add.at(gV, users, coef[:, None] * W[items])
    np.add.at(gW, items, coef[:, None] * V[users])
    gV += 2.0 * lam * V
    gW += 2.0 * lam * W
    ga[:] = np.bincount(users, weights=coef, minlength=V.shape[0])
    gb[:] = np.bincount(items, weights=coef, minlength=W.shape[0])
    pen = np.sum(V * V) + np.sum(W * W)
    return float(data + lam * pen), float(np.sum(coef))


def _pattern_chunks(n):
    total = 1 << n
    step = 1 << min(n, _CHUNK_BITS)
    bits = np.arange(n, dtype=np.int64)
    for start in range(0, total, step):
        masks = np.arange(start, min(start + step, total), dtype=np.int64)
        yield ((masks[:, None] >> bits) & 1).astype(bool)


def _values(obs, delta, true_p, eval_p, estimator):
    prob = np.prod(np.where(obs, true_p, 1.0 - true_p), axis=1)
    if estimator == 0:
        num = obs @ delta
        den = obs.sum(axis=1).astype(np.float64)
    else:
        num = obs @ (delta / eval_p)
        den = obs @ (1.0 / eval_p)
    if estimator == 1:
        x = num / delta.size
        keep = np.ones(obs.shape[0], dtype=bool)
    else:
        keep = den > 0
        x = np.zeros_like(num)
        x[keep] = num[keep] / den[keep]
    return prob[keep], x[keep]


def enumerate_moments(delta, true_p, eval_p, estimator):
    n = delta.shape[0]
    empty = float(np.prod(1.0 - true_p))
    mean = mass = 0.0
    for obs in _pattern_chunks(n):
        prob, x = _values(obs, delta, true_p, eval_p, estimator)
        mean += float(prob @ x)
        mass += float(prob.sum())
    if mass <= 0.0:
        return float("nan"), float("nan"), empty
    mean /= mass
    var = 0.0
    for obs in _pattern_chunks(n):
        prob, x = _values(obs, delta, true_p, eval_p, estimator)
        var += float(prob @ (x - mean) ** 2)
    return mean, var / mass, empty
