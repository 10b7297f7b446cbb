"""Time the compiled kernels against the numpy fallback.

Usage::

    python3 benchmarks/bench_kernels.py [--repeat 5] [--users 944 --items 1683 --rank 20]

Prints one line per kernel with the best-of-``repeat`` wall time for each
backend, the speedup and the largest absolute difference between outputs.
"""
import argparse
import time

import numpy as np

from mnarec._backend import implementations


def best_time(fn, repeat):
    times = []
    for _ in range(repeat):
        start = time.perf_counter()
        out = fn()
        times.append(time.perf_counter() - start)
    return min(times), out


def mf_case(n_users, n_items, rank, density, seed):
    rng = np.random.default_rng(seed)
    n = int(density * n_users * n_items)
    flat = rng.choice(n_users * n_items, size=n, replace=False)
    users, items = np.divmod(flat.astype(np.int64), n_items)
    ratings = rng.integers(1, 6, size=n).astype(np.float64)
    weights = 1.0 / rng.uniform(0.01, 0.5, size=n)
    V = rng.normal(scale=0.1, size=(n_users, rank))
    W = rng.normal(scale=0.1, size=(n_items, rank))
    a, b = rng.normal(size=n_users), rng.normal(size=n_items)

    def call(module, loss_code):
        gV, gW = np.empty_like(V), np.empty_like(W)
        ga, gb = np.empty_like(a), np.empty_like(b)
        f, gc = module.mf_objective_grad(users, items, ratings, weights, V, W, a, b, 3.0, 0.5,
                                         loss_code, gV, gW, ga, gb)
        return np.concatenate([[f, gc], gV.ravel(), gW.ravel(), ga, gb])

    return call


def enum_case(cells, seed):
    rng = np.random.default_rng(seed)
    delta = rng.uniform(0, 4, size=cells)
    tp = rng.uniform(0.1, 0.9, size=cells)
    ep = rng.uniform(0.1, 0.9, size=cells)

    def call(module, estimator):
        return np.array(module.enumerate_moments(delta, tp, ep, estimator))

    return call


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--repeat", type=int, default=5)
    parser.add_argument("--users", type=int, default=944)
    parser.add_argument("--items", type=int, default=1683)
    parser.add_argument("--rank", type=int, default=20)
    parser.add_argument("--density", type=float, default=0.05)
    parser.add_argument("--cells", type=int, default=16)
    parser.add_argument("--seed", type=int, default=0)
    args = parser.parse_args()

    impls = implementations()
    if "cython" not in impls:
        print("compiled kernels not built; only the fallback is available")
    mf = mf_case(args.users, args.items, args.rank, args.density, args.seed)
    enum = enum_case(args.cells, args.seed)
    cases = [
        (f"mf_objective_grad mse {args.users}x{args.items} d={args.rank}", mf, 0),
        (f"mf_objective_grad mae {args.users}x{args.items} d={args.rank}", mf, 1),
        (f"enumerate_moments ips {args.cells} cells", enum, 1),
        (f"enumerate_moments snips {args.cells} cells", enum, 2),
    ]
    for label, case, code in cases:
        results = {name: best_time(lambda m=module: case(m, code), args.repeat)
                   for name, module in impls.items()}
        line = [f"{label:<45}"]
        for name, (seconds, _) in results.items():
            line.append(f"{name} {seconds * 1e3:9.2f} ms")
        if len(results) == 2:
            (tp, op), (tc, oc) = results["python"], results["cython"]
            line.append(f"speedup {tp / tc:6.1f}x")
            line.append(f"max diff {np.max(np.abs(op - oc)):.1e}")
        print("  ".join(line))


if __name__ == "__main__":
    main()
