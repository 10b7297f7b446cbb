"""Regenerate the bundled 50 x 80 demo rating files.

``demo_train.tsv`` holds self-selected ratings revealed more often when high;
``demo_test.tsv`` holds ratings of cells chosen uniformly at random. Both use
raw ids (users from 101, items from 5001) and a timestamp column, like the
MovieLens ``u.data`` layout.
"""
import argparse
from pathlib import Path

import numpy as np

from mnarec.experiments import ExperimentSpec, build_ground_truth
from mnarec.synthdata import ObservationModelConfig, observation_propensities, sample_observations

DEMO_MARGINAL = (0.06, 0.11, 0.27, 0.35, 0.21)


def write_triplets(path, users, items, ratings, rng):
    stamps = 880000000 + rng.integers(0, 10_000_000, size=len(users))
    with open(path, "w") as fh:
        for u, i, r, t in zip(users, items, ratings, stamps):
            fh.write(f"{101 + u}\t{5001 + i}\t{int(r)}\t{t}\n")


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--out-dir", default=Path(__file__).resolve().parents[1] / "src" / "mnarec" / "data")
    parser.add_argument("--seed", type=int, default=2016)
    args = parser.parse_args()
    out = Path(args.out_dir)
    spec = ExperimentSpec(seed=args.seed, n_users=50, n_items=80, marginal=DEMO_MARGINAL, completion_rank=5)
    truth = build_ground_truth(spec)
    rng = np.random.default_rng(args.seed)
    props = observation_propensities(truth, ObservationModelConfig(alpha=0.25, target_fraction=0.15))
    train = sample_observations(truth, props, rng.integers(2**32))
    write_triplets(out / "demo_train.tsv", train.users, train.items, train.ratings, rng)
    # ten uniformly chosen items per user
    users = np.repeat(np.arange(truth.n_users), 10)
    items = np.concatenate([rng.choice(truth.n_items, 10, replace=False) for _ in range(truth.n_users)])
    write_triplets(out / "demo_test.tsv", users, items, truth.values[users, items], rng)
    print(f"train: {len(train)} ratings, test: {len(users)} ratings")


if __name__ == "__main__":
    main()
