"""Convexity verification on a real search run.

Runs the structure search on noiseless Syn1 with snapshots enabled, then
segment-tests every saved Q/R network (the negated networks must be convex
by construction) and reports the violation counts.

Usage: python scripts/convexity_report.py [--seed 4] [--triples 10000]
"""

import argparse
import time

import numpy as np

from consol import datasets
from consol.convexity_probe import segment_convexity_test
from consol.icnn import icnn_forward
from consol.q_learning import QLearnConfig, run_search, three_layer_space
from consol.search_mdp import ConstraintConfig
from consol.symbols import make_library


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--seed", type=int, default=4)
    ap.add_argument("--triples", type=int, default=10_000)
    ap.add_argument("--tol", type=float, default=1e-9)
    args = ap.parse_args()

    train, _ = datasets.gen_syn(1, 2000, 2000, 0)
    library = make_library(datasets.SYN_LIBRARIES[1])
    space = three_layer_space(library, 3, 3)
    t0 = time.time()
    res = run_search(space, QLearnConfig(), train, ConstraintConfig(),
                     seed=args.seed, keep_snapshots=True)
    print(f"search: {time.time()-t0:.0f}s, {len(res.episodes)} episodes, "
          f"best reward {res.best_reward:.4f}")

    d = space.q_input_dim
    total = 0
    for label, params in res.icnn_snapshots:
        v = segment_convexity_test(lambda u: icnn_forward(params, u),
                                   np.zeros(d), np.ones(d),
                                   args.triples, args.tol, seed=0)
        total += v
        print(f"  {label:12s} violations {v}")
    print(f"total violations: {total}")


if __name__ == "__main__":
    main()
