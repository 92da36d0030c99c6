"""Multi-seed structure search on the synthetic benchmarks.

Prints one row per (dataset, seed): wall time, episodes, best reward,
train/test NRMSE, coefficient error against the generator ground truth,
and the recovered equations.

Usage: python scripts/run_syn_benchmarks.py [--which 1] [--seeds 1 2 3 4 5]
                                            [--snr 100] [--episodes 600]
"""

import argparse
import time

import numpy as np

from consol import datasets
from consol.local_net import extract_equation, forward
from consol.metrics import e_c, nrmse
from consol.q_learning import QLearnConfig, run_search, three_layer_space
from consol.search_mdp import ConstraintConfig
from consol.symbols import make_library


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--which", type=int, default=1, choices=(1, 2))
    ap.add_argument("--seeds", type=int, nargs="+", default=[1, 2, 3, 4, 5])
    ap.add_argument("--data-seed", type=int, default=0)
    ap.add_argument("--n", type=int, default=2000)
    ap.add_argument("--snr", type=float, default=None)
    ap.add_argument("--episodes", type=int, default=600)
    ap.add_argument("--show-equations", action="store_true")
    args = ap.parse_args()

    train, test = datasets.gen_syn(args.which, args.n, args.n, args.data_seed)
    if args.snr is not None:
        train = datasets.add_noise(train, args.snr, args.data_seed + 7919)
    truth = datasets.syn_truth(args.which)
    library = make_library(datasets.SYN_LIBRARIES[args.which])
    space = three_layer_space(library, train.X.shape[1], train.Y.shape[1])
    cfg = QLearnConfig(max_episodes=args.episodes)

    print("seed  time  eps  reward   nrmse_tr   nrmse_te   E_c%")
    for seed in args.seeds:
        t0 = time.time()
        res = run_search(space, cfg, train, ConstraintConfig(), seed=seed)
        dt = time.time() - t0
        if res.best_structure is None:
            print(f"{seed:4d}  {dt:4.0f}s  {len(res.episodes):4d}  no structure")
            continue
        eq = extract_equation(res.best_structure, res.best_weights)
        ec, _ = e_c(truth, eq)
        try:
            te = nrmse(forward(res.best_structure, res.best_weights, test.X),
                       test.Y, test.sigma_y)
        except Exception:
            te = np.nan
        print(f"{seed:4d}  {dt:4.0f}s  {len(res.episodes):4d}  "
              f"{res.best_reward:.4f}  {res.best_nrmse:9.3g}  {te:9.3g}  "
              f"{ec:.3f}")
        if args.show_equations:
            print("      " + eq.to_text().replace("\n", "\n      "))


if __name__ == "__main__":
    main()
