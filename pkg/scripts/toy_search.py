"""Small-space search diagnostics.

Two experiments on tiny problems where everything can be checked by hand:

  convergence: search only the multiplication stage of a 1-input toy
    (library {x^2, cos}); report for several seeds how many episodes the
    run takes and whether the greedy decode of the learned Q-network picks
    the true connection pattern.

  oracle: a 2-input desk problem whose whole structure space (10 valid
    patterns) is enumerable; fit every structure, rank by reward, and
    compare the Q-network's greedy choice against the enumeration winner.

Usage: python scripts/toy_search.py {convergence,oracle} [--seeds 1 2 3 4 5]
"""

import argparse
import itertools
import time

import numpy as np

from consol.local_net import (ACTIVATION, MULTIPLICATION, SUMMATION,
                              TrainConfig)
from consol.q_learning import (QLearnConfig, SearchSpace, _fit_and_score,
                               run_search)
from consol.search_mdp import (ConstraintConfig, action_from_indicator,
                               check_constraints, initial_state, transition)
from consol.icnn import icnn_forward
from consol.symbols import make_library


def q_greedy_discrete(qnet, space, constraints, used_next):
    """Argmax of Q over all constraint-valid discrete actions at stage 1."""
    n_k, n_k1 = space.stage_shape(1)
    s = initial_state(space.layer_sizes[0], space.n_s)
    a0 = action_from_indicator(space.indicator_for_fixed(0), space.n_a)
    s = transition(s, a0, *space.stage_shape(0))
    best, best_q = None, -np.inf
    for bits in itertools.product((0, 1), repeat=n_k * n_k1):
        Z = np.array(bits).reshape(n_k, n_k1)
        a = action_from_indicator(Z, space.n_a)
        if not check_constraints(s, a, constraints, 1, MULTIPLICATION,
                                 n_k, n_k1, used_next=used_next):
            continue
        q = -icnn_forward(qnet, s.as_array(), a.as_array())
        if q > best_q:
            best, best_q = bits, q
    return best


def convergence(seeds):
    lib = make_library(["square", "cos"])
    space = SearchSpace(lib, (1, 2, 1, 1),
                        (ACTIVATION, MULTIPLICATION, SUMMATION),
                        searched_stages=(1,),
                        fixed_indicators={2: np.array([[1]])})
    rng = np.random.default_rng(0)
    X = rng.uniform(0.0, 1.0, (200, 1))
    Y = (3.0 * X[:, 0] ** 2 * np.cos(2.5 * X[:, 0]))[:, None]
    cfg = QLearnConfig(max_episodes=15, minibatch_size=8, q_epochs=200,
                       stop_lambda=1e-12, target_update_interval=3,
                       local_train=TrainConfig(epochs=300), promote_epochs=0)
    constraints = ConstraintConfig(max_factors_per_neuron=2)
    print("seed  eps  greedy  true")
    for seed in seeds:
        res = run_search(space, cfg, (X, Y), constraints, seed=seed)
        pick = q_greedy_discrete(res.qnet, space, constraints,
                                 used_next=np.array([True]))
        print(f"{seed:4d}  {len(res.episodes):3d}  {pick}  (1, 1)")


def oracle(seeds):
    lib = make_library(["square", "cos"])
    space = SearchSpace(lib, (2, 4, 1, 1),
                        (ACTIVATION, MULTIPLICATION, SUMMATION),
                        searched_stages=(1,),
                        fixed_indicators={2: np.array([[1]])})
    rng = np.random.default_rng(0)
    X = rng.uniform(0.0, 1.0, (200, 2))
    clean = 3.0 * X[:, 0] ** 2 * np.cos(2.5 * X[:, 1])
    Y = (clean + rng.normal(0.0, 0.05 * clean.std(), clean.shape))[:, None]
    constraints = ConstraintConfig(max_factors_per_neuron=2)
    cfg = QLearnConfig(max_episodes=150, minibatch_size=8, q_epochs=200,
                       target_update_interval=3,
                       local_train=TrainConfig(epochs=300), promote_epochs=0)

    # exhaustive enumeration of the 4-bit stage under the same constraints
    from consol.local_net import fanout_indicator, make_structure
    s = initial_state(2, space.n_s)
    s = transition(s, action_from_indicator(space.indicator_for_fixed(0),
                                            space.n_a), *space.stage_shape(0))
    ranked = []
    for bits in itertools.product((0, 1), repeat=4):
        Z = np.array(bits).reshape(4, 1)
        a = action_from_indicator(Z, space.n_a)
        if not check_constraints(s, a, constraints, 1, MULTIPLICATION, 4, 1,
                                 used_next=np.array([True])):
            continue
        st = make_structure(lib, space.layer_sizes, space.layer_kinds,
                            (fanout_indicator(2, 2), Z, np.array([[1]])))
        _, score = _fit_and_score(st, cfg, X, Y, Y.std(axis=0))
        ranked.append((1.0 / (1.0 + score), bits))
    ranked.sort(reverse=True)
    print(f"{len(ranked)} valid structures; top 3 by reward:")
    for r, bits in ranked[:3]:
        print(f"  R {r:.4f}  {bits}")
    winner = ranked[0][1]

    print("\nseed  eps  greedy            matches")
    for seed in seeds:
        t0 = time.time()
        res = run_search(space, cfg, (X, Y), constraints, seed=seed)
        pick = q_greedy_discrete(res.qnet, space, constraints,
                                 used_next=np.array([True]))
        print(f"{seed:4d}  {len(res.episodes):3d}  {pick}  "
              f"{pick == winner}  ({time.time()-t0:.0f}s)")


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("mode", choices=("convergence", "oracle"))
    ap.add_argument("--seeds", type=int, nargs="+", default=[1, 2, 3, 4, 5])
    args = ap.parse_args()
    if args.mode == "convergence":
        convergence(args.seeds)
    else:
        oracle(args.seeds)


if __name__ == "__main__":
    main()
