import numpy as np
import pytest

from consol.local_net import (ACTIVATION, MULTIPLICATION, SUMMATION,
                              TrainConfig, extract_equation, fanout_indicator,
                              three_layer_structure, init_weights)
from consol.q_learning import (DOMAIN_FAILURE_NRMSE, QLearnConfig,
                               ReplayBuffer, SearchSpace, greedy_action,
                               reward_net_update, reward_of, rollout_episode,
                               run_search, three_layer_space, trim_structure)
from consol.search_mdp import (ActionVec, ConstraintConfig, StateVec,
                               Transition, action_from_indicator)
from consol.icnn import init_icnn
from consol.symbols import make_library


LIB2 = make_library(["square", "cos"])


def toy_space():
    """One input, activations {x^2, cos(wx)}, two products, one output; the
    product stage is searched and the output sum is fixed to take product 1."""
    return SearchSpace(LIB2, (1, 2, 1, 1),
                       (ACTIVATION, MULTIPLICATION, SUMMATION),
                       searched_stages=(1,),
                       fixed_indicators={2: np.array([[1]])})


def toy_data(n=200, seed=0):
    rng = np.random.default_rng(seed)
    X = rng.uniform(0.0, 1.0, (n, 1))
    Y = 3.0 * X[:, 0] ** 2 * np.cos(2.5 * X[:, 0])
    return X, Y[:, None]


TOY_CFG = QLearnConfig(max_episodes=15, minibatch_size=8, q_epochs=200,
                       stop_lambda=1e-12, target_update_interval=3,
                       local_train=TrainConfig(epochs=300), promote_epochs=0)


def test_config_validation():
    with pytest.raises(ValueError):
        QLearnConfig(gamma=1.0)
    with pytest.raises(ValueError):
        QLearnConfig(epsilon=1.5)
    with pytest.raises(ValueError):
        QLearnConfig(stop_lambda=0.0)
    with pytest.raises(ValueError):
        QLearnConfig(target_update_interval=0)


def test_space_dimensions():
    sp = toy_space()
    assert sp.n_stages == 3
    assert sp.n_s == 2
    assert sp.n_a == 2  # largest adjacent product: 1*2 and 2*1
    assert sp.q_input_dim == 4
    assert sp.stage_shape(1) == (2, 1)
    assert np.array_equal(sp.indicator_for_fixed(0), fanout_indicator(1, 2))
    assert np.array_equal(sp.indicator_for_fixed(2), [[1]])


def test_space_rejects_unassigned_stage():
    with pytest.raises(ValueError):
        SearchSpace(LIB2, (1, 2, 1, 1),
                    (ACTIVATION, MULTIPLICATION, SUMMATION),
                    searched_stages=(1,))


def test_three_layer_space_defaults():
    sp = three_layer_space(LIB2, 3, 2)
    assert sp.layer_sizes == (3, 6, 6, 2)
    assert sp.searched_stages == (1, 2)


def test_replay_buffer_fifo_ring():
    buf = ReplayBuffer(3, seed=0)
    items = [Transition(StateVec((i,), 0), ActionVec((0.0,)),
                        StateVec((i,), 1), float(i)) for i in range(5)]
    for it in items:
        buf.push(it)
    assert len(buf) == 3
    rewards = {tr.reward for tr in buf._items}
    # items 0 and 1 were overwritten first
    assert rewards == {2.0, 3.0, 4.0}
    sample = buf.sample(10)
    assert len(sample) == 10
    assert all(tr.reward in rewards for tr in sample)


def test_replay_buffer_rejects_zero_capacity():
    with pytest.raises(ValueError):
        ReplayBuffer(0)


def test_greedy_action_is_in_box_and_zero_padded():
    sp = toy_space()
    qnet = init_icnn(sp.q_input_dim, (8, 8), seed=0)
    s = StateVec((1, 1), stage=1)
    a = greedy_action(qnet, sp, s, ConstraintConfig(), 1,
                      np.random.default_rng(0))
    arr = a.as_array()
    assert arr.shape == (2,)
    assert np.all(arr >= 0.0) and np.all(arr <= 1.0)


def test_rollout_episode_returns_valid_structure():
    sp = toy_space()
    qnet = init_icnn(sp.q_input_dim, (8, 8), seed=1)
    out = rollout_episode(qnet, TOY_CFG, sp, toy_data(),
                          ConstraintConfig(max_factors_per_neuron=2),
                          np.random.default_rng(0), t=1)
    assert out.structure.layer_sizes == (1, 2, 1, 1)
    assert 0.0 < out.reward <= 1.0
    assert out.reward == pytest.approx(1.0 / (1.0 + out.nrmse))
    assert len(out.transitions) == 1          # one searched stage
    assert out.transitions[0].a.is_discrete
    assert out.log.t == 1


def test_rollout_domain_failure_reward_is_tiny():
    # sqrt activation on a sign-mixed input: any structure that uses it fails
    lib = make_library(["sqrt"])
    sp = SearchSpace(lib, (1, 1, 1, 1),
                     (ACTIVATION, MULTIPLICATION, SUMMATION),
                     searched_stages=(1,),
                     fixed_indicators={2: np.array([[1]])})
    rng = np.random.default_rng(0)
    X = np.array([[-1.0], [1.0], [-0.5], [0.5]])
    Y = X.copy()
    qnet = init_icnn(sp.q_input_dim, (8, 8), seed=0)
    out = rollout_episode(qnet, TOY_CFG, sp, (X, Y), ConstraintConfig(),
                          rng, t=1)
    assert out.nrmse == DOMAIN_FAILURE_NRMSE
    assert out.reward < 1e-11


def test_reward_net_learns_episode_reward():
    sp = toy_space()
    rnet = init_icnn(sp.q_input_dim, (8, 8), seed=2)
    s0 = StateVec((1, 1), stage=1)
    a = action_from_indicator(np.array([[1], [1]]), sp.n_a)
    s1 = StateVec((2, 0), stage=2)
    tr = [Transition(s0, a, s1, 0.9)]
    cfg = QLearnConfig(r_epochs=400)
    rnet = reward_net_update(rnet, sp, tr, 0.9, cfg)
    assert reward_of(rnet, sp, s0, a) == pytest.approx(0.9, abs=0.05)


def test_run_search_recovers_toy_structure():
    sp = toy_space()
    res = run_search(sp, TOY_CFG, toy_data(),
                     ConstraintConfig(max_factors_per_neuron=2), seed=1)
    assert res.best_nrmse < 1e-3
    z = res.best_structure.indicators[1][:, 0]
    assert z.tolist() == [1, 1]
    eq = extract_equation(res.best_structure, res.best_weights)
    t = eq.outputs[0][0]
    assert t.coefficient == pytest.approx(3.0, abs=1e-2)


def test_run_search_counts_episodes_and_snapshots():
    sp = toy_space()
    cfg = QLearnConfig(max_episodes=4, minibatch_size=4, stop_lambda=1e-12,
                       target_update_interval=2, q_epochs=20, r_epochs=20,
                       local_train=TrainConfig(epochs=40), promote_epochs=0,
                       final_polish_epochs=100)
    res = run_search(sp, cfg, toy_data(80), ConstraintConfig(), seed=0,
                     keep_snapshots=True)
    assert len(res.episodes) <= 4
    names = [n for n, _ in res.icnn_snapshots]
    assert names[0] == "init_q" and names[1] == "init_r"
    assert names[-2:] == ["final_q", "final_r"]


def test_trim_structure_drops_spurious_term():
    # truth y = 3 x^2; structure sums x^2 and cos products
    lib = make_library(["square", "cos"])
    z_mult = np.array([[1, 0], [0, 1]])
    st = three_layer_structure(lib, 1, z_mult, np.array([[1], [1]]))
    rng = np.random.default_rng(0)
    X = rng.uniform(0.5, 1.5, (150, 1))
    Y = 3.0 * X[:, 0:1] ** 2
    cfg = QLearnConfig(final_polish_epochs=400)
    from consol.local_net import fit_snapped
    from consol.metrics import nrmse as _nrmse
    from dataclasses import replace
    w, _ = fit_snapped(st, replace(cfg.local_train, epochs=400), (X, Y))
    import consol.local_net as ln
    score = _nrmse(ln.forward(st, w, X), Y, Y.std(axis=0))
    st2, w2, score2 = trim_structure(st, cfg, (X, Y), w, score)
    assert st2.indicators[2].sum() == 1
    assert st2.indicators[2][0, 0] == 1
    assert score2 <= max(score, cfg.stop_lambda / (1 - cfg.stop_lambda))


def test_trim_structure_keeps_needed_terms():
    lib = make_library(["id", "square"])
    z_mult = np.array([[1, 0], [0, 1], [0, 0], [0, 0]])
    st = three_layer_structure(lib, 2, z_mult, np.array([[1], [1]]))
    rng = np.random.default_rng(1)
    X = rng.uniform(0.5, 1.5, (150, 2))
    Y = (2.0 * X[:, 0] + 1.5 * X[:, 0] ** 2)[:, None]
    cfg = QLearnConfig(final_polish_epochs=400)
    from consol.local_net import fit_snapped
    from consol.metrics import nrmse as _nrmse
    from dataclasses import replace
    import consol.local_net as ln
    w, _ = fit_snapped(st, replace(cfg.local_train, epochs=400), (X, Y))
    score = _nrmse(ln.forward(st, w, X), Y, Y.std(axis=0))
    st2, _, _ = trim_structure(st, cfg, (X, Y), w, score)
    assert np.array_equal(st2.indicators[2], st.indicators[2])
