import math

import numpy as np
import pytest
from hypothesis import assume, given, settings
from hypothesis import strategies as st

from gdgr.core import ConfigurationError, DiscreteActions, DomainError, GDGRError, Trajectory, rollout
from gdgr.envs import GridEncoding, GridSpec, default_grid, default_maze, make_domain
from gdgr.learn.policy import MLP, init_policy, tabular_policy
from gdgr.learn.qlearn import oracle_policy, value_iteration
from gdgr.recognize import (
    KL,
    PREFIX,
    UNIFORM,
    WASSERSTEIN,
    ObservationSequence,
    RecognitionParams,
    build_pseudo_policy,
    choose,
    infer_goal,
    kl_score,
    mask,
    observations_from_csv,
    observations_to_csv,
    wasserstein_score,
)


def _traj(T, sd=3, seed=0):
    rng = np.random.default_rng(seed)
    s = rng.integers(0, 9, (T, sd))
    a = rng.integers(0, 4, T)
    return Trajectory(s, a, np.zeros(T), s, np.zeros(T, bool), np.zeros(2), seed)


def _obs(states, actions):
    states = np.asarray(states)
    return ObservationSequence(states, np.asarray(actions), np.arange(len(states)), len(states))


def _fixed_tabular(probs_row):
    """Tabular policy on a 2x2 grid whose every row equals ``probs_row``."""
    enc = GridEncoding(2, 2)
    q = np.tile(np.log(np.asarray(probs_row, dtype=float)), (enc.n_states, 1))
    return tabular_policy(q, DiscreteActions(len(probs_row)), enc, temperature=1.0)


# -- mask --------------------------------------------------------------------


def test_full_observability_keeps_everything():
    t = _traj(12)
    O = mask(t, 1.0, UNIFORM, 3)
    assert np.array_equal(O.indices, np.arange(12))
    assert np.array_equal(O.states, t.states) and np.array_equal(O.actions, t.actions)


def test_thirty_percent_of_ten():
    O = mask(_traj(10), 0.3, UNIFORM, 5)
    assert len(O) == 3 and np.all(np.diff(O.indices) > 0)


def test_rounding_rule_keeps_two_of_two_hundred():
    assert len(mask(_traj(200), 0.01, UNIFORM, 1)) == 2
    assert len(mask(_traj(20), 0.01, UNIFORM, 1)) == 1
    assert len(mask(_traj(5), 0.5, UNIFORM, 1)) == 3  # 2.5 rounds up


def test_prefix_mode():
    O = mask(_traj(10), 0.4, PREFIX, 9)
    assert O.indices.tolist() == [0, 1, 2, 3]


def test_mask_rejects_empty_and_bad_levels():
    with pytest.raises(DomainError):
        mask(_traj(0), 0.5)
    with pytest.raises(ConfigurationError):
        mask(_traj(5), 0.0)


@settings(max_examples=1000, deadline=None)
@given(T=st.integers(1, 300), obs=st.floats(0.001, 1.0), seed=st.integers(0, 2**32 - 1), prefix=st.booleans())
def test_mask_order_cardinality_and_integrity(T, obs, seed, prefix):
    t = _traj(T, seed=seed % 97)
    O = mask(t, obs, PREFIX if prefix else UNIFORM, seed)
    assert len(O) == min(T, max(1, math.floor(obs * T + 0.5)))
    assert np.all(np.diff(O.indices) > 0)
    assert np.array_equal(O.states, t.states[O.indices])
    assert np.array_equal(O.actions, t.actions[O.indices])
    again = mask(t, obs, PREFIX if prefix else UNIFORM, seed)
    assert np.array_equal(O.indices, again.indices)


# -- pseudo-policy -----------------------------------------------------------


def test_pseudo_policy_single_pair():
    pp = build_pseudo_policy(_obs([[0, 0, 0]], [0]), 4, 0.04)
    assert np.allclose(pp.probs([[0, 0, 0]])[0], [0.97, 0.01, 0.01, 0.01], rtol=0, atol=1e-15)


def test_pseudo_policy_empirical_frequencies():
    pp = build_pseudo_policy(_obs([[1, 1, 1], [1, 1, 1]], [0, 1]), 4, 0.0)
    assert pp.probs([[1, 1, 1]])[0].tolist() == [0.5, 0.5, 0.0, 0.0]


def test_pseudo_policy_rejects_continuous_actions():
    with pytest.raises(ConfigurationError):
        build_pseudo_policy(_obs([[0.0, 0.0]], [[0.5, 0.1]]), 4, 0.01)


@settings(max_examples=1000, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), n=st.integers(1, 40), eps=st.floats(0.0, 0.249))
def test_pseudo_policy_rows_sum_to_one(seed, n, eps):
    rng = np.random.default_rng(seed)
    O = _obs(rng.integers(0, 3, (n, 2)), rng.integers(0, 4, n))
    pp = build_pseudo_policy(O, 4, eps)
    for row in pp.table.values():
        assert abs(row.sum() - 1.0) <= 1e-12 and np.all(row >= 0)


# -- KL ----------------------------------------------------------------------


def test_kl_literal_zero_when_arguments_match():
    pol = _fixed_tabular([0.97, 0.01, 0.01, 0.01])
    assert abs(kl_score(pol, _obs([[0, 0, 0]], [0]), 0.04)) < 1e-15


def test_kl_literal_single_term():
    pol = _fixed_tabular([0.9, 0.05, 0.03, 0.02])
    got = kl_score(pol, _obs([[0, 0, 0]], [0]), 0.04)
    assert got == pytest.approx(0.9 * math.log(0.9 / 0.97), rel=1e-12)
    assert got == pytest.approx(-0.0675, abs=1e-4)


def test_kl_requires_positive_epsilon():
    with pytest.raises(ConfigurationError):
        kl_score(_fixed_tabular([0.25] * 4), _obs([[0, 0, 0]], [0]), 0.0)


def test_full_kl_is_non_negative():
    rng = np.random.default_rng(0)
    for _ in range(200):
        p = rng.dirichlet(np.ones(4))
        O = _obs(rng.integers(0, 2, (5, 3)), rng.integers(0, 4, 5))
        assert kl_score(_fixed_tabular(p), O, 0.01, variant="full") >= -1e-12


def test_kl_picks_expert_goal_among_four_on_5x5():
    dom = default_grid(5, 5)
    goals = [(0, 0), (4, 4), (4, 0), (0, 4)]
    true = 1
    traj = rollout(dom, oracle_policy(dom, goals[true]), goals[true], 17, deterministic=True)
    O = mask(traj, 0.3, UNIFORM, 4)
    params = RecognitionParams(metric=KL, kl_variant="full")
    res = infer_goal([(g, oracle_policy(dom, g)) for g in goals], O, params)
    assert res.chosen_index == true
    # the oracle policies agree with exhaustive value iteration on every observed state
    for g in goals:
        Q = value_iteration(dom, g)[dom.encoding.index(O.states)]
        p = oracle_policy(dom, g).probs(O.states, g)
        assert np.array_equal(p.argmax(axis=1), Q.argmax(axis=1))


def _distinguishable(dom, goals, true, traj):
    acts = traj.actions
    for j, g in enumerate(goals):
        if j == true:
            continue
        Q = value_iteration(dom, g)[dom.encoding.index(traj.states)]
        optimal = Q >= Q.max(axis=1, keepdims=True) - 1e-12
        if optimal[np.arange(len(acts)), acts].all():
            return False
    return True


@settings(max_examples=150, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), n_lava=st.integers(0, 4), n_goals=st.integers(2, 4), data=st.data())
def test_oracle_recognition_full_observability(seed, n_lava, n_goals, data):
    rng = np.random.default_rng(seed)
    free = [(x, y) for x in range(5) for y in range(5) if (x, y) != (1, 1)]
    lava = {free[i] for i in rng.choice(len(free), n_lava, replace=False)}
    spec = GridSpec(5, 5, lava_cells=frozenset(lava))
    dom = make_domain(spec)
    from gdgr.envs import grid_reachable

    reach = grid_reachable(spec)
    cells = [c for c in spec.goal_cells if c in reach]
    assume(len(cells) >= n_goals)
    goals = [cells[i] for i in rng.choice(len(cells), n_goals, replace=False)]
    true = data.draw(st.integers(0, n_goals - 1))
    traj = rollout(dom, oracle_policy(dom, goals[true]), goals[true], seed, deterministic=True)
    assume(_distinguishable(dom, goals, true, traj))
    O = mask(traj, 1.0)
    res = infer_goal([(g, oracle_policy(dom, g)) for g in goals], O, RecognitionParams(kl_variant="full"))
    assert res.chosen_index == true


# -- Wasserstein -------------------------------------------------------------


def _constant_gaussian(dom, action, log_std):
    pol = init_policy(dom.action_space, dom.encoding, 0)
    net = MLP(dom.encoding.dim, dom.action_space.dim)
    theta = np.zeros(net.n_params)
    theta[-dom.action_space.dim :] = action  # output bias
    return pol.with_params(np.concatenate([theta, np.full(dom.action_space.dim, log_std)]))


def test_wasserstein_zero_for_matching_deterministic_policy():
    dom = default_maze()
    pol = _constant_gaussian(dom, [0.2, -0.3], 0.0)
    O = _obs(np.tile([[2.5, 2.5, 0.0, 0.0]], (5, 1)), np.tile([[0.2, -0.3]], (5, 1)))
    assert wasserstein_score(O, pol, goal=(3, 3), n_samples=0) == 0.0


def test_wasserstein_l1_example():
    dom = default_maze()
    pol = _constant_gaussian(dom, [0.0, 0.0], 0.0)
    O = _obs([[2.5, 2.5, 0.0, 0.0]], [[1.0, 0.0]])
    assert wasserstein_score(O, pol, goal=(3, 3), n_samples=0) == 1.0


def test_wasserstein_folded_normal_limit():
    dom = default_maze()
    sigma = 0.1
    pol = _constant_gaussian(dom, [0.2, -0.3], math.log(sigma))
    O = _obs([[2.5, 2.5, 0.0, 0.0]], [[0.2, -0.3]])
    got = wasserstein_score(O, pol, goal=(3, 3), n_samples=10_000, rng_seed=1)
    expected = 2 * sigma * math.sqrt(2 / math.pi)  # two action dimensions
    assert got == pytest.approx(expected, rel=0.05)


def test_wasserstein_rejects_dimension_mismatch():
    dom = default_maze()
    pol = _constant_gaussian(dom, [0.0, 0.0], 0.0)
    with pytest.raises(ConfigurationError):
        wasserstein_score(_obs([[2.5, 2.5, 0, 0]], [[1.0, 0.0, 0.0]]), pol, goal=(3, 3))


@settings(max_examples=200, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), n=st.integers(1, 10), exact=st.booleans())
def test_wasserstein_zero_iff_match(seed, n, exact):
    rng = np.random.default_rng(seed)
    dom = default_maze()
    a = rng.uniform(-0.9, 0.9, 2)
    pol = _constant_gaussian(dom, a, 0.0)
    acts = np.tile(a, (n, 1))
    if not exact:
        acts[rng.integers(n)] += rng.uniform(0.01, 0.1, 2)
    O = _obs(rng.uniform(1, 9, (n, 4)), acts)
    score = wasserstein_score(O, pol, goal=(3, 3), n_samples=0)
    assert score >= 0
    assert (score == 0.0) == exact
    assert wasserstein_score(O, pol, goal=(3, 3), n_samples=8, rng_seed=seed) > 0
    assert wasserstein_score(O, pol, (3, 3), 8, seed) == wasserstein_score(O, pol, (3, 3), 8, seed)


# -- inference ---------------------------------------------------------------


def test_single_candidate():
    dom = default_grid(5, 5)
    O = mask(rollout(dom, oracle_policy(dom, (3, 3)), (3, 3), 0), 1.0)
    res = infer_goal({(3, 3): oracle_policy(dom, (3, 3))}, O)
    assert res.chosen == (3, 3) and not res.tie_broken


def test_identical_policies_tie_to_first():
    dom = default_grid(5, 5)
    pol = oracle_policy(dom, (3, 3))
    O = mask(rollout(dom, pol, (3, 3), 0), 1.0)
    res = infer_goal([((4, 4), pol), ((3, 3), pol)], O)
    assert res.tie_broken and res.chosen_index == 0 and res.chosen == (4, 4)


def test_empty_candidates_error():
    with pytest.raises(GDGRError):
        infer_goal({}, _obs([[0, 0, 0]], [0]))


@settings(max_examples=300, deadline=None)
@given(scores=st.lists(st.floats(-1e6, 1e6), min_size=1, max_size=8), c=st.floats(-1e3, 1e3))
def test_argmax_invariant_to_constant_shift(scores, c):
    idx, _ = choose(scores)
    shifted, _ = choose([s + c for s in scores])
    s = np.asarray(scores)
    # shifting can only merge or split near-ties within rounding of c
    if np.sort(s)[-1] - (np.sort(s)[-2] if len(s) > 1 else -np.inf) > 1e-6:
        assert shifted == idx


def test_observation_csv_round_trip():
    dom = default_maze()
    pol = init_policy(dom.action_space, dom.encoding, 0)
    O = mask(rollout(dom, pol, (3, 3), 2, noise_level=0.3), 0.1, UNIFORM, 8, noise_level=0.3)
    text = observations_to_csv(O)
    assert text.startswith("# observability=0.1,noise_level=0.3,mask_mode=uniform,seed=8,")
    back = observations_from_csv(text)
    assert np.array_equal(back.states, O.states) and np.array_equal(back.actions, O.actions)
    assert np.array_equal(back.indices, O.indices) and back.source_length == O.source_length


def test_prefix_of_observations():
    O = mask(_traj(20), 0.5, UNIFORM, 1)
    p = O.prefix(3)
    assert len(p) == 3 and np.array_equal(p.indices, O.indices[:3])


def test_metric_names():
    assert RecognitionParams(metric=WASSERSTEIN).metric == "wasserstein"
    with pytest.raises(ConfigurationError):
        RecognitionParams(metric="cosine")
