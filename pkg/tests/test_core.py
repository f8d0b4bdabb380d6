from pathlib import Path

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import FORWARD, constant_policy
from gdgr.core import (
    ConfigurationError,
    DomainDistribution,
    DomainError,
    Trajectory,
    derive_seed,
    discounted_return,
    fnv1a64,
    goal_key,
    rollout,
    rollout_batch,
    trajectory_from_csv,
)
from gdgr.envs import default_grid, default_maze, default_reach
from gdgr.learn.policy import init_policy
from gdgr.learn.qlearn import oracle_policy

GOLDEN = Path(__file__).parent / "golden"


def _traj(rewards):
    r = np.asarray(rewards, dtype=float)
    n = len(r)
    return Trajectory(np.zeros((n, 1)), np.zeros(n, dtype=np.int64), r, np.zeros((n, 1)), np.zeros(n, bool), np.zeros(2), 0)


# -- rollout -----------------------------------------------------------------


def test_forward_policy_moves_in_straight_line(grid9):
    pol = constant_policy(9, 9, FORWARD, sharp=1e3)
    traj = rollout(grid9, pol, (7, 1), rng_seed=3, noise_level=0.0)
    xs = traj.next_states[:, 0].tolist()
    assert xs == [2, 3, 4, 5, 6, 7]
    assert set(traj.next_states[:, 1].tolist()) == {1}
    assert traj.success and traj.terminals[-1]


def test_full_noise_gives_uniform_actions(grid9):
    # goal far from a stay-forever policy: episodes run to max_steps
    pol = constant_policy(9, 9, 3, sharp=1e3)
    counts = np.zeros(4)
    seed = 0
    while counts.sum() < 10_000:
        traj = rollout(grid9, pol, (8, 8), rng_seed=seed, noise_level=1.0)
        counts += np.bincount(traj.actions, minlength=4)
        seed += 1
    n = counts.sum()
    sigma = np.sqrt(n * 0.25 * 0.75)
    assert np.all(np.abs(counts - n / 4) <= 3 * sigma)


def test_noisy_rollout_matches_golden_file(grid5):
    pol = oracle_policy(grid5, (4, 3))
    traj = rollout(grid5, pol, (4, 3), rng_seed=20240611, noise_level=0.3)
    assert traj.to_csv() == (GOLDEN / "grid5_noise03.csv").read_text()


def test_rollout_rejects_mismatched_policy(grid5):
    pol = constant_policy(9, 9, FORWARD)
    with pytest.raises(ConfigurationError):
        rollout(grid5, pol, (3, 3), 0)


def test_rollout_rejects_goal_outside_space(grid5):
    pol = constant_policy(5, 5, FORWARD)
    with pytest.raises(DomainError):
        rollout(grid5, pol, (7, 7), 0)


def test_batched_rollouts_equal_serial():
    dom = default_reach()
    pol = init_policy(dom.action_space, dom.encoding, seed=1)
    goals = [np.array([0.1, 0.2, 0.3]), np.array([-0.4, 0.0, 0.2]), np.array([0.5, -0.5, 0.0])]
    seeds = [11, 12, 13]
    batch = rollout_batch(dom, pol, goals, seeds, noise_level=0.2)
    for g, s, b in zip(goals, seeds, batch):
        assert rollout(dom, pol, g, s, noise_level=0.2).identical(b)


def test_trajectory_csv_round_trip(grid5):
    pol = oracle_policy(grid5, (3, 4))
    traj = rollout(grid5, pol, (3, 4), rng_seed=5, noise_level=0.5)
    back = trajectory_from_csv(traj.to_csv(), traj.goal, traj.seed, np.int64, np.int64)
    assert np.array_equal(back.states, traj.states)
    assert np.array_equal(back.actions, traj.actions)
    assert np.array_equal(back.next_states, traj.next_states)
    assert np.array_equal(back.rewards, traj.rewards)
    assert np.array_equal(back.terminals, traj.terminals)


def test_trajectory_csv_header_and_dialect():
    dom = default_maze()
    pol = init_policy(dom.action_space, dom.encoding, seed=0)
    text = rollout(dom, pol, (1, 3), 0).to_csv()
    assert text.splitlines()[0] == "step_index,s0,s1,s2,s3,a0,a1,reward,terminal"
    assert "\r" not in text


# -- discounted return -------------------------------------------------------


def test_discounted_return_zero():
    assert discounted_return(_traj([0.0, 0.0, 0.0]), 0.9) == 0.0


def test_discounted_return_two_ones():
    assert discounted_return(_traj([1.0, 1.0]), 0.5) == 1.5


def test_discounted_return_maze_sparse():
    rewards = [-1.0] * 19 + [0.0]
    expected = 0.0
    for t, r in enumerate(rewards):
        expected += r * 0.95**t
    assert discounted_return(_traj(rewards), 0.95) == pytest.approx(expected, rel=1e-12)


# -- identifiers and seeds ---------------------------------------------------


def test_fnv1a64_reference_values():
    assert fnv1a64(b"") == 0xCBF29CE484222325
    assert fnv1a64(b"a") == 0xAF63DC4C8601EC8C


def test_goal_key_rounds_continuous_goals():
    assert goal_key((1, 2)) == (1, 2)
    assert goal_key(np.array([0.1 + 1e-9, 0.2])) == goal_key(np.array([0.1, 0.2]))


def test_derive_seed_separates_streams():
    a = derive_seed(0, 1, (1, 1), 0)
    assert a == derive_seed(0, 1, (1, 1), 0)
    assert len({a, derive_seed(1, 1, (1, 1), 0), derive_seed(0, 2, (1, 1), 0), derive_seed(0, 1, (1, 2), 0), derive_seed(0, 1, (1, 1), 1)}) == 5


def test_distribution_id_is_stable():
    d1 = DomainDistribution("grid", {"lava_count": (0, 4)})
    d2 = DomainDistribution("grid", {"lava_count": [0, 4]})
    assert d1.dist_id == d2.dist_id
    assert d1.dist_id != DomainDistribution("grid", {"lava_count": (0, 3)}).dist_id


# -- properties --------------------------------------------------------------


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), noise=st.floats(0, 1), gx=st.integers(0, 4), gy=st.integers(0, 4))
def test_rollout_determinism_and_chaining(seed, noise, gx, gy):
    dom = default_grid(5, 5)
    if (gx, gy) == (1, 1):
        gx = 0
    pol = oracle_policy(dom, (gx, gy))
    a = rollout(dom, pol, (gx, gy), seed, noise)
    b = rollout(dom, pol, (gx, gy), seed, noise)
    assert a.identical(b)
    assert np.array_equal(a.next_states[:-1], a.states[1:])
    assert a.terminals[:-1].sum() == 0
    assert len(a) <= dom.max_steps


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), noise=st.floats(0, 1), gamma=st.floats(0.0, 0.99))
def test_return_bounds_reach(seed, noise, gamma):
    dom = default_reach()
    pol = init_policy(dom.action_space, dom.encoding, seed=seed % 7)
    traj = rollout(dom, pol, np.array([0.3, -0.2, 0.1]), seed, noise)
    rmin, rmax = dom.reward_range()
    g = discounted_return(traj, gamma)
    horizon = sum(gamma**t for t in range(len(traj)))
    assert rmin * horizon - 1e-9 <= g <= rmax * horizon + 1e-9
