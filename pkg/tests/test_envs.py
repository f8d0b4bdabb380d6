import json
from collections import deque

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from gdgr.core import DomainDistribution, SamplingError
from gdgr.envs import (
    EAST,
    FORWARD,
    NORTH,
    WEST,
    GridSpec,
    MazeSpec,
    ReachSpec,
    cell_centre,
    default_maze,
    grid_reward,
    grid_step,
    load_spec,
    make_domain,
    maze_reward,
    maze_step,
    reach_reward,
    reach_step,
    sample_domain,
    save_spec,
)

# -- grid --------------------------------------------------------------------


def test_grid_forward_east():
    spec = GridSpec()
    assert grid_step(spec, (1, 1, EAST), FORWARD, goal=(7, 7)) == ((2, 1, EAST), False, False)


def test_grid_wall_blocks_forward():
    spec = GridSpec()
    assert grid_step(spec, (0, 4, WEST), FORWARD, goal=(7, 7)) == ((0, 4, WEST), False, False)


def test_grid_lava_terminates_unsuccessfully():
    spec = GridSpec(lava_cells=frozenset({(3, 2)}))
    state, term, ok = grid_step(spec, (3, 3, NORTH), FORWARD, goal=(7, 7))
    assert state == (3, 2, NORTH) and term and not ok


def test_grid_turns():
    spec = GridSpec()
    assert grid_step(spec, (2, 2, NORTH), 0, goal=(7, 7))[0] == (2, 2, WEST)
    assert grid_step(spec, (2, 2, WEST), 1, goal=(7, 7))[0] == (2, 2, NORTH)
    assert grid_step(spec, (2, 2, WEST), 3, goal=(7, 7))[0] == (2, 2, WEST)


def test_grid_reward_examples():
    spec = GridSpec(max_steps=100)
    assert grid_reward(spec, 10, True) == pytest.approx(0.91)
    assert grid_reward(spec, 37, False) == 0.0
    assert grid_reward(spec, 100, True) == pytest.approx(0.1)


def test_grid_domain_step_reward_matches_formula():
    dom = make_domain(GridSpec(max_steps=50))
    s = np.array([[6, 7, EAST]])
    nxt, r, term, succ = dom.step_batch(s, np.array([FORWARD]), np.array([[7, 7]]), t=9)
    assert term[0] and succ[0]
    assert r[0] == grid_reward(dom.spec, 10, True)


@settings(max_examples=1000, deadline=None)
@given(max_steps=st.integers(1, 10_000), frac=st.floats(0, 1), ok=st.booleans())
def test_grid_reward_formula_property(max_steps, frac, ok):
    step = int(frac * max_steps)
    spec = GridSpec(width=2, height=2, max_steps=max_steps)
    expected = 1 - 0.9 * (step / max_steps) if ok else 0.0
    assert grid_reward(spec, step, ok) == expected


def _bfs(spec, goal):
    sx, sy, _ = spec.start
    seen, q = {(sx, sy)}, deque([(sx, sy)])
    while q:
        x, y = q.popleft()
        if (x, y) == tuple(goal):
            return True
        for dx, dy in ((1, 0), (-1, 0), (0, 1), (0, -1)):
            n = (x + dx, y + dy)
            if 0 <= n[0] < spec.width and 0 <= n[1] < spec.height and n not in spec.lava_cells and n not in seen:
                seen.add(n)
                q.append(n)
    return False


def test_grid_family_without_lava_is_empty():
    dist = DomainDistribution("grid", {"lava_count": (0, 0)})
    for seed in range(20):
        assert sample_domain(dist, seed).spec.lava_cells == frozenset()


@settings(max_examples=100, deadline=None)
@given(seed=st.integers(0, 2**63 - 1))
def test_sampled_grids_reach_every_goal(seed):
    dom = sample_domain(DomainDistribution("grid", {"lava_count": (0, 4)}), seed)
    assert len(dom.spec.lava_cells) <= 4
    assert all(_bfs(dom.spec, g) for g in dom.spec.goal_cells)


def test_sampling_is_deterministic():
    dist = DomainDistribution("grid", {"lava_count": (0, 4)})
    assert sample_domain(dist, 42).domain_id == sample_domain(dist, 42).domain_id
    mdist = DomainDistribution("maze", {"size": (6, 9)})
    assert sample_domain(mdist, 42).domain_id == sample_domain(mdist, 42).domain_id


def test_over_constrained_grid_raises():
    # a 2x1 strip whose only non-start cell is always lava leaves no goal
    dist = DomainDistribution("grid", {"width": 2, "height": 1, "lava_count": (1, 1), "start": (0, 0, "E")})
    with pytest.raises(SamplingError):
        sample_domain(dist, 0)


# -- maze --------------------------------------------------------------------


def test_maze_zero_force_is_identity():
    spec = MazeSpec()
    s = np.array([2.5, 2.5, 0.0, 0.0])
    nxt, term, _ = maze_step(spec, s, (0.0, 0.0), goal=(8, 8))
    assert np.array_equal(nxt, s) and not term


def test_maze_force_update_equations():
    spec = MazeSpec()
    f = 0.7
    nxt, _, _ = maze_step(spec, np.array([2.5, 2.5, 0.0, 0.0]), (f, 0.0), goal=(8, 8))
    vel = (1 - spec.damping) * 0.0 + spec.dt * f
    assert nxt[2] == pytest.approx(vel, abs=1e-15)
    assert nxt[0] == pytest.approx(2.5 + spec.dt * vel, abs=1e-15)
    assert nxt[1] == 2.5 and nxt[3] == 0.0


def test_maze_force_is_clamped_and_flagged():
    spec = MazeSpec()
    a, _, clamped = maze_step(spec, np.array([2.5, 2.5, 0.0, 0.0]), (5.0, 0.0), goal=(8, 8))
    b, _, _ = maze_step(spec, np.array([2.5, 2.5, 0.0, 0.0]), (1.0, 0.0), goal=(8, 8))
    assert clamped and np.array_equal(a, b)


def test_maze_near_goal_terminates():
    spec = MazeSpec()
    centre = cell_centre((2, 3))
    _, term, _ = maze_step(spec, np.array([centre[0] - 0.4, centre[1], 0.0, 0.0]), (0.0, 0.0), goal=(2, 3))
    assert term


def test_maze_reward_examples():
    spec = MazeSpec()
    c = cell_centre((2, 3))
    assert maze_reward(spec, np.array([c[0] + 2.0, c[1]]), (2, 3)) == -1.0
    assert maze_reward(spec, np.array([c[0] + 0.49, c[1]]), (2, 3)) == 0.0
    assert maze_reward(spec, np.array([c[0] + 0.5, c[1]]), (2, 3)) == -1.0


def test_maze_family_sizes_and_goals():
    dist = DomainDistribution("maze", {"size": (6, 9), "obstacles": (0, 4)})
    for seed in range(200):
        dom = sample_domain(dist, seed)
        assert 6 <= dom.spec.size <= 9
        assert all(dom.spec.free(r, c) for r, c in dom.spec.goal_cells)


def test_maze_containment_random_steps():
    dom = default_maze()
    rng = np.random.default_rng(0)
    states = np.tile(dom.initial_state(), (50, 1))
    walls = dom.spec.walls()
    for t in range(200):
        acts = rng.uniform(-1, 1, (50, 2))
        states, _, _, _ = dom.step_batch(states, acts, np.tile([[9, 9]], (50, 1)), t)
        rows, cols = np.floor(states[:, 1]).astype(int), np.floor(states[:, 0]).astype(int)
        assert not walls[rows, cols].any()


# -- reach -------------------------------------------------------------------


def test_reach_at_goal():
    spec = ReachSpec()
    g = np.array([0.2, 0.1, -0.3])
    nxt, r, term = reach_step(spec, g, np.zeros(3), g)
    assert r == 0.0 and term


def test_reach_reward_distance():
    assert reach_reward(ReachSpec(), np.array([1.25, 0.0, 0.0]), np.zeros(3)) == -1.25


def test_reach_rewards_track_distance():
    spec = ReachSpec()
    rng = np.random.default_rng(3)
    goal = rng.uniform(-0.6, 0.6, 3)
    s = np.zeros(3)
    for _ in range(100):
        a = rng.uniform(-1, 1, 3)
        s, r, _ = reach_step(spec, s, a, goal)
        assert r == pytest.approx(-np.sqrt(np.sum((s - goal) ** 2)), abs=1e-12)
        assert np.all(s >= -1) and np.all(s <= 1)


# -- serialization -----------------------------------------------------------


@pytest.mark.parametrize("spec", [GridSpec(lava_cells=frozenset({(4, 4)})), MazeSpec(), ReachSpec()])
def test_spec_round_trip_preserves_domain_id(tmp_path, spec):
    path = tmp_path / "spec.json"
    save_spec(spec, path)
    back = load_spec(path)
    assert make_domain(back).domain_id == make_domain(spec).domain_id
    assert json.loads(path.read_text())["family"] == spec.to_dict()["family"]


def test_task_goal_restrictions():
    from gdgr.envs import sample_task

    dist = DomainDistribution("grid", {"lava_count": (0, 0), "task_goals": [(7, 7), (1, 7)]})
    assert {tuple(sample_task(dist, s)[1]) for s in range(40)} == {(7, 7), (1, 7)}
    held = DomainDistribution("grid", {"lava_count": (0, 4), "holdout_goals": [(7, 7)]})
    assert all(tuple(sample_task(held, s)[1]) != (7, 7) for s in range(300))
