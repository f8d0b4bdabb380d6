"""The compiled kernels and their pure-Python twins must agree bit for bit."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from gdgr import _kernels_py as py
from gdgr.envs import four_rooms_layout, open_layout

ck = pytest.importorskip("gdgr._ckernels")


@settings(max_examples=25, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), gx=st.integers(0, 6), gy=st.integers(0, 6), n_lava=st.integers(0, 4))
def test_qlearn_backends_identical(seed, gx, gy, n_lava):
    rng = np.random.default_rng(seed)
    w = h = 7
    lava = np.zeros((h, w), dtype=np.uint8)
    for _ in range(n_lava):
        x, y = rng.integers(0, 7, 2)
        if (x, y) not in ((1, 1), (gx, gy)):
            lava[y, x] = 1
    if (gx, gy) == (1, 1):
        gx = 0
    u = rng.random((16, 40, 3))
    qa = np.zeros((w * h * 4, 4))
    qb = np.zeros((w * h * 4, 4))
    ra = ck.qlearn_grid(qa, lava, w, h, 1, 1, 1, gx, gy, 40, 0.5, 0.9, 0.1, u)
    rb = py.qlearn_grid(qb, lava, w, h, 1, 1, 1, gx, gy, 40, 0.5, 0.9, 0.1, u)
    assert qa.tobytes() == qb.tobytes()
    assert all(np.array_equal(a, b) for a, b in zip(ra, rb))


@settings(max_examples=25, deadline=None)
@given(gx=st.integers(0, 8), gy=st.integers(0, 8), gamma=st.floats(0.5, 0.99))
def test_value_iteration_backends_identical(gx, gy, gamma):
    lava = np.zeros((9, 9), dtype=np.uint8)
    lava[4, 3] = lava[2, 6] = 1
    if lava[gy, gx]:
        gx = 0
    qa, ia = ck.grid_value_iteration(lava, 9, 9, gx, gy, gamma, 1e-12, 10_000)
    qb, ib = py.grid_value_iteration(lava, 9, 9, gx, gy, gamma, 1e-12, 10_000)
    assert np.asarray(qa).tobytes() == np.asarray(qb).tobytes() and ia == ib


@settings(max_examples=25, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), four_rooms=st.booleans())
def test_maze_step_backends_identical(seed, four_rooms):
    rng = np.random.default_rng(seed)
    walls = (four_rooms_layout(11) if four_rooms else open_layout(8)).astype(np.uint8)
    free = np.argwhere(walls == 0)
    cells = free[rng.integers(len(free), size=64)]
    states = np.column_stack([cells[:, 1] + rng.random(64), cells[:, 0] + rng.random(64), rng.normal(0, 2, (64, 2))])
    force = rng.uniform(-1, 1, (64, 2))
    for _ in range(30):
        a = ck.maze_step(np.ascontiguousarray(states), force, walls, 0.1, 0.1)
        b = py.maze_step(np.ascontiguousarray(states), force, walls, 0.1, 0.1)
        assert np.asarray(a).tobytes() == np.asarray(b).tobytes()
        states = np.asarray(a)
