import numpy as np
import pytest

from gdgr.core import DiscreteActions
from gdgr.envs import GridEncoding, default_grid
from gdgr.learn.policy import tabular_policy

FORWARD = 2


def constant_policy(width, height, action, n_actions=4, sharp=50.0):
    """Tabular policy that (almost) always picks ``action``."""
    q = np.zeros((width * height * 4, n_actions))
    q[:, action] = sharp
    return tabular_policy(q, DiscreteActions(n_actions), GridEncoding(width, height), temperature=1.0)


@pytest.fixture
def grid5():
    return default_grid(5, 5)


@pytest.fixture
def grid9():
    return default_grid(9, 9)
