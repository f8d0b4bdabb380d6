"""Tabular Q-learning on grid domains, plus a value-iteration oracle."""

from __future__ import annotations

import numpy as np

from gdgr import kernels
from gdgr.core import ConfigurationError, derive_seed, make_rng
from gdgr.learn.pg import TrainConfig, TrainLog
from gdgr.learn.policy import StochasticPolicy, tabular_policy

EPISODE_CHUNK = 64


def _grid_args(domain, goal):
    if not domain.action_space.discrete or getattr(domain, "family", None) != "grid":
        raise ConfigurationError("tabular Q-learning needs a discrete grid domain")
    domain.check_goal(goal)
    spec = domain.spec
    gx, gy = (int(v) for v in np.asarray(goal).ravel())
    return spec, gx, gy


def q_learn(domain, goal, config: TrainConfig, log: TrainLog | None = None, q_init=None) -> StochasticPolicy:
    """One-step epsilon-greedy Q-learning; ``config.iterations`` is the episode budget.

    The exported policy is a softmax over Q at ``config.temperature``.
    """
    spec, gx, gy = _grid_args(domain, goal)
    goal_t = (gx, gy)
    n_states = domain.encoding.n_states
    q = np.zeros((n_states, 4)) if q_init is None else np.array(q_init, dtype=np.float64).reshape(n_states, 4)
    lava = spec.lava_array()
    sx, sy, sd = spec.start
    rng = make_rng(derive_seed(config.seed, domain.domain_id, goal_t, 0))
    done = 0
    while done < config.iterations:
        n = min(EPISODE_CHUNK, config.iterations - done)
        u = rng.random((n, spec.max_steps, 3))
        lengths, succ = kernels.qlearn_grid(
            q, lava, spec.width, spec.height, sx, sy, sd, gx, gy, spec.max_steps,
            config.q_alpha, config.q_gamma, config.q_epsilon, u,
        )
        if log is not None:
            for length, ok in zip(lengths, succ):
                r = 1.0 - 0.9 * length / spec.max_steps if ok else 0.0
                log.returns.append(float(r))
                log.returns_std.append(0.0)
                log.success.append(float(ok))
                log.episodes += 1
                log.iterations += 1
        done += n
    return tabular_policy(q, domain.action_space, domain.encoding, config.temperature, goal=goal_t, domain_id=domain.domain_id)


def value_iteration(domain, goal, gamma: float = 0.9, tol: float = 1e-12, max_iter: int = 10_000) -> np.ndarray:
    """Optimal Q-table for reaching ``goal`` (reward 1 on arrival, 0 elsewhere)."""
    spec, gx, gy = _grid_args(domain, goal)
    Q, _ = kernels.grid_value_iteration(spec.lava_array(), spec.width, spec.height, gx, gy, gamma, tol, max_iter)
    return Q


def oracle_policy(domain, goal, gamma: float = 0.9, temperature: float = 0.1) -> StochasticPolicy:
    Q = value_iteration(domain, goal, gamma)
    g = tuple(int(v) for v in np.asarray(goal).ravel())
    return tabular_policy(Q, domain.action_space, domain.encoding, temperature, goal=g, domain_id=domain.domain_id)


def softmax_rows(q: np.ndarray, temperature: float) -> np.ndarray:
    z = np.asarray(q, dtype=np.float64) / temperature
    z = z - z.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)
