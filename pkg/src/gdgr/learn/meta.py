"""First-order meta-learning of a policy initialization over a domain prior.

Every meta-iteration draws ``meta_bsz`` (domain, goal) tasks, adapts a copy
of the parameters to each with ``adapt_steps`` KL-constrained updates, and
moves the shared initialization along the average post-adaptation gradient.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from gdgr.core import ConfigurationError, DomainDistribution, derive_seed, rollout_batch
from gdgr.envs import sample_task
from gdgr.learn.pg import TrainConfig, TrainLog, kl_constrained_step, make_segment, pg_train
from gdgr.learn.policy import PolicyMath, StochasticPolicy, init_policy

TASK_STREAM = (-2,)


@dataclass(frozen=True)
class MetaPolicy:
    policy: StochasticPolicy
    distribution: DomainDistribution
    iterations: int
    provenance: dict = field(default_factory=dict)

    @property
    def params(self) -> np.ndarray:
        return self.policy.params


def _task(dist: DomainDistribution, seed: int, index: int):
    return sample_task(dist, derive_seed(seed, dist.dist_id, TASK_STREAM, index))


def _adapt(math, policy, domain, goal, cfg: TrainConfig, episode_base: int):
    """Inner loop; returns the adapted policy and its post-adaptation segment."""
    goal_t = tuple(np.asarray(goal).ravel().tolist())
    B = cfg.adapt_bsz
    for step in range(cfg.adapt_steps + 1):
        seeds = [derive_seed(cfg.seed, domain.domain_id, goal_t, episode_base + step * B + j) for j in range(B)]
        trajs = rollout_batch(domain, policy, [goal_t] * B, seeds)
        seg = make_segment(math, policy, trajs, cfg.gamma, cfg.baseline_reg)
        if step == cfg.adapt_steps:
            return policy, seg, trajs
        delta, _ = kl_constrained_step(math, [seg], cfg, cfg.adapt_lr)
        policy = policy.with_params(policy.params + delta)


def meta_train(
    dist: DomainDistribution,
    config: TrainConfig,
    log: TrainLog | None = None,
    init: np.ndarray | None = None,
) -> MetaPolicy:
    """Meta-train an initialization for every domain and goal in ``dist``.

    ``log`` records post-adaptation returns per meta-iteration.  With
    ``adapt_steps = 0`` the update is a multi-task policy-gradient step.
    """
    probe, _ = _task(dist, config.seed, 0)
    policy = init_policy(probe.action_space, probe.encoding, config.seed, goal=None, domain_id=None)
    if init is not None:
        policy = policy.with_params(np.asarray(init, dtype=np.float64))
    math = PolicyMath(policy)
    log = log if log is not None else TrainLog()
    per_task = (config.adapt_steps + 1) * config.adapt_bsz
    for it in range(config.iterations):
        segments, batch = [], []
        for k in range(config.meta_bsz):
            index = it * config.meta_bsz + k
            domain, goal = _task(dist, config.seed, index)
            if domain.action_space != probe.action_space or domain.encoding.dim != probe.encoding.dim:
                raise ConfigurationError("domains in the distribution have different state/action dimensions")
            task_policy = policy.with_params(policy.params)
            _, seg, trajs = _adapt(math, _rebind(task_policy, domain), domain, goal, config, index * per_task)
            segments.append(seg)
            batch.extend(trajs)
        delta, info = kl_constrained_step(math, segments, config, config.meta_lr, scale=config.meta_lr)
        if not info["accepted"]:
            log.events.append((it, info["reason"]))
        policy = policy.with_params(policy.params + delta)
        log.record(batch, info)
    meta = policy.with_params(policy.params)
    return MetaPolicy(meta, dist, config.iterations, {"seed": config.seed, "dist_id": dist.dist_id})


def _rebind(policy: StochasticPolicy, domain) -> StochasticPolicy:
    # sampled domains share feature dimensions but may differ in grid size
    return replace(policy, encoding=domain.encoding, domain_id=domain.domain_id)


def fine_tune(meta: MetaPolicy, domain, goal, config: TrainConfig, log: TrainLog | None = None) -> StochasticPolicy:
    """Policy-gradient training on (domain, goal) starting from the meta parameters."""
    if meta.policy.encoding.dim != domain.encoding.dim or meta.policy.action_space != domain.action_space:
        raise ConfigurationError("meta-policy dimensions do not match the domain")
    return pg_train(domain, goal, config, init=meta.params, log=log)
