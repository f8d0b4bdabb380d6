"""KL-constrained policy-gradient training (single goal and goal-conditioned).

One update: collect a batch, fit the value baseline, form normalized
advantages, compute a search direction (plain gradient, or natural gradient
by conjugate gradients on exact Fisher-vector products) and backtrack along
it until the batch KL(old || new) is within ``max_kl`` and the surrogate
objective has not decreased.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from gdgr.core import (
    ConfigurationError,
    DomainTheory,
    TrainingError,
    derive_seed,
    make_rng,
    returns_to_go,
    rollout_batch,
)
from gdgr.learn.baseline import ValueBaseline
from gdgr.learn.policy import PolicyMath, StochasticPolicy, init_policy

logger = logging.getLogger(__name__)

GC_GOAL_STREAM = (-1,)


@dataclass
class TrainConfig:
    lr: float = 0.01
    batch_size: int = 20
    gamma: float = 0.99
    max_kl: float = 0.01
    backtrack_factor: float = 0.5
    ls_max_steps: int = 15
    iterations: int = 100
    seed: int = 0
    direction: str = "gradient"
    step_rule: str = "trust_region"
    cg_iters: int = 10
    cg_damping: float = 0.1
    plateau_window: int = 20
    plateau_tol: float = 0.01
    baseline_reg: float = 1e-2
    # meta-learning extension
    adapt_lr: float = 0.01
    adapt_steps: int = 3
    adapt_bsz: int = 5
    meta_bsz: int = 5
    meta_lr: float = 1.0
    # tabular Q-learning
    q_alpha: float = 0.5
    q_epsilon: float = 0.1
    q_gamma: float = 0.9
    temperature: float = 0.1

    def __post_init__(self):
        positive = ("lr", "batch_size", "max_kl", "backtrack_factor", "ls_max_steps", "adapt_lr", "adapt_bsz", "meta_bsz", "meta_lr", "temperature")
        for name in positive:
            if not getattr(self, name) > 0:
                raise ConfigurationError(f"{name} must be positive")
        if self.iterations < 0 or self.adapt_steps < 0:
            raise ConfigurationError("iteration counts must be non-negative")
        if not 0.0 < self.max_kl < 1.0:
            raise ConfigurationError("max_kl must lie in (0, 1)")
        if not 0.0 <= self.gamma <= 1.0:
            raise ConfigurationError("gamma must lie in [0, 1]")
        if self.direction not in ("gradient", "natural"):
            raise ConfigurationError(f"unknown direction {self.direction!r}")
        if self.step_rule not in ("trust_region", "lr"):
            raise ConfigurationError(f"unknown step rule {self.step_rule!r}")

    def replace(self, **kw) -> "TrainConfig":
        return TrainConfig(**{**self.__dict__, **kw})


@dataclass
class TrainLog:
    """Per-iteration training record."""

    returns: list = field(default_factory=list)
    returns_std: list = field(default_factory=list)
    success: list = field(default_factory=list)
    kls: list = field(default_factory=list)
    steps: list = field(default_factory=list)
    events: list = field(default_factory=list)
    iterations: int = 0
    episodes: int = 0
    stopped_early: bool = False

    def record(self, trajs, info):
        totals = [t.rewards.sum() for t in trajs]
        self.returns.append(float(np.mean(totals)))
        self.returns_std.append(float(np.std(totals)))
        self.success.append(float(np.mean([t.success for t in trajs])))
        self.kls.append(info.get("kl"))
        self.steps.append(info.get("step", 0.0))
        self.episodes += len(trajs)
        self.iterations += 1


@dataclass
class Segment:
    """A batch anchored at the parameters that collected it."""

    params: np.ndarray
    X: np.ndarray
    A: np.ndarray
    adv: np.ndarray
    old_dist: object
    old_logp: np.ndarray


def advantages(trajs, features, gamma: float, reg: float, normalize: bool = True):
    """Returns-to-go minus a freshly fitted baseline, optionally standardized."""
    rets = np.concatenate([returns_to_go(t.rewards, gamma) for t in trajs])
    tfrac = np.concatenate([np.arange(len(t)) for t in trajs]) / max(1, max(len(t) for t in trajs))
    phi = ValueBaseline.features(features, tfrac)
    base = ValueBaseline(reg).fit(phi, rets)
    adv = rets - base.predict(phi)
    if normalize:
        adv = adv - adv.mean()
        sd = adv.std()
        adv = adv / sd if sd > 1e-8 else np.zeros_like(adv)
    return adv, rets


def make_segment(math: PolicyMath, policy: StochasticPolicy, trajs, gamma: float, reg: float) -> Segment:
    states = np.concatenate([t.states for t in trajs])
    goals = np.concatenate([np.repeat(np.asarray(t.goal)[None], len(t), axis=0) for t in trajs])
    X = policy.encoding.features(states, goals)
    A = np.concatenate([t.raw_actions for t in trajs])
    adv, _ = advantages(trajs, X, gamma, reg)
    dist, _ = math.dist(policy.params, X)
    return Segment(policy.params.copy(), X, A, adv, dist, math.log_prob(dist, A))


def _conjugate_gradient(fvp, b, iters, tol=1e-10):
    x = np.zeros_like(b)
    r = b.copy()
    p = b.copy()
    rr = r @ r
    for _ in range(iters):
        Ap = fvp(p)
        alpha = rr / (p @ Ap)
        x += alpha * p
        r -= alpha * Ap
        rr_new = r @ r
        if rr_new < tol:
            break
        p = r + (rr_new / rr) * p
        rr = rr_new
    return x


def kl_constrained_step(math: PolicyMath, segments, cfg: TrainConfig, lr: float, scale: float = 1.0):
    """Shared parameter increment for all segments plus diagnostics.

    The direction is the mean over segments of each segment's mean
    advantage-weighted score; with one segment this is a plain policy
    gradient step, with several it is the first-order multi-task (or
    post-adaptation meta) step.
    """
    g = np.zeros(math.n_params)
    for s in segments:
        g += math.grad_log_prob(s.params, s.X, s.A, s.adv / len(s.adv))
    g /= len(segments)
    if not np.all(np.isfinite(g)):
        raise TrainingError(f"non-finite policy gradient (norm={np.linalg.norm(g)})")
    zero = np.zeros(math.n_params)
    if not np.any(g):
        return zero, {"accepted": True, "kl": 0.0, "step": 0.0, "reason": "zero-gradient"}

    caches = [math.dist(s.params, s.X) for s in segments]

    def fvp(v):
        out = np.zeros_like(v)
        for s, c in zip(segments, caches):
            out += math.fisher_vp(s.params, s.X, v, cache=c)
        return out / len(segments)

    if cfg.direction == "natural":
        d = _conjugate_gradient(lambda v: fvp(v) + cfg.cg_damping * v, g, cfg.cg_iters)
    else:
        d = g
    shs = float(d @ fvp(d))
    if not np.isfinite(shs):
        raise TrainingError("non-finite curvature along the search direction")
    if cfg.step_rule == "trust_region":
        if shs <= 0.0:
            return zero, {"accepted": False, "kl": None, "step": 0.0, "reason": "flat-curvature"}
        alpha = scale * np.sqrt(2.0 * cfg.max_kl / shs)
    else:
        alpha = lr * scale

    surr_old = float(np.mean([s.adv.mean() for s in segments]))
    for _ in range(cfg.ls_max_steps):
        kls, surrs = [], []
        for s in segments:
            new_params = s.params + alpha * d
            nd, _ = math.dist(new_params, s.X)
            kls.append(math.kl(s.old_dist, nd).mean())
            ratio = np.exp(math.log_prob(nd, s.A) - s.old_logp)
            surrs.append(np.mean(ratio * s.adv))
        kl, surr = float(np.mean(kls)), float(np.mean(surrs))
        if np.isfinite(kl) and kl <= cfg.max_kl and surr >= surr_old:
            return alpha * d, {"accepted": True, "kl": kl, "step": float(alpha), "improve": surr - surr_old}
        alpha *= cfg.backtrack_factor
    return zero, {"accepted": False, "kl": None, "step": 0.0, "reason": "line-search-exhausted"}


def _plateaued(returns, window, tol) -> bool:
    if window <= 0 or len(returns) < 2 * window:
        return False
    prev = float(np.mean(returns[-2 * window : -window]))
    cur = float(np.mean(returns[-window:]))
    return cur - prev < tol * abs(prev)


def _check_policy(domain: DomainTheory, policy: StochasticPolicy):
    if policy.flavor == "tabular":
        raise ConfigurationError("policy-gradient training needs an MLP policy")
    if policy.action_space != domain.action_space or policy.encoding != domain.encoding:
        raise ConfigurationError("policy flavor/dimensions do not match the domain")


def pg_train(
    domain: DomainTheory,
    goal,
    config: TrainConfig,
    init: np.ndarray | StochasticPolicy | None = None,
    log: TrainLog | None = None,
) -> StochasticPolicy:
    """Train a goal-directed policy from scratch or from ``init``."""
    domain.check_goal(goal)
    goal_t = tuple(np.asarray(goal).ravel().tolist())
    policy = init_policy(domain.action_space, domain.encoding, config.seed, goal=goal_t, domain_id=domain.domain_id)
    if init is not None:
        params = init.params if isinstance(init, StochasticPolicy) else np.asarray(init, dtype=np.float64)
        if params.size != policy.n_params:
            raise ConfigurationError("init parameter vector does not match the architecture")
        policy = policy.with_params(params)
    _check_policy(domain, policy)
    math = PolicyMath(policy)
    log = log if log is not None else TrainLog()
    B = config.batch_size
    for it in range(config.iterations):
        seeds = [derive_seed(config.seed, domain.domain_id, goal_t, it * B + j) for j in range(B)]
        trajs = rollout_batch(domain, policy, [goal_t] * B, seeds)
        seg = make_segment(math, policy, trajs, config.gamma, config.baseline_reg)
        delta, info = kl_constrained_step(math, [seg], config, config.lr)
        if not info["accepted"]:
            log.events.append((it, info["reason"]))
            _logger_skip(it, info)
        policy = policy.with_params(policy.params + delta)
        log.record(trajs, info)
        if _plateaued(log.returns, config.plateau_window, config.plateau_tol):
            log.stopped_early = True
            break
    return policy


def gc_train(
    domain: DomainTheory,
    config: TrainConfig,
    goal_sampler=None,
    init: np.ndarray | None = None,
    log: TrainLog | None = None,
) -> StochasticPolicy:
    """Goal-conditioned training: every episode draws a fresh goal from p_g."""
    sampler = goal_sampler or domain.goal_space.sample
    policy = init_policy(domain.action_space, domain.encoding, config.seed, goal_conditioned=True, domain_id=domain.domain_id)
    if init is not None:
        policy = policy.with_params(np.asarray(init, dtype=np.float64))
    _check_policy(domain, policy)
    math = PolicyMath(policy)
    log = log if log is not None else TrainLog()
    B = config.batch_size
    for it in range(config.iterations):
        grng = make_rng(derive_seed(config.seed, domain.domain_id, GC_GOAL_STREAM, it))
        goals = [np.asarray(sampler(grng)) for _ in range(B)]
        for g in goals:
            domain.check_goal(g)
        seeds = [derive_seed(config.seed, domain.domain_id, g, it * B + j) for j, g in enumerate(goals)]
        trajs = rollout_batch(domain, policy, goals, seeds)
        seg = make_segment(math, policy, trajs, config.gamma, config.baseline_reg)
        delta, info = kl_constrained_step(math, [seg], config, config.lr)
        if not info["accepted"]:
            log.events.append((it, info["reason"]))
            _logger_skip(it, info)
        policy = policy.with_params(policy.params + delta)
        log.record(trajs, info)
        if _plateaued(log.returns, config.plateau_window, config.plateau_tol):
            log.stopped_early = True
            break
    return policy


def _logger_skip(it, info):
    logger.debug("iteration %d: update skipped (%s)", it, info.get("reason"))


def evaluate(domain: DomainTheory, policy: StochasticPolicy, goals, seed: int = 0, deterministic: bool = False):
    """Success rate and mean return over one episode per goal."""
    goals = list(goals)
    seeds = [derive_seed(seed, domain.domain_id, g, i) for i, g in enumerate(goals)]
    trajs = rollout_batch(domain, policy, goals, seeds, deterministic=deterministic)
    return float(np.mean([t.success for t in trajs])), float(np.mean([t.rewards.sum() for t in trajs]))
