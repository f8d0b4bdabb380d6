"""GA-MDP abstractions shared by every other module.

A domain theory owns dynamics and the goal-conditioned reward; policies only
see feature vectors produced by the domain's encoding.  Everything here is
immutable after construction so rollouts can run concurrently.
"""

from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass, field
from typing import Any, Iterable, Sequence

import numpy as np


class GDGRError(Exception):
    """Base class for all package errors."""


class ConfigurationError(GDGRError):
    """Incompatible or malformed configuration (exit code 2 in the CLI)."""


class DomainError(GDGRError):
    """A value falls outside a domain's state, action or goal space."""


class SamplingError(GDGRError):
    """Rejection sampling could not satisfy a distribution's constraints."""


class TrainingError(GDGRError):
    """Training diverged or could not produce a policy (exit code 3)."""


# ---------------------------------------------------------------------------
# hashing and seeds

_FNV_OFFSET = 0xCBF29CE484222325
_FNV_PRIME = 0x100000001B3
_MASK64 = 0xFFFFFFFFFFFFFFFF


def fnv1a64(data: bytes) -> int:
    h = _FNV_OFFSET
    for byte in data:
        h ^= byte
        h = (h * _FNV_PRIME) & _MASK64
    return h


def goal_key(goal: Any, precision: float = 1e-6) -> tuple:
    """Canonical hashable key for a goal point.

    Integer goals are kept exactly; real-valued goals are rounded to
    ``precision`` so that recurrent continuous goals compare equal.
    """
    arr = np.atleast_1d(np.asarray(goal))
    if np.issubdtype(arr.dtype, np.integer):
        return tuple(int(v) for v in arr)
    steps = np.round(arr.astype(np.float64) / precision).astype(np.int64)
    return tuple(round(float(s) * precision, 9) for s in steps)


def _goal_hash(goal: Any) -> int:
    key = goal_key(goal)
    return fnv1a64(repr(key).encode())


def derive_seed(master_seed: int, domain_id: int, goal: Any, episode_index: int) -> int:
    """Seed of one rollout under the RNG contract.

    Each rollout gets its own counter-based stream keyed by
    (master seed, domain, goal, episode index); batched and serial
    collection therefore draw identical numbers.
    """
    ss = np.random.SeedSequence(
        [
            int(master_seed) & _MASK64,
            int(domain_id) & 0xFFFFFFFF,
            (int(domain_id) >> 32) & 0xFFFFFFFF,
            _goal_hash(goal) & 0xFFFFFFFF,
            (_goal_hash(goal) >> 32) & 0xFFFFFFFF,
            int(episode_index),
        ]
    )
    return int(ss.generate_state(2, dtype=np.uint64)[0])


def make_rng(seed: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(int(seed) & _MASK64))


# ---------------------------------------------------------------------------
# spaces


@dataclass(frozen=True)
class DiscreteActions:
    n: int

    def __post_init__(self):
        if self.n < 1:
            raise ConfigurationError("discrete action space needs n >= 1")

    @property
    def dim(self) -> int:
        return 1

    @property
    def discrete(self) -> bool:
        return True

    def contains(self, action) -> bool:
        a = np.asarray(action)
        return bool(np.all((a >= 0) & (a < self.n) & (a == np.round(a))))


@dataclass(frozen=True)
class ContinuousBox:
    low: tuple
    high: tuple

    def __post_init__(self):
        low = np.asarray(self.low, dtype=float)
        high = np.asarray(self.high, dtype=float)
        if low.shape != high.shape or low.ndim != 1:
            raise ConfigurationError("box bounds must be 1-D and equally sized")
        if not np.all(low < high):
            raise ConfigurationError("box requires low < high componentwise")
        object.__setattr__(self, "low", tuple(float(v) for v in low))
        object.__setattr__(self, "high", tuple(float(v) for v in high))

    @property
    def dim(self) -> int:
        return len(self.low)

    @property
    def discrete(self) -> bool:
        return False

    def contains(self, point, tol: float = 1e-12) -> bool:
        p = np.asarray(point, dtype=float)
        return bool(np.all(p >= np.asarray(self.low) - tol) and np.all(p <= np.asarray(self.high) + tol))

    def clip(self, x: np.ndarray) -> np.ndarray:
        return np.clip(x, self.low, self.high)


@dataclass(frozen=True)
class GoalSpace:
    """Either a finite set of goal points or a continuous box."""

    points: tuple | None = None
    box: ContinuousBox | None = None
    success_radius: float = 0.0

    @classmethod
    def discrete(cls, points: Iterable) -> "GoalSpace":
        pts = tuple(tuple(int(v) for v in p) for p in points)
        if not pts:
            raise ConfigurationError("discrete goal set must be non-empty")
        if len(set(pts)) != len(pts):
            raise ConfigurationError("discrete goal set contains duplicates")
        return cls(points=pts)

    @classmethod
    def continuous(cls, low, high, success_radius: float) -> "GoalSpace":
        return cls(box=ContinuousBox(tuple(low), tuple(high)), success_radius=float(success_radius))

    @property
    def is_discrete(self) -> bool:
        return self.points is not None

    @property
    def dim(self) -> int:
        return len(self.points[0]) if self.is_discrete else self.box.dim

    def contains(self, goal) -> bool:
        if self.is_discrete:
            g = np.atleast_1d(np.asarray(goal))
            if g.shape != (self.dim,) or not np.all(g == np.round(g)):
                return False
            return tuple(int(v) for v in g) in set(self.points)
        return self.box.contains(goal)

    def sample(self, rng: np.random.Generator) -> np.ndarray:
        if self.is_discrete:
            return np.asarray(self.points[rng.integers(len(self.points))], dtype=np.int64)
        return rng.uniform(self.box.low, self.box.high)


# ---------------------------------------------------------------------------
# domain theory


class DomainTheory:
    """D = (S, A, tau) plus goal space and achieved-goal projection.

    Subclasses implement batched dynamics.  ``step_batch`` receives the
    per-episode goal because terminal conditions and rewards are
    goal-conditioned; the transition itself never depends on it except for
    termination.
    """

    family: str = "abstract"
    state_dim: int
    action_space: DiscreteActions | ContinuousBox
    goal_space: GoalSpace
    max_steps: int
    state_dtype: Any = np.float64

    @property
    def domain_id(self) -> int:
        return self._domain_id

    def initial_state(self) -> np.ndarray:
        raise NotImplementedError

    def step_batch(self, states: np.ndarray, actions: np.ndarray, goals: np.ndarray, t: int):
        """Advance N episodes one step.

        Returns (next_states, rewards, terminals, successes) where ``t`` is
        the 0-based index of the step being taken.
        """
        raise NotImplementedError

    def achieved_goal(self, states: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def is_valid_state(self, state) -> bool:
        raise NotImplementedError

    @property
    def encoding(self):
        raise NotImplementedError

    def reward_range(self) -> tuple[float, float]:
        raise NotImplementedError

    def check_goal(self, goal) -> None:
        if not self.goal_space.contains(goal):
            raise DomainError(f"goal {np.asarray(goal).tolist()} is outside the goal space")

    def __repr__(self) -> str:
        return f"{type(self).__name__}(domain_id={self.domain_id:#018x})"


@dataclass(frozen=True)
class DomainDistribution:
    """Prior over domain theories (p_D).

    ``family`` is one of ``"grid"``, ``"maze"``, ``"reach"``; ``params`` holds
    the family's parameter ranges (see :func:`gdgr.envs.sample_domain`).
    """

    family: str
    params: dict = field(default_factory=dict)
    seed_policy: str = "per-call"

    def __post_init__(self):
        if self.family not in ("grid", "maze", "reach"):
            raise ConfigurationError(f"unknown domain family {self.family!r}")

    def __hash__(self):
        return hash((self.family, repr(sorted(self.params.items()))))

    def to_dict(self) -> dict:
        return {"family": self.family, "params": _jsonable(self.params)}

    @property
    def dist_id(self) -> int:
        """Stable 64-bit identifier (FNV-1a of the canonical JSON form)."""
        text = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))
        return fnv1a64(text.encode())


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.generic):
        return obj.item()
    return obj


# ---------------------------------------------------------------------------
# trajectories


@dataclass(frozen=True, eq=False)
class Trajectory:
    """One episode.  Arrays are aligned on the step axis.

    ``actions`` holds executed actions (after clamping); ``raw_actions`` the
    pre-clamp policy samples used for likelihood-ratio gradients.
    """

    states: np.ndarray
    actions: np.ndarray
    rewards: np.ndarray
    next_states: np.ndarray
    terminals: np.ndarray
    goal: np.ndarray
    seed: int
    success: bool = False
    raw_actions: np.ndarray | None = None
    noisy: np.ndarray | None = None
    clamped: int = 0

    def __len__(self) -> int:
        return len(self.rewards)

    @property
    def steps(self) -> list[tuple]:
        return [
            (self.states[i], self.actions[i], float(self.rewards[i]), self.next_states[i], bool(self.terminals[i]))
            for i in range(len(self))
        ]

    def identical(self, other: "Trajectory") -> bool:
        """Bitwise equality of every recorded array."""
        pairs = [
            (self.states, other.states),
            (self.actions, other.actions),
            (self.rewards, other.rewards),
            (self.next_states, other.next_states),
            (self.terminals, other.terminals),
            (self.goal, other.goal),
        ]
        return self.seed == other.seed and all(
            a.shape == b.shape and a.dtype == b.dtype and a.tobytes() == b.tobytes() for a, b in pairs
        )

    def to_csv(self) -> str:
        return trajectory_to_csv(self)


def _fmt(v) -> str:
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return repr(float(v))


def trajectory_to_csv(traj: Trajectory) -> str:
    """Serialize a trajectory to the CSV dialect.

    Rows are ``step_index, state..., action..., reward, terminal``.  A final
    row with step_index = T carries the last next_state and empty action,
    reward and terminal fields so the file round-trips.
    """
    states = np.asarray(traj.states)
    actions = np.asarray(traj.actions)
    sd = states.shape[1] if states.ndim > 1 else 1
    ad = actions.shape[1] if actions.ndim > 1 else 1
    header = ["step_index"] + [f"s{i}" for i in range(sd)] + [f"a{i}" for i in range(ad)] + ["reward", "terminal"]
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for i in range(len(traj)):
        s = np.atleast_1d(states[i])
        a = np.atleast_1d(actions[i])
        w.writerow([i] + [_fmt(v) for v in s] + [_fmt(v) for v in a] + [_fmt(traj.rewards[i]), int(traj.terminals[i])])
    if len(traj):
        last = np.atleast_1d(traj.next_states[-1])
        w.writerow([len(traj)] + [_fmt(v) for v in last] + [""] * ad + ["", ""])
    return buf.getvalue()


def trajectory_from_csv(text: str, goal, seed: int = 0, state_dtype=np.float64, action_dtype=np.float64) -> Trajectory:
    rows = list(csv.reader(io.StringIO(text)))
    header = rows[0]
    sd = sum(1 for h in header if h.startswith("s") and h[1:].isdigit())
    ad = sum(1 for h in header if h.startswith("a") and h[1:].isdigit())
    body = [r for r in rows[1:] if r]
    steps = [r for r in body if r[1 + sd] != ""]
    tail = [r for r in body if r[1 + sd] == ""]
    conv_s = int if np.issubdtype(np.dtype(state_dtype), np.integer) else float
    conv_a = int if np.issubdtype(np.dtype(action_dtype), np.integer) else float
    states = np.array([[conv_s(v) for v in r[1 : 1 + sd]] for r in steps], dtype=state_dtype).reshape(len(steps), sd)
    acts = np.array([[conv_a(v) for v in r[1 + sd : 1 + sd + ad]] for r in steps], dtype=action_dtype).reshape(len(steps), ad)
    if ad == 1 and np.issubdtype(np.dtype(action_dtype), np.integer):
        acts = acts[:, 0]
    rewards = np.array([float(r[1 + sd + ad]) for r in steps])
    terms = np.array([r[2 + sd + ad] == "1" for r in steps], dtype=bool)
    if tail:
        final = np.array([conv_s(v) for v in tail[0][1 : 1 + sd]], dtype=state_dtype)
        nxt = np.vstack([states[1:], final[None]]) if len(steps) else np.empty((0, sd), dtype=state_dtype)
    else:
        nxt = states.copy()
    return Trajectory(
        states=states,
        actions=acts,
        rewards=rewards,
        next_states=nxt,
        terminals=terms,
        goal=np.asarray(goal),
        seed=seed,
        success=bool(terms[-1]) if len(terms) else False,
    )


# ---------------------------------------------------------------------------
# rollouts

NOISE_RANDOM = "random"  # noise_level = probability of a uniformly random action
NOISE_POLICY = "policy"  # literal reading: noise_level = probability of the policy action


def _check_compat(domain: DomainTheory, policy) -> None:
    if policy.action_space != domain.action_space:
        raise ConfigurationError(
            f"policy action space {policy.action_space} does not match domain {domain.action_space}"
        )
    if policy.encoding != domain.encoding:
        raise ConfigurationError(
            f"policy input encoding {policy.encoding} does not match domain encoding {domain.encoding}"
        )


def _random_prob(noise_level: float, convention: str) -> float:
    if not 0.0 <= noise_level <= 1.0:
        raise ConfigurationError("noise_level must lie in [0, 1]")
    if convention == NOISE_RANDOM:
        return float(noise_level)
    if convention == NOISE_POLICY:
        return 1.0 - float(noise_level)
    raise ConfigurationError(f"unknown noise convention {convention!r}")


def rollout_batch(
    domain: DomainTheory,
    policy,
    goals: Sequence,
    seeds: Sequence[int],
    noise_level: float = 0.0,
    noise_convention: str = NOISE_RANDOM,
    deterministic: bool = False,
) -> list[Trajectory]:
    """Generate one episode per (goal, seed) pair, stepping them together.

    Every episode pre-draws its random numbers from its own Philox stream,
    so the result for a given (goal, seed) does not depend on which other
    episodes share the batch.
    """
    _check_compat(domain, policy)
    n = len(goals)
    if n == 0:
        return []
    if len(seeds) != n:
        raise ConfigurationError("goals and seeds must have equal length")
    p_rand = _random_prob(noise_level, noise_convention)
    goal_arr = np.asarray([np.asarray(g) for g in goals])
    for g in goal_arr:
        domain.check_goal(g)

    T = domain.max_steps
    space = domain.action_space
    k = space.dim
    coins = np.empty((n, T))
    unif = np.empty((n, T, k))
    normals = np.empty((n, T, k))
    pick = np.empty((n, T))
    for i, s in enumerate(seeds):
        rng = make_rng(s)
        coins[i] = rng.random(T)
        pick[i] = rng.random(T)
        unif[i] = rng.random((T, k))
        normals[i] = rng.standard_normal((T, k))

    s0 = domain.initial_state()
    states = np.repeat(s0[None], n, axis=0)
    alive = np.ones(n, dtype=bool)
    rec_s, rec_a, rec_raw, rec_r, rec_ns, rec_term, rec_noise = ([[] for _ in range(n)] for _ in range(7))
    success = np.zeros(n, dtype=bool)
    clamped = np.zeros(n, dtype=np.int64)

    for t in range(T):
        idx = np.flatnonzero(alive)
        if idx.size == 0:
            break
        st = states[idx]
        gl = goal_arr[idx]
        noisy = coins[idx, t] < p_rand
        if space.discrete:
            probs = policy.probs(st, gl)
            if deterministic:
                pol_a = np.argmax(probs, axis=1)
            else:
                cdf = np.cumsum(probs, axis=1)
                pol_a = (pick[idx, t][:, None] >= cdf[:, :-1]).sum(axis=1)
            rand_a = np.minimum((unif[idx, t, 0] * space.n).astype(np.int64), space.n - 1)
            acts = np.where(noisy, rand_a, pol_a).astype(np.int64)
            raw = acts
            exec_a = acts
        else:
            mean, std = policy.mean_std(st, gl)
            pol_a = mean if deterministic else mean + std * normals[idx, t]
            lo, hi = np.asarray(space.low), np.asarray(space.high)
            rand_a = lo + (hi - lo) * unif[idx, t]
            raw = np.where(noisy[:, None], rand_a, pol_a)
            exec_a = np.clip(raw, lo, hi)
            clamped[idx] += np.any(exec_a != raw, axis=1)
        nxt, rew, term, succ = domain.step_batch(st, exec_a, gl, t)
        for j, e in enumerate(idx):
            rec_s[e].append(st[j])
            rec_a[e].append(exec_a[j])
            rec_raw[e].append(raw[j])
            rec_r[e].append(rew[j])
            rec_ns[e].append(nxt[j])
            rec_term[e].append(term[j])
            rec_noise[e].append(noisy[j])
        states[idx] = nxt
        success[idx] |= succ
        alive[idx] = ~term

    out = []
    adt = np.int64 if space.discrete else np.float64
    for e in range(n):
        m = len(rec_r[e])
        sd = states.shape[1]
        out.append(
            Trajectory(
                states=np.asarray(rec_s[e], dtype=domain.state_dtype).reshape(m, sd),
                actions=np.asarray(rec_a[e], dtype=adt).reshape((m,) if space.discrete else (m, k)),
                rewards=np.asarray(rec_r[e], dtype=np.float64),
                next_states=np.asarray(rec_ns[e], dtype=domain.state_dtype).reshape(m, sd),
                terminals=np.asarray(rec_term[e], dtype=bool),
                goal=goal_arr[e],
                seed=int(seeds[e]),
                success=bool(success[e]),
                raw_actions=np.asarray(rec_raw[e], dtype=adt).reshape((m,) if space.discrete else (m, k)),
                noisy=np.asarray(rec_noise[e], dtype=bool),
                clamped=int(clamped[e]),
            )
        )
    return out


def rollout(
    domain: DomainTheory,
    policy,
    goal,
    rng_seed: int,
    noise_level: float = 0.0,
    noise_convention: str = NOISE_RANDOM,
    deterministic: bool = False,
) -> Trajectory:
    """Single-episode rollout.

    With probability ``noise_level`` each action is drawn uniformly from the
    action space, otherwise from ``policy``.  Deterministic in all inputs.
    """
    return rollout_batch(domain, policy, [goal], [rng_seed], noise_level, noise_convention, deterministic)[0]


def discounted_return(traj: Trajectory, gamma: float) -> float:
    r = np.asarray(traj.rewards, dtype=np.float64)
    if r.size == 0:
        return 0.0
    return float(np.sum(r * gamma ** np.arange(r.size)))


def returns_to_go(rewards: np.ndarray, gamma: float) -> np.ndarray:
    out = np.empty(len(rewards))
    acc = 0.0
    for i in range(len(rewards) - 1, -1, -1):
        acc = rewards[i] + gamma * acc
        out[i] = acc
    return out


def pack_f64(values: np.ndarray) -> bytes:
    arr = np.ascontiguousarray(values, dtype="<f8")
    return arr.tobytes()


def unpack_f64(data: bytes) -> np.ndarray:
    return np.frombuffer(data, dtype="<f8").astype(np.float64)


__all__ = [
    "GDGRError",
    "ConfigurationError",
    "DomainError",
    "SamplingError",
    "TrainingError",
    "fnv1a64",
    "goal_key",
    "derive_seed",
    "make_rng",
    "DiscreteActions",
    "ContinuousBox",
    "GoalSpace",
    "DomainTheory",
    "DomainDistribution",
    "Trajectory",
    "trajectory_to_csv",
    "trajectory_from_csv",
    "rollout",
    "rollout_batch",
    "discounted_return",
    "returns_to_go",
    "NOISE_RANDOM",
    "NOISE_POLICY",
]
