"""Observation masking, pseudo-policies and the two recognition metrics."""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field

import numpy as np

from gdgr.core import ConfigurationError, DomainError, GDGRError, Trajectory, _fmt, goal_key, make_rng

UNIFORM = "uniform"
PREFIX = "prefix"
MASK_MODES = (UNIFORM, PREFIX)

KL = "kl"
WASSERSTEIN = "wasserstein"

TIE_TOL = 1e-9


@dataclass(frozen=True, eq=False)
class ObservationSequence:
    """Ordered (state, action) pairs cut from one trajectory.

    ``indices`` are the positions of the pairs in the source trajectory.
    """

    states: np.ndarray
    actions: np.ndarray
    indices: np.ndarray
    source_length: int
    observability: float = 1.0
    noise_level: float = 0.0
    mask_mode: str = UNIFORM
    seed: int = 0

    def __len__(self) -> int:
        return len(self.indices)

    @property
    def pairs(self) -> list[tuple]:
        return [(self.states[i], self.actions[i]) for i in range(len(self))]

    def prefix(self, n: int) -> "ObservationSequence":
        """The first ``n`` observed pairs (online recognition)."""
        return ObservationSequence(
            self.states[:n], self.actions[:n], self.indices[:n], self.source_length,
            self.observability, self.noise_level, self.mask_mode, self.seed,
        )

    def to_csv(self) -> str:
        return observations_to_csv(self)


def observed_count(observability: float, length: int) -> int:
    """max(1, round(observability * length)), rounding halves up."""
    return max(1, int(np.floor(observability * length + 0.5)))


def mask(traj: Trajectory, observability: float, mode: str = UNIFORM, rng_seed: int = 0, noise_level: float = 0.0) -> ObservationSequence:
    if not 0.0 < observability <= 1.0:
        raise ConfigurationError("observability must lie in (0, 1]")
    if mode not in MASK_MODES:
        raise ConfigurationError(f"unknown mask mode {mode!r}")
    T = len(traj)
    if T == 0:
        raise DomainError("cannot observe an empty trajectory")
    k = min(T, observed_count(observability, T))
    if mode == PREFIX:
        idx = np.arange(k)
    else:
        idx = np.sort(make_rng(rng_seed).choice(T, size=k, replace=False))
    return ObservationSequence(
        states=np.asarray(traj.states)[idx],
        actions=np.asarray(traj.actions)[idx],
        indices=idx.astype(np.int64),
        source_length=T,
        observability=float(observability),
        noise_level=float(noise_level),
        mask_mode=mode,
        seed=int(rng_seed),
    )


# ---------------------------------------------------------------------------
# pseudo-policy and KL


@dataclass(frozen=True)
class PseudoPolicy:
    """Smoothed empirical action distribution per distinct observed state."""

    table: dict
    n_actions: int
    epsilon: float

    def probs(self, states) -> np.ndarray:
        return np.array([self.table[_state_key(s)] for s in np.asarray(states)])


def _state_key(s) -> bytes:
    a = np.ascontiguousarray(np.asarray(s, dtype=np.float64))
    return a.tobytes()


def build_pseudo_policy(O: ObservationSequence, n_actions: int, epsilon: float = 0.01) -> PseudoPolicy:
    """p(a|s) = (1 - eps) * freq(a|s) + eps / n for every observed state."""
    if not 0.0 <= epsilon < 1.0 / n_actions:
        raise ConfigurationError(f"epsilon must lie in [0, 1/{n_actions})")
    acts = np.asarray(O.actions)
    if acts.ndim != 1 or not np.issubdtype(acts.dtype, np.integer):
        raise ConfigurationError("pseudo-policies need discrete actions; use the Wasserstein metric")
    counts: dict[bytes, np.ndarray] = {}
    for s, a in zip(O.states, acts):
        c = counts.setdefault(_state_key(s), np.zeros(n_actions))
        c[int(a)] += 1.0
    table = {k: (1.0 - epsilon) * c / c.sum() + epsilon / n_actions for k, c in counts.items()}
    return PseudoPolicy(table, n_actions, float(epsilon))


def kl_score(policy, O: ObservationSequence, epsilon: float = 0.01, variant: str = "literal", goal=None) -> float:
    """KL-style distance between ``policy`` and the observations (lower = closer).

    ``literal`` sums pi_g(a_i|s_i) * log(pi_g(a_i|s_i) / pi_O(a_i|s_i)) over the
    observed pairs only; it is not a divergence and can be negative.
    ``full`` sums the complete per-state KL(pi_g || pi_O) over the pairs.
    """
    if epsilon <= 0.0:
        raise ConfigurationError("epsilon must be positive to keep the score finite")
    if variant not in ("literal", "full"):
        raise ConfigurationError(f"unknown KL variant {variant!r}")
    n = policy.action_space.n if policy.action_space.discrete else 0
    if not n:
        raise ConfigurationError("KL recognition needs a discrete action space")
    pseudo = build_pseudo_policy(O, n, epsilon)
    pg = policy.probs(O.states, goal)
    po = pseudo.probs(O.states)
    if variant == "full":
        with np.errstate(divide="ignore", invalid="ignore"):
            terms = np.where(pg > 0, pg * (np.log(pg) - np.log(po)), 0.0)
        return float(terms.sum())
    rows = np.arange(len(O))
    a = np.asarray(O.actions, dtype=np.int64)
    p, q = pg[rows, a], po[rows, a]
    with np.errstate(divide="ignore", invalid="ignore"):
        terms = np.where(p > 0, p * (np.log(p) - np.log(q)), 0.0)
    return float(terms.sum())


# ---------------------------------------------------------------------------
# Wasserstein


def wasserstein_score(O: ObservationSequence, policy, goal=None, n_samples: int = 16, rng_seed: int = 0) -> float:
    """Mean L1 distance between observed actions and actions drawn from the policy.

    ``n_samples = 0`` compares against the Gaussian mean (deterministic mode).
    Policy actions are clipped to the action box, as executed actions are.
    """
    space = policy.action_space
    if space.discrete:
        raise ConfigurationError("the Wasserstein metric needs continuous actions")
    obs = np.asarray(O.actions, dtype=np.float64)
    if obs.ndim != 2 or obs.shape[1] != space.dim:
        raise ConfigurationError(f"observed actions have shape {obs.shape}, policy acts in {space.dim} dims")
    if n_samples < 0:
        raise ConfigurationError("n_samples must be non-negative")
    mean, std = policy.mean_std(O.states, goal)
    lo, hi = np.asarray(space.low), np.asarray(space.high)
    if n_samples == 0:
        return float(np.abs(np.clip(mean, lo, hi) - obs).sum(axis=1).mean())
    z = make_rng(rng_seed).standard_normal((n_samples,) + mean.shape)
    draws = np.clip(mean[None] + std * z, lo, hi)
    return float(np.abs(draws - obs[None]).sum(axis=2).mean())


# ---------------------------------------------------------------------------
# inference


@dataclass(frozen=True)
class RecognitionParams:
    metric: str = KL
    epsilon: float = 0.01
    kl_variant: str = "literal"
    n_samples: int = 16
    seed: int = 0

    def __post_init__(self):
        if self.metric not in (KL, WASSERSTEIN):
            raise ConfigurationError(f"unknown metric {self.metric!r}")


@dataclass(frozen=True)
class RecognitionResult:
    goals: tuple
    scores: tuple  # similarity per goal, aligned with ``goals``
    chosen: tuple
    chosen_index: int
    metric: str
    tie_broken: bool = False
    extra: dict = field(default_factory=dict)

    @property
    def score_map(self) -> dict:
        return {g: s for g, s in zip(self.goals, self.scores)}


def distance(policy, O: ObservationSequence, goal, params: RecognitionParams) -> float:
    if params.metric == KL:
        return kl_score(policy, O, params.epsilon, params.kl_variant, goal=goal)
    return wasserstein_score(O, policy, goal, params.n_samples, params.seed)


def choose(similarities) -> tuple[int, bool]:
    """Argmax with ties (within TIE_TOL of the best) broken by lowest index."""
    s = np.asarray(similarities, dtype=np.float64)
    best = float(np.max(s))
    tied = np.flatnonzero(s >= best - TIE_TOL)
    return int(tied[0]), bool(len(tied) > 1)


def infer_goal(candidates, O: ObservationSequence, params: RecognitionParams | None = None) -> RecognitionResult:
    """Pick the candidate goal whose policy best explains ``O``.

    ``candidates`` maps goal -> policy (or is a sequence of (goal, policy)).
    """
    params = params or RecognitionParams()
    items = list(candidates.items()) if isinstance(candidates, dict) else list(candidates)
    if not items:
        raise GDGRError("goal recognition needs at least one candidate goal")
    goals = tuple(goal_key(g) for g, _ in items)
    sims = tuple(-distance(p, O, np.asarray(g), params) for g, p in items)
    idx, tie = choose(sims)
    return RecognitionResult(goals, sims, goals[idx], idx, params.metric, tie)


# ---------------------------------------------------------------------------
# CSV


def observations_to_csv(O: ObservationSequence) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    buf.write(
        f"# observability={O.observability!r},noise_level={O.noise_level!r},"
        f"mask_mode={O.mask_mode},seed={O.seed},source_length={O.source_length}\n"
    )
    states = np.asarray(O.states)
    actions = np.asarray(O.actions)
    sd = states.shape[1]
    ad = actions.shape[1] if actions.ndim > 1 else 1
    w.writerow(["step_index"] + [f"s{i}" for i in range(sd)] + [f"a{i}" for i in range(ad)])
    for i in range(len(O)):
        w.writerow([int(O.indices[i])] + [_fmt(v) for v in states[i]] + [_fmt(v) for v in np.atleast_1d(actions[i])])
    return buf.getvalue()


def observations_from_csv(text: str) -> ObservationSequence:
    lines = text.splitlines()
    if not lines or not lines[0].startswith("#"):
        raise ConfigurationError("observation file lacks its metadata line")
    meta = dict(kv.split("=", 1) for kv in lines[0][1:].strip().split(","))
    rows = list(csv.reader(lines[1:]))
    header = rows[0]
    sd = sum(1 for h in header if h[:1] == "s" and h[1:].isdigit())
    ad = sum(1 for h in header if h[:1] == "a" and h[1:].isdigit())
    body = [r for r in rows[1:] if r]
    is_int = all("." not in v and "e" not in v.lower() for r in body for v in r[1 + sd :])
    idx = np.array([int(r[0]) for r in body], dtype=np.int64)
    st_int = all("." not in v and "e" not in v.lower() for r in body for v in r[1 : 1 + sd])
    states = np.array([[float(v) for v in r[1 : 1 + sd]] for r in body]).reshape(len(body), sd)
    if st_int:
        states = states.astype(np.int64)
    acts = np.array([[float(v) for v in r[1 + sd :]] for r in body]).reshape(len(body), ad)
    if is_int and ad == 1:
        acts = acts[:, 0].astype(np.int64)
    return ObservationSequence(
        states=states,
        actions=acts,
        indices=idx,
        source_length=int(meta["source_length"]),
        observability=float(meta["observability"]),
        noise_level=float(meta["noise_level"]),
        mask_mode=meta["mask_mode"],
        seed=int(meta["seed"]),
    )
