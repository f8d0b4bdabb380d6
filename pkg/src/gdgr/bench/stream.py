"""Experiment configuration and GDGR stream generation."""

from __future__ import annotations

import json
from dataclasses import dataclass, field, fields
from pathlib import Path

import numpy as np

from gdgr.core import (
    NOISE_POLICY,
    NOISE_RANDOM,
    ConfigurationError,
    DomainDistribution,
    Trajectory,
    derive_seed,
    goal_key,
    make_rng,
    rollout,
    trajectory_from_csv,
)
from gdgr.envs import make_domain, sample_domain, spec_from_dict
from gdgr.learn.memo import TrainingMemo, fingerprint
from gdgr.learn.pg import TrainConfig, TrainLog, pg_train
from gdgr.learn.qlearn import q_learn
from gdgr.recognize import (
    KL,
    MASK_MODES,
    WASSERSTEIN,
    ObservationSequence,
    RecognitionParams,
    mask,
    observations_from_csv,
)

METHODS = ("meta", "gc", "draco", "graql")
FAMILIES = ("grid", "maze", "reach")

STREAM_KEY = (-3,)
MASK_KEY = (-4,)
EXPERT_SEED_KEY = (-5,)
EXPERT_KEY = 1_000_000
# meta-initialized experts share one meta-policy trained on its own seed,
# never the one a recognizer under test starts from
EXPERT_META_SEED = derive_seed(0, 0, EXPERT_SEED_KEY, 1) & 0xFFFFFFFF


@dataclass
class ExperimentConfig:
    """Everything one benchmark run needs; validated on construction."""

    family: str = "grid"
    env: dict = field(default_factory=dict)
    distribution: dict = field(default_factory=dict)
    domains: str = "fixed"
    methods: list = field(default_factory=lambda: ["meta", "draco", "graql"])
    observability: list = field(default_factory=lambda: [0.3, 0.1])
    noise: list = field(default_factory=lambda: [0.0])
    goal_counts: list = field(default_factory=lambda: [2, 3])
    problems_per_count: int = 10
    goal_pool: list | None = None
    min_goal_separation: float = 0.0
    metric: str = KL
    kl_variant: str = "full"
    epsilon: float = 0.01
    n_samples: int = 0
    mask_mode: str = "uniform"
    noise_convention: str = NOISE_RANDOM
    seeds: list = field(default_factory=lambda: [0])
    train: dict = field(default_factory=dict)
    meta_train: dict = field(default_factory=dict)
    budgets: dict = field(default_factory=dict)
    expert: dict = field(default_factory=dict)
    aura: dict = field(default_factory=dict)
    out: str = "results"

    def __post_init__(self):
        self.validate()

    def validate(self) -> None:
        if self.family not in FAMILIES:
            raise ConfigurationError(f"unknown family {self.family!r}")
        if self.domains not in ("fixed", "sampled"):
            raise ConfigurationError("domains must be 'fixed' or 'sampled'")
        for m in self.methods:
            if m not in METHODS:
                raise ConfigurationError(f"unknown method {m!r}")
        if "graql" in self.methods and self.family != "grid":
            raise ConfigurationError("the tabular baseline only runs on grid streams")
        if not self.observability or any(not 0.0 < o <= 1.0 for o in self.observability):
            raise ConfigurationError("observability levels must lie in (0, 1]")
        if any(not 0.0 <= n <= 1.0 for n in self.noise):
            raise ConfigurationError("noise levels must lie in [0, 1]")
        if not self.goal_counts or any(int(k) < 1 for k in self.goal_counts):
            raise ConfigurationError("goal counts must be positive")
        if self.problems_per_count < 0:
            raise ConfigurationError("problems_per_count must be non-negative")
        if self.metric not in (KL, WASSERSTEIN):
            raise ConfigurationError(f"unknown metric {self.metric!r}")
        if self.metric == KL and self.family != "grid":
            raise ConfigurationError("the KL metric needs discrete actions")
        if self.mask_mode not in MASK_MODES:
            raise ConfigurationError(f"unknown mask mode {self.mask_mode!r}")
        if self.noise_convention not in (NOISE_RANDOM, NOISE_POLICY):
            raise ConfigurationError(f"unknown noise convention {self.noise_convention!r}")
        if not self.seeds:
            raise ConfigurationError("at least one seed is required")
        known = {"meta_iterations", "finetune_iterations", "draco_iterations", "graql_episodes", "gc_iterations"}
        for k in self.budgets:
            if k not in known:
                raise ConfigurationError(f"unknown budget {k!r}")
        for k in self.expert:
            if k not in ("learner", "iterations", "init", "deterministic"):
                raise ConfigurationError(f"unknown expert option {k!r}")
        self.train_config()
        self.meta_config()
        self.recognition()

    # -- derived settings --------------------------------------------------
    def train_config(self, **kw) -> TrainConfig:
        try:
            return TrainConfig(**{"plateau_window": 0, **self.train, **kw})
        except TypeError as exc:
            raise ConfigurationError(str(exc)) from exc

    def meta_config(self) -> TrainConfig:
        return self.train_config(iterations=self.budget("meta_iterations"), **self.meta_train)

    def budget(self, name: str) -> int:
        defaults = {
            "meta_iterations": 100,
            "finetune_iterations": 10,
            "draco_iterations": 35,
            "graql_episodes": 700,
            "gc_iterations": 200,
        }
        return int(self.budgets.get(name, defaults[name]))

    def recognition(self) -> RecognitionParams:
        return RecognitionParams(self.metric, self.epsilon, self.kl_variant, self.n_samples)

    def distribution_descriptor(self) -> DomainDistribution:
        return DomainDistribution(self.family, dict(self.distribution))

    def stream_domain(self):
        return make_domain(spec_from_dict({"family": self.family, **self.env}))

    def to_dict(self) -> dict:
        return {f.name: getattr(self, f.name) for f in fields(self)}

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentConfig":
        names = {f.name for f in fields(cls)}
        unknown = set(d) - names
        if unknown:
            raise ConfigurationError(f"unknown config keys: {sorted(unknown)}")
        return cls(**d)

    @classmethod
    def load(cls, path) -> "ExperimentConfig":
        text = Path(path).read_text()
        if str(path).endswith((".yaml", ".yml")):
            import yaml

            data = yaml.safe_load(text)
        else:
            data = json.loads(text)
        if not isinstance(data, dict):
            raise ConfigurationError("config file must hold a mapping")
        return cls.from_dict(data)


@dataclass(frozen=True, eq=False)
class GRProblem:
    index: int
    domain: object
    goals: tuple
    true_index: int
    trajectory: Trajectory
    observations: ObservationSequence
    observability: float
    noise: float
    seed: int

    @property
    def true_goal(self) -> tuple:
        return self.goals[self.true_index]


@dataclass(frozen=True, eq=False)
class GDGRStream:
    distribution: DomainDistribution
    problems: tuple
    seed: int
    observability: float
    noise: float
    learner: str

    def __len__(self) -> int:
        return len(self.problems)

    def __iter__(self):
        return iter(self.problems)


class ExpertPool:
    """Reference policies that generate observations, trained lazily and cached.

    ``learner`` is ``"tabular"`` (Q-learning) or ``"pg"``; a pg expert may
    start from a meta-policy: ``meta_provider(seed)`` must return one trained
    on ``seed`` (``EXPERT_META_SEED``).
    """

    def __init__(self, config: ExperimentConfig, seed: int, memo: TrainingMemo | None = None, meta_provider=None):
        self.config = config
        self.seed = seed
        # reference agents train on their own seed, independent of the recognizers
        self.train_seed = derive_seed(seed, 0, EXPERT_SEED_KEY, 0) & 0xFFFFFFFF
        self.memo = memo if memo is not None else TrainingMemo()
        self.meta_provider = meta_provider

    def get(self, domain, goal, learner: str):
        opts = self.config.expert
        if learner == "tabular":
            cfg = self.config.train_config(iterations=int(opts.get("episodes", self.config.budget("graql_episodes"))), seed=self.train_seed)
            key = fingerprint("q", domain.domain_id, goal, cfg)
            policy, _ = self.memo.get_or_train(key, lambda: self._q(domain, goal, cfg))
            return policy
        cfg = self.config.train_config(iterations=int(opts.get("iterations", 60)), seed=self.train_seed)
        init = None
        if opts.get("init", "scratch") == "meta":
            if self.meta_provider is None:
                raise ConfigurationError("meta-initialized experts need a meta-policy")
            init = self.meta_provider(EXPERT_META_SEED).params
        key = fingerprint("pg", domain.domain_id, goal, cfg, init)
        try:
            policy, _ = self.memo.get_or_train(key, lambda: self._pg(domain, goal, cfg, init))
        except Exception as exc:  # noqa: BLE001 - re-raised with the goal named
            raise type(exc)(f"training the reference policy for goal {list(goal_key(goal))} failed: {exc}") from exc
        return policy

    @staticmethod
    def _q(domain, goal, cfg):
        log = TrainLog()
        return q_learn(domain, goal, cfg, log=log), log

    @staticmethod
    def _pg(domain, goal, cfg, init):
        log = TrainLog()
        return pg_train(domain, goal, cfg, init=init, log=log), log


def _sample_goals(domain, k: int, rng, pool, min_sep: float) -> list:
    space = domain.goal_space
    if pool is not None:
        candidates = [tuple(g) for g in pool if domain.goal_space.contains(g)]
    elif space.is_discrete:
        candidates = [tuple(g) for g in space.points]
    else:
        candidates = None
    for _ in range(1000):
        if candidates is not None:
            if len(candidates) < k:
                raise ConfigurationError(f"goal pool has {len(candidates)} goals, {k} requested")
            picks = [candidates[i] for i in rng.choice(len(candidates), size=k, replace=False)]
        else:
            picks = [tuple(float(v) for v in space.sample(rng)) for _ in range(k)]
        arr = np.asarray(picks, dtype=np.float64)
        d = np.linalg.norm(arr[:, None] - arr[None], axis=2) + np.eye(k) * 1e9
        if len({goal_key(g) for g in picks}) == k and d.min() >= min_sep:
            return picks
    raise ConfigurationError("could not draw a goal set meeting the separation constraint")


def generate_stream(
    config: ExperimentConfig,
    rng_seed: int,
    observability: float | None = None,
    noise: float | None = None,
    learner: str = "pg",
    experts: ExpertPool | None = None,
) -> GDGRStream:
    """Problems for every goal count, deterministic in ``rng_seed``.

    Domains, goal sets, true goals and expert trajectories depend only on
    the seed (not on observability or noise level), so streams at different
    levels are paired problem by problem.
    """
    obs = config.observability[0] if observability is None else observability
    nz = config.noise[0] if noise is None else noise
    experts = experts or ExpertPool(config, rng_seed)
    dist = config.distribution_descriptor()
    rng = make_rng(derive_seed(rng_seed, 0, STREAM_KEY, 0))
    fixed = config.stream_domain() if config.domains == "fixed" else None
    deterministic = bool(config.expert.get("deterministic", True))
    problems = []
    for k in config.goal_counts:
        for _ in range(config.problems_per_count):
            idx = len(problems)
            domain = fixed or sample_domain(dist, derive_seed(rng_seed, 0, STREAM_KEY, idx + 1))
            goals = _sample_goals(domain, int(k), rng, config.goal_pool, config.min_goal_separation)
            true_index = int(rng.integers(len(goals)))
            goal = goals[true_index]
            expert = experts.get(domain, goal, learner)
            traj = rollout(
                domain,
                expert,
                goal,
                derive_seed(rng_seed, domain.domain_id, goal, EXPERT_KEY + idx),
                noise_level=nz,
                noise_convention=config.noise_convention,
                deterministic=deterministic,
            )
            O = mask(traj, obs, config.mask_mode, derive_seed(rng_seed, domain.domain_id, MASK_KEY, idx), noise_level=nz)
            problems.append(GRProblem(idx, domain, tuple(goals), true_index, traj, O, obs, nz, rng_seed))
    return GDGRStream(dist, tuple(problems), rng_seed, obs, nz, learner)


# ---------------------------------------------------------------------------
# on-disk streams


def save_stream(stream: GDGRStream, path) -> None:
    """Directory with stream.json, one spec per domain, and per-problem CSVs."""
    root = Path(path)
    for sub in ("specs", "observations", "trajectories"):
        (root / sub).mkdir(parents=True, exist_ok=True)
    problems = []
    for p in stream:
        hexid = f"{p.domain.domain_id:016x}"
        spec_file = root / "specs" / f"{hexid}.json"
        if not spec_file.exists():
            spec_file.write_text(json.dumps(p.domain.spec.to_dict(), indent=2, sort_keys=True) + "\n")
        (root / "observations" / f"p{p.index:04d}.csv").write_text(p.observations.to_csv())
        (root / "trajectories" / f"p{p.index:04d}.csv").write_text(p.trajectory.to_csv())
        problems.append({
            "index": p.index,
            "domain": hexid,
            "goals": [list(g) for g in p.goals],
            "true_index": p.true_index,
            "observability": p.observability,
            "noise": p.noise,
        })
    meta = {
        "distribution": stream.distribution.to_dict(),
        "seed": stream.seed,
        "observability": stream.observability,
        "noise": stream.noise,
        "learner": stream.learner,
        "problems": problems,
    }
    (root / "stream.json").write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n")


def load_stream(path) -> GDGRStream:
    root = Path(path)
    meta = json.loads((root / "stream.json").read_text())
    domains = {}
    problems = []
    for rec in meta["problems"]:
        hexid = rec["domain"]
        if hexid not in domains:
            domains[hexid] = make_domain(spec_from_dict(json.loads((root / "specs" / f"{hexid}.json").read_text())))
        domain = domains[hexid]
        goals = tuple(tuple(g) for g in rec["goals"])
        name = f"p{rec['index']:04d}.csv"
        discrete = domain.action_space.discrete
        traj = trajectory_from_csv(
            (root / "trajectories" / name).read_text(),
            goals[rec["true_index"]],
            state_dtype=domain.state_dtype,
            action_dtype=np.int64 if discrete else np.float64,
        )
        O = observations_from_csv((root / "observations" / name).read_text())
        problems.append(GRProblem(rec["index"], domain, goals, rec["true_index"], traj, O, rec["observability"], rec["noise"], meta["seed"]))
    dist = DomainDistribution(meta["distribution"]["family"], meta["distribution"]["params"])
    return GDGRStream(dist, tuple(problems), meta["seed"], meta["observability"], meta["noise"], meta["learner"])
