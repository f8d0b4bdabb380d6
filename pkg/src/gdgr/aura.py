"""The AURA orchestrator: memory plus the five phases of recognition.

Phases per problem, in order: domain adaptation, goal adaptation,
recognition inference, memory update.  Memory initialization happens once
per stream.  Two instantiations are supported:

* ``gc``: one goal-conditioned policy per domain; new goals are bound into
  it zero-shot (optionally escalating to a short fine-tune when a probe
  finds the bound policy incompetent).
* ``meta``: a meta-learned initialization; each new goal is fine-tuned from
  it for a small budget.
"""

from __future__ import annotations

import csv
import io
import json
import logging
from dataclasses import dataclass, field
from pathlib import Path

from gdgr.core import ConfigurationError, DomainDistribution, GDGRError, goal_key
from gdgr.learn.memo import TrainingMemo, fingerprint
from gdgr.learn.meta import MetaPolicy, fine_tune, meta_train
from gdgr.learn.pg import TrainConfig, TrainLog, evaluate, gc_train, pg_train
from gdgr.learn.policy import StochasticPolicy, load_policy, save_policy
from gdgr.recognize import ObservationSequence, RecognitionParams, RecognitionResult, infer_goal

logger = logging.getLogger(__name__)

GC = "gc"
META = "meta"

ZERO_SHOT = "zero-shot"
FEW_SHOT = "few-shot"
RECALL = "recall"

PHASES = ("domain", "goals", "inference", "update")


@dataclass(frozen=True)
class AdaptationStrategy:
    kind: str
    budget: int = 0

    def __post_init__(self):
        if self.kind not in (ZERO_SHOT, FEW_SHOT, RECALL):
            raise ConfigurationError(f"unknown adaptation strategy {self.kind!r}")


@dataclass
class AuraConfig:
    mode: str = META
    meta: TrainConfig = field(default_factory=lambda: TrainConfig(iterations=100, plateau_window=0))
    gc: TrainConfig = field(default_factory=lambda: TrainConfig(iterations=200, plateau_window=0))
    finetune: TrainConfig = field(default_factory=lambda: TrainConfig(iterations=10, plateau_window=0))
    recognition: RecognitionParams = field(default_factory=RecognitionParams)
    probe: bool = True
    probe_rollouts: int = 20
    probe_threshold: float = 0.8
    caching: bool = True
    seed: int = 0
    memo: TrainingMemo | None = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        if self.mode not in (GC, META):
            raise ConfigurationError(f"unknown AURA mode {self.mode!r}")
        if self.probe_rollouts < 1 or not 0.0 <= self.probe_threshold <= 1.0:
            raise ConfigurationError("invalid competence probe settings")


@dataclass
class DomainMemory:
    domain_id: int
    gc_policy: StochasticPolicy | None = None
    goal_policies: dict = field(default_factory=dict)
    adaptation_costs: dict = field(default_factory=dict)


@dataclass(frozen=True)
class HistoryEntry:
    problem_index: int
    domain_id: int
    goals: tuple
    chosen: tuple
    metric: str
    scores: tuple


@dataclass
class Memory:
    mode: str
    meta_policy: MetaPolicy | None = None
    domain_entries: dict = field(default_factory=dict)
    history: list = field(default_factory=list)
    init_iterations: int = 0
    phase_log: list = field(default_factory=list)
    problem_costs: list = field(default_factory=list)
    curves: dict = field(default_factory=dict)

    def _tick(self, problem: int, phase: str) -> None:
        self.phase_log.append((problem, phase, len(self.phase_log)))

    def cache_size(self) -> int:
        return sum(len(d.goal_policies) + (d.gc_policy is not None) for d in self.domain_entries.values())

    @property
    def total_adaptation_iterations(self) -> int:
        return sum(c["domain"] + c["goals"] for c in self.problem_costs)

    def evict(self, policy=None) -> None:
        """Eviction hook; the default policy keeps everything."""
        if policy is not None:
            policy(self)


# ---------------------------------------------------------------------------
# phases


def init_memory(dist: DomainDistribution | None, config: AuraConfig) -> Memory:
    """A meta-policy over p_D in meta mode, an empty store in gc mode."""
    memory = Memory(mode=config.mode)
    if config.mode == META:
        if dist is None:
            raise ConfigurationError("meta mode needs a domain distribution")
        log = TrainLog()
        memory.meta_policy = meta_train(dist, config.meta, log=log)
        memory.init_iterations = log.iterations
        memory.curves["init"] = log
    return memory


def domain_adaptation(domain, memory: Memory, config: AuraConfig) -> tuple[DomainMemory, int]:
    """Return the domain's memory entry and the iterations spent."""
    if memory.meta_policy is not None:
        mp = memory.meta_policy.policy
        if mp.action_space != domain.action_space or mp.encoding.dim != domain.encoding.dim:
            raise ConfigurationError("domain dimensions do not match the meta-policy")
    entry = memory.domain_entries.get(domain.domain_id)
    if entry is not None and config.caching:
        return entry, 0
    entry = DomainMemory(domain.domain_id)
    cost = 0
    if config.mode == GC:
        entry.gc_policy, log = _train(config, fingerprint("gc", domain.domain_id, None, config.gc),
                                      lambda lg: gc_train(domain, config.gc, log=lg))
        cost = log.iterations
        entry.adaptation_costs["gc"] = cost
        memory.curves.setdefault("gc", log)
    return entry, cost


def _train(config: AuraConfig, key: str, fn):
    def run():
        log = TrainLog()
        return fn(log), log

    if config.memo is None:
        return run()
    return config.memo.get_or_train(key, run)


def _competent(domain, policy, goal, config: AuraConfig) -> bool:
    rate, _ = evaluate(domain, policy, [goal] * config.probe_rollouts, seed=config.seed)
    return rate >= config.probe_threshold


def goals_adaptation(goals, domain, entry: DomainMemory, memory: Memory, config: AuraConfig):
    """One policy per goal in DG.

    Returns (policies aligned with ``goals``, strategies, iterations spent).
    """
    goals = list(goals)
    if not goals:
        raise GDGRError("the dynamic goal set is empty")
    for g in goals:
        domain.check_goal(g)
    policies, strategies, total = [], [], 0
    for g in goals:
        key = goal_key(g)
        cached = entry.goal_policies.get(key) if config.caching else None
        if cached is not None:
            policies.append(cached)
            strategies.append(AdaptationStrategy(RECALL))
            continue
        cost = 0
        if config.mode == GC:
            if entry.gc_policy is None:
                raise ConfigurationError("gc mode needs domain adaptation before goal adaptation")
            policy = entry.gc_policy.bind(g)
            strategy = AdaptationStrategy(ZERO_SHOT)
            if config.probe and not _competent(domain, policy, g, config):
                init = entry.gc_policy.params
                policy, log = _train(config, fingerprint("pg", domain.domain_id, g, config.finetune, init),
                                     lambda lg: pg_train(domain, g, config.finetune, init=init, log=lg))
                cost = log.iterations
                strategy = AdaptationStrategy(FEW_SHOT, config.finetune.iterations)
        else:
            meta = memory.meta_policy
            policy, log = _train(config, fingerprint("pg", domain.domain_id, g, config.finetune, meta.params),
                                 lambda lg: fine_tune(meta, domain, g, config.finetune, log=lg))
            cost = log.iterations
            strategy = AdaptationStrategy(FEW_SHOT, config.finetune.iterations)
        if config.caching:
            entry.goal_policies[key] = policy
            entry.adaptation_costs[key] = cost
        policies.append(policy)
        strategies.append(strategy)
        total += cost
    return policies, strategies, total


def recognition_inference(goals, policies, O: ObservationSequence, params: RecognitionParams) -> RecognitionResult:
    """Argmax similarity over the goal memories."""
    return infer_goal(list(zip(goals, policies)), O, params)


def update_memory(memory: Memory, entry: DomainMemory, problem_index: int, goals, result: RecognitionResult) -> Memory:
    """Persist the domain entry and append to the history."""
    memory.domain_entries[entry.domain_id] = entry
    memory.history.append(
        HistoryEntry(problem_index, entry.domain_id, result.goals, result.chosen, result.metric, result.scores)
    )
    return memory


def solve_problem(problem, index: int, memory: Memory, config: AuraConfig) -> RecognitionResult:
    """All per-problem phases for one problem (``problem`` has domain, goals, observations)."""
    domain = problem.domain
    if config.mode == GC:
        ids = {e for e in memory.domain_entries}
        if ids and domain.domain_id not in ids:
            raise ConfigurationError("gc mode assumes every problem shares one domain theory")
    memory._tick(index, "domain")
    entry, d_cost = domain_adaptation(domain, memory, config)
    if config.caching:
        memory.domain_entries[entry.domain_id] = entry
    memory._tick(index, "goals")
    policies, strategies, g_cost = goals_adaptation(problem.goals, domain, entry, memory, config)
    memory._tick(index, "inference")
    result = recognition_inference(problem.goals, policies, problem.observations, config.recognition)
    result.extra["strategies"] = tuple(s.kind for s in strategies)
    memory._tick(index, "update")
    update_memory(memory, entry, index, problem.goals, result)
    memory.problem_costs.append({"domain": d_cost, "goals": g_cost})
    return result


def solve_stream(problems, config: AuraConfig, dist: DomainDistribution | None = None, memory: Memory | None = None):
    """Run AURA over a sequence of problems; returns (results, memory)."""
    problems = list(problems)
    if config.mode == GC and len({p.domain.domain_id for p in problems}) > 1:
        raise ConfigurationError("gc mode assumes every problem shares one domain theory")
    if memory is None:
        memory = init_memory(dist, config)
    results = [solve_problem(p, i, memory, config) for i, p in enumerate(problems)]
    return results, memory


# ---------------------------------------------------------------------------
# persistence

INDEX_FILE = "index.json"
HISTORY_FILE = "history.csv"


def save_memory(memory: Memory, path) -> None:
    root = Path(path)
    root.mkdir(parents=True, exist_ok=True)
    index = {"format_version": 1, "mode": memory.mode, "init_iterations": memory.init_iterations, "meta_policy": None, "domains": {}}
    if memory.meta_policy is not None:
        save_policy(memory.meta_policy.policy, root / "meta.pol")
        index["meta_policy"] = {
            "file": "meta.pol",
            "iterations": memory.meta_policy.iterations,
            "distribution": memory.meta_policy.distribution.to_dict(),
        }
    for did in sorted(memory.domain_entries):
        entry = memory.domain_entries[did]
        hexid = f"{did:016x}"
        rec = {"gc_policy": None, "goal_policies": [], "gc_cost": entry.adaptation_costs.get("gc", 0)}
        if entry.gc_policy is not None:
            name = f"{hexid}_gc.pol"
            save_policy(entry.gc_policy, root / name)
            rec["gc_policy"] = name
        for n, (key, pol) in enumerate(sorted(entry.goal_policies.items())):
            name = f"{hexid}_g{n}.pol"
            save_policy(pol, root / name)
            rec["goal_policies"].append({"goal": list(key), "file": name, "cost": entry.adaptation_costs.get(key, 0)})
        index["domains"][hexid] = rec
    (root / INDEX_FILE).write_text(json.dumps(index, indent=2, sort_keys=True) + "\n")
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["problem_index", "domain_id", "goals", "chosen", "metric", "scores"])
    for h in memory.history:
        w.writerow([
            h.problem_index, f"{h.domain_id:016x}", json.dumps([list(g) for g in h.goals]),
            json.dumps(list(h.chosen)), h.metric, json.dumps([repr(float(s)) for s in h.scores]),
        ])
    (root / HISTORY_FILE).write_text(buf.getvalue())


def load_memory(path) -> Memory:
    root = Path(path)
    try:
        index = json.loads((root / INDEX_FILE).read_text())
    except FileNotFoundError as exc:
        raise GDGRError(f"no memory index in {root}") from exc
    memory = Memory(mode=index["mode"], init_iterations=index.get("init_iterations", 0))
    mp = index.get("meta_policy")
    if mp is not None:
        dist = DomainDistribution(mp["distribution"]["family"], mp["distribution"]["params"])
        memory.meta_policy = MetaPolicy(load_policy(root / mp["file"]), dist, mp["iterations"])
    for hexid, rec in index["domains"].items():
        did = int(hexid, 16)
        entry = DomainMemory(did)
        if rec["gc_policy"]:
            entry.gc_policy = load_policy(root / rec["gc_policy"])
            entry.adaptation_costs["gc"] = rec.get("gc_cost", 0)
        for gp in rec["goal_policies"]:
            key = tuple(gp["goal"])
            entry.goal_policies[key] = load_policy(root / gp["file"])
            entry.adaptation_costs[key] = gp["cost"]
        memory.domain_entries[did] = entry
    hist = root / HISTORY_FILE
    if hist.exists():
        for row in csv.DictReader(io.StringIO(hist.read_text())):
            memory.history.append(
                HistoryEntry(
                    int(row["problem_index"]),
                    int(row["domain_id"], 16),
                    tuple(tuple(g) for g in json.loads(row["goals"])),
                    tuple(json.loads(row["chosen"])),
                    row["metric"],
                    tuple(float(s) for s in json.loads(row["scores"])),
                )
            )
    return memory


__all__ = [
    "GC",
    "META",
    "AdaptationStrategy",
    "AuraConfig",
    "DomainMemory",
    "HistoryEntry",
    "Memory",
    "init_memory",
    "domain_adaptation",
    "goals_adaptation",
    "recognition_inference",
    "update_memory",
    "solve_problem",
    "solve_stream",
    "save_memory",
    "load_memory",
]
