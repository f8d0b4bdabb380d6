"""Baseline recognizers, AURA runs, and the experiment driver."""

from __future__ import annotations

import csv
import hashlib
import io
import json
import logging
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from gdgr import kernels
from gdgr.aura import GC, META, AuraConfig, Memory, init_memory, solve_stream
from gdgr.bench.metrics import MetricsReport, Record, compute_metrics
from gdgr.bench.stream import ExperimentConfig, ExpertPool, GDGRStream, generate_stream
from gdgr.core import ConfigurationError, GDGRError
from gdgr.learn.memo import TrainingMemo, fingerprint
from gdgr.learn.meta import MetaPolicy
from gdgr.learn.pg import TrainLog, pg_train
from gdgr.learn.policy import policy_to_bytes
from gdgr.learn.qlearn import q_learn
from gdgr.recognize import KL, RecognitionParams, infer_goal

logger = logging.getLogger(__name__)


def _record(problem, result, method: str) -> Record:
    return Record(
        problem=problem.index,
        true_index=problem.true_index,
        chosen_index=result.chosen_index,
        n_goals=len(problem.goals),
        true_goal=tuple(problem.true_goal),
        chosen_goal=tuple(result.chosen),
        scores=tuple(result.scores),
        method=method,
        observability=problem.observability,
        noise=problem.noise,
        seed=problem.seed,
        tie_broken=result.tie_broken,
    )


def _train(memo: TrainingMemo | None, key: str, fn):
    def run():
        log = TrainLog()
        return fn(log), log

    return run() if memo is None else memo.get_or_train(key, run)


def run_draco_baseline(stream: GDGRStream, config: ExperimentConfig, memo: TrainingMemo | None = None) -> MetricsReport:
    """One from-scratch policy per goal per problem; no reuse is charged."""
    cfg = config.train_config(iterations=config.budget("draco_iterations"), seed=stream.seed)
    params = config.recognition()
    records, per_problem = [], []
    for p in stream:
        cands, cost = [], 0
        for g in p.goals:
            key = fingerprint("pg", p.domain.domain_id, g, cfg)
            policy, log = _train(memo, key, lambda lg, g=g, d=p.domain: pg_train(d, g, cfg, log=lg))
            cands.append((g, policy))
            cost += log.iterations
        result = infer_goal(cands, p.observations, params)
        records.append(_record(p, result, "draco"))
        per_problem.append(cost)
    return _report(records, {"init": 0, "adaptation": sum(per_problem), "per_problem": per_problem})


def run_graql_baseline(stream: GDGRStream, config: ExperimentConfig, memo: TrainingMemo | None = None) -> MetricsReport:
    """Tabular Q-learning per goal, recognized with the KL metric."""
    if config.family != "grid":
        raise ConfigurationError("the tabular baseline needs a discrete (grid) stream")
    cfg = config.train_config(iterations=config.budget("graql_episodes"), seed=stream.seed)
    params = RecognitionParams(KL, config.epsilon, config.kl_variant, config.n_samples)
    records, per_problem = [], []
    for p in stream:
        cands, cost = [], 0
        for g in p.goals:
            key = fingerprint("q", p.domain.domain_id, g, cfg)
            policy, log = _train(memo, key, lambda lg, g=g, d=p.domain: q_learn(d, g, cfg, log=lg))
            cands.append((g, policy))
            cost += log.iterations
        result = infer_goal(cands, p.observations, params)
        records.append(_record(p, result, "graql"))
        per_problem.append(cost)
    return _report(records, {"init": 0, "adaptation": sum(per_problem), "per_problem": per_problem})


def aura_config(config: ExperimentConfig, mode: str, seed: int, memo: TrainingMemo | None = None) -> AuraConfig:
    extra = dict(config.aura)
    return AuraConfig(
        mode=mode,
        meta=config.meta_config().replace(seed=seed),
        gc=config.train_config(iterations=config.budget("gc_iterations"), seed=seed),
        finetune=config.train_config(iterations=config.budget("finetune_iterations"), seed=seed),
        recognition=config.recognition(),
        seed=seed,
        memo=memo,
        **extra,
    )


def run_aura(
    stream: GDGRStream,
    mode: str,
    config: ExperimentConfig,
    memo: TrainingMemo | None = None,
    meta_policy: MetaPolicy | None = None,
) -> MetricsReport:
    """AURA over the stream; a pre-trained ``meta_policy`` skips (but is charged for) initialization."""
    acfg = aura_config(config, mode, stream.seed, memo)
    memory = None
    init_cost = 0
    if mode == META:
        if meta_policy is None:
            memory = init_memory(stream.distribution, acfg)
            meta_policy = memory.meta_policy
        else:
            memory = Memory(mode=META, meta_policy=meta_policy, init_iterations=meta_policy.iterations)
        init_cost = memory.init_iterations
    results, memory = solve_stream(stream.problems, acfg, dist=stream.distribution, memory=memory)
    records = [_record(p, r, mode) for p, r in zip(stream.problems, results)]
    per_problem = [c["domain"] + c["goals"] for c in memory.problem_costs]
    costs = {
        "init": init_cost,
        "adaptation": sum(per_problem),
        "per_problem": per_problem,
        "phases": [dict(c) for c in memory.problem_costs],
        "strategies": [list(r.extra.get("strategies", ())) for r in results],
    }
    report = _report(records, costs)
    report.costs["memory"] = memory
    return report


def _report(records, costs) -> MetricsReport:
    if not records:
        return MetricsReport([], float("nan"), float("nan"), float("nan"), float("nan"), 0.0, 0.0, 0.0, 0.0, float("nan"), {}, costs)
    return compute_metrics(records, costs)


# ---------------------------------------------------------------------------
# experiment driver


@dataclass
class RunResult:
    method: str
    seed: int
    observability: float
    noise: float
    report: MetricsReport


@dataclass
class Experiment:
    config: ExperimentConfig
    results: list = field(default_factory=list)
    memo: TrainingMemo = field(default_factory=TrainingMemo)
    meta_policies: dict = field(default_factory=dict)
    timing: dict = field(default_factory=dict)
    init_logs: dict = field(default_factory=dict)

    def meta_policy(self, seed: int) -> MetaPolicy:
        if seed not in self.meta_policies:
            t0 = time.perf_counter()
            mem = init_memory(self.config.distribution_descriptor(), aura_config(self.config, META, seed, self.memo))
            self.meta_policies[seed] = mem.meta_policy
            self.init_logs[seed] = mem.curves.get("init")
            self.timing[f"meta_init_seed{seed}"] = time.perf_counter() - t0
        return self.meta_policies[seed]

    def run(self, methods=None) -> list:
        cfg = self.config
        for seed in cfg.seeds:
            experts = ExpertPool(cfg, seed, self.memo, meta_provider=self.meta_policy)
            for noise in cfg.noise:
                for obs in cfg.observability:
                    for method in methods or cfg.methods:
                        learner = "tabular" if method == "graql" else "pg"
                        stream = generate_stream(cfg, seed, obs, noise, learner, experts)
                        t0 = time.perf_counter()
                        report = self.run_method(method, stream)
                        self.timing[f"{method}_seed{seed}_obs{obs}_noise{noise}"] = time.perf_counter() - t0
                        self.results.append(RunResult(method, seed, obs, noise, report))
        return self.results

    def run_method(self, method: str, stream: GDGRStream) -> MetricsReport:
        if method == "draco":
            return run_draco_baseline(stream, self.config, self.memo)
        if method == "graql":
            return run_graql_baseline(stream, self.config, self.memo)
        if method == "meta":
            return run_aura(stream, META, self.config, self.memo, self.meta_policy(stream.seed))
        if method == "gc":
            return run_aura(stream, GC, self.config, self.memo)
        raise ConfigurationError(f"unknown method {method!r}")


def run_experiment(config: ExperimentConfig, out: str | Path | None = None) -> Experiment:
    exp = Experiment(config)
    exp.run()
    if out is not None:
        emit_outputs(exp, out)
    return exp


# ---------------------------------------------------------------------------
# outputs


def _f(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return str(int(v))
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if v is None or (isinstance(v, float) and np.isnan(v)):
        return ""
    return f"{float(v):.6f}"


def _csv(rows, header) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for r in rows:
        w.writerow(r)
    return buf.getvalue()


def git_blob_sha1(data: bytes) -> str:
    return hashlib.sha1(b"blob %d\0" % len(data) + data).hexdigest()


RECORD_HEADER = [
    "method", "seed", "observability", "noise", "problem", "n_goals", "true_index", "chosen_index",
    "correct", "tie_broken", "true_goal", "chosen_goal", "scores", "iterations",
]
METRIC_NAMES = ["accuracy", "accuracy_std", "precision", "precision_std", "recall", "recall_std", "f_score", "f_std"]


def records_csv(results) -> str:
    rows = []
    for res in results:
        costs = res.report.costs.get("per_problem", [])
        for i, r in enumerate(res.report.records):
            rows.append([
                res.method, res.seed, _f(r.observability), _f(r.noise), r.problem, r.n_goals, r.true_index,
                r.chosen_index, int(r.correct), int(r.tie_broken), json.dumps(list(r.true_goal)),
                json.dumps(list(r.chosen_goal)), json.dumps([_f(s) for s in r.scores]),
                costs[i] if i < len(costs) else "",
            ])
    return _csv(rows, RECORD_HEADER)


def metrics_csv(results, methods) -> str:
    """Rows are (observability, noise, goal count); columns are per-method metrics."""
    cells = sorted({(r.observability, r.noise) for res in results for r in res.report.records}, key=lambda c: (-c[0], c[1]))
    counts = sorted({r.n_goals for res in results for r in res.report.records})
    header = ["observability", "noise", "n_goals"]
    for m in methods:
        header += [f"{m}_{k}" for k in METRIC_NAMES] + [f"{m}_iterations"]
    rows = []
    for obs, nz in cells:
        for k in counts:
            row = [_f(obs), _f(nz), k]
            for m in methods:
                recs, iters = [], 0
                for res in results:
                    if res.method != m or res.observability != obs or res.noise != nz:
                        continue
                    costs = res.report.costs.get("per_problem", [])
                    for i, r in enumerate(res.report.records):
                        if r.n_goals == k:
                            recs.append(r)
                            iters += costs[i] if i < len(costs) else 0
                if recs:
                    rep = compute_metrics(recs)
                    row += [_f(rep.row()[n]) for n in METRIC_NAMES] + [iters]
                else:
                    row += [""] * (len(METRIC_NAMES) + 1)
            rows.append(row)
    return _csv(rows, header)


def curves_csv(exp: Experiment) -> str:
    rows = []
    for key, (_, log) in exp.memo.items():
        for i, (m, s) in enumerate(zip(log.returns, log.returns_std)):
            rows.append([key, i, _f(m), _f(s)])
    for seed, log in sorted(exp.init_logs.items()):
        if log is None:
            continue
        for i, (m, s) in enumerate(zip(log.returns, log.returns_std)):
            rows.append([f"meta-init-seed{seed}", i, _f(m), _f(s)])
    return _csv(rows, ["curve", "iteration", "mean_return", "std_return"])


def emit_outputs(exp: Experiment, out) -> dict:
    """Write metrics.csv, records.csv, learning_curves.csv, policies and manifest.json."""
    results = exp.results
    if not any(res.report.records for res in results):
        raise GDGRError("refusing to emit aggregates from zero records")
    root = Path(out)
    root.mkdir(parents=True, exist_ok=True)
    pol_dir = root / "policies"
    pol_dir.mkdir(exist_ok=True)
    files = {
        "metrics.csv": metrics_csv(results, exp.config.methods),
        "records.csv": records_csv(results),
        "learning_curves.csv": curves_csv(exp),
    }
    for name, text in files.items():
        (root / name).write_text(text)
    hashes = {}
    for key, (policy, _) in exp.memo.items():
        data = policy_to_bytes(policy)
        (pol_dir / f"{key}.pol").write_bytes(data)
        hashes[f"policies/{key}.pol"] = git_blob_sha1(data)
    for seed, mp in sorted(exp.meta_policies.items()):
        data = policy_to_bytes(mp.policy)
        name = f"policies/meta_seed{seed}.pol"
        (root / name).write_bytes(data)
        hashes[name] = git_blob_sha1(data)
    manifest = {
        "config": exp.config.to_dict(),
        "seeds": list(exp.config.seeds),
        "kernel_backend": kernels.BACKEND,
        "outputs": {name: git_blob_sha1(text.encode()) for name, text in files.items()},
        "policies": hashes,
        "costs": [
            {"method": r.method, "seed": r.seed, "observability": r.observability, "noise": r.noise,
             "init": r.report.costs.get("init", 0), "adaptation": r.report.costs.get("adaptation", 0)}
            for r in results
        ],
    }
    (root / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    (root / "timing.json").write_text(json.dumps(exp.timing, indent=2, sort_keys=True) + "\n")
    return manifest
