"""Command-line entry point: ``gdgr <subcommand> [--config F] [--seed N] [--out DIR] [--mode M]``.

Exit codes: 0 success, 2 configuration error, 3 training failure, 4 I/O error.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import sys
from pathlib import Path

from gdgr.aura import GC, META, Memory, domain_adaptation, goals_adaptation, load_memory, save_memory, solve_problem
from gdgr.bench.metrics import Record, compute_metrics
from gdgr.bench.runner import Experiment, RunResult, aura_config, emit_outputs, metrics_csv, records_csv
from gdgr.bench.stream import ExperimentConfig, ExpertPool, generate_stream, load_stream, save_stream
from gdgr.core import ConfigurationError, DomainError, GDGRError, SamplingError, TrainingError
from gdgr.learn.meta import MetaPolicy, meta_train
from gdgr.learn.pg import TrainLog, gc_train
from gdgr.learn.policy import load_policy, save_policy

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_TRAINING = 3
EXIT_IO = 4


def _config(args) -> ExperimentConfig:
    cfg = ExperimentConfig.load(args.config) if args.config else ExperimentConfig()
    if args.seed is not None:
        cfg.seeds = [args.seed]
    if args.mode is not None and args.command == "bench":
        cfg.methods = [args.mode]
        cfg.validate()
    return cfg


def _seed(args, cfg) -> int:
    return args.seed if args.seed is not None else int(cfg.seeds[0])


def _write_curve(path: Path, lg: TrainLog) -> None:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["iteration", "mean_return", "std_return"])
    for i, (m, s) in enumerate(zip(lg.returns, lg.returns_std)):
        w.writerow([i, f"{m:.6f}", f"{s:.6f}"])
    path.write_text(buf.getvalue())


def cmd_train_meta(args) -> int:
    cfg = _config(args)
    seed = _seed(args, cfg)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    lg = TrainLog()
    mp = meta_train(cfg.distribution_descriptor(), cfg.meta_config().replace(seed=seed), log=lg)
    save_policy(mp.policy, out / "meta.pol")
    _write_curve(out / "meta_curve.csv", lg)
    print(f"meta-policy: {mp.iterations} iterations -> {out / 'meta.pol'}")
    return EXIT_OK


def cmd_train_gc(args) -> int:
    cfg = _config(args)
    seed = _seed(args, cfg)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    lg = TrainLog()
    policy = gc_train(cfg.stream_domain(), cfg.train_config(iterations=cfg.budget("gc_iterations"), seed=seed), log=lg)
    save_policy(policy, out / "gc.pol")
    _write_curve(out / "gc_curve.csv", lg)
    print(f"goal-conditioned policy: {lg.iterations} iterations -> {out / 'gc.pol'}")
    return EXIT_OK


def _meta_from_disk(cfg, out: Path):
    path = out / "meta.pol"
    if path.exists():
        return MetaPolicy(load_policy(path), cfg.distribution_descriptor(), cfg.budget("meta_iterations"))
    return None


def cmd_gen_stream(args) -> int:
    cfg = _config(args)
    seed = _seed(args, cfg)
    out = Path(args.out)
    exp = Experiment(cfg)
    cached = _meta_from_disk(cfg, out)
    if cached is not None:
        exp.meta_policies[seed] = cached
    learner = "tabular" if args.mode == "graql" else "pg"
    experts = ExpertPool(cfg, seed, exp.memo, meta_provider=exp.meta_policy)
    stream = generate_stream(cfg, seed, learner=learner, experts=experts)
    save_stream(stream, out / "stream")
    print(f"{len(stream)} problems -> {out / 'stream'}")
    return EXIT_OK


def cmd_adapt(args) -> int:
    cfg = _config(args)
    seed = _seed(args, cfg)
    out = Path(args.out)
    mode = args.mode or META
    if mode not in (GC, META):
        raise ConfigurationError("adapt runs AURA; --mode must be gc or meta")
    stream = load_stream(out / "stream")
    acfg = aura_config(cfg, mode, seed)
    memory = Memory(mode=mode)
    if mode == META:
        mp = _meta_from_disk(cfg, out)
        if mp is None:
            mp = meta_train(stream.distribution, acfg.meta)
        memory.meta_policy = mp
        memory.init_iterations = mp.iterations
    total = 0
    for p in stream:
        entry, d_cost = domain_adaptation(p.domain, memory, acfg)
        memory.domain_entries[entry.domain_id] = entry
        _, _, g_cost = goals_adaptation(p.goals, p.domain, entry, memory, acfg)
        total += d_cost + g_cost
    save_memory(memory, out / "memory")
    print(f"adapted {memory.cache_size()} policies in {total} iterations -> {out / 'memory'}")
    return EXIT_OK


def cmd_recognize(args) -> int:
    cfg = _config(args)
    seed = _seed(args, cfg)
    out = Path(args.out)
    stream = load_stream(out / "stream")
    memory = load_memory(out / "memory")
    acfg = aura_config(cfg, memory.mode, seed)
    records = []
    for p in stream:
        res = solve_problem(p, p.index, memory, acfg)
        records.append(
            Record(p.index, p.true_index, res.chosen_index, len(p.goals), tuple(p.true_goal), tuple(res.chosen),
                   tuple(res.scores), memory.mode, p.observability, p.noise, seed, res.tie_broken)
        )
    save_memory(memory, out / "memory")
    costs = {"per_problem": [c["domain"] + c["goals"] for c in memory.problem_costs]}
    rep = compute_metrics(records, costs)
    results = [RunResult(memory.mode, seed, stream.observability, stream.noise, rep)]
    (out / "records.csv").write_text(records_csv(results))
    (out / "metrics.csv").write_text(metrics_csv(results, [memory.mode]))
    print(f"accuracy {rep.accuracy:.3f}  macro-F {rep.f_score:.3f}  ({len(records)} problems)")
    return EXIT_OK


def cmd_bench(args) -> int:
    cfg = _config(args)
    exp = Experiment(cfg)
    exp.run()
    emit_outputs(exp, args.out)
    print(metrics_csv(exp.results, cfg.methods), end="")
    return EXIT_OK


def cmd_report(args) -> int:
    out = Path(args.out)
    rows = list(csv.DictReader(io.StringIO((out / "records.csv").read_text())))
    if not rows:
        raise GDGRError("records.csv holds no records")
    results = {}
    for r in rows:
        key = (r["method"], int(r["seed"]), float(r["observability"]), float(r["noise"]))
        rec = Record(
            int(r["problem"]), int(r["true_index"]), int(r["chosen_index"]), int(r["n_goals"]),
            tuple(json.loads(r["true_goal"])), tuple(json.loads(r["chosen_goal"])), (),
            r["method"], key[2], key[3], key[1], r["tie_broken"] == "1",
        )
        results.setdefault(key, ([], []))
        results[key][0].append(rec)
        results[key][1].append(int(r["iterations"]) if r["iterations"] else 0)
    methods = list(dict.fromkeys(k[0] for k in results))
    runs = [
        RunResult(k[0], k[1], k[2], k[3], compute_metrics(recs, {"per_problem": iters}))
        for k, (recs, iters) in results.items()
    ]
    text = metrics_csv(runs, methods)
    (out / "metrics.csv").write_text(text)
    print(text, end="")
    return EXIT_OK


COMMANDS = {
    "train-meta": cmd_train_meta,
    "train-gc": cmd_train_gc,
    "gen-stream": cmd_gen_stream,
    "adapt": cmd_adapt,
    "recognize": cmd_recognize,
    "bench": cmd_bench,
    "report": cmd_report,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="gdgr", description="Goal recognition over dynamic goal sets.")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", help="experiment config (YAML or JSON)")
        p.add_argument("--seed", type=int, help="master seed (unsigned 64-bit)")
        p.add_argument("--out", default="results", help="output directory")
        p.add_argument("--mode", choices=["gc", "meta", "draco", "graql"])
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    if args.seed is not None and not 0 <= args.seed < 2**64:
        print("error: --seed must be an unsigned 64-bit integer", file=sys.stderr)
        return EXIT_CONFIG
    try:
        return COMMANDS[args.command](args)
    except (ConfigurationError, DomainError, SamplingError) as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except TrainingError as exc:
        print(f"training failed: {exc}", file=sys.stderr)
        return EXIT_TRAINING
    except OSError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    except GDGRError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
