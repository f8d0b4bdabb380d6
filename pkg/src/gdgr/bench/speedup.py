"""Adaptation speed: fine-tuning from a meta-policy versus training from scratch."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from gdgr.learn.meta import MetaPolicy, fine_tune
from gdgr.learn.pg import TrainConfig, TrainLog, pg_train


def first_reach(returns, threshold: float) -> int | None:
    """Number of updates before the first batch whose mean return reaches ``threshold``."""
    for i, r in enumerate(returns):
        if r >= threshold:
            return i
    return None


@dataclass(frozen=True)
class SpeedupRun:
    seed: int
    threshold: float
    scratch_iterations: int | None
    finetune_iterations: int | None
    scratch_returns: tuple
    finetune_returns: tuple


def plateau_threshold(returns, fraction: float = 0.9, tail: int = 10) -> float:
    """``fraction`` of the way from the first batch's return to the plateau.

    The plateau is the mean of the last ``tail`` batches.  Measuring from
    the starting return keeps the rule meaningful for negative rewards.
    """
    r = np.asarray(returns, dtype=np.float64)
    plateau = float(r[-min(tail, r.size):].mean())
    return float(r[0] + fraction * (plateau - r[0]))


def compare_adaptation(domain, goal, meta: MetaPolicy, config: TrainConfig, seeds, finetune_iterations: int | None = None) -> list:
    """Paired from-scratch and fine-tuned training runs, one per seed."""
    runs = []
    for seed in seeds:
        cfg = config.replace(seed=int(seed), plateau_window=0)
        scratch, tuned = TrainLog(), TrainLog()
        pg_train(domain, goal, cfg, log=scratch)
        fine_tune(meta, domain, goal, cfg.replace(iterations=finetune_iterations or cfg.iterations), log=tuned)
        thr = plateau_threshold(scratch.returns)
        runs.append(SpeedupRun(
            int(seed), thr, first_reach(scratch.returns, thr), first_reach(tuned.returns, thr),
            tuple(scratch.returns), tuple(tuned.returns),
        ))
    return runs


def median_iterations(runs, which: str) -> float:
    """Median first-reach iterations; runs that never reach count as infinite."""
    vals = [getattr(r, f"{which}_iterations") for r in runs]
    return float(np.median([np.inf if v is None else v for v in vals]))


__all__ = ["SpeedupRun", "compare_adaptation", "first_reach", "median_iterations", "plateau_threshold"]
