"""Computation cache for training runs.

Training is a pure function of (procedure, domain, goal, config, init), so
a repeated request can reuse the earlier result.  Callers still charge the
iterations of every request; only wall-clock time is saved.
"""

from __future__ import annotations

import hashlib
import json

import numpy as np

from gdgr.core import goal_key


def fingerprint(procedure: str, domain_id: int, goal, config, init=None) -> str:
    cfg = {k: v for k, v in sorted(vars(config).items())}
    parts = {
        "procedure": procedure,
        "domain": f"{domain_id:016x}",
        "goal": None if goal is None else list(goal_key(goal)),
        "config": cfg,
        "init": None if init is None else hashlib.sha1(np.ascontiguousarray(init, dtype="<f8").tobytes()).hexdigest(),
    }
    return hashlib.sha1(json.dumps(parts, sort_keys=True, default=str).encode()).hexdigest()[:16]


class TrainingMemo:
    def __init__(self):
        self._store: dict[str, tuple] = {}
        self.order: list[str] = []

    def __len__(self) -> int:
        return len(self._store)

    def __contains__(self, key: str) -> bool:
        return key in self._store

    def get_or_train(self, key: str, train):
        """``train()`` must return (policy, log)."""
        if key not in self._store:
            self._store[key] = train()
            self.order.append(key)
        return self._store[key]

    def items(self):
        return [(k, self._store[k]) for k in self.order]
