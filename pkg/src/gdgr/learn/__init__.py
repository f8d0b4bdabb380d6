"""Policies and the training procedures that produce them."""

from gdgr.learn.baseline import ValueBaseline, poly2
from gdgr.learn.meta import MetaPolicy, fine_tune, meta_train
from gdgr.learn.pg import TrainConfig, TrainLog, evaluate, gc_train, kl_constrained_step, pg_train
from gdgr.learn.policy import (
    PolicyMath,
    StochasticPolicy,
    init_policy,
    load_policy,
    policy_from_bytes,
    policy_to_bytes,
    save_policy,
    tabular_policy,
)
from gdgr.learn.qlearn import oracle_policy, q_learn, softmax_rows, value_iteration

__all__ = [
    "MetaPolicy",
    "PolicyMath",
    "StochasticPolicy",
    "TrainConfig",
    "TrainLog",
    "ValueBaseline",
    "evaluate",
    "fine_tune",
    "gc_train",
    "init_policy",
    "kl_constrained_step",
    "load_policy",
    "meta_train",
    "oracle_policy",
    "pg_train",
    "poly2",
    "policy_from_bytes",
    "policy_to_bytes",
    "q_learn",
    "save_policy",
    "softmax_rows",
    "tabular_policy",
    "value_iteration",
]
