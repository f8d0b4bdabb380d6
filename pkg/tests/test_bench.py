import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from gdgr.bench import (
    ExperimentConfig,
    Record,
    compute_metrics,
    confusion_matrix,
    emit_outputs,
    generate_stream,
    run_aura,
    run_draco_baseline,
    run_experiment,
    run_graql_baseline,
)
from gdgr.bench.stream import load_stream, save_stream
from gdgr.core import ConfigurationError, GDGRError
from gdgr.recognize import observed_count


def _records(pairs, n_goals=2):
    return [Record(i, t, c, n_goals) for i, (t, c) in enumerate(pairs)]


def _oracle(records):
    """Straight-from-the-definition macro P/R/F."""
    classes = sorted({r.true_index for r in records} | {r.chosen_index for r in records})
    ps, rs, fs = [], [], []
    for c in classes:
        tp = sum(1 for r in records if r.true_index == c and r.chosen_index == c)
        pred = sum(1 for r in records if r.chosen_index == c)
        act = sum(1 for r in records if r.true_index == c)
        p = tp / pred if pred else 0.0
        rc = tp / act if act else 0.0
        ps.append(p)
        rs.append(rc)
        fs.append(2 * p * rc / (p + rc) if p + rc else 0.0)
    return np.mean(ps), np.mean(rs), np.mean(fs)


# -- metrics -----------------------------------------------------------------


def test_all_correct():
    rep = compute_metrics(_records([(0, 0), (1, 1), (2, 2)], 3))
    assert rep.accuracy == rep.precision == rep.recall == rep.f_score == 1.0
    assert rep.accuracy_std == 0.0


def test_two_class_confusion_matrix():
    pairs = [(0, 0)] * 4 + [(0, 1)] + [(1, 0)] * 2 + [(1, 1)] * 3
    rep = compute_metrics(_records(pairs))
    assert confusion_matrix(rep.records).tolist() == [[4, 1], [2, 3]]
    assert rep.precision == pytest.approx((4 / 6 + 3 / 4) / 2, abs=1e-15)
    assert rep.precision == pytest.approx(0.708, abs=1e-3)
    assert rep.recall == pytest.approx(0.7, abs=1e-15)
    f0 = 2 * (4 / 6) * 0.8 / (4 / 6 + 0.8)
    f1 = 2 * 0.75 * 0.6 / (0.75 + 0.6)
    assert rep.f_score == pytest.approx((f0 + f1) / 2, abs=1e-15)
    assert rep.accuracy == 0.7


def test_single_class_always_predicted():
    rep = compute_metrics(_records([(1, 1)] * 5))
    assert rep.per_class == {1: (1.0, 1.0, 1.0)}


def test_empty_records_rejected():
    with pytest.raises(GDGRError):
        compute_metrics([])


@settings(max_examples=1000, deadline=None)
@given(pairs=st.lists(st.tuples(st.integers(0, 3), st.integers(0, 3)), min_size=1, max_size=40))
def test_metrics_match_bruteforce_oracle(pairs):
    rep = compute_metrics(_records(pairs, 4))
    p, r, f = _oracle(rep.records)
    assert rep.precision == pytest.approx(p, abs=1e-12)
    assert rep.recall == pytest.approx(r, abs=1e-12)
    assert rep.f_score == pytest.approx(f, abs=1e-12)
    assert rep.micro_f == rep.accuracy == sum(t == c for t, c in pairs) / len(pairs)


# -- streams and runs ----------------------------------------------------------

SMALL = dict(
    family="grid",
    env={"width": 5, "height": 5},
    distribution={"width": 5, "height": 5, "lava_count": [0, 1]},
    methods=["meta", "draco", "graql"],
    observability=[0.5, 0.2],
    goal_counts=[2, 3],
    problems_per_count=2,
    goal_pool=[[4, 1], [1, 4], [4, 4], [0, 1]],
    train={"batch_size": 4},
    meta_train={"meta_bsz": 2, "adapt_bsz": 2, "adapt_steps": 1},
    budgets={"meta_iterations": 2, "finetune_iterations": 2, "draco_iterations": 2, "graql_episodes": 60},
    expert={"iterations": 3},
    seeds=[5],
)


@pytest.fixture(scope="module")
def small_cfg():
    return ExperimentConfig(**SMALL)


@pytest.fixture(scope="module")
def experiment(small_cfg):
    return run_experiment(small_cfg)


def test_stream_shape_and_determinism(small_cfg):
    s1 = generate_stream(small_cfg, 5, 0.5)
    s2 = generate_stream(small_cfg, 5, 0.5)
    assert len(s1) == 4 and [len(p.goals) for p in s1] == [2, 2, 3, 3]
    for a, b in zip(s1, s2):
        assert a.goals == b.goals and a.true_index == b.true_index
        assert len(set(a.goals)) == len(a.goals) and a.true_goal in a.goals
        assert np.array_equal(a.observations.indices, b.observations.indices)
        assert np.array_equal(a.trajectory.actions, b.trajectory.actions)
        assert len(a.observations) == observed_count(len(a.trajectory), 0.5)


def test_streams_at_different_levels_are_paired(small_cfg):
    hi = generate_stream(small_cfg, 5, 0.5)
    lo = generate_stream(small_cfg, 5, 0.2)
    for a, b in zip(hi, lo):
        assert a.goals == b.goals and np.array_equal(a.trajectory.actions, b.trajectory.actions)


def test_stream_round_trip(small_cfg, tmp_path):
    s = generate_stream(small_cfg, 5, 0.5)
    save_stream(s, tmp_path / "s")
    back = load_stream(tmp_path / "s")
    for a, b in zip(s, back):
        assert a.goals == b.goals and a.true_index == b.true_index
        assert np.array_equal(a.observations.states, b.observations.states)
        assert a.domain.domain_id == b.domain.domain_id


def test_draco_charges_every_occurrence(small_cfg):
    s = generate_stream(small_cfg, 5, 0.5)
    rep = run_draco_baseline(s, small_cfg)
    assert rep.costs["per_problem"] == [2 * len(p.goals) for p in s]


def test_meta_accounting(small_cfg):
    s = generate_stream(small_cfg, 5, 0.5)
    rep = run_aura(s, "meta", small_cfg)
    c = rep.costs
    assert all(x >= 0 for x in c["per_problem"]) and sum(c["per_problem"]) == c["adaptation"]
    assert c["adaptation"] <= 2 * len({g for p in s for g in p.goals})
    assert c["init"] == 2


def test_graql_rejects_continuous_streams():
    cfg = ExperimentConfig(**{**SMALL, "family": "reach", "env": {}, "distribution": {}, "metric": "wasserstein",
                              "methods": ["draco"], "goal_pool": None})
    s = generate_stream(cfg, 0, 0.5)
    with pytest.raises(ConfigurationError):
        run_graql_baseline(s, cfg)
    with pytest.raises(ConfigurationError):
        ExperimentConfig(**{**SMALL, "family": "reach", "metric": "wasserstein"})


def test_empty_stream_gives_empty_report(small_cfg):
    cfg = ExperimentConfig(**{**SMALL, "problems_per_count": 0})
    s = generate_stream(cfg, 5, 0.5)
    assert len(s) == 0
    assert run_draco_baseline(s, cfg).records == []


def test_metrics_csv_rows(experiment, tmp_path):
    emit_outputs(experiment, tmp_path / "out")
    lines = (tmp_path / "out" / "metrics.csv").read_text().splitlines()
    assert len(lines) - 1 == len(SMALL["observability"]) * len(SMALL["goal_counts"])
    assert lines[0].startswith("observability,noise,n_goals,meta_accuracy")
    man = json.loads((tmp_path / "out" / "manifest.json").read_text())
    assert man["config"]["seeds"] == [5]
    assert all(len(h) == 40 for h in man["policies"].values())


def test_outputs_byte_reproducible(small_cfg, experiment, tmp_path):
    emit_outputs(experiment, tmp_path / "a")
    emit_outputs(run_experiment(ExperimentConfig(**SMALL)), tmp_path / "b")
    for name in ("metrics.csv", "records.csv", "learning_curves.csv", "manifest.json"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes(), name
    for f in (tmp_path / "a" / "policies").iterdir():
        assert f.read_bytes() == (tmp_path / "b" / "policies" / f.name).read_bytes()


def test_emit_refuses_zero_records(tmp_path):
    exp = run_experiment(ExperimentConfig(**{**SMALL, "problems_per_count": 0, "methods": ["draco"]}))
    with pytest.raises(GDGRError):
        emit_outputs(exp, tmp_path / "z")


def test_config_validation():
    with pytest.raises(ConfigurationError):
        ExperimentConfig(family="hex")
    with pytest.raises(ConfigurationError):
        ExperimentConfig(observability=[0.0])
    with pytest.raises(ConfigurationError):
        ExperimentConfig(budgets={"everything": 1})
    with pytest.raises(ConfigurationError):
        ExperimentConfig.from_dict({"colour": "blue"})
    with pytest.raises(ConfigurationError):
        ExperimentConfig(train={"direction": "sideways"})
