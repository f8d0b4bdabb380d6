"""Classification metrics over recognition records."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from gdgr.core import GDGRError


@dataclass(frozen=True)
class Record:
    """Outcome of one recognition problem.

    Classes are positions within the problem's goal set, so problems with
    different goals share one confusion matrix.
    """

    problem: int
    true_index: int
    chosen_index: int
    n_goals: int
    true_goal: tuple = ()
    chosen_goal: tuple = ()
    scores: tuple = ()
    method: str = ""
    observability: float = 1.0
    noise: float = 0.0
    seed: int = 0
    tie_broken: bool = False

    @property
    def correct(self) -> bool:
        return self.true_index == self.chosen_index


@dataclass
class MetricsReport:
    records: list
    accuracy: float
    precision: float
    recall: float
    f_score: float
    accuracy_std: float
    precision_std: float
    recall_std: float
    f_std: float
    micro_f: float
    per_class: dict = field(default_factory=dict)
    costs: dict = field(default_factory=dict)

    def row(self) -> dict:
        return {
            "accuracy": self.accuracy,
            "accuracy_std": self.accuracy_std,
            "precision": self.precision,
            "precision_std": self.precision_std,
            "recall": self.recall,
            "recall_std": self.recall_std,
            "f_score": self.f_score,
            "f_std": self.f_std,
        }


def confusion_matrix(records) -> np.ndarray:
    k = max(max(r.true_index, r.chosen_index) for r in records) + 1
    cm = np.zeros((k, k), dtype=np.int64)
    for r in records:
        cm[r.true_index, r.chosen_index] += 1
    return cm


def macro_scores(cm: np.ndarray):
    """Macro precision, recall and F over classes that occur at all.

    A class with actual instances but no predictions has precision 0.
    """
    per = {}
    for c in range(cm.shape[0]):
        tp = cm[c, c]
        pred = cm[:, c].sum()
        actual = cm[c, :].sum()
        if pred == 0 and actual == 0:
            continue
        p = tp / pred if pred else 0.0
        r = tp / actual if actual else 0.0
        f = 2 * p * r / (p + r) if p + r > 0 else 0.0
        per[c] = (float(p), float(r), float(f))
    vals = np.array(list(per.values()))
    return float(vals[:, 0].mean()), float(vals[:, 1].mean()), float(vals[:, 2].mean()), per


def compute_metrics(records, costs: dict | None = None) -> MetricsReport:
    """Accuracy and macro P/R/F; spreads are the standard deviation of
    per-problem correctness, i.e. each problem is one sample."""
    records = list(records)
    if not records:
        raise GDGRError("cannot compute metrics from zero records")
    cm = confusion_matrix(records)
    p, r, f, per = macro_scores(cm)
    hits = np.array([float(x.correct) for x in records])
    acc = float(hits.mean())
    sd = float(hits.std())
    micro = float(np.trace(cm) / cm.sum())
    return MetricsReport(records, acc, p, r, f, sd, sd, sd, sd, micro, per, dict(costs or {}))
