"""Classification metrics, multi-seed aggregation and embedding distance statistics."""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.spatial.distance import pdist, cdist
from scipy.stats import rankdata

THRESHOLD = 0.5


@dataclass(frozen=True)
class ConfusionMatrix:
    tp: int
    tn: int
    fp: int
    fn: int

    @property
    def n(self) -> int:
        return self.tp + self.tn + self.fp + self.fn

    def to_dict(self) -> dict:
        return {"tp": self.tp, "tn": self.tn, "fp": self.fp, "fn": self.fn}


def confusion(scores, labels, threshold: float = THRESHOLD) -> ConfusionMatrix:
    """Positive prediction iff ``score >= threshold``."""
    scores = np.asarray(scores, dtype=np.float64).reshape(-1)
    labels = np.asarray(labels).reshape(-1)
    if len(scores) != len(labels):
        raise ValueError(f"{len(scores)} scores but {len(labels)} labels")
    if len(scores) == 0:
        raise ValueError("no cases to evaluate")
    pred = scores >= threshold
    truth = labels == 1
    return ConfusionMatrix(tp=int((pred & truth).sum()), tn=int((~pred & ~truth).sum()),
                           fp=int((pred & ~truth).sum()), fn=int((~pred & truth).sum()))


def mcc(cm: ConfusionMatrix) -> float:
    """Matthews correlation; 0 whenever any marginal count is zero."""
    tp, tn, fp, fn = cm.tp, cm.tn, cm.fp, cm.fn
    denom = (tp + fp) * (tp + fn) * (tn + fp) * (tn + fn)
    if denom == 0:
        return 0.0
    return (tp * tn - fp * fn) / math.sqrt(denom)


def accuracy(cm: ConfusionMatrix) -> float:
    if cm.n == 0:
        raise ValueError("accuracy of an empty confusion matrix")
    return (cm.tp + cm.tn) / cm.n


def roc_auc(scores, labels) -> float:
    """Probability that a random positive outscores a random negative (ties count half)."""
    scores = np.asarray(scores, dtype=np.float64).reshape(-1)
    labels = np.asarray(labels).reshape(-1)
    pos = labels == 1
    n_pos, n_neg = int(pos.sum()), int((~pos).sum())
    if n_pos == 0 or n_neg == 0:
        raise ValueError("ROC AUC needs both classes present")
    ranks = rankdata(scores)  # average ranks resolve ties as 0.5
    u = ranks[pos].sum() - n_pos * (n_pos + 1) / 2.0
    return float(u / (n_pos * n_neg))


def evaluate_scores(scores, labels, threshold: float = THRESHOLD) -> dict:
    cm = confusion(scores, labels, threshold)
    return {"mcc": mcc(cm), "accuracy": accuracy(cm), "roc_auc": roc_auc(scores, labels),
            "confusion": cm.to_dict()}


METRIC_NAMES = ("mcc", "accuracy", "roc_auc")


@dataclass
class MetricsReport:
    model: str
    runs: list = field(default_factory=list)  # per-seed metric dicts
    config_hash: str = ""

    def mean(self, metric: str) -> float:
        return float(np.mean([r[metric] for r in self.runs]))

    def std(self, metric: str) -> float:
        # population std over seeds
        return float(np.std([r[metric] for r in self.runs]))

    def formatted(self, metric: str) -> str:
        return f"{self.mean(metric):.2f} ± {self.std(metric):.3f}"

    def table_row(self) -> dict:
        row = {"model": self.model}
        for m in METRIC_NAMES:
            row[m] = self.formatted(m)
        return row


def aggregate_runs(model: str, runs: list[dict], config_hash: str = "") -> MetricsReport:
    if len(runs) < 2:
        raise ValueError("aggregation needs at least two runs")
    return MetricsReport(model, list(runs), config_hash)


@dataclass(frozen=True)
class EmbeddingStats:
    within_mean: float
    within_std: float
    between_mean: float
    between_std: float

    def to_dict(self) -> dict:
        return {"within_mean": self.within_mean, "within_std": self.within_std,
                "between_mean": self.between_mean, "between_std": self.between_std}


def embedding_distance_stats(embeddings, labels) -> EmbeddingStats:
    """Mean and std of Euclidean distances over within-class and between-class pairs."""
    x = np.asarray(embeddings, dtype=np.float64)
    labels = np.asarray(labels).reshape(-1)
    groups = [x[labels == c] for c in (0, 1)]
    if any(len(g) < 2 for g in groups):
        raise ValueError("each class needs at least two embeddings")
    within = np.concatenate([pdist(g) for g in groups])
    between = cdist(groups[0], groups[1]).ravel()
    return EmbeddingStats(float(within.mean()), float(within.std()),
                          float(between.mean()), float(between.std()))
