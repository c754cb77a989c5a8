"""Second-stage classifiers over the (L-MWR, R-MWR, G-MWR) score triple."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any

import numpy as np
from scipy.special import expit
from sklearn.linear_model import LogisticRegression
from sklearn.svm import LinearSVC
from sklearn.tree import DecisionTreeClassifier

META_KINDS = ("average", "majority", "logistic", "linear_svm", "decision_tree")


@dataclass
class MetaClassifier:
    kind: str
    params: dict = field(default_factory=dict)
    model: Any = None


def _check(sub_scores) -> np.ndarray:
    s = np.atleast_2d(np.asarray(sub_scores, dtype=np.float64))
    if s.shape[1] != 3:
        raise ValueError(f"meta-classifiers take (n, 3) sub-model scores, got {s.shape}")
    return s


def fit_meta(kind: str, sub_scores, labels, seed: int = 0) -> MetaClassifier:
    s = _check(sub_scores)
    y = np.asarray(labels, dtype=np.float64).reshape(-1)
    if kind in ("average", "majority"):
        return MetaClassifier(kind)
    if kind not in META_KINDS:
        raise ValueError(f"unknown meta-classifier {kind!r}; choose from {META_KINDS}")
    y = y.astype(int)
    if len(np.unique(y)) < 2:
        raise ValueError(f"{kind} needs both classes among its training labels")
    if kind == "logistic":
        params = {"C": 1.0}
        model = LogisticRegression(C=1.0)
    elif kind == "linear_svm":
        params = {"C": 1.0}
        model = LinearSVC(C=1.0, random_state=seed)
    else:
        params = {"max_depth": 3, "min_samples_leaf": 5}
        model = DecisionTreeClassifier(criterion="gini", random_state=seed, **params)
    return MetaClassifier(kind, params, model.fit(s, y))


def meta_predict(clf: MetaClassifier, sub_scores) -> np.ndarray:
    """Scores thresholded at 0.5 by the evaluation code."""
    s = _check(sub_scores)
    if clf.kind == "average":
        return s.mean(axis=1)
    if clf.kind == "majority":
        return ((s > 0.5).sum(axis=1) >= 2).astype(np.float64)
    if clf.kind == "linear_svm":
        # the logistic map of the margin puts the decision boundary at 0.5
        return expit(clf.model.decision_function(s))
    if clf.kind in ("logistic", "decision_tree"):
        return clf.model.predict_proba(s)[:, 1]
    raise ValueError(f"unknown meta-classifier {clf.kind!r}")
