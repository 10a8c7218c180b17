"""Threshold calibration: ROC curves, AUC, and cross-set Youden selection.

The decision rule everywhere in this package is closed at the bar:
a query is called a duplicate when its score is >= the threshold.
Calibration runs that rule over several scored query sets: each set
contributes its own Youden-optimal threshold as a candidate, every
candidate is then re-evaluated against every set, and the candidate
with the best mean sensitivity + specificity across sets wins.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .core import CaseId
from .errors import DegenerateSet

# Threshold calibrated on a large multi-task medical corpus with
# pretrained-transformer embeddings; a reasonable starting point when no
# calibration data is available, but recalibrate for your own embedder.
REFERENCE_THRESHOLD = 0.7711


def decision_rule(score: float, threshold: float) -> bool:
    """True when the score calls the query a duplicate (closed rule)."""
    return score >= threshold


@dataclass(frozen=True)
class ScoredItem:
    score: float
    is_positive: bool
    query_case: CaseId
    top1_case: CaseId | None = None
    ground_truth: CaseId | None = None

    def __post_init__(self):
        if not 0.0 <= self.score <= 1.0:
            raise ValueError(f"score must be in [0, 1], got {self.score}")


@dataclass(frozen=True)
class ScoredSet:
    """One named query set with binary labels, ready for ROC analysis."""

    name: str
    items: tuple[ScoredItem, ...]

    def __post_init__(self):
        object.__setattr__(self, "items", tuple(self.items))

    def scores(self, positive: bool) -> np.ndarray:
        return np.sort([i.score for i in self.items if i.is_positive == positive])


@dataclass(frozen=True)
class RocPoint:
    threshold: float
    sensitivity: float
    specificity: float


@dataclass(frozen=True)
class RocCurve:
    """Operating points at strictly decreasing thresholds.

    The first point sits above the maximum observed score (sensitivity
    0, specificity 1); the last sits at the minimum observed score
    (sensitivity 1).
    """

    points: tuple[RocPoint, ...] = field(repr=False)

    def __post_init__(self):
        object.__setattr__(self, "points", tuple(self.points))


def sens_spec_at(s: ScoredSet, threshold: float) -> tuple[float, float]:
    """Stage-1 sensitivity and specificity of a set at one threshold."""
    pos = neg = tp = tn = 0
    for item in s.items:
        called = decision_rule(item.score, threshold)
        if item.is_positive:
            pos += 1
            tp += called
        else:
            neg += 1
            tn += not called
    if pos == 0 or neg == 0:
        raise DegenerateSet(f"set {s.name!r} needs both classes, got {pos} pos / {neg} neg")
    return tp / pos, tn / neg


def roc_curve(s: ScoredSet) -> RocCurve:
    pos = s.scores(positive=True)
    neg = s.scores(positive=False)
    if len(pos) == 0 or len(neg) == 0:
        raise DegenerateSet(
            f"set {s.name!r} needs both classes, got {len(pos)} pos / {len(neg)} neg"
        )
    all_scores = np.concatenate([pos, neg])
    thresholds = np.unique(all_scores)[::-1]
    thresholds = np.concatenate([[thresholds[0] + 1.0], thresholds])
    # score >= t counts: searchsorted(side="left") finds how many fall below
    # t. Keep each rate a single integer division (tp/pos, tn/neg) so that
    # mathematically tied Youden values compare exactly equal and the
    # documented tie-breaks are not at the mercy of roundoff.
    sens = (len(pos) - np.searchsorted(pos, thresholds, side="left")) / len(pos)
    spec = np.searchsorted(neg, thresholds, side="left") / len(neg)
    points = [RocPoint(float(t), float(se), float(sp)) for t, se, sp in zip(thresholds, sens, spec)]
    return RocCurve(points)


def auc(curve: RocCurve) -> float:
    """Trapezoidal area under sensitivity vs (1 - specificity)."""
    fpr = np.array([1.0 - p.specificity for p in curve.points])
    tpr = np.array([p.sensitivity for p in curve.points])
    return float(np.sum((fpr[1:] - fpr[:-1]) * (tpr[1:] + tpr[:-1])) / 2.0)


def youden_threshold(curve: RocCurve) -> tuple[float, float, float]:
    """Operating point maximizing sensitivity + specificity.

    Ties go to the larger threshold (the stricter classifier); points
    are stored in descending threshold order so the first maximum wins.
    """
    best = curve.points[0]
    best_j = best.sensitivity + best.specificity
    for point in curve.points[1:]:
        j = point.sensitivity + point.specificity
        if j > best_j:
            best, best_j = point, j
    return best.threshold, best.sensitivity, best.specificity


@dataclass(frozen=True)
class CalibrationResult:
    """Per-set candidate thresholds, the cross-set score matrices, and the winner.

    ``se_matrix[u, v]`` / ``sp_matrix[u, v]`` hold set v's sensitivity /
    specificity at set u's candidate threshold; ``t_opt`` is the
    candidate whose mean of (sensitivity + specificity) over all sets is
    largest, with ties resolved toward the smaller set index.
    """

    set_names: tuple[str, ...]
    candidate_thresholds: np.ndarray
    se_matrix: np.ndarray
    sp_matrix: np.ndarray
    t_opt: float
    chosen_set_index: int


def select_optimal_threshold(sets: list[ScoredSet]) -> CalibrationResult:
    if not sets:
        raise DegenerateSet("need at least one scored set")
    n = len(sets)
    thresholds = np.empty(n)
    for u, s in enumerate(sets):
        thresholds[u], _, _ = youden_threshold(roc_curve(s))
    se = np.empty((n, n))
    sp = np.empty((n, n))
    for u in range(n):
        for v, s in enumerate(sets):
            se[u, v], sp[u, v] = sens_spec_at(s, thresholds[u])
    means = (se + sp).mean(axis=1)
    chosen = int(np.argmax(means))  # first maximum = smallest index on ties
    return CalibrationResult(
        set_names=tuple(s.name for s in sets),
        candidate_thresholds=thresholds,
        se_matrix=se,
        sp_matrix=sp,
        t_opt=float(thresholds[chosen]),
        chosen_set_index=chosen,
    )
