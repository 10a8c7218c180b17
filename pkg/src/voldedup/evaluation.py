"""Two-stage duplicate-detection metrics and dataset bucket splitting.

Stage 1 is threshold-only: a query whose score clears the threshold is
called a duplicate. Stage 2 additionally demands that the top-voted
case match the query's ground truth, so a confident hit on the *wrong*
case stops counting as a true positive. Stage-2 specificity is reported
under two conventions because the bookkeeping for those wrong-case hits
is a genuine modeling choice:

- ``spec_stage2_strict``: true negatives over the negative-labeled queries
  only (mismatches hurt sensitivity, not specificity);
- ``spec_stage2_folded``: mismatch false positives join the denominator,
  dragging specificity down as well.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass
from typing import Iterable, Mapping, Sequence

from .ann.base import VectorIndex
from .calibration import ScoredItem, ScoredSet, auc, decision_rule, roc_curve
from .core import CaseId, EmbeddingSet, QueryLabel
from .errors import EmptyTask, MissingGroundTruth
from .retrieval import QueryScore, score_query


class Prediction(enum.Enum):
    DUPLICATE = "PredictedDuplicate"
    NON_DUPLICATE = "PredictedNonDuplicate"


def stage1_classify(score: QueryScore, threshold: float) -> Prediction:
    if decision_rule(score.c_k, threshold):
        return Prediction.DUPLICATE
    return Prediction.NON_DUPLICATE


@dataclass(frozen=True)
class StageCounts:
    tp: int = 0
    fp: int = 0
    tn: int = 0
    fn: int = 0
    fp_mismatch: int = 0  # positives above threshold whose top case is wrong

    def to_dict(self) -> dict[str, int]:
        return {
            "tp": self.tp,
            "fp": self.fp,
            "tn": self.tn,
            "fn": self.fn,
            "fp_mismatch": self.fp_mismatch,
        }


@dataclass(frozen=True)
class StageMetrics:
    """Both stages' metrics at one threshold; ratios are None when undefined."""

    threshold: float
    auc: float | None
    sens_stage1: float | None
    spec_stage1: float | None
    sens_stage2: float | None
    spec_stage2_strict: float | None
    spec_stage2_folded: float | None
    counts_stage1: StageCounts
    counts_stage2: StageCounts

    def to_dict(self) -> dict:
        return {
            "threshold": self.threshold,
            "auc": self.auc,
            "sens_stage1": self.sens_stage1,
            "spec_stage1": self.spec_stage1,
            "sens_stage2": self.sens_stage2,
            "spec_stage2_strict": self.spec_stage2_strict,
            "spec_stage2_folded": self.spec_stage2_folded,
            "counts_stage1": self.counts_stage1.to_dict(),
            "counts_stage2": self.counts_stage2.to_dict(),
        }


def _ratio(num: int, den: int) -> float | None:
    return num / den if den else None


def stage2_confusion(scores: Iterable[QueryScore], threshold: float) -> StageMetrics:
    """Confusion counts and metrics for both stages at one threshold."""
    tp1 = fp1 = tn1 = fn1 = 0
    tp2 = fp_mm = fn2 = 0
    for score in scores:
        called = decision_rule(score.c_k, threshold)
        if score.label.is_positive:
            if score.label.ground_truth is None:
                raise MissingGroundTruth(f"query {score.query_case!r} has no ground truth")
            if called:
                tp1 += 1
                if score.top1_case == score.label.ground_truth:
                    tp2 += 1
                else:
                    fp_mm += 1
            else:
                fn1 += 1
                fn2 += 1
        else:
            if called:
                fp1 += 1
            else:
                tn1 += 1
    counts_stage1 = StageCounts(tp=tp1, fp=fp1, tn=tn1, fn=fn1)
    counts_stage2 = StageCounts(tp=tp2, fp=fp1, tn=tn1, fn=fn2, fp_mismatch=fp_mm)
    return StageMetrics(
        threshold=threshold,
        auc=None,
        sens_stage1=_ratio(tp1, tp1 + fn1),
        spec_stage1=_ratio(tn1, tn1 + fp1),
        # the stage-2 denominator stays the full positive population, so a
        # wrong-case hit demotes a true positive instead of shrinking the base
        sens_stage2=_ratio(tp2, tp2 + fn2 + fp_mm),
        spec_stage2_strict=_ratio(tn1, tn1 + fp1),
        spec_stage2_folded=_ratio(tn1, tn1 + fp1 + fp_mm),
        counts_stage1=counts_stage1,
        counts_stage2=counts_stage2,
    )


def scored_set(name: str, scores: Iterable[QueryScore]) -> ScoredSet:
    """Adapt query scores to the calibration module's input shape."""
    items = tuple(
        ScoredItem(
            score=s.c_k,
            is_positive=s.label.is_positive,
            query_case=s.query_case,
            top1_case=s.top1_case,
            ground_truth=s.label.ground_truth,
        )
        for s in scores
    )
    return ScoredSet(name, items)


def score_queries(
    queries: Iterable[tuple[EmbeddingSet, QueryLabel]],
    index: VectorIndex,
    k: int,
    exclude_self: bool = False,
) -> list[QueryScore]:
    return [score_query(es, index, k, label, exclude_self) for es, label in queries]


def evaluate_query_set(name: str, scores: Sequence[QueryScore], threshold: float) -> StageMetrics:
    """Metrics for one mixed positive/negative scored query set.

    The AUC is computed over the same list, so callers pair each
    positive set (duplicates or one transform's near-duplicates) with
    its non-duplicate counterpart before calling.
    """
    metrics = stage2_confusion(scores, threshold)
    set_auc = auc(roc_curve(scored_set(name, scores)))
    return StageMetrics(
        threshold=metrics.threshold,
        auc=set_auc,
        sens_stage1=metrics.sens_stage1,
        spec_stage1=metrics.spec_stage1,
        sens_stage2=metrics.sens_stage2,
        spec_stage2_strict=metrics.spec_stage2_strict,
        spec_stage2_folded=metrics.spec_stage2_folded,
        counts_stage1=metrics.counts_stage1,
        counts_stage2=metrics.counts_stage2,
    )


@dataclass(frozen=True)
class TaskSplit:
    """One task's database half (A) and held-out half (C), in input order."""

    db_cases: tuple[CaseId, ...]
    heldout_cases: tuple[CaseId, ...]


@dataclass(frozen=True)
class BucketAssignment:
    per_task: dict[str, TaskSplit]

    @property
    def db_cases(self) -> list[CaseId]:
        return [c for split in self.per_task.values() for c in split.db_cases]

    @property
    def heldout_cases(self) -> list[CaseId]:
        return [c for split in self.per_task.values() for c in split.heldout_cases]


def split_cases(cases: Sequence[CaseId]) -> TaskSplit:
    """First floor(n/2) cases go to the database half, the rest are held out."""
    if not cases:
        raise EmptyTask("cannot split an empty case list")
    half = len(cases) // 2
    return TaskSplit(tuple(cases[:half]), tuple(cases[half:]))


def split_buckets(cases_by_task: Mapping[str, Sequence[CaseId]]) -> BucketAssignment:
    """Apply the per-task half split to every task, preserving task order."""
    return BucketAssignment({task: split_cases(cases) for task, cases in cases_by_task.items()})
