"""Volume-level duplicate scoring on top of slice retrieval.

Every query slice casts one vote: the case that owns its rank-1 nearest
database slice. Votes accumulate into a per-case histogram; the score of
the query is the normalized top-k count

    c(k) = (sum of the k largest histogram entries) / (number of query slices)

which lies in [0, 1] and reaches 1 exactly when at most k cases absorb
every slice vote. ``exclude_self`` suppresses votes for the query's own
case id, which turns the scorer into a leakage scanner for databases
queried against themselves.
"""

from __future__ import annotations

from dataclasses import dataclass

from .ann.base import VectorIndex
from .core import CaseId, EmbeddingSet, QueryLabel

RankedCases = list[tuple[CaseId, int]]
"""(case_id, count) pairs, descending count, ties ascending by case id."""


@dataclass(frozen=True)
class CaseHistogram:
    """Vote counts per database case for one query volume."""

    counts: dict[CaseId, int]
    total_slices: int

    def __post_init__(self):
        if self.total_slices < 1:
            raise ValueError("total_slices must be positive")
        if sum(self.counts.values()) > self.total_slices:
            raise ValueError("histogram counts exceed the number of query slices")


@dataclass(frozen=True)
class QueryScore:
    """Scored query: normalized count plus the top-voted case.

    ``top1_case`` is None only when no slice produced a vote, which can
    happen under exclude_self against a database holding only the
    query's own case.
    """

    query_case: CaseId
    c_k: float
    k: int
    top1_case: CaseId | None
    label: QueryLabel


def rank_cases(counts: dict[CaseId, int]) -> RankedCases:
    return sorted(counts.items(), key=lambda item: (-item[1], item[0]))


def case_histogram(
    query: EmbeddingSet, index: VectorIndex, exclude_self: bool = False
) -> CaseHistogram:
    """Vote each query slice for the case of its rank-1 database hit.

    With exclude_self, the vote goes to the nearest hit belonging to a
    different case; a slice finding no such hit contributes to the
    total but to no case.
    """
    # when skipping self-hits, ask for enough hits to get past every
    # slice the database holds for this case
    k = 1
    if exclude_self:
        k += index.store.case_counts.get(query.case_id, 0)
    counts: dict[CaseId, int] = {}
    for vector in query.vectors:
        hits = index.search(vector, k)
        if exclude_self:
            hits = [h for h in hits if h.case_id != query.case_id]
        if hits:
            winner = hits[0].case_id
            counts[winner] = counts.get(winner, 0) + 1
    return CaseHistogram(counts, query.slice_count)


def normalized_count(histogram: CaseHistogram, k: int) -> tuple[float, RankedCases]:
    """Fraction of query slices absorbed by the k most-voted cases."""
    if k < 1:
        raise ValueError("k must be >= 1")
    ranked = rank_cases(histogram.counts)
    top = sum(count for _, count in ranked[:k])
    return top / histogram.total_slices, ranked


def score_query(
    query: EmbeddingSet,
    index: VectorIndex,
    k: int,
    label: QueryLabel,
    exclude_self: bool = False,
) -> QueryScore:
    histogram = case_histogram(query, index, exclude_self)
    c_k, ranked = normalized_count(histogram, k)
    top1 = ranked[0][0] if ranked else None
    return QueryScore(query.case_id, c_k, k, top1, label)
