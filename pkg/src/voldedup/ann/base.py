"""Shared machinery for the similarity-index backends.

All backends store items in one canonical order, ascending by
(case_id, slice_index). Tie-breaking on equal distances then falls out of
a stable sort over internal ids, which makes search results independent
of the order items were supplied in.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from ..core import CaseId, EmbeddingSet
from ..errors import DimensionMismatch, DuplicateCaseId, EmptyDatabase, NonFiniteValue


@dataclass(frozen=True)
class IndexedItem:
    """One database entry: a slice embedding with its origin."""

    case_id: CaseId
    slice_index: int
    vector: np.ndarray


@dataclass(frozen=True)
class SliceHit:
    """A retrieved neighbor with its exact Euclidean distance."""

    case_id: CaseId
    slice_index: int
    distance: float


@dataclass(frozen=True)
class ExactParams:
    name = "exact"


@dataclass(frozen=True)
class LshParams:
    """Random-hyperplane LSH configuration.

    ``min_candidates`` is the smallest candidate pool the search will
    re-rank: when matching buckets (then Hamming-1 probes) yield fewer
    candidates than max(k, min_candidates), the search escalates to a full
    scan. A bare empty-union fallback leaves rank-1 recall near zero on
    sparse signature spaces, so the floor is part of the contract here.
    """

    num_tables: int = 8
    bits_per_table: int = 16
    seed: int = 0
    min_candidates: int = 64
    name = "lsh"

    def __post_init__(self):
        if self.num_tables < 1:
            raise ValueError("num_tables must be >= 1")
        if not 1 <= self.bits_per_table <= 64:
            raise ValueError("bits_per_table must be in [1, 64]")


@dataclass(frozen=True)
class HnswParams:
    """Layered proximity-graph configuration.

    ``level_lambda`` defaults to 1/ln(m), the standard geometric level
    assignment; ``ef_construction`` and ``ef_search`` trade build/query
    time for recall.
    """

    m: int = 16
    ef_construction: int = 200
    ef_search: int = 64
    seed: int = 0
    level_lambda: float | None = None
    name = "hnsw"

    def __post_init__(self):
        if self.m < 2:
            raise ValueError("m must be >= 2")
        if self.ef_construction < self.m:
            raise ValueError("ef_construction must be >= m")
        if self.ef_search < 1:
            raise ValueError("ef_search must be >= 1")
        if self.level_lambda is None:
            object.__setattr__(self, "level_lambda", 1.0 / math.log(self.m))


BackendParams = ExactParams | LshParams | HnswParams


@dataclass
class ItemStore:
    """Canonically ordered item storage shared by every backend."""

    case_ids: list[CaseId]
    slice_indices: np.ndarray
    matrix: np.ndarray  # float64, shape (n, dim)
    case_counts: dict[CaseId, int]

    @classmethod
    def from_items(cls, items: list[IndexedItem]) -> "ItemStore":
        if not items:
            raise EmptyDatabase("cannot build an index from zero items")
        order = sorted(range(len(items)), key=lambda i: (items[i].case_id, items[i].slice_index))
        vectors = []
        case_ids = []
        slice_indices = []
        dim = None
        for i in order:
            item = items[i]
            vec = np.asarray(item.vector, dtype=np.float64).reshape(-1)
            if dim is None:
                dim = vec.shape[0]
            elif vec.shape[0] != dim:
                raise DimensionMismatch(
                    f"item {item.case_id}/{item.slice_index} has dim {vec.shape[0]}, expected {dim}"
                )
            if not np.all(np.isfinite(vec)):
                raise NonFiniteValue(f"item {item.case_id}/{item.slice_index} is non-finite")
            vectors.append(vec)
            case_ids.append(item.case_id)
            slice_indices.append(item.slice_index)
        counts: dict[CaseId, int] = {}
        for cid in case_ids:
            counts[cid] = counts.get(cid, 0) + 1
        return cls(
            case_ids=case_ids,
            slice_indices=np.asarray(slice_indices, dtype=np.int64),
            matrix=np.ascontiguousarray(np.stack(vectors)),
            case_counts=counts,
        )

    @property
    def size(self) -> int:
        return self.matrix.shape[0]

    @property
    def dim(self) -> int:
        return self.matrix.shape[1]

    def check_query(self, query: np.ndarray) -> np.ndarray:
        query = np.asarray(query, dtype=np.float64).reshape(-1)
        if query.shape[0] != self.dim:
            raise DimensionMismatch(f"query dim {query.shape[0]} != index dim {self.dim}")
        return query

    def squared_distances(self, query: np.ndarray, ids: np.ndarray | None = None) -> np.ndarray:
        rows = self.matrix if ids is None else self.matrix[ids]
        return ((rows - query) ** 2).sum(axis=1)

    def hits_for(self, internal_ids: np.ndarray, sq_dists: np.ndarray) -> list[SliceHit]:
        return [
            SliceHit(
                case_id=self.case_ids[i],
                slice_index=int(self.slice_indices[i]),
                distance=math.sqrt(float(d)),
            )
            for i, d in zip(internal_ids, sq_dists)
        ]


class VectorIndex:
    """Base class: canonical storage plus the common search contract.

    Subclasses implement ``_candidates(query, k)`` returning internal ids
    (any order, may exceed k); the base re-ranks them by exact squared
    distance with the stable (case_id, slice_index) tie-break and trims
    to k.
    """

    def __init__(self, store: ItemStore, params: BackendParams):
        self.store = store
        self.params = params

    @property
    def dim(self) -> int:
        return self.store.dim

    @property
    def size(self) -> int:
        return self.store.size

    def case_count(self, case_id: CaseId) -> int:
        return self.store.case_counts.get(case_id, 0)

    def search(self, query: np.ndarray, k: int) -> list[SliceHit]:
        """Return up to k nearest neighbors, ascending by distance.

        Distances are always exact; approximation affects only which
        items are considered.
        """
        if k < 1:
            raise ValueError("k must be >= 1")
        query = self.store.check_query(query)
        ids = np.asarray(self._candidates(query, k), dtype=np.int64)
        ids = np.sort(ids)  # canonical order, so stable sort ties on (case_id, slice_index)
        sq = self.store.squared_distances(query, ids)
        order = np.argsort(sq, kind="stable")[:k]
        return self.store.hits_for(ids[order], sq[order])

    def _candidates(self, query: np.ndarray, k: int) -> np.ndarray:
        raise NotImplementedError


def items_from_sets(sets: list[EmbeddingSet]) -> list[IndexedItem]:
    """Flatten embedding sets into indexable items.

    Rejects two sets sharing a case id: case identity must be unique
    within one database.
    """
    seen: set[CaseId] = set()
    items: list[IndexedItem] = []
    for es in sets:
        if es.case_id in seen:
            raise DuplicateCaseId(f"case id {es.case_id!r} already present in the database")
        seen.add(es.case_id)
        for j, vec in enumerate(es.vectors):
            items.append(IndexedItem(case_id=es.case_id, slice_index=j, vector=vec))
    return items
