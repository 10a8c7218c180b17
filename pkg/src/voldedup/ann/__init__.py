"""Slice-embedding similarity index with exact, LSH, and HNSW backends."""

from __future__ import annotations

from ..core import EmbeddingSet
from .base import (
    BackendParams,
    ExactParams,
    HnswParams,
    IndexedItem,
    ItemStore,
    LshParams,
    SliceHit,
    VectorIndex,
    items_from_sets,
)
from .exact import ExactIndex
from .hnsw import HnswIndex
from .lsh import LshIndex

__all__ = [
    "BackendParams",
    "ExactParams",
    "LshParams",
    "HnswParams",
    "IndexedItem",
    "SliceHit",
    "VectorIndex",
    "build_index",
    "index_from_sets",
    "items_from_sets",
    "backend_from_name",
]

_BACKENDS = {
    ExactParams: ExactIndex,
    LshParams: LshIndex,
    HnswParams: HnswIndex,
}


def build_index(items: list[IndexedItem], params: BackendParams) -> VectorIndex:
    """Build an immutable index over the items with the requested backend."""
    store = ItemStore.from_items(items)
    return _BACKENDS[type(params)](store, params)


def index_from_sets(sets: list[EmbeddingSet], params: BackendParams) -> VectorIndex:
    """Build an index from whole embedding sets (one case id each)."""
    return build_index(items_from_sets(sets), params)


def backend_from_name(name: str, seed: int = 0) -> BackendParams:
    """Map a CLI-style backend name to default parameters."""
    name = name.lower()
    if name == "exact":
        return ExactParams()
    if name == "lsh":
        return LshParams(seed=seed)
    if name == "hnsw":
        return HnswParams(seed=seed)
    raise ValueError(f"unknown backend {name!r} (expected exact, lsh, or hnsw)")
