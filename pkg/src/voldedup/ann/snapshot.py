"""Index snapshots: persist the database items and backend parameters.

A snapshot stores the canonical item list plus the backend parameters
and rebuilds the index on load. Because every backend is deterministic
given (items, params, seed), the rebuilt index is identical to the one
that was saved — including graph adjacency and search results — while
the file stays small, simple, and robust to internal refactors of the
graph layout.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from ..errors import InvalidHeader, UnsupportedVersion
from .base import (
    BackendParams,
    ExactParams,
    HnswParams,
    IndexedItem,
    LshParams,
    VectorIndex,
)

SNAPSHOT_VERSION = 1


def params_to_dict(params: BackendParams) -> dict:
    if isinstance(params, ExactParams):
        return {"backend": "exact"}
    if isinstance(params, LshParams):
        return {
            "backend": "lsh",
            "num_tables": params.num_tables,
            "bits_per_table": params.bits_per_table,
            "seed": params.seed,
            "min_candidates": params.min_candidates,
        }
    if isinstance(params, HnswParams):
        return {
            "backend": "hnsw",
            "m": params.m,
            "ef_construction": params.ef_construction,
            "ef_search": params.ef_search,
            "seed": params.seed,
        }
    raise TypeError(f"unknown backend params {params!r}")


def params_from_dict(data: dict) -> BackendParams:
    backend = data.get("backend")
    fields = {key: value for key, value in data.items() if key != "backend"}
    if backend == "exact":
        return ExactParams()
    if backend == "lsh":
        return LshParams(**fields)
    if backend == "hnsw":
        return HnswParams(**fields)
    raise InvalidHeader(f"unknown backend {backend!r} in snapshot")


def save_index(index: VectorIndex, path: str | Path) -> None:
    store = index.store
    meta = {
        "version": SNAPSHOT_VERSION,
        "params": params_to_dict(index.params),
    }
    np.savez_compressed(
        path,
        meta=np.frombuffer(json.dumps(meta, sort_keys=True).encode("utf-8"), dtype=np.uint8),
        case_ids=np.asarray(store.case_ids, dtype=np.str_),
        slice_indices=store.slice_indices,
        matrix=store.matrix,
    )


def load_index(path: str | Path) -> VectorIndex:
    from . import build_index

    with np.load(path, allow_pickle=False) as data:
        meta = json.loads(bytes(data["meta"]).decode("utf-8"))
        if meta.get("version") != SNAPSHOT_VERSION:
            raise UnsupportedVersion(
                f"snapshot version {meta.get('version')}, expected {SNAPSHOT_VERSION}"
            )
        params = params_from_dict(meta["params"])
        case_ids = [str(c) for c in data["case_ids"]]
        slice_indices = data["slice_indices"]
        matrix = data["matrix"]
    items = [
        IndexedItem(case_id=cid, slice_index=int(si), vector=vec)
        for cid, si, vec in zip(case_ids, slice_indices, matrix)
    ]
    return build_index(items, params)
