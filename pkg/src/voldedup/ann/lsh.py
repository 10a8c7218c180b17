"""Random-hyperplane LSH backend.

Each table hashes a vector to a bit signature: bit b is 1 when the dot
product with the table's b-th Gaussian-sampled direction is >= 0. Items
sharing a signature land in one bucket. A query collects the union of its
matching buckets across tables, widens to Hamming-distance-1 probes when
that pool is too small, and finally falls back to a full scan, so search
is total and candidates are always re-ranked by exact distance.
"""

from __future__ import annotations

import numpy as np

from .base import ItemStore, LshParams, VectorIndex


def _pack_bits(bits: np.ndarray) -> np.ndarray:
    """Pack a (n, b) boolean array into uint64 signatures, bit 0 first."""
    weights = (np.uint64(1) << np.arange(bits.shape[1], dtype=np.uint64))
    return (bits.astype(np.uint64) * weights).sum(axis=1, dtype=np.uint64)


class LshIndex(VectorIndex):
    def __init__(self, store: ItemStore, params: LshParams):
        super().__init__(store, params)
        rng = np.random.default_rng(params.seed)
        # One direction matrix per table, drawn sequentially from one seeded
        # stream: the first t tables of a (t+Δ)-table index are identical,
        # which keeps recall monotone in num_tables.
        self._planes = [
            rng.normal(size=(params.bits_per_table, store.dim)) for _ in range(params.num_tables)
        ]
        self._tables: list[dict[int, np.ndarray]] = []
        for planes in self._planes:
            sigs = self.signatures(store.matrix, planes)
            buckets: dict[int, list[int]] = {}
            for i, sig in enumerate(sigs):
                buckets.setdefault(int(sig), []).append(i)
            self._tables.append({s: np.asarray(ids, dtype=np.int64) for s, ids in buckets.items()})

    @staticmethod
    def signatures(vectors: np.ndarray, planes: np.ndarray) -> np.ndarray:
        return _pack_bits(vectors @ planes.T >= 0.0)

    def _query_signatures(self, query: np.ndarray) -> list[int]:
        return [int(self.signatures(query[None, :], planes)[0]) for planes in self._planes]

    def _candidates(self, query: np.ndarray, k: int) -> np.ndarray:
        params: LshParams = self.params
        floor = max(k, params.min_candidates)
        sigs = self._query_signatures(query)

        pool: set[int] = set()
        for table, sig in zip(self._tables, sigs):
            ids = table.get(sig)
            if ids is not None:
                pool.update(ids.tolist())
        if len(pool) >= floor:
            return np.fromiter(pool, dtype=np.int64)

        # Widen to all signatures one bit flip away.
        for table, sig in zip(self._tables, sigs):
            for b in range(params.bits_per_table):
                ids = table.get(sig ^ (1 << b))
                if ids is not None:
                    pool.update(ids.tolist())
        if len(pool) >= floor:
            return np.fromiter(pool, dtype=np.int64)

        return np.arange(self.store.size, dtype=np.int64)
