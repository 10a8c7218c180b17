"""Hierarchical navigable small-world graph backend.

Construction follows the published scheme: each item draws a top layer
from a geometric distribution (floor(-ln(U) * level_lambda)), is routed
greedily from the global entry point down to its top layer, and is then
connected on every layer it occupies to m neighbors found with an
ef_construction-sized beam. Neighbor sets are chosen with the
diversity-aware heuristic (a candidate is kept when it is closer to the
inserted point than to any already-selected neighbor, pruned candidates
fill leftover capacity) and adjacency lists that overflow their cap
(2*m on layer 0, m above) are re-selected the same way.

Search descends greedily (beam width 1) to layer 1, then runs a beam of
width max(ef_search, k) on layer 0. With a fixed seed the whole graph,
and therefore every search, is deterministic.
"""

from __future__ import annotations

import heapq

import numpy as np

from .base import HnswParams, ItemStore, VectorIndex


class HnswIndex(VectorIndex):
    def __init__(self, store: ItemStore, params: HnswParams):
        super().__init__(store, params)
        self._m = params.m
        self._m0 = 2 * params.m
        rng = np.random.default_rng(params.seed)
        n = store.size
        levels = np.floor(-np.log(rng.uniform(size=n)) * params.level_lambda).astype(np.int64)
        self.levels = levels
        # layers[l] maps internal id -> list of neighbor ids
        self.layers: list[dict[int, list[int]]] = [{} for _ in range(int(levels.max()) + 1)]
        self.entry_point = 0
        self._max_level = int(levels[0])
        for layer in range(self._max_level + 1):
            self.layers[layer][0] = []
        for i in range(1, n):
            self._insert(i, int(levels[i]))

    # -- construction -------------------------------------------------

    def _insert(self, new_id: int, level: int) -> None:
        query = self.store.matrix[new_id]
        ep = [(self._sq_to(query, self.entry_point), self.entry_point)]
        for layer in range(self._max_level, level, -1):
            ep = self._search_layer(query, ep, 1, layer)
        for layer in range(min(level, self._max_level), -1, -1):
            found = self._search_layer(query, ep, self.params.ef_construction, layer)
            cap = self._m0 if layer == 0 else self._m
            neighbors = self._select_neighbors(
                [d for d, _ in found], [i for _, i in found], self._m
            )
            self.layers[layer][new_id] = list(neighbors)
            for nb in neighbors:
                links = self.layers[layer][nb]
                links.append(new_id)
                if len(links) > cap:
                    self._shrink(nb, layer, cap)
            ep = found
        for layer in range(self._max_level + 1, level + 1):
            self.layers[layer][new_id] = []
        if level > self._max_level:
            self._max_level = level
            self.entry_point = new_id

    def _sq_to(self, query: np.ndarray, node: int) -> float:
        diff = self.store.matrix[node] - query
        return float(diff @ diff)

    def _pairwise_sq(self, ids: np.ndarray) -> np.ndarray:
        sub = self.store.matrix[ids]
        norms = (sub * sub).sum(axis=1)
        return norms[:, None] + norms[None, :] - 2.0 * (sub @ sub.T)

    def _shrink(self, node: int, layer: int, cap: int) -> None:
        links = np.asarray(self.layers[layer][node], dtype=np.int64)
        sq = self.store.squared_distances(self.store.matrix[node], links)
        order = np.argsort(sq, kind="stable")
        self.layers[layer][node] = self._select_neighbors(
            sq[order].tolist(), links[order].tolist(), cap
        )

    def _select_neighbors(self, dists: list[float], ids: list[int], cap: int) -> list[int]:
        """Diversity-aware selection over candidates sorted by distance.

        Keeps a candidate when it is closer to the target than to every
        already-kept neighbor; pruned candidates fill remaining slots in
        distance order.
        """
        if len(ids) <= cap:
            return list(ids)
        pair = self._pairwise_sq(np.asarray(ids, dtype=np.int64))
        kept: list[int] = []
        pruned: list[int] = []
        # nearest_kept[j] tracks min distance from candidate j to the kept set
        nearest_kept = np.full(len(ids), np.inf)
        for j in range(len(ids)):
            if len(kept) == cap:
                break
            if kept and dists[j] >= nearest_kept[j]:
                pruned.append(j)
            else:
                kept.append(j)
                np.minimum(nearest_kept, pair[j], out=nearest_kept)
        for j in pruned:
            if len(kept) == cap:
                break
            kept.append(j)
        return [ids[j] for j in kept]

    # -- search -------------------------------------------------------

    def _search_layer(
        self, query: np.ndarray, entry: list[tuple[float, int]], ef: int, layer: int
    ) -> list[tuple[float, int]]:
        """Beam search on one layer; returns (sq_distance, id) ascending."""
        visited = bytearray(self.store.size)
        for _, i in entry:
            visited[i] = 1
        candidates = list(entry)
        heapq.heapify(candidates)
        best = [(-d, i) for d, i in entry]
        heapq.heapify(best)
        links = self.layers[layer]
        while candidates:
            dist, node = heapq.heappop(candidates)
            if dist > -best[0][0] and len(best) >= ef:
                break
            fresh = [nb for nb in links[node] if not visited[nb]]
            if not fresh:
                continue
            for nb in fresh:
                visited[nb] = 1
            sq = self.store.squared_distances(query, np.asarray(fresh, dtype=np.int64))
            for d, nb in zip(sq.tolist(), fresh):
                if len(best) < ef:
                    heapq.heappush(candidates, (d, nb))
                    heapq.heappush(best, (-d, nb))
                elif d < -best[0][0]:
                    heapq.heappush(candidates, (d, nb))
                    heapq.heapreplace(best, (-d, nb))
        return sorted((-d, i) for d, i in best)

    def _candidates(self, query: np.ndarray, k: int) -> np.ndarray:
        ef = max(self.params.ef_search, k)
        ep = [(self._sq_to(query, self.entry_point), self.entry_point)]
        for layer in range(self._max_level, 0, -1):
            ep = self._search_layer(query, ep, 1, layer)
        found = self._search_layer(query, ep, ef, 0)
        return np.asarray([i for _, i in found], dtype=np.int64)

    def adjacency(self) -> list[dict[int, list[int]]]:
        """Per-layer adjacency (sorted copies), mainly for determinism checks."""
        return [{node: sorted(links) for node, links in layer.items()} for layer in self.layers]
