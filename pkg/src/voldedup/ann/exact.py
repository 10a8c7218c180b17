"""Exact brute-force backend; the oracle the approximate ones are judged by."""

from __future__ import annotations

import numpy as np

from .base import ExactParams, ItemStore, VectorIndex


class ExactIndex(VectorIndex):
    """Full scan over all stored vectors."""

    def __init__(self, store: ItemStore, params: ExactParams):
        super().__init__(store, params)

    def _candidates(self, query: np.ndarray, k: int) -> np.ndarray:
        return np.arange(self.store.size, dtype=np.int64)
