"""Deterministic slice embedder used by the self-contained pipeline.

Each axial slice is min-max scaled (with volume-level statistics),
resized to ``preprocess_side`` with corner-aligned bilinear sampling,
average-pooled down to ``target_side`` x ``target_side``, and flattened
row-major into a float32 vector. There is no learned component and no
randomness: identical inputs give bit-identical embeddings, which the
retrieval tests rely on. Plug in externally computed embeddings via the
.medb format when real feature quality matters.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import EmbeddingSet, Volume


@dataclass(frozen=True)
class ToyEmbedderConfig:
    target_side: int = 16
    preprocess_side: int = 224

    def __post_init__(self):
        if self.target_side < 1 or self.preprocess_side < 1:
            raise ValueError("sides must be positive")
        if self.target_side > self.preprocess_side:
            raise ValueError(
                f"target_side {self.target_side} exceeds preprocess_side {self.preprocess_side}"
            )

    @property
    def dim(self) -> int:
        return self.target_side * self.target_side


def minmax_scale(volume: Volume) -> Volume:
    """Rescale intensities to [0, 1] using the volume-wide min and max.

    A constant volume (max == min) maps to all zeros rather than
    dividing by zero; it carries no structure worth preserving.
    """
    vox = volume.voxels
    lo = float(vox.min())
    hi = float(vox.max())
    if hi == lo:
        scaled = np.zeros_like(vox)
    else:
        scaled = (vox - lo) / (hi - lo)
    return Volume(volume.case_id, scaled, volume.transform_tag)


def _axis_coords(n_in: int, n_out: int) -> np.ndarray:
    # corner-aligned: first/last output samples sit exactly on the
    # first/last input samples; a single output sample sits on index 0
    if n_out == 1:
        return np.zeros(1)
    return np.linspace(0.0, n_in - 1, n_out)


def resize2d(slice2d: np.ndarray, out_h: int, out_w: int) -> np.ndarray:
    """Bilinear resize of a 2D array to (out_h, out_w), corner-aligned."""
    a = np.asarray(slice2d, dtype=np.float64)
    if a.ndim != 2 or min(a.shape) < 1:
        raise ValueError(f"expected a non-empty 2D slice, got shape {a.shape}")
    if out_h < 1 or out_w < 1:
        raise ValueError("output extents must be positive")
    if a.shape == (out_h, out_w):
        return a.copy()
    ys = _axis_coords(a.shape[0], out_h)
    xs = _axis_coords(a.shape[1], out_w)
    y0 = np.floor(ys).astype(np.int64)
    x0 = np.floor(xs).astype(np.int64)
    y1 = np.minimum(y0 + 1, a.shape[0] - 1)
    x1 = np.minimum(x0 + 1, a.shape[1] - 1)
    wy = (ys - y0)[:, None]
    wx = (xs - x0)[None, :]
    top = a[np.ix_(y0, x0)] * (1.0 - wx) + a[np.ix_(y0, x1)] * wx
    bottom = a[np.ix_(y1, x0)] * (1.0 - wx) + a[np.ix_(y1, x1)] * wx
    return top * (1.0 - wy) + bottom * wy


def resize_slice(slice2d: np.ndarray, side: int) -> np.ndarray:
    """Bilinear resize of a 2D array to ``side`` x ``side`` (corner-aligned)."""
    return resize2d(slice2d, side, side)


def pool_slice(slice2d: np.ndarray, side: int) -> np.ndarray:
    """Reduce a square slice to ``side`` x ``side`` by mean pooling.

    When the input side is not a multiple of ``side`` the reduction
    falls back to a bilinear resize, which is also an average of input
    values and keeps the perturbation bound (no output component moves
    more than the largest input perturbation).
    """
    a = np.asarray(slice2d, dtype=np.float64)
    n = a.shape[0]
    if a.shape != (n, n):
        raise ValueError(f"expected a square slice, got shape {a.shape}")
    if n % side == 0:
        block = n // side
        return a.reshape(side, block, side, block).mean(axis=(1, 3))
    return resize_slice(a, side)


def embed_slice(slice2d: np.ndarray, cfg: ToyEmbedderConfig) -> np.ndarray:
    """Resize + pool + flatten one (already scaled) slice to a float32 vector."""
    resized = resize_slice(slice2d, cfg.preprocess_side)
    pooled = pool_slice(resized, cfg.target_side)
    return pooled.reshape(-1).astype(np.float32)


def embed_volume(volume: Volume, cfg: ToyEmbedderConfig | None = None) -> EmbeddingSet:
    """Embed every axial slice of a volume; one vector per slice, in z order."""
    cfg = cfg or ToyEmbedderConfig()
    scaled = minmax_scale(volume)
    matrix = np.stack([embed_slice(s, cfg) for s in scaled.voxels])
    return EmbeddingSet.from_matrix(volume.case_id, matrix)
