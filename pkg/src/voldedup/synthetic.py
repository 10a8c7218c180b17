"""Procedural volume generator for desk-scale benchmark runs.

Each case is a stack of smooth random fields: a low-resolution Gaussian
grid per slice, upsampled bilinearly to the slice extent. Two design
choices matter for benchmark behavior:

* every slice's field is scaled to unit energy before upsampling, so no
  case sits closer to "everything" than its peers (a case with an
  unusually central embedding would otherwise soak up rank-1 votes from
  unrelated queries and distort non-duplicate scores);
* there is no per-slice or per-case intensity offset — brightness
  pedestals survive geometric edits in ways structure does not, which
  made translated copies of one case collapse onto another.

Volumes are min-max scaled to [0, 1]. Cases drawn from the continuous
generator are pairwise distinct (and so are their embeddings) with
probability one; the fixed-seed suites assert it outright.
"""

from __future__ import annotations

import numpy as np

from .core import Volume
from .embedder import resize2d

__all__ = ["generate_synthetic_dataset"]

# Side of the low-resolution grid each slice is grown from. Small enough
# that a 5-20% crop or shift leaves most of the structure in place,
# large enough that distinct cases are far apart in embedding space.
_GRID_SIDE = 4


def generate_synthetic_dataset(
    n_cases: int,
    shape: tuple[int, int, int] = (16, 48, 48),
    seed: int = 0,
) -> list[Volume]:
    """Generate ``n_cases`` seeded volumes with case ids ``syn000``, ``syn001``, ...

    Deterministic: same (n_cases, shape, seed) always yields identical
    voxel data.
    """
    if n_cases < 2:
        raise ValueError(f"need at least 2 cases, got {n_cases}")
    nz, ny, nx = shape
    if min(shape) < 1:
        raise ValueError(f"shape must be positive, got {shape}")
    rng = np.random.default_rng(seed)
    volumes = []
    for i in range(n_cases):
        fields = rng.normal(size=(nz, _GRID_SIDE, _GRID_SIDE))
        fields /= np.sqrt((fields**2).sum(axis=(1, 2)))[:, None, None]
        slices = np.stack([resize2d(f, ny, nx) for f in fields])
        lo = slices.min()
        hi = slices.max()
        scaled = np.zeros_like(slices) if hi == lo else (slices - lo) / (hi - lo)
        volumes.append(Volume(f"syn{i:03d}", scaled))
    return volumes
