"""Shared domain types: volumes, embedding sets, and query labels.

A case id is an opaque non-empty string identifying one volume within a
database. Volumes use axis order (z, y, x) with z the axial slice axis;
every transform and embedder in this package follows that convention.
All types are treated as immutable after construction.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field

import numpy as np

from .errors import DimensionMismatch, EmptySet, NonFiniteValue

CaseId = str


class LabelKind(enum.Enum):
    DUPLICATE = "Duplicate"
    NEAR_DUPLICATE = "NearDuplicate"
    NON_DUPLICATE = "NonDuplicate"


@dataclass(frozen=True)
class Volume:
    """A 3D scalar voxel grid with case identity.

    ``voxels`` has shape (n_z, n_y, n_x); intensities must be finite.
    ``transform_tag`` records provenance when the volume is a synthesized
    near-duplicate (e.g. "crop:0.05"), None for originals.
    """

    case_id: CaseId
    voxels: np.ndarray
    transform_tag: str | None = None

    def __post_init__(self):
        if not self.case_id:
            raise ValueError("case_id must be a non-empty string")
        vox = np.asarray(self.voxels, dtype=np.float64)
        if vox.ndim != 3:
            raise ValueError(f"voxels must be 3D (z, y, x), got ndim={vox.ndim}")
        if min(vox.shape) < 1:
            raise ValueError(f"every axis must have extent >= 1, got {vox.shape}")
        if not np.all(np.isfinite(vox)):
            raise NonFiniteValue(f"volume {self.case_id} contains non-finite voxels")
        object.__setattr__(self, "voxels", vox)

    @property
    def shape(self) -> tuple[int, int, int]:
        return self.voxels.shape  # type: ignore[return-value]

    @property
    def n_slices(self) -> int:
        return self.voxels.shape[0]


@dataclass(frozen=True, eq=False)
class EmbeddingSet:
    """Ordered per-slice embedding vectors for one case.

    ``vectors`` is a tuple of 1D float32 arrays, one per axial slice, in
    the source volume's z order. ``dim`` is the declared vector length;
    use :func:`validate_embedding_set` to check it against the payload.
    """

    case_id: CaseId
    dim: int
    vectors: tuple[np.ndarray, ...] = field(repr=False)

    def __post_init__(self):
        if not self.case_id:
            raise ValueError("case_id must be a non-empty string")
        vecs = tuple(np.asarray(v, dtype=np.float32).reshape(-1) for v in self.vectors)
        object.__setattr__(self, "vectors", vecs)

    @classmethod
    def from_matrix(cls, case_id: CaseId, matrix: np.ndarray) -> "EmbeddingSet":
        """Build a set from an (n_slices, dim) array."""
        matrix = np.asarray(matrix, dtype=np.float32)
        if matrix.ndim != 2:
            raise ValueError(f"matrix must be 2D, got ndim={matrix.ndim}")
        return cls(case_id=case_id, dim=matrix.shape[1], vectors=tuple(matrix))

    @property
    def slice_count(self) -> int:
        return len(self.vectors)

    def matrix(self) -> np.ndarray:
        """Stack the vectors into an (n_slices, dim) float32 array."""
        return np.stack(self.vectors).reshape(len(self.vectors), self.dim)

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, EmbeddingSet):
            return NotImplemented
        return (
            self.case_id == other.case_id
            and self.dim == other.dim
            and len(self.vectors) == len(other.vectors)
            and all(np.array_equal(a, b) for a, b in zip(self.vectors, other.vectors))
        )

    def __hash__(self):
        return hash((self.case_id, self.dim, len(self.vectors)))


@dataclass(frozen=True)
class QueryLabel:
    """Ground-truth role of a query volume.

    ``ground_truth`` names the database case this query duplicates; it is
    required for duplicate / near-duplicate queries and must be absent for
    non-duplicates.
    """

    kind: LabelKind
    ground_truth: CaseId | None = None
    transform_tag: str | None = None

    def __post_init__(self):
        if self.kind is LabelKind.NON_DUPLICATE:
            if self.ground_truth is not None:
                raise ValueError("non-duplicate labels must not carry a ground truth")
        elif not self.ground_truth:
            raise ValueError(f"{self.kind.value} labels require a ground-truth case id")

    @property
    def is_positive(self) -> bool:
        return self.kind is not LabelKind.NON_DUPLICATE


def validate_embedding_set(es: EmbeddingSet) -> None:
    """Raise if the set violates its invariants.

    Raises:
        EmptySet: the set has zero slices.
        DimensionMismatch: a vector's length differs from ``es.dim``.
        NonFiniteValue: a vector contains NaN or infinity.
    """
    if es.slice_count == 0:
        raise EmptySet(f"embedding set {es.case_id!r} has no slices")
    if es.dim < 1:
        raise DimensionMismatch(f"dim must be >= 1, got {es.dim}")
    for i, vec in enumerate(es.vectors):
        if vec.shape[0] != es.dim:
            raise DimensionMismatch(
                f"slice {i} of {es.case_id!r} has length {vec.shape[0]}, expected {es.dim}"
            )
        if not np.all(np.isfinite(vec)):
            raise NonFiniteValue(f"slice {i} of {es.case_id!r} contains non-finite values")
