"""Duplicate and near-duplicate detection for 3D image volumes.

Volumes are compared through per-slice embedding vectors: every query
slice retrieves its nearest database slice, votes for that slice's case,
and the normalized top-k vote count decides whether the query duplicates
a database case. The package ships the voting retrieval, three index
backends (exact scan, LSH, HNSW), ROC-based threshold calibration, a
two-stage sensitivity/specificity evaluation, and an end-to-end synthetic
benchmark with a CLI.
"""

__version__ = "0.1.0"

from .benchmark import (
    BenchmarkReport,
    ExperimentConfig,
    SyntheticSpec,
    run_experiment,
    scan_for_duplicates,
)
from .config import load_config
from .core import CaseId, EmbeddingSet, LabelKind, QueryLabel, Volume, validate_embedding_set
from .synthetic import generate_synthetic_dataset

__all__ = [
    "BenchmarkReport",
    "CaseId",
    "EmbeddingSet",
    "ExperimentConfig",
    "LabelKind",
    "QueryLabel",
    "SyntheticSpec",
    "Volume",
    "generate_synthetic_dataset",
    "load_config",
    "run_experiment",
    "scan_for_duplicates",
    "validate_embedding_set",
    "__version__",
]
