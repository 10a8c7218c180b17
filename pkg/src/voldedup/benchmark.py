"""End-to-end experiment runner and self-scan mode.

The protocol: sort the corpus, split it into a calibration half (set 1)
and an evaluation half (set 2), split each half again into a database
part (A) and a held-out part (C), synthesize transformed copies of A as
near-duplicate queries (B), embed, index, pick a threshold on set 1,
and measure on set 2. Every step is deterministic given the config and
seed, so runs with the same inputs produce byte-identical report files.

Two corpus sources exist: procedurally generated volumes (or a
directory of ``.npy`` volumes) pushed through the toy embedder, and
externally extracted embeddings described by a manifest CSV. External
manifests declare bucket membership directly and bring their own
near-duplicate files, so the split and transform phases are skipped.
With several tasks in a manifest, each task gets its own index
(queries only see their task's database) and scores pool across tasks
into one calibration/evaluation run, matching the single-threshold
protocol.

Wall-clock timings are collected per phase but serialized to a sidecar
file, never into the report document — the report must stay
byte-reproducible, timings by nature are not.
"""

from __future__ import annotations

import hashlib
import json
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .ann import index_from_sets
from .ann.base import BackendParams, ExactParams, VectorIndex
from .ann.snapshot import params_to_dict
from .calibration import CalibrationResult, ScoredSet, decision_rule, select_optimal_threshold
from .core import CaseId, EmbeddingSet, LabelKind, QueryLabel, Volume
from .embedder import ToyEmbedderConfig, embed_volume
from .embedding_io import Bucket, load_manifest, read_embedding_file, resolve_entry_path
from .errors import ConfigError, DataError
from .evaluation import evaluate_query_set, scored_set, split_cases
from .retrieval import QueryScore, score_query
from .synthetic import generate_synthetic_dataset
from .transforms import TransformKind, TransformSpec, apply, default_grid, lowest_distortion

__all__ = [
    "REPORT_VERSION",
    "DUPLICATE_SET",
    "NONDUP_SET",
    "SyntheticSpec",
    "ExperimentConfig",
    "BenchmarkReport",
    "config_to_dict",
    "derive_noise_seed",
    "save_volumes",
    "load_volumes",
    "run_experiment",
    "scan_for_duplicates",
    "timings_path",
]

REPORT_VERSION = 1

# Reserved query-set names in reports; transform sets use their tag.
DUPLICATE_SET = "duplicate"
NONDUP_SET = "nonduplicate"

_CALIBRATION_RULES = ("lowest_per_family", "all")


@dataclass(frozen=True)
class SyntheticSpec:
    """Size of a procedurally generated corpus (seed comes from the config)."""

    n_cases: int = 40
    shape: tuple[int, int, int] = (16, 48, 48)


@dataclass(frozen=True)
class ExperimentConfig:
    """Everything a run needs; validated up front by :meth:`validate`.

    Corpus source is one of three, checked against ``embedder``:

    * ``embedder="toy"`` with ``synthetic`` set — generate volumes;
    * ``embedder="toy"`` with ``data_root`` set — load ``.npy`` volumes;
    * ``embedder="external"`` with ``manifest`` set — read ``.medb``
      files listed in a manifest CSV.
    """

    seed: int = 0
    embedder: str = "toy"
    data_root: Path | None = None
    synthetic: SyntheticSpec | None = None
    manifest: Path | None = None
    backends: tuple[BackendParams, ...] = (ExactParams(),)
    k_values: tuple[int, ...] = (1, 3)
    transforms: tuple[TransformSpec, ...] = default_grid()
    calibration_rule: str = "lowest_per_family"
    threshold_override: float | None = None
    toy: ToyEmbedderConfig = field(default_factory=ToyEmbedderConfig)

    def validate(self) -> None:
        if self.embedder not in ("toy", "external"):
            raise ConfigError(f"embedder must be 'toy' or 'external', got {self.embedder!r}")
        if self.embedder == "toy":
            if (self.data_root is None) == (self.synthetic is None):
                raise ConfigError("toy embedder needs exactly one of data_root or synthetic")
            if self.manifest is not None:
                raise ConfigError("manifest is only valid with the external embedder")
        else:
            if self.manifest is None:
                raise ConfigError("external embedder needs a manifest")
            if self.data_root is not None or self.synthetic is not None:
                raise ConfigError("external embedder takes no data_root or synthetic block")
        if self.synthetic is not None and self.synthetic.n_cases < 4:
            raise ConfigError("synthetic corpus needs at least 4 cases to split twice")
        if not self.backends:
            raise ConfigError("need at least one backend")
        if not self.k_values:
            raise ConfigError("k_values must be non-empty")
        if any(k < 1 for k in self.k_values):
            raise ConfigError(f"k values must be >= 1, got {list(self.k_values)}")
        if len(set(self.k_values)) != len(self.k_values):
            raise ConfigError(f"k values must be distinct, got {list(self.k_values)}")
        tags = [spec.tag for spec in self.transforms]
        if len(set(tags)) != len(tags):
            raise ConfigError("transform grid repeats a (kind, strength) pair")
        if self.calibration_rule not in _CALIBRATION_RULES:
            raise ConfigError(
                f"calibration_rule must be one of {_CALIBRATION_RULES}, got {self.calibration_rule!r}"
            )
        if self.threshold_override is not None and not 0.0 <= self.threshold_override <= 1.0:
            raise ConfigError(f"threshold_override must be in [0, 1], got {self.threshold_override}")
        if self.seed < 0:
            raise ConfigError(f"seed must be non-negative, got {self.seed}")


def config_to_dict(cfg: ExperimentConfig) -> dict:
    """Canonical config echo for reports: plain JSON types, stable order."""
    return {
        "seed": cfg.seed,
        "embedder": cfg.embedder,
        "data_root": str(cfg.data_root) if cfg.data_root is not None else None,
        "synthetic": (
            {"n_cases": cfg.synthetic.n_cases, "shape": list(cfg.synthetic.shape)}
            if cfg.synthetic is not None
            else None
        ),
        "manifest": str(cfg.manifest) if cfg.manifest is not None else None,
        "backends": [params_to_dict(p) for p in cfg.backends],
        "k_values": list(cfg.k_values),
        "transforms": [spec.tag for spec in cfg.transforms],
        "calibration_rule": cfg.calibration_rule,
        "threshold_override": cfg.threshold_override,
        "toy": {
            "target_side": cfg.toy.target_side,
            "preprocess_side": cfg.toy.preprocess_side,
        },
    }


def derive_noise_seed(experiment_seed: int, case_id: CaseId, tag: str) -> int:
    """Stable per-(case, transform) seed so every noisy copy is reproducible
    yet no two cases share a noise realization."""
    digest = hashlib.sha256(f"{experiment_seed}:{case_id}:{tag}".encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "little")


# --------------------------------------------------------------------------
# volume storage (.npy per case, file stem = case id)


def save_volumes(directory: str | Path, volumes: list[Volume]) -> list[Path]:
    """Write one ``<case_id>.npy`` per volume; transform tags are not kept."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    paths = []
    for volume in volumes:
        path = directory / f"{volume.case_id}.npy"
        np.save(path, volume.voxels)
        paths.append(path)
    return paths


def load_volumes(directory: str | Path) -> list[Volume]:
    """Read every ``.npy`` file in the directory, sorted by file name."""
    directory = Path(directory)
    paths = sorted(directory.glob("*.npy"))
    if not paths:
        raise DataError(f"no .npy volumes under {directory}")
    volumes = []
    for path in paths:
        try:
            voxels = np.load(path)
            volumes.append(Volume(path.stem, np.asarray(voxels, dtype=np.float64)))
        except Exception as exc:
            raise DataError(f"cannot load volume {path}: {exc}") from exc
    return volumes


# --------------------------------------------------------------------------
# query bundles: one half's database plus its labeled query sets

Query = tuple[EmbeddingSet, QueryLabel]


@dataclass
class _SetBundle:
    task: str
    db: list[EmbeddingSet]
    dup_queries: list[Query]
    near_queries: dict[str, list[Query]]  # transform tag -> queries
    nondup_queries: list[Query]


def _toy_half(cfg: ExperimentConfig, volumes: list[Volume], task: str) -> _SetBundle:
    split = split_cases([v.case_id for v in volumes])
    by_id = {v.case_id: v for v in volumes}
    embeddings = {v.case_id: embed_volume(v, cfg.toy) for v in volumes}
    dup = [
        (embeddings[c], QueryLabel(LabelKind.DUPLICATE, c)) for c in split.db_cases
    ]
    near: dict[str, list[Query]] = {}
    for spec in cfg.transforms:
        queries = []
        for case in split.db_cases:
            applied = spec
            if spec.kind is TransformKind.NOISE:
                applied = TransformSpec(
                    spec.kind, spec.strength, derive_noise_seed(cfg.seed, case, spec.tag)
                )
            copy = apply(applied, by_id[case])
            queries.append(
                (embed_volume(copy, cfg.toy), QueryLabel(LabelKind.NEAR_DUPLICATE, case, spec.tag))
            )
        near[spec.tag] = queries
    nondup = [
        (embeddings[c], QueryLabel(LabelKind.NON_DUPLICATE)) for c in split.heldout_cases
    ]
    return _SetBundle(
        task=task,
        db=[embeddings[c] for c in split.db_cases],
        dup_queries=dup,
        near_queries=near,
        nondup_queries=nondup,
    )


def _toy_bundles(
    cfg: ExperimentConfig, volumes: list[Volume]
) -> tuple[list[_SetBundle], list[_SetBundle]]:
    ordered = sorted(volumes, key=lambda v: v.case_id)
    ids = [v.case_id for v in ordered]
    if len(set(ids)) != len(ids):
        raise DataError("volume case ids are not unique")
    if len(ordered) < 4:
        raise DataError(f"need at least 4 volumes to split twice, got {len(ordered)}")
    # the same half split serves both levels: corpus -> set 1 / set 2,
    # then within each set -> database / held-out
    outer = split_cases(ids)
    half1 = [v for v in ordered if v.case_id in set(outer.db_cases)]
    half2 = [v for v in ordered if v.case_id in set(outer.heldout_cases)]
    return [_toy_half(cfg, half1, "default")], [_toy_half(cfg, half2, "default")]


def _read_checked(manifest_path: Path, entry) -> EmbeddingSet:
    es = read_embedding_file(resolve_entry_path(manifest_path, entry))
    if es.case_id != entry.case_id:
        raise DataError(
            f"{entry.file_path}: embedding case id {es.case_id!r} "
            f"!= manifest case id {entry.case_id!r}"
        )
    return es


def _external_half(
    cfg: ExperimentConfig, manifest, task: str, db_bucket: Bucket, near_bucket: Bucket,
    nondup_bucket: Bucket,
) -> _SetBundle:
    def in_task(bucket):
        return [e for e in manifest.by_bucket(bucket) if e.task == task]

    db_entries = in_task(db_bucket)
    if not db_entries:
        raise DataError(f"task {task!r} has no {db_bucket.value} entries")
    nondup_entries = in_task(nondup_bucket)
    if not nondup_entries:
        raise DataError(f"task {task!r} has no {nondup_bucket.value} entries")

    db_sets = []
    dup = []
    for entry in db_entries:
        es = _read_checked(cfg.manifest, entry)
        db_sets.append(es)
        dup.append((es, QueryLabel(LabelKind.DUPLICATE, entry.case_id)))

    near: dict[str, list[Query]] = {}
    for entry in in_task(near_bucket):
        if entry.label is None or entry.label.transform_tag is None:
            raise DataError(
                f"{near_bucket.value} entry {entry.case_id!r} needs a kind and transform_tag"
            )
        near.setdefault(entry.label.transform_tag, []).append(
            (_read_checked(cfg.manifest, entry), entry.label)
        )

    nondup = [
        (_read_checked(cfg.manifest, entry), QueryLabel(LabelKind.NON_DUPLICATE))
        for entry in nondup_entries
    ]
    return _SetBundle(task, db_sets, dup, near, nondup)


def _external_bundles(cfg: ExperimentConfig) -> tuple[list[_SetBundle], list[_SetBundle]]:
    manifest = load_manifest(cfg.manifest)
    halves1, halves2 = [], []
    for task in manifest.tasks():
        halves1.append(
            _external_half(cfg, manifest, task, Bucket.DB_1A, Bucket.NEAR_1B, Bucket.NONDUP_1C)
        )
        halves2.append(
            _external_half(cfg, manifest, task, Bucket.DB_2A, Bucket.NEAR_2B, Bucket.NONDUP_2C)
        )
    return halves1, halves2


def _half_tags(bundles: list[_SetBundle]) -> list[str]:
    """Transform tags present in a half, first-appearance order across tasks."""
    seen: dict[str, None] = {}
    for bundle in bundles:
        for tag in bundle.near_queries:
            seen.setdefault(tag, None)
    return list(seen)


def _score_half(
    bundles: list[_SetBundle], indices: list[VectorIndex], k: int
) -> dict[str, list[QueryScore]]:
    """Score every query set of a half, pooling across tasks."""
    pooled: dict[str, list[QueryScore]] = {DUPLICATE_SET: [], NONDUP_SET: []}
    for tag in _half_tags(bundles):
        pooled[tag] = []
    for bundle, index in zip(bundles, indices):
        for es, label in bundle.dup_queries:
            pooled[DUPLICATE_SET].append(score_query(es, index, k, label))
        for tag, queries in bundle.near_queries.items():
            for es, label in queries:
                pooled[tag].append(score_query(es, index, k, label))
        for es, label in bundle.nondup_queries:
            pooled[NONDUP_SET].append(score_query(es, index, k, label))
    return pooled


def _calibration_tags(tags: list[str], rule: str) -> list[str]:
    if rule == "all":
        return list(tags)
    specs = []
    for tag in tags:
        try:
            specs.append(TransformSpec.from_tag(tag))
        except ValueError as exc:
            raise DataError(
                f"calibration rule 'lowest_per_family' cannot parse transform tag {tag!r}: {exc}"
            ) from None
    chosen = {spec.tag for spec in lowest_distortion(specs).values()}
    return [tag for tag in tags if tag in chosen]


def _calibration_sets(
    scores: dict[str, list[QueryScore]], tags: list[str], rule: str
) -> list[ScoredSet]:
    negatives = scores[NONDUP_SET]
    sets = [
        scored_set(tag, scores[tag] + negatives) for tag in _calibration_tags(tags, rule)
    ]
    sets.append(scored_set(DUPLICATE_SET, scores[DUPLICATE_SET] + negatives))
    return sets


def _calibration_to_dict(result: CalibrationResult) -> dict:
    return {
        "t_opt": float(result.t_opt),
        "chosen_set": result.set_names[result.chosen_set_index],
        "set_names": list(result.set_names),
        "candidate_thresholds": [float(t) for t in result.candidate_thresholds],
        "se_matrix": [[float(x) for x in row] for row in result.se_matrix],
        "sp_matrix": [[float(x) for x in row] for row in result.sp_matrix],
    }


_METRIC_KEYS = ("auc", "sens_stage1", "spec_stage1", "sens_stage2", "spec_stage2_strict", "spec_stage2_folded")


def _checked_metrics(metrics_dict: dict) -> dict:
    for key in _METRIC_KEYS:
        value = metrics_dict[key]
        assert value is None or 0.0 <= value <= 1.0, f"{key}={value} out of range"
    return metrics_dict


def _assert_k_monotone(scores_by_k: dict[int, dict[str, list[QueryScore]]]) -> None:
    ks = sorted(scores_by_k)
    for k_lo, k_hi in zip(ks, ks[1:]):
        for tag, lows in scores_by_k[k_lo].items():
            for low, high in zip(lows, scores_by_k[k_hi][tag]):
                assert high.c_k >= low.c_k, (
                    f"c({k_hi}) < c({k_lo}) for query {low.query_case!r} in {tag!r}"
                )


def _backend_labels(backends: tuple[BackendParams, ...]) -> list[str]:
    names = [params_to_dict(p)["backend"] for p in backends]
    return [
        name if names.count(name) == 1 else f"{name}#{i}" for i, name in enumerate(names)
    ]


# --------------------------------------------------------------------------
# report


@dataclass(frozen=True)
class BenchmarkReport:
    """A finished run: canonical document parts plus informational timings.

    ``calibration[backend][k]`` holds either the full threshold-selection
    record or ``{"threshold_override": t}``; ``results[backend][k][set]``
    holds one metrics block per query set ("duplicate" plus one per
    transform tag, each mixed with the non-duplicate negatives).
    """

    config: dict
    calibration: dict
    results: dict
    duplicate_pairs: tuple[tuple[CaseId, CaseId, float], ...] | None = None
    timings: dict = field(default_factory=dict, compare=False)

    def document(self) -> dict:
        doc = {
            "report_version": REPORT_VERSION,
            "config": self.config,
            "calibration": self.calibration,
            "results": self.results,
        }
        if self.duplicate_pairs is not None:
            doc["duplicate_pairs"] = [
                {"case_a": a, "case_b": b, "c_k": c} for a, b, c in self.duplicate_pairs
            ]
        return doc

    def to_json(self) -> str:
        return json.dumps(self.document(), indent=2, allow_nan=False) + "\n"

    def save(self, path: str | Path) -> Path:
        """Write the canonical report; timings go to a sidecar file."""
        path = Path(path)
        path.write_text(self.to_json(), encoding="utf-8")
        sidecar = timings_path(path)
        sidecar.write_text(
            json.dumps(self.timings, indent=2, allow_nan=False) + "\n", encoding="utf-8"
        )
        return path


def timings_path(report_path: str | Path) -> Path:
    report_path = Path(report_path)
    return report_path.with_name(report_path.stem + "-timings" + (report_path.suffix or ".json"))


# --------------------------------------------------------------------------
# runner


def run_experiment(cfg: ExperimentConfig) -> BenchmarkReport:
    """Run the full protocol for every configured backend and k."""
    cfg.validate()
    timings: dict[str, float] = {}
    t_total = time.perf_counter()

    t0 = time.perf_counter()
    if cfg.embedder == "external":
        cal_bundles, eval_bundles = _external_bundles(cfg)
    else:
        if cfg.synthetic is not None:
            volumes = generate_synthetic_dataset(
                cfg.synthetic.n_cases, cfg.synthetic.shape, cfg.seed
            )
        else:
            volumes = load_volumes(cfg.data_root)
        cal_bundles, eval_bundles = _toy_bundles(cfg, volumes)
    timings["prepare"] = time.perf_counter() - t0

    skip_calibration = cfg.threshold_override is not None
    calibration_doc: dict = {}
    results_doc: dict = {}
    timings["index"] = 0.0
    timings["calibrate"] = 0.0
    timings["evaluate"] = 0.0

    for label, params in zip(_backend_labels(cfg.backends), cfg.backends):
        t0 = time.perf_counter()
        eval_indices = [index_from_sets(b.db, params) for b in eval_bundles]
        cal_indices = (
            [] if skip_calibration else [index_from_sets(b.db, params) for b in cal_bundles]
        )
        timings["index"] += time.perf_counter() - t0

        calibration_doc[label] = {}
        results_doc[label] = {}
        cal_scores_by_k: dict[int, dict[str, list[QueryScore]]] = {}
        eval_scores_by_k: dict[int, dict[str, list[QueryScore]]] = {}
        for k in cfg.k_values:
            t0 = time.perf_counter()
            if skip_calibration:
                t_opt = cfg.threshold_override
                calibration_doc[label][str(k)] = {"threshold_override": t_opt}
            else:
                cal_scores = _score_half(cal_bundles, cal_indices, k)
                cal_scores_by_k[k] = cal_scores
                result = select_optimal_threshold(
                    _calibration_sets(cal_scores, _half_tags(cal_bundles), cfg.calibration_rule)
                )
                t_opt = float(result.t_opt)
                calibration_doc[label][str(k)] = _calibration_to_dict(result)
            timings["calibrate"] += time.perf_counter() - t0

            t0 = time.perf_counter()
            eval_scores = _score_half(eval_bundles, eval_indices, k)
            eval_scores_by_k[k] = eval_scores
            negatives = eval_scores[NONDUP_SET]
            per_set = {}
            per_set[DUPLICATE_SET] = _checked_metrics(
                evaluate_query_set(DUPLICATE_SET, eval_scores[DUPLICATE_SET] + negatives, t_opt).to_dict()
            )
            for tag in _half_tags(eval_bundles):
                per_set[tag] = _checked_metrics(
                    evaluate_query_set(tag, eval_scores[tag] + negatives, t_opt).to_dict()
                )
            results_doc[label][str(k)] = per_set
            timings["evaluate"] += time.perf_counter() - t0

        if len(cfg.k_values) > 1:
            _assert_k_monotone(eval_scores_by_k)
            if cal_scores_by_k:
                _assert_k_monotone(cal_scores_by_k)

    timings["total"] = time.perf_counter() - t_total
    return BenchmarkReport(
        config=config_to_dict(cfg),
        calibration=calibration_doc,
        results=results_doc,
        duplicate_pairs=None,
        timings=timings,
    )


def scan_for_duplicates(
    db: list[EmbeddingSet], params: BackendParams, k: int, threshold: float
) -> list[tuple[CaseId, CaseId, float]]:
    """Query every case against the whole database, self-hits excluded.

    A case whose score clears the threshold pairs with its top-voted
    match. Pairs are canonical — (smaller id, larger id) — so symmetric
    finds collapse to one row; when both directions fire, the row keeps
    the larger score. Sorted by pair for stable output.
    """
    if not 0.0 <= threshold <= 1.0:
        raise ValueError(f"threshold must be in [0, 1], got {threshold}")
    index = index_from_sets(list(db), params)
    found: dict[tuple[CaseId, CaseId], float] = {}
    for es in sorted(db, key=lambda e: e.case_id):
        score = score_query(es, index, k, QueryLabel(LabelKind.NON_DUPLICATE), exclude_self=True)
        if score.top1_case is None or not decision_rule(score.c_k, threshold):
            continue
        pair = (min(es.case_id, score.top1_case), max(es.case_id, score.top1_case))
        if found.get(pair, -1.0) < score.c_k:
            found[pair] = score.c_k
    return [(a, b, c) for (a, b), c in sorted(found.items())]
