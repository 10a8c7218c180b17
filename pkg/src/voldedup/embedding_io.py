"""Embedding file format (.medb) and the dataset manifest.

One ``.medb`` file holds the per-slice embeddings of a single case:

    offset  size  field
    0       4     magic, ASCII "MEDB"
    4       2     format version, little-endian u16 (currently 1)
    6       4     vector dimension, little-endian u32
    10      4     slice count, little-endian u32
    14      2     byte length of the UTF-8 case id, little-endian u16
    16      var   case id, UTF-8
    ...     var   slice_count * dim little-endian float32, row-major
                  (slice-major: all of slice 0, then slice 1, ...)

The manifest is a UTF-8 CSV with a required header line and columns
``case_id,file_path,bucket,kind,ground_truth,transform_tag,task``; the
label columns are empty for plain database entries. Both readers and
writers round-trip exactly, so external tools can produce inputs for
this package by following the layout above.
"""

from __future__ import annotations

import csv
import enum
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .core import CaseId, EmbeddingSet, LabelKind, QueryLabel, validate_embedding_set
from .errors import (
    BadMagic,
    ParseError,
    TruncatedPayload,
    InvalidHeader,
    UnsupportedVersion,
)

MAGIC = b"MEDB"
FORMAT_VERSION = 1
_HEADER = struct.Struct("<4sHIIH")

MANIFEST_COLUMNS = (
    "case_id",
    "file_path",
    "bucket",
    "kind",
    "ground_truth",
    "transform_tag",
    "task",
)


class Bucket(enum.Enum):
    """Experiment partition a manifest entry belongs to.

    Set 1 (calibration) and set 2 (evaluation) each split into a database
    half (A, also queried as duplicates), transformed copies of A (B,
    near-duplicate queries), and held-out cases (C, non-duplicate queries).
    """

    DB_1A = "DB_1A"
    NEAR_1B = "NEAR_1B"
    NONDUP_1C = "NONDUP_1C"
    DB_2A = "DB_2A"
    NEAR_2B = "NEAR_2B"
    NONDUP_2C = "NONDUP_2C"
    UNASSIGNED = "UNASSIGNED"


@dataclass(frozen=True)
class ManifestEntry:
    case_id: CaseId
    file_path: str
    bucket: Bucket
    label: QueryLabel | None
    task: str


@dataclass
class Manifest:
    """Ordered list of manifest entries with per-bucket unique case ids."""

    entries: list[ManifestEntry] = field(default_factory=list)

    def by_bucket(self, bucket: Bucket) -> list[ManifestEntry]:
        return [e for e in self.entries if e.bucket is bucket]

    def tasks(self) -> list[str]:
        """Distinct task names in first-appearance order."""
        seen: dict[str, None] = {}
        for entry in self.entries:
            seen.setdefault(entry.task, None)
        return list(seen)


def write_embedding_file(es: EmbeddingSet, path: str | Path) -> None:
    """Serialize a validated embedding set to ``path``."""
    validate_embedding_set(es)
    case_bytes = es.case_id.encode("utf-8")
    if len(case_bytes) > 0xFFFF:
        raise InvalidHeader(f"case id exceeds {0xFFFF} UTF-8 bytes")
    header = _HEADER.pack(MAGIC, FORMAT_VERSION, es.dim, es.slice_count, len(case_bytes))
    payload = np.ascontiguousarray(es.matrix(), dtype="<f4")
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(case_bytes)
        fh.write(payload.tobytes())


def read_embedding_file(path: str | Path) -> EmbeddingSet:
    """Parse a ``.medb`` file, validating header and payload length.

    Raises:
        BadMagic: the file does not start with the format magic.
        UnsupportedVersion: the version field is not a known version.
        InvalidHeader: zero dim / slice count / case id, undecodable
            case id, or trailing bytes after the payload.
        TruncatedPayload: the file ends before the declared payload.
        NonFiniteValue: the payload contains NaN or infinity.
    """
    data = Path(path).read_bytes()
    if data[:4] != MAGIC:
        raise BadMagic(f"{path}: expected magic {MAGIC!r}, got {data[:4]!r}")
    if len(data) < _HEADER.size:
        raise TruncatedPayload(f"{path}: header truncated at {len(data)} bytes")
    _, version, dim, slice_count, case_id_len = _HEADER.unpack_from(data)
    if version != FORMAT_VERSION:
        raise UnsupportedVersion(f"{path}: version {version}, expected {FORMAT_VERSION}")
    if dim < 1 or slice_count < 1 or case_id_len < 1:
        raise InvalidHeader(
            f"{path}: dim={dim}, slice_count={slice_count}, case_id_len={case_id_len} "
            "must all be >= 1"
        )
    body = data[_HEADER.size :]
    if len(body) < case_id_len:
        raise TruncatedPayload(f"{path}: case id truncated")
    try:
        case_id = body[:case_id_len].decode("utf-8")
    except UnicodeDecodeError as exc:
        raise InvalidHeader(f"{path}: case id is not valid UTF-8") from exc
    payload = body[case_id_len:]
    expected = slice_count * dim * 4
    if len(payload) < expected:
        raise TruncatedPayload(
            f"{path}: payload is {len(payload)} bytes, header declares {expected}"
        )
    if len(payload) > expected:
        raise InvalidHeader(f"{path}: {len(payload) - expected} trailing bytes after payload")
    matrix = np.frombuffer(payload, dtype="<f4").reshape(slice_count, dim)
    es = EmbeddingSet.from_matrix(case_id, matrix)
    validate_embedding_set(es)
    return es


def save_manifest(manifest: Manifest, path: str | Path) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(MANIFEST_COLUMNS)
        for e in manifest.entries:
            label = e.label
            writer.writerow(
                (
                    e.case_id,
                    e.file_path,
                    e.bucket.value,
                    label.kind.value if label else "",
                    (label.ground_truth or "") if label else "",
                    (label.transform_tag or "") if label else "",
                    e.task,
                )
            )


def load_manifest(path: str | Path) -> Manifest:
    """Parse a manifest CSV; raises :class:`ParseError` with the 1-based line."""
    with open(path, "r", encoding="utf-8", newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows or tuple(rows[0]) != MANIFEST_COLUMNS:
        raise ParseError(1, f"expected header {','.join(MANIFEST_COLUMNS)!r}")
    entries: list[ManifestEntry] = []
    seen: set[tuple[str, CaseId]] = set()
    for lineno, row in enumerate(rows[1:], start=2):
        if not row:
            continue
        if len(row) != len(MANIFEST_COLUMNS):
            raise ParseError(lineno, f"expected {len(MANIFEST_COLUMNS)} fields, got {len(row)}")
        case_id, file_path, bucket_s, kind_s, gt, tag, task = row
        if not case_id:
            raise ParseError(lineno, "empty case_id")
        try:
            bucket = Bucket(bucket_s)
        except ValueError:
            raise ParseError(lineno, f"unknown bucket {bucket_s!r}") from None
        label = None
        if kind_s:
            try:
                label = QueryLabel(LabelKind(kind_s), gt or None, tag or None)
            except ValueError as exc:
                raise ParseError(lineno, str(exc)) from None
        elif gt or tag:
            raise ParseError(lineno, "ground_truth/transform_tag require a kind")
        key = (bucket.value, case_id)
        if key in seen:
            raise ParseError(lineno, f"duplicate case id {case_id!r} in bucket {bucket.value}")
        seen.add(key)
        entries.append(ManifestEntry(case_id, file_path, bucket, label, task))
    return Manifest(entries)


def resolve_entry_path(manifest_path: str | Path, entry: ManifestEntry) -> Path:
    """Entry file path resolved relative to the manifest's directory."""
    return Path(manifest_path).parent / entry.file_path
