"""Experiment config files: a JSON document mirroring ExperimentConfig.

Example::

    {
      "seed": 14,
      "embedder": "toy",
      "synthetic": {"n_cases": 40, "shape": [16, 48, 48]},
      "backends": ["exact", {"backend": "hnsw", "m": 16, "seed": 0}],
      "k_values": [1, 3],
      "transforms": ["crop:0.05", "crop:0.1", "noise:0.1"],
      "calibration_rule": "lowest_per_family",
      "threshold_override": null
    }

Every key is optional; omitted keys take the ExperimentConfig defaults
(omitting ``transforms`` means the full 6x4 grid). Backend entries are
either a bare name or a dict in the same shape the report echo uses.
Relative ``data_root``/``manifest`` paths resolve against the config
file's directory. Unknown keys are rejected rather than ignored so a
typo cannot silently run the wrong experiment.
"""

from __future__ import annotations

import dataclasses
import json
from pathlib import Path

from .ann.snapshot import params_from_dict
from .benchmark import ExperimentConfig, SyntheticSpec
from .embedder import ToyEmbedderConfig
from .errors import ConfigError, InvalidHeader
from .transforms import TransformSpec

__all__ = ["config_from_dict", "load_config"]

_TOP_KEYS = frozenset(
    (
        "seed",
        "embedder",
        "data_root",
        "synthetic",
        "manifest",
        "backends",
        "k_values",
        "transforms",
        "calibration_rule",
        "threshold_override",
        "toy",
    )
)


def _int_field(data: dict, key: str, minimum: int) -> int:
    value = data[key]
    if isinstance(value, bool) or not isinstance(value, int):
        raise ConfigError(f"{key} must be an integer, got {value!r}")
    if value < minimum:
        raise ConfigError(f"{key} must be >= {minimum}, got {value}")
    return value


def _parse_backend(entry) -> object:
    if isinstance(entry, str):
        entry = {"backend": entry}
    if not isinstance(entry, dict):
        raise ConfigError(f"backend entries are names or dicts, got {entry!r}")
    try:
        return params_from_dict(entry)
    except (InvalidHeader, TypeError) as exc:
        raise ConfigError(f"bad backend spec {entry!r}: {exc}") from None


def _parse_synthetic(data) -> SyntheticSpec:
    if not isinstance(data, dict):
        raise ConfigError(f"synthetic must be an object, got {data!r}")
    unknown = set(data) - {"n_cases", "shape"}
    if unknown:
        raise ConfigError(f"unknown synthetic keys: {sorted(unknown)}")
    if "n_cases" not in data:
        raise ConfigError("synthetic needs n_cases")
    n_cases = _int_field(data, "n_cases", 2)
    shape = data.get("shape", list(SyntheticSpec().shape))
    if (
        not isinstance(shape, (list, tuple))
        or len(shape) != 3
        or any(isinstance(s, bool) or not isinstance(s, int) or s < 1 for s in shape)
    ):
        raise ConfigError(f"synthetic shape must be three positive integers, got {shape!r}")
    return SyntheticSpec(n_cases, tuple(shape))


def _parse_toy(data) -> ToyEmbedderConfig:
    if not isinstance(data, dict):
        raise ConfigError(f"toy must be an object, got {data!r}")
    unknown = set(data) - {"target_side", "preprocess_side"}
    if unknown:
        raise ConfigError(f"unknown toy keys: {sorted(unknown)}")
    defaults = ToyEmbedderConfig()
    merged = {
        "target_side": defaults.target_side,
        "preprocess_side": defaults.preprocess_side,
        **data,
    }
    for key in ("target_side", "preprocess_side"):
        _int_field(merged, key, 1)
    return ToyEmbedderConfig(merged["target_side"], merged["preprocess_side"])


def config_from_dict(data: dict, base_dir: str | Path | None = None) -> ExperimentConfig:
    """Build an (unvalidated) ExperimentConfig from plain JSON types."""
    if not isinstance(data, dict):
        raise ConfigError(f"config must be a JSON object, got {type(data).__name__}")
    unknown = set(data) - _TOP_KEYS
    if unknown:
        raise ConfigError(f"unknown config keys: {sorted(unknown)}")
    data = {key: value for key, value in data.items() if value is not None}
    base = Path(base_dir) if base_dir is not None else Path(".")
    defaults = ExperimentConfig()

    kwargs: dict = {}
    if "seed" in data:
        kwargs["seed"] = _int_field(data, "seed", 0)
    if "embedder" in data:
        if not isinstance(data["embedder"], str):
            raise ConfigError(f"embedder must be a string, got {data['embedder']!r}")
        kwargs["embedder"] = data["embedder"]
    for key in ("data_root", "manifest"):
        if key in data:
            if not isinstance(data[key], str):
                raise ConfigError(f"{key} must be a path string, got {data[key]!r}")
            kwargs[key] = base / data[key]
    if "synthetic" in data:
        kwargs["synthetic"] = _parse_synthetic(data["synthetic"])
    if "backends" in data:
        if not isinstance(data["backends"], list):
            raise ConfigError(f"backends must be a list, got {data['backends']!r}")
        kwargs["backends"] = tuple(_parse_backend(entry) for entry in data["backends"])
    if "k_values" in data:
        values = data["k_values"]
        if not isinstance(values, list):
            raise ConfigError(f"k_values must be a list, got {values!r}")
        for k in values:
            if isinstance(k, bool) or not isinstance(k, int):
                raise ConfigError(f"k values must be integers, got {k!r}")
        kwargs["k_values"] = tuple(values)
    if "transforms" in data:
        tags = data["transforms"]
        if not isinstance(tags, list) or any(not isinstance(t, str) for t in tags):
            raise ConfigError(f"transforms must be a list of tag strings, got {tags!r}")
        specs = []
        for tag in tags:
            try:
                specs.append(TransformSpec.from_tag(tag))
            except ValueError as exc:
                raise ConfigError(str(exc)) from None
        kwargs["transforms"] = tuple(specs)
    if "calibration_rule" in data:
        if not isinstance(data["calibration_rule"], str):
            raise ConfigError(f"calibration_rule must be a string, got {data['calibration_rule']!r}")
        kwargs["calibration_rule"] = data["calibration_rule"]
    if "threshold_override" in data:
        value = data["threshold_override"]
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(f"threshold_override must be a number, got {value!r}")
        kwargs["threshold_override"] = float(value)
    if "toy" in data:
        kwargs["toy"] = _parse_toy(data["toy"])

    return dataclasses.replace(defaults, **kwargs)


def load_config(path: str | Path) -> ExperimentConfig:
    """Read, parse, and validate a config file; every failure is a ConfigError."""
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: not valid JSON: {exc}") from None
    cfg = config_from_dict(data, base_dir=path.parent)
    cfg.validate()
    return cfg
