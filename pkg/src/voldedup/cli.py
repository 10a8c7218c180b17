"""Command-line interface.

One binary, seven subcommands covering the pipeline end to end::

    synthesize   generate procedural volumes, or apply a transform to a directory
    embed        toy-embed volumes into .medb files plus a manifest
    index        build a backend index over .medb files and snapshot it
    calibrate    run the calibration half and print the threshold record
    evaluate     run with a fixed threshold and print the metrics
    run          full experiment, report written to --out
    scan         query a database against itself and list duplicate pairs

Exit codes: 0 success, 1 configuration problem (bad flags, bad config
file), 2 data problem (missing or malformed inputs).
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import sys
from pathlib import Path

from .ann import backend_from_name, index_from_sets
from .ann.snapshot import save_index
from .benchmark import (
    BenchmarkReport,
    derive_noise_seed,
    load_volumes,
    run_experiment,
    save_volumes,
    scan_for_duplicates,
)
from .config import load_config
from .core import EmbeddingSet, Volume
from .embedder import ToyEmbedderConfig, embed_volume
from .embedding_io import (
    Bucket,
    Manifest,
    ManifestEntry,
    read_embedding_file,
    save_manifest,
    write_embedding_file,
)
from .errors import ConfigError, DataError, VoldedupError
from .synthetic import generate_synthetic_dataset
from .transforms import TransformKind, TransformSpec, apply


class _Parser(argparse.ArgumentParser):
    """argparse exits with 2 on bad usage; here that is a config error (1)."""

    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


def _read_embedding_dir(directory: str | Path) -> list[EmbeddingSet]:
    paths = sorted(Path(directory).glob("*.medb"))
    if not paths:
        raise DataError(f"no .medb files under {directory}")
    return [read_embedding_file(p) for p in paths]


def _emit(document: dict, out: str | None) -> None:
    text = json.dumps(document, indent=2, allow_nan=False) + "\n"
    if out:
        Path(out).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)


def _overridden(cfg, args):
    """Fold common CLI flags into a loaded config."""
    updates = {}
    if getattr(args, "seed", None) is not None:
        updates["seed"] = args.seed
    if getattr(args, "backend", None) is not None:
        seed = updates.get("seed", cfg.seed)
        updates["backends"] = (backend_from_name(args.backend, seed),)
    if getattr(args, "k", None) is not None:
        updates["k_values"] = (args.k,)
    if getattr(args, "threshold", None) is not None:
        updates["threshold_override"] = args.threshold
    return dataclasses.replace(cfg, **updates) if updates else cfg


# --------------------------------------------------------------------------
# subcommands


def _cmd_synthesize(args) -> None:
    if args.volumes is not None:
        if args.transform is None:
            raise ConfigError("--volumes needs --transform")
        try:
            spec = TransformSpec.from_tag(args.transform)
        except ValueError as exc:
            raise ConfigError(str(exc)) from None
        seed = args.seed if args.seed is not None else 0
        out_volumes = []
        for volume in load_volumes(args.volumes):
            applied = spec
            if spec.kind is TransformKind.NOISE:
                applied = TransformSpec(
                    spec.kind, spec.strength, derive_noise_seed(seed, volume.case_id, spec.tag)
                )
            copy = apply(applied, volume)
            suffix = f"{spec.kind.value}-{spec.strength:g}"
            out_volumes.append(Volume(f"{copy.case_id}__{suffix}", copy.voxels))
        save_volumes(args.out, out_volumes)
        print(f"wrote {len(out_volumes)} transformed volumes to {args.out}")
        return
    if args.transform is not None:
        raise ConfigError("--transform needs --volumes")
    seed = args.seed if args.seed is not None else 0
    volumes = generate_synthetic_dataset(args.n_cases, tuple(args.shape), seed)
    save_volumes(args.out, volumes)
    print(f"wrote {len(volumes)} volumes to {args.out}")


def _cmd_embed(args) -> None:
    cfg = ToyEmbedderConfig(args.target_side, args.preprocess_side)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    entries = []
    for volume in load_volumes(args.volumes):
        es = embed_volume(volume, cfg)
        file_name = f"{volume.case_id}.medb"
        write_embedding_file(es, out / file_name)
        entries.append(
            ManifestEntry(volume.case_id, file_name, Bucket.UNASSIGNED, None, "default")
        )
    save_manifest(Manifest(entries), out / "manifest.csv")
    print(f"wrote {len(entries)} embedding sets and manifest.csv to {out}")


def _cmd_index(args) -> None:
    params = backend_from_name(args.backend, args.seed if args.seed is not None else 0)
    sets = _read_embedding_dir(args.embeddings)
    index = index_from_sets(sets, params)
    save_index(index, args.out)
    print(f"indexed {index.size} slices from {len(sets)} cases ({args.backend}) -> {args.out}")


def _cmd_calibrate(args) -> None:
    cfg = _overridden(load_config(args.config), args)
    # an override would skip the very phase this command exists to run
    cfg = dataclasses.replace(cfg, threshold_override=None)
    report = run_experiment(cfg)
    _emit({"report_version": report.document()["report_version"],
           "calibration": report.calibration}, args.out)


def _cmd_evaluate(args) -> None:
    cfg = _overridden(load_config(args.config), args)
    if cfg.threshold_override is None:
        raise ConfigError("evaluate needs --threshold (or threshold_override in the config)")
    report = run_experiment(cfg)
    _emit(report.document(), args.out)


def _cmd_run(args) -> None:
    cfg = _overridden(load_config(args.config), args)
    report = run_experiment(cfg)
    report.save(args.out)
    print(f"wrote {args.out}")


def _cmd_scan(args) -> None:
    params = backend_from_name(args.backend, args.seed if args.seed is not None else 0)
    sets = _read_embedding_dir(args.embeddings)
    pairs = scan_for_duplicates(sets, params, args.k, args.threshold)
    for case_a, case_b, c_k in pairs:
        print(f"{case_a}\t{case_b}\t{c_k:.6f}")
    if args.out:
        report = BenchmarkReport(
            config={
                "mode": "scan",
                "embeddings": str(args.embeddings),
                "backend": args.backend,
                "k": args.k,
                "threshold": args.threshold,
            },
            calibration={},
            results={},
            duplicate_pairs=tuple(pairs),
        )
        report.save(args.out)
    if not pairs:
        print("no pairs found", file=sys.stderr)


# --------------------------------------------------------------------------
# parser


def _build_parser() -> _Parser:
    parser = _Parser(prog="voldedup", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", parser_class=_Parser)

    p = sub.add_parser("synthesize", help="generate volumes or apply a transform")
    p.add_argument("--out", required=True, help="output volume directory")
    p.add_argument("--n-cases", type=int, default=40)
    p.add_argument("--shape", type=int, nargs=3, default=[16, 48, 48], metavar=("Z", "Y", "X"))
    p.add_argument("--seed", type=int)
    p.add_argument("--volumes", help="existing volume directory to transform")
    p.add_argument("--transform", help="transform tag, e.g. crop:0.1")
    p.set_defaults(func=_cmd_synthesize)

    p = sub.add_parser("embed", help="toy-embed volumes into .medb files")
    p.add_argument("--volumes", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--target-side", type=int, default=16)
    p.add_argument("--preprocess-side", type=int, default=224)
    p.set_defaults(func=_cmd_embed)

    p = sub.add_parser("index", help="build and snapshot an index over .medb files")
    p.add_argument("--embeddings", required=True)
    p.add_argument("--backend", required=True, choices=["exact", "lsh", "hnsw"])
    p.add_argument("--seed", type=int)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_index)

    p = sub.add_parser("calibrate", help="run threshold selection and print the record")
    p.add_argument("--config", required=True)
    p.add_argument("--backend", choices=["exact", "lsh", "hnsw"])
    p.add_argument("--k", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--out")
    p.set_defaults(func=_cmd_calibrate)

    p = sub.add_parser("evaluate", help="evaluate at a fixed threshold")
    p.add_argument("--config", required=True)
    p.add_argument("--threshold", type=float)
    p.add_argument("--backend", choices=["exact", "lsh", "hnsw"])
    p.add_argument("--k", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--out")
    p.set_defaults(func=_cmd_evaluate)

    p = sub.add_parser("run", help="full experiment, report to --out")
    p.add_argument("--config", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--backend", choices=["exact", "lsh", "hnsw"])
    p.add_argument("--k", type=int)
    p.add_argument("--threshold", type=float)
    p.add_argument("--seed", type=int)
    p.set_defaults(func=_cmd_run)

    p = sub.add_parser("scan", help="self-scan a database for duplicate pairs")
    p.add_argument("--embeddings", required=True)
    p.add_argument("--backend", default="hnsw", choices=["exact", "lsh", "hnsw"])
    p.add_argument("--k", type=int, default=1)
    p.add_argument("--threshold", type=float, default=0.8)
    p.add_argument("--seed", type=int)
    p.add_argument("--out")
    p.set_defaults(func=_cmd_scan)

    return parser


def main(argv=None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    if not hasattr(args, "func"):
        parser.print_help(sys.stderr)
        return 1
    try:
        args.func(args)
    except ConfigError as exc:
        print(f"voldedup: config error: {exc}", file=sys.stderr)
        return 1
    except VoldedupError as exc:
        print(f"voldedup: data error: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"voldedup: data error: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
