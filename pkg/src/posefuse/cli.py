"""Command-line interface.

Subcommands mirror the pipeline stages (fuse, generate, detect, score,
filter, export) plus evaluation tools (eval, regime), corpus validation
(validate), and the end-to-end driver (run).  Exit codes: 0 success, 1 usage
or configuration error, 2 validation error, 3 partial failure (some samples
failed but the corpus was produced).
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from .errors import ConfigError, PoseFuseError
from .lifter import run_regimes
from .metrics import evaluate_suite, format_metric_table
from .pipeline import apply_filter, export_training_set, load_config, run_pipeline
from .poseio import load_manifest, read_pose, save_manifest, validate_manifest
from .skeleton import CAMERA, load_schema
from .synth import DetectorNoiseConfig

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_VALIDATION = 2
EXIT_PARTIAL = 3


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # usage problems exit 1, not argparse's 2
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(EXIT_USAGE)


def _add_config_args(p: argparse.ArgumentParser):
    p.add_argument("--config", required=True, help="pipeline config (TOML or JSON)")
    p.add_argument("--seed", type=int, default=None, help="override the config seed")
    p.add_argument("--workers", type=int, default=None, help="override worker count")
    p.add_argument("--out", default=None, help="override the output directory")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="posefuse",
                     description="generative-augmentation pipeline tools for 3D pose data")
    parser.add_argument("-v", "--verbose", action="store_true", help="debug logging")
    sub = parser.add_subparsers(dest="command", required=True)

    stage_help = {
        "fuse": "align motions into scenes and write ground truth + guidance",
        "generate": "render or request generated frames for fused samples",
        "detect": "run 2D detection over generated samples",
        "score": "score detected keypoints against projected ground truth",
        "run": "run the full pipeline (fuse through score, filter, export)",
    }
    for name in ("fuse", "generate", "detect", "score", "run"):
        p = sub.add_parser(name, help=stage_help[name])
        _add_config_args(p)

    p = sub.add_parser("filter", help="recompute kept flags from stored scores")
    p.add_argument("--manifest", required=True)
    p.add_argument("--fraction", type=float, default=0.10)
    p.add_argument("--json", default=None, help="write summary stats to this path")

    p = sub.add_parser("export", help="write a lifter-ready training set")
    p.add_argument("--manifest", required=True)
    p.add_argument("--channel", required=True, choices=["GT", "HPE"])
    p.add_argument("--out", required=True)

    p = sub.add_parser("eval", help="full metric suite over tensor file pairs")
    p.add_argument("--gt", nargs="+", required=True, help="ground-truth 3D tensor files")
    p.add_argument("--pred", nargs="+", required=True, help="predicted 3D tensor files")
    p.add_argument("--schema", default=None, help="schema JSON for non-built-in schemas")
    p.add_argument("--json", default=None, help="write the report to this path")

    p = sub.add_parser("regime", help="four-way GT/HPE train-test comparison")
    p.add_argument("--train", required=True, help="training corpus manifest")
    p.add_argument("--test", required=True, help="test corpus manifest")
    p.add_argument("--lambda", dest="lam", type=float, default=1e-4)
    p.add_argument("--seeds", type=int, nargs="+", default=[0, 1, 2, 3, 4])
    p.add_argument("--noise", default=None,
                   help="detector noise config JSON; omit to use stored detections")
    p.add_argument("--json", default=None, help="write the result to this path")

    p = sub.add_parser("validate", help="check a corpus manifest end to end")
    p.add_argument("--manifest", required=True)
    p.add_argument("--no-consistency", action="store_true",
                   help="skip the reprojection consistency check")
    return parser


def _config_overrides(args) -> dict:
    overrides = {}
    if args.seed is not None:
        overrides["seed"] = args.seed
    if args.workers is not None:
        overrides["workers"] = args.workers
    if args.out is not None:
        overrides["out_dir"] = args.out
    return overrides


def _cmd_stage(args, until: str) -> int:
    cfg = load_config(args.config, _config_overrides(args))
    manifest, n_failed = run_pipeline(cfg, until=until)
    ok = len(manifest.ok_samples())
    print(f"{until}: {ok} samples ok, {n_failed} failed -> {cfg.out_dir / 'manifest.json'}")
    return EXIT_PARTIAL if n_failed else EXIT_OK


def _cmd_filter(args) -> int:
    manifest = load_manifest(args.manifest)
    stats = apply_filter(manifest, args.fraction)
    save_manifest(manifest, Path(args.manifest))
    kept = manifest.kept_samples()
    print(f"kept {len(kept)} of {len(manifest.ok_samples())} samples "
          f"(fraction {args.fraction})")
    for label in ("unfiltered", "filtered"):
        s = stats[label]
        print(f"  {label:<10} mean {s['mean']:8.2f}  median {s['median']:8.2f}  "
              f"p90 {s['p90']:8.2f}  p99 {s['p99']:8.2f}")
    for sample_id in (s.id for s in kept):
        print(f"  keep {sample_id}")
    if args.json:
        Path(args.json).write_text(json.dumps(stats, indent=2))
    return EXIT_OK


def _cmd_export(args) -> int:
    manifest = load_manifest(args.manifest)
    index = export_training_set(manifest, args.channel, args.out)
    print(f"exported {args.channel} channel -> {index}")
    return EXIT_OK


def _cmd_eval(args) -> int:
    if len(args.gt) != len(args.pred):
        raise ConfigError(f"{len(args.gt)} ground-truth files vs {len(args.pred)} predictions")
    schemas = None
    if args.schema:
        schema = load_schema(args.schema)
        schemas = {schema.name: schema}
    gts = [read_pose(p, schemas, frame_tag=CAMERA) for p in args.gt]
    preds = [read_pose(p, schemas, frame_tag=CAMERA) for p in args.pred]
    report = evaluate_suite(gts, preds)
    print(format_metric_table(report))
    if args.json:
        Path(args.json).write_text(report.to_json())
    else:
        print(report.to_json())
    return EXIT_OK


def _cmd_regime(args) -> int:
    noise = None
    if args.noise:
        noise = DetectorNoiseConfig.from_dict(json.loads(Path(args.noise).read_text()))
    result = run_regimes(args.train, args.test, lam=args.lam,
                         seeds=tuple(args.seeds), noise=noise)
    print(result.format_table())
    if args.json:
        Path(args.json).write_text(result.to_json())
    return EXIT_OK


def _cmd_validate(args) -> int:
    manifest = load_manifest(args.manifest)
    problems = validate_manifest(manifest, check_consistency=not args.no_consistency)
    if problems:
        for p in problems:
            print(f"INVALID  {p}")
        return EXIT_VALIDATION
    print(f"OK  {args.manifest}: {len(manifest.samples)} samples, "
          f"{len(manifest.kept_samples())} kept")
    return EXIT_OK


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.INFO,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.command in ("fuse", "generate", "detect", "score"):
            return _cmd_stage(args, until=args.command)
        if args.command == "run":
            return _cmd_stage(args, until="score")
        if args.command == "filter":
            return _cmd_filter(args)
        if args.command == "export":
            return _cmd_export(args)
        if args.command == "eval":
            return _cmd_eval(args)
        if args.command == "regime":
            return _cmd_regime(args)
        if args.command == "validate":
            return _cmd_validate(args)
        raise ConfigError(f"unknown command {args.command!r}")
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except PoseFuseError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION


if __name__ == "__main__":
    sys.exit(main())
