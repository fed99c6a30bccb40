"""Command-line surface.

Subcommands: ``synth-corpus``, ``curate``, ``caption``, ``eval``, ``report``,
``providers check``. Exit codes are a stable contract: 0 success, 2 config
error, 3 degraded run (pending work remains), 4 internal error.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from pathlib import Path
from typing import List, Optional

from .config import ConfigError, RunConfig, TOKEN_ENV
from .manifest import Manifest
from .pipeline import CurationPipeline, load_pairs, run_eval
from .providers.base import ProviderError
from .providers.client import HttpProviderSet
from .providers.mock import MockProviderSet
from .records import METRIC_NAMES
from .report import ReportError, emit_report
from .synth import generate_corpus

log = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_DEGRADED = 3
EXIT_INTERNAL = 4


def _load_config(args) -> RunConfig:
    if args.config:
        config = RunConfig.load(args.config)
    else:
        config = RunConfig()
    overrides = {}
    if getattr(args, "seed", None) is not None:
        overrides["seed"] = args.seed
    if getattr(args, "providers", None):
        overrides["providers"] = {**config.to_dict()["providers"], "mode": args.providers}
    if overrides:
        config = RunConfig.from_dict({**config.to_dict(), **overrides})
    return config


def _build_providers(config: RunConfig):
    p = config.providers
    if p.mode == "mock":
        return MockProviderSet(seed=config.seed, dims=p.kind_dims())
    token = os.environ.get(p.token_env or TOKEN_ENV)
    return HttpProviderSet(
        p.base_url,
        dims=p.kind_dims(),
        token=token,
        timeout_ms=p.timeout_ms,
        max_retries=p.max_retries,
    )


def _safe_versions(providers) -> dict:
    try:
        return providers.versions()
    except ProviderError as exc:
        return {"unavailable": str(exc)}


def _write_run_record(path: Path, config: RunConfig, providers, command: str) -> None:
    record = {
        "command": command,
        "config_hash": config.config_hash(),
        "seed": config.seed,
        "provider_mode": config.providers.mode,
        "provider_versions": _safe_versions(providers),
    }
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(record, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def cmd_synth_corpus(args) -> int:
    expected = generate_corpus(args.out_dir, seed=args.seed if args.seed is not None else 0)
    print(json.dumps({"out_dir": str(args.out_dir), "clips_total": expected["clips_total"]}, sort_keys=True))
    return EXIT_OK


def cmd_curate(args) -> int:
    config = _load_config(args)
    providers = _build_providers(config)
    with Manifest(args.manifest) as manifest:
        pipeline = CurationPipeline(config, providers, manifest, workers=args.workers)
        summary = pipeline.run_curate(args.corpus_dir)
    _write_run_record(Path(args.manifest).with_suffix(".run.json"), config, providers, "curate")
    print(json.dumps(summary.to_dict(), indent=2, sort_keys=True))
    return EXIT_DEGRADED if summary.degraded else EXIT_OK


def cmd_caption(args) -> int:
    config = _load_config(args)
    providers = _build_providers(config)
    with Manifest(args.manifest) as manifest:
        pipeline = CurationPipeline(config, providers, manifest, workers=args.workers)
        summary = pipeline.run_caption()
    _write_run_record(Path(args.manifest).with_suffix(".caption.run.json"), config, providers, "caption")
    print(json.dumps(summary.to_dict(), indent=2, sort_keys=True))
    return EXIT_DEGRADED if summary.degraded else EXIT_OK


def cmd_eval(args) -> int:
    config = _load_config(args)
    providers = _build_providers(config)
    pairs = load_pairs(args.pairs)
    enabled = args.metrics.split(",") if args.metrics else None
    if enabled:
        unknown = set(enabled) - set(METRIC_NAMES)
        if unknown:
            raise ConfigError(f"--metrics lists unknown metrics: {sorted(unknown)}")
    manifest = Manifest(args.manifest) if args.manifest else None
    try:
        document = run_eval(
            config,
            providers,
            pairs,
            args.out,
            system_name=args.name,
            penalty=args.penalty,
            enabled=enabled,
            manifest=manifest,
            debug=args.debug,
        )
    finally:
        if manifest is not None:
            manifest.close()
    errors = sum(
        1
        for video in document["videos"].values()
        for score in video["scores"].values()
        if score["status"] == "ERROR"
    )
    print(json.dumps({"out": str(args.out), "videos": len(document["videos"]), "metric_errors": errors}, sort_keys=True))
    return EXIT_DEGRADED if errors else EXIT_OK


def cmd_report(args) -> int:
    docs = []
    for path in args.inputs:
        docs.append(json.loads(Path(path).read_text(encoding="utf-8")))
    text = emit_report(docs, fmt=args.format, second_best=args.second_best)
    if args.out:
        Path(args.out).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)
    return EXIT_OK


def cmd_providers_check(args) -> int:
    config = _load_config(args)
    providers = _build_providers(config)
    try:
        caps = sorted(c.value for c in providers.capabilities())
        versions = providers.versions()
    except ProviderError as exc:
        print(json.dumps({"healthy": False, "error": str(exc)}))
        return EXIT_DEGRADED
    print(json.dumps({"healthy": True, "capabilities": caps, "versions": versions}, indent=2, sort_keys=True))
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="vidident",
        description="Object-centric corpus curation and identity-consistency benchmarking.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p: argparse.ArgumentParser, manifest: bool = False) -> None:
        p.add_argument("--config", type=Path, default=None, help="run config JSON")
        p.add_argument("--workers", type=int, default=4)
        p.add_argument("--providers", choices=["mock", "live"], default=None)
        p.add_argument("--seed", type=int, default=None)
        if manifest:
            p.add_argument("--manifest", type=Path, required=True)

    p = sub.add_parser("synth-corpus", help="generate the built-in synthetic test corpus")
    p.add_argument("out_dir", type=Path)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(fn=cmd_synth_corpus)

    p = sub.add_parser("curate", help="run the quality filter cascades over a corpus")
    p.add_argument("corpus_dir", type=Path)
    common(p, manifest=True)
    p.set_defaults(fn=cmd_curate)

    p = sub.add_parser("caption", help="two-stage captioning plus tag retrieval for curated clips")
    common(p, manifest=True)
    p.set_defaults(fn=cmd_caption)

    p = sub.add_parser("eval", help="score (reference, generated) video pairs")
    p.add_argument("pairs", type=Path, help="pairs JSON file")
    p.add_argument("--out", type=Path, required=True)
    p.add_argument("--name", default="system", help="system name for the leaderboard row")
    p.add_argument("--penalty", type=float, default=None, help="object-similarity miss penalty")
    p.add_argument("--metrics", default=None, help="comma-separated metric subset")
    p.add_argument("--manifest", type=Path, default=None,
                   help="attach scores to manifest clips for pairs carrying clip_id")
    p.add_argument("--debug", action="store_true",
                   help="export per-cell diagnostics and point-cloud blobs")
    common(p)
    p.set_defaults(fn=cmd_eval)

    p = sub.add_parser("report", help="emit a leaderboard from eval outputs")
    p.add_argument("inputs", nargs="+", type=Path)
    p.add_argument("--format", choices=["markdown_table", "csv", "json"], default="markdown_table")
    p.add_argument("--second-best", action="store_true")
    p.add_argument("--out", type=Path, default=None)
    p.set_defaults(fn=cmd_report)

    p = sub.add_parser("providers", help="provider utilities")
    psub = p.add_subparsers(dest="providers_command", required=True)
    pc = psub.add_parser("check", help="health-check the configured providers")
    common(pc)
    pc.set_defaults(fn=cmd_providers_check)

    return parser


def main(argv: Optional[List[str]] = None) -> int:
    logging.basicConfig(level=logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.fn(args)
    except (ConfigError, ReportError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except FileNotFoundError as exc:
        print(f"missing input: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except Exception as exc:  # noqa: BLE001
        log.exception("internal error")
        print(f"internal error: {exc}", file=sys.stderr)
        return EXIT_INTERNAL


if __name__ == "__main__":
    raise SystemExit(main())
