"""Command-line entry point for the matching pipeline.

Subcommands: validate, profile, embed, retrieve, judge, evaluate, pipeline,
ablate. Exit codes: 0 success, 1 usage/config error, 2 data error,
3 provider error.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from . import corpus, pipeline as pl
from .config import PIPELINE_MODES, RunConfig, config_self_test, load_config, merge_config
from .errors import ConfigError, DataError, ProviderError

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2
EXIT_PROVIDER = 3


class _Parser(argparse.ArgumentParser):
    # argparse exits with code 2 on usage errors; the contract here is 1.
    def error(self, message):
        self.print_usage(sys.stderr)
        raise SystemExit2(message)


class SystemExit2(Exception):
    pass


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="revmatch", description="Paper-reviewer matching pipeline")
    parser.add_argument("--config", help="path to a JSON run config")
    parser.add_argument("--out", help="output directory (overrides config)")
    parser.add_argument("--mode", choices=PIPELINE_MODES, help="pipeline mode (overrides config)")
    parser.add_argument(
        "--offline",
        action="store_true",
        default=None,
        help="forbid network calls; fixture providers and warm cache only",
    )
    parser.add_argument("--seed", type=int, help="seed for deterministic fixture providers")
    parser.add_argument("--dataset", help="dataset directory (overrides config)")
    parser.add_argument("--name", help="dataset name (overrides config)")

    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("validate", help="load a dataset and report warnings and errors")
    sub.add_parser("profile", help="profile every paper and reviewer digest")
    sub.add_parser("embed", help="embed papers and reviewer publications")
    sub.add_parser("retrieve", help="run hybrid retrieval and select candidates")
    sub.add_parser("judge", help="run the rubric committee over the candidate set")
    sub.add_parser("evaluate", help="compute metrics from existing rankings")
    sub.add_parser("pipeline", help="run the configured mode end to end")

    ablate = sub.add_parser("ablate", help="run several modes and compare them")
    ablate.add_argument(
        "--modes",
        default=",".join(PIPELINE_MODES),
        help="comma-separated pipeline modes (default: all five)",
    )
    ablate.add_argument(
        "--sweep-m",
        default="",
        help="comma-separated candidate-set sizes to sweep in full mode",
    )
    ablate.add_argument("--csv", action="store_true", help="emit CSV instead of an aligned table")
    return parser


def _assemble_config(args) -> RunConfig:
    base = load_config(args.config) if args.config else RunConfig()
    overrides = {
        "out_dir": args.out,
        "mode": args.mode,
        "offline": args.offline,
        "seed": args.seed,
        "dataset_path": args.dataset,
        "dataset_name": args.name,
    }
    cfg = merge_config(base, overrides)
    if not cfg.dataset_path:
        raise ConfigError("no dataset configured; pass --dataset or set dataset_path in the config")
    if not cfg.dataset_name:
        cfg.dataset_name = Path(cfg.dataset_path).name
    config_self_test(cfg)
    return cfg


def _existing(path: Path, producing_stage: str) -> Path:
    if not path.is_file():
        raise DataError(f"missing {path.name}; run the {producing_stage!r} stage first")
    return path


def _cmd_validate(cfg: RunConfig) -> int:
    ds = corpus.load_dataset(cfg.dataset_path, cfg.dataset_name)
    report = corpus.validate_dataset(ds)
    print(
        f"dataset {report.dataset!r}: {report.n_papers} papers, "
        f"{report.n_reviewers} reviewers, {report.n_annotations} annotated pairs"
    )
    for issue in report.warnings:
        print(f"warning [{issue.kind}] {issue.message}")
    for error in report.errors:
        print(f"error: {error}")
    return EXIT_OK if report.ok else EXIT_DATA


def _cmd_evaluate(cfg: RunConfig) -> int:
    out = Path(cfg.out_dir)
    rankings = out / pl.RANKINGS_FILE
    if not rankings.is_file():
        raise DataError(f"no rankings file at {rankings}; run the pipeline first")
    ds = corpus.load_dataset(cfg.dataset_path, cfg.dataset_name)
    tables = pl.load_ranking_tables(rankings)
    pipeline = pl.Pipeline(cfg, ds)
    report = pipeline.evaluate_stage(tables)
    print(json.dumps(report.to_payload(), indent=2))
    return EXIT_OK


def _cmd_stage(cfg: RunConfig, command: str) -> int:
    ds = corpus.load_dataset(cfg.dataset_path, cfg.dataset_name)
    pipeline = pl.Pipeline(cfg, ds)
    out = Path(cfg.out_dir)
    if command == "profile":
        pipeline._timed("profile", pipeline.profile_stage)
        print(f"wrote {out / pl.PROFILES_FILE}")
    elif command == "embed":
        pipeline._timed("embed", pipeline.embed_stage)
        print(f"wrote {out / pl.EMBEDDINGS_FILE}")
    elif command == "retrieve":
        profiles = pl.load_profiles(_existing(out / pl.PROFILES_FILE, "profile"))
        paper_embeddings, histories = pl.load_embeddings(_existing(out / pl.EMBEDDINGS_FILE, "embed"))
        pipeline._timed(
            "retrieve", lambda: pipeline.retrieval_stage(profiles, paper_embeddings, histories)
        )
        print(f"wrote {out / pl.CANDIDATES_FILE}")
    elif command == "judge":
        profiles = pl.load_profiles(_existing(out / pl.PROFILES_FILE, "profile"))
        if cfg.mode == "committee":
            targets = pipeline.pools()
        else:
            targets = pl.load_candidate_ids(_existing(out / pl.CANDIDATES_FILE, "retrieve"))
        pipeline._timed("judge", lambda: pipeline.judge_stage(profiles, targets))
        print(f"wrote {out / pl.VERDICTS_FILE}")
    pipeline._finalize_manifest()
    return EXIT_OK


def _cmd_pipeline(cfg: RunConfig) -> int:
    result = pl.cmd_pipeline(cfg)
    if result.report is not None:
        for name, value in result.report.metrics.items():
            print(f"{name}: {value:.2f}")
        print(f"avg: {result.report.avg:.2f}")
    print(f"artifacts in {result.out_dir}")
    return EXIT_OK


def _cmd_ablate(cfg: RunConfig, args) -> int:
    modes = [m.strip() for m in args.modes.split(",") if m.strip()]
    unknown = [m for m in modes if m not in PIPELINE_MODES]
    if unknown:
        raise ConfigError(f"unknown ablation modes: {unknown}")
    m_sweep = [int(v) for v in args.sweep_m.split(",") if v.strip()] if args.sweep_m else None
    table, _, failures = pl.cmd_ablate(cfg, modes, m_sweep=m_sweep, fmt="csv" if args.csv else "text")
    print(table, end="")
    for label, error in failures.items():
        print(f"variant {label} failed: {error}", file=sys.stderr)
    return EXIT_OK if not failures else EXIT_DATA


def main(argv=None) -> int:
    logging.basicConfig(level=logging.INFO, format="%(levelname)s %(name)s: %(message)s")
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit2 as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE

    try:
        cfg = _assemble_config(args)
        if args.command == "validate":
            return _cmd_validate(cfg)
        if args.command in ("profile", "embed", "retrieve", "judge"):
            return _cmd_stage(cfg, args.command)
        if args.command == "evaluate":
            return _cmd_evaluate(cfg)
        if args.command == "pipeline":
            return _cmd_pipeline(cfg)
        if args.command == "ablate":
            return _cmd_ablate(cfg, args)
        raise ConfigError(f"unknown command {args.command!r}")
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except DataError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except ProviderError as exc:
        print(f"provider error: {exc}", file=sys.stderr)
        return EXIT_PROVIDER


if __name__ == "__main__":
    raise SystemExit(main())
