"""Command-line front end.

Subcommands: gen-world, sample, eval, selftest. Exit codes: 0 success,
2 configuration error, 3 runtime/numerical error, 4 schema mismatch.
Failures also print a machine-readable JSON line to stderr. MDG_LOG
selects the log level (error, info, debug).
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys

from .config import ExperimentConfig, load_config
from .errors import (
    ConfigError,
    InvalidDims,
    InvalidRange,
    InvariantViolation,
    MdgError,
    SchemaMismatch,
)
from .runner import build_world, evaluate_runs, run_sampling, world_summary, write_run_dir
from .selftest import run_selftest
from .world import SyntheticWorld

log = logging.getLogger("mdg.cli")

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_RUNTIME = 3
EXIT_SCHEMA = 4


def _setup_logging():
    level_name = os.environ.get("MDG_LOG", "info").lower()
    levels = {"error": logging.ERROR, "info": logging.INFO, "debug": logging.DEBUG}
    if level_name not in levels:
        level_name = "info"
    logging.basicConfig(level=levels[level_name], format="%(levelname)s %(name)s: %(message)s")


def _load_or_default_config(path) -> ExperimentConfig:
    if path is None:
        return ExperimentConfig().validate()
    return load_config(path)


def cmd_gen_world(args) -> int:
    cfg = _load_or_default_config(args.config)
    if args.seed is not None:
        cfg.world.seed = args.seed
    world = build_world(cfg)
    world.save(args.out)
    summary = world_summary(world)
    log.info("world written to %s (hash %s)", args.out, world.world_hash()[:12])
    log.info(
        "anchors: max pairwise cos %.4f; construction: min cos(encode(mu_c), anchor_c) %.4f",
        summary["max_pairwise_anchor_cos"],
        summary["min_construction_cos"],
    )
    log.info("matched-volume sanity: max V %.4f", summary["max_matched_volume"])
    return EXIT_OK


def cmd_sample(args) -> int:
    cfg = _load_or_default_config(args.config)
    if args.mode is not None:
        cfg.guidance.mode = args.mode
    if args.seed is not None:
        cfg.run.base_seed = args.seed
    cfg.validate()
    world = SyntheticWorld.load(args.world)
    results = run_sampling(world, cfg, jobs=args.jobs)
    write_run_dir(args.out, world, cfg, results)
    log.info("run written to %s (%d samples, mode=%s)", args.out, len(results), cfg.guidance.mode)
    return EXIT_OK


def cmd_eval(args) -> int:
    report = evaluate_runs(args.results, out_dir=args.out)
    for run in report["runs"]:
        log.info(
            "%s (mode=%s): mean V %.4f, mean dcos %.4f, retrieval %.3f, frechet %.4f",
            run["dir"],
            run["mode"],
            run["mean_v"],
            run["mean_dcos_total"],
            run["retrieval_accuracy"],
            run["frechet_to_matched"],
        )
    for pair in report["pairs"]:
        log.info(
            "%s vs %s: mean V delta %+.4f, sign-test p(a<b) %.3g",
            pair["mode_a"],
            pair["mode_b"],
            pair["mean_v_delta"],
            pair["sign_test_p_a_less_v"],
        )
    log.info("report written to %s", args.out)
    return EXIT_OK


def cmd_selftest(_args) -> int:
    return EXIT_OK if run_selftest() else EXIT_RUNTIME


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="mdg",
        description="Volume-guided diffusion sampling on a synthetic tri-modal world.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_world = sub.add_parser("gen-world", help="generate and serialize a synthetic world")
    p_world.add_argument("--config", default=None, help="experiment config JSON")
    p_world.add_argument("--out", required=True, help="output world JSON path")
    p_world.add_argument("--seed", type=int, default=None, help="override the world seed")
    p_world.set_defaults(func=cmd_gen_world)

    p_sample = sub.add_parser("sample", help="run guided sampling over a world")
    p_sample.add_argument("--config", default=None, help="experiment config JSON")
    p_sample.add_argument("--world", required=True, help="world JSON path")
    p_sample.add_argument("--out", required=True, help="output run directory")
    p_sample.add_argument(
        "--mode", choices=("none", "pairwise", "volume"), default=None, help="override guidance mode"
    )
    p_sample.add_argument("--seed", type=int, default=None, help="override the base seed")
    p_sample.add_argument("--jobs", type=int, default=1, help="worker processes")
    p_sample.set_defaults(func=cmd_sample)

    p_eval = sub.add_parser("eval", help="compare one or more run directories")
    p_eval.add_argument("results", nargs="+", help="run directories from `mdg sample`")
    p_eval.add_argument("--out", required=True, help="output report directory")
    p_eval.set_defaults(func=cmd_eval)

    p_self = sub.add_parser("selftest", help="run the fast invariant suites")
    p_self.set_defaults(func=cmd_selftest)

    return parser


def _emit_error(exc: Exception):
    payload = {"error": type(exc).__name__, "message": str(exc)}
    print(json.dumps(payload), file=sys.stderr)


def main(argv=None) -> int:
    _setup_logging()
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except SchemaMismatch as exc:
        _emit_error(exc)
        return EXIT_SCHEMA
    except (ConfigError, InvalidDims, InvalidRange, InvariantViolation) as exc:
        _emit_error(exc)
        return EXIT_CONFIG
    except MdgError as exc:
        _emit_error(exc)
        return EXIT_RUNTIME


def entrypoint():
    sys.exit(main())


if __name__ == "__main__":
    entrypoint()
