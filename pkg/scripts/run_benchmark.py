#!/usr/bin/env python3
"""Run the default three-mode benchmark and print the comparison table.

Generates a world, samples the none/pairwise/volume guidance modes with
identical per-sample seeds, evaluates them, and leaves all artifacts in
--out for inspection (run directories plus the eval report).
"""

import argparse
import json
import os
import sys
import time

from mdg.cli import main as cli_main
from mdg.config import ExperimentConfig


def parse_args():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--out", default="benchmark_out", help="output directory")
    parser.add_argument("--samples", type=int, default=200)
    parser.add_argument("--seed", type=int, default=None, help="base seed override")
    parser.add_argument("--world-seed", type=int, default=None)
    parser.add_argument("--ddim-steps", type=int, default=None)
    parser.add_argument("--jobs", type=int, default=1)
    return parser.parse_args()


def run(argv):
    code = cli_main(argv)
    if code != 0:
        sys.exit(code)


def main():
    args = parse_args()
    os.makedirs(args.out, exist_ok=True)

    doc = ExperimentConfig().to_dict()
    doc["run"]["num_samples"] = args.samples
    if args.seed is not None:
        doc["run"]["base_seed"] = args.seed
    if args.world_seed is not None:
        doc["world"]["seed"] = args.world_seed
    if args.ddim_steps is not None:
        doc["schedule"]["ddim_steps"] = args.ddim_steps
    cfg_path = os.path.join(args.out, "config.json")
    with open(cfg_path, "w") as fh:
        json.dump(doc, fh, indent=2, sort_keys=True)

    world_path = os.path.join(args.out, "world.json")
    run(["gen-world", "--config", cfg_path, "--out", world_path])

    t0 = time.perf_counter()
    run_dirs = []
    for mode in ("none", "pairwise", "volume"):
        out_dir = os.path.join(args.out, f"run_{mode}")
        run(
            [
                "sample",
                "--config",
                cfg_path,
                "--world",
                world_path,
                "--out",
                out_dir,
                "--mode",
                mode,
                "--jobs",
                str(args.jobs),
            ]
        )
        run_dirs.append(out_dir)
    elapsed = time.perf_counter() - t0

    report_dir = os.path.join(args.out, "report")
    run(["eval", *run_dirs, "--out", report_dir])

    with open(os.path.join(report_dir, "report.json")) as fh:
        report = json.load(fh)

    print(f"\nsampling took {elapsed:.1f}s for {3 * args.samples} trajectories\n")
    header = f"{'mode':9s} {'mean V':>8s} {'mean dcos':>10s} {'retrieval':>9s} {'frechet':>8s}"
    print(header)
    print("-" * len(header))
    for row in report["runs"]:
        print(
            f"{row['mode']:9s} {row['mean_v']:8.4f} {row['mean_dcos_total']:10.4f} "
            f"{row['retrieval_accuracy']:9.3f} {row['frechet_to_matched']:8.4f}"
        )
    print()
    for pair in report["pairs"]:
        print(
            f"{pair['mode_a']} vs {pair['mode_b']}: mean V delta {pair['mean_v_delta']:+.4f}, "
            f"sign-test p({pair['mode_a']} < {pair['mode_b']}) = {pair['sign_test_p_a_less_v']:.3g}"
        )
    print(f"\nartifacts in {args.out}/")


if __name__ == "__main__":
    main()
