"""Experiment runner: seeded sampling over a world, artifact writing, and
cross-run evaluation.

Per-sample randomness is derived from (base_seed, sample_index, stream)
seed sequences, so runs with the same base seed draw identical concepts,
conditions, and initial latents regardless of guidance mode; that is what
makes cross-mode comparisons paired.

Run directory layout:
  results.csv        one row per sample (stable schema, see CSV_COLUMNS)
  trajectories.json  per-step volume traces, final latents and embeddings
  meta.json          resolved config, config hash, world document and hash
"""

from __future__ import annotations

import csv
import json
import logging
import multiprocessing
import os
from dataclasses import dataclass
from functools import partial

import numpy as np

from . import __version__
from .config import ExperimentConfig
from .diffusion import make_schedule
from .errors import SchemaMismatch
from .guidance import mdg_sample
from .metrics import (
    SAMPLE_CSV_COLUMNS,
    SemanticReport,
    frechet_distance,
    retrieval_accuracy,
    sign_test_pvalue,
)
from .world import SyntheticWorld, make_world

log = logging.getLogger("mdg.runner")

CSV_COLUMNS = (
    "sample_id",
    "concept",
    "v_final",
    "dcos_tv",
    "dcos_ta",
    "dcos_va",
    "dcos_total",
    "world_hash",
)

# Per-sample seed streams: concept draw, condition noise, trajectory init,
# matched ground-truth latent (used at evaluation time).
_STREAM_CONCEPT = 0
_STREAM_CONDITION = 1
_STREAM_TRAJECTORY = 2
_STREAM_GROUND_TRUTH = 3

_META_FORMAT = 1


def sample_seed(base_seed: int, index: int, stream: int) -> list[int]:
    """Entropy tuple for one per-sample random stream."""
    return [base_seed, index, stream]


@dataclass
class SampleResult:
    sample_id: int
    concept: int
    v_final: float
    dcos_tv: float
    dcos_ta: float
    dcos_va: float
    dcos_total: float
    t_grid: list
    v_before: list
    v_after: list
    z_final: list
    audio_embedding: list


def _run_one(world: SyntheticWorld, cfg: ExperimentConfig, index: int) -> SampleResult:
    base = cfg.run.base_seed
    rng = np.random.default_rng(sample_seed(base, index, _STREAM_CONCEPT))
    concept = int(rng.integers(world.concepts))
    ev, ep = world.emit_condition(concept, sample_seed(base, index, _STREAM_CONDITION))
    schedule = make_schedule(
        cfg.schedule.grid_steps, cfg.schedule.beta_start, cfg.schedule.beta_end
    )
    traj = mdg_sample(
        world,
        concept,
        ev,
        ep,
        schedule,
        cfg.guidance,
        seed=sample_seed(base, index, _STREAM_TRAJECTORY),
        num_steps=cfg.schedule.ddim_steps,
        cfg_scale=cfg.cfg_scale,
    )
    return SampleResult(
        sample_id=index,
        concept=concept,
        v_final=float(traj.v_final),
        dcos_tv=float(traj.dcos_tv),
        dcos_ta=float(traj.dcos_ta),
        dcos_va=float(traj.dcos_va),
        dcos_total=float(traj.dcos_total),
        t_grid=[r.t for r in traj.records],
        v_before=[float(r.v_before) for r in traj.records],
        v_after=[float(r.v_after) for r in traj.records],
        z_final=[float(x) for x in traj.final.z],
        audio_embedding=[float(x) for x in traj.audio_embedding],
    )


def run_sampling(world: SyntheticWorld, cfg: ExperimentConfig, jobs: int = 1) -> list[SampleResult]:
    """Run every sample of the config; order is by sample index regardless of jobs."""
    cfg.validate()
    indices = range(cfg.run.num_samples)
    if jobs > 1:
        with multiprocessing.get_context("fork").Pool(jobs) as pool:
            results = pool.map(partial(_run_one, world, cfg), indices)
    else:
        results = [_run_one(world, cfg, i) for i in indices]
    log.info(
        "sampled %d trajectories (mode=%s): mean final V %.4f",
        len(results),
        cfg.guidance.mode,
        float(np.mean([r.v_final for r in results])),
    )
    return results


def write_run_dir(out_dir, world: SyntheticWorld, cfg: ExperimentConfig, results: list[SampleResult]):
    """Write results.csv, trajectories.json and meta.json into ``out_dir``."""
    os.makedirs(out_dir, exist_ok=True)
    world_hash = world.world_hash()
    config_hash = cfg.config_hash()

    with open(os.path.join(out_dir, "results.csv"), "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(CSV_COLUMNS)
        for r in results:
            writer.writerow(
                [
                    r.sample_id,
                    r.concept,
                    repr(r.v_final),
                    repr(r.dcos_tv),
                    repr(r.dcos_ta),
                    repr(r.dcos_va),
                    repr(r.dcos_total),
                    world_hash,
                ]
            )

    trajectories = {
        "format": _META_FORMAT,
        "config_hash": config_hash,
        "world_hash": world_hash,
        "mode": cfg.guidance.mode,
        "base_seed": cfg.run.base_seed,
        "samples": [
            {
                "sample_id": r.sample_id,
                "concept": r.concept,
                "t_grid": r.t_grid,
                "v_before": r.v_before,
                "v_after": r.v_after,
                "z_final": r.z_final,
                "audio_embedding": r.audio_embedding,
            }
            for r in results
        ],
    }
    with open(os.path.join(out_dir, "trajectories.json"), "w", encoding="utf-8") as fh:
        json.dump(trajectories, fh, indent=2, sort_keys=True)
        fh.write("\n")

    meta = {
        "format": _META_FORMAT,
        "package_version": __version__,
        "mode": cfg.guidance.mode,
        "config": cfg.to_dict(),
        "config_hash": config_hash,
        "world_hash": world_hash,
        "world": world.to_dict(),
        "csv_columns": list(CSV_COLUMNS),
    }
    with open(os.path.join(out_dir, "meta.json"), "w", encoding="utf-8") as fh:
        json.dump(meta, fh, indent=2, sort_keys=True)
        fh.write("\n")


def load_run_dir(run_dir) -> dict:
    """Load one run directory back into memory, verifying its schema."""
    try:
        with open(os.path.join(run_dir, "meta.json"), "r", encoding="utf-8") as fh:
            meta = json.load(fh)
        with open(os.path.join(run_dir, "trajectories.json"), "r", encoding="utf-8") as fh:
            trajectories = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise SchemaMismatch(f"cannot load run directory {run_dir}: {exc}") from exc
    if meta.get("format") != _META_FORMAT:
        raise SchemaMismatch(f"{run_dir}: unsupported meta format {meta.get('format')}")
    if meta.get("world_hash") != trajectories.get("world_hash"):
        raise SchemaMismatch(f"{run_dir}: meta and trajectories disagree on world hash")
    return {"dir": str(run_dir), "meta": meta, "trajectories": trajectories}


def matched_ground_truth(world: SyntheticWorld, base_seed: int, samples: list[dict]) -> np.ndarray:
    """Embeddings of clean latents drawn from each sample's true component."""
    out = []
    for s in samples:
        rng = np.random.default_rng(sample_seed(base_seed, s["sample_id"], _STREAM_GROUND_TRUTH))
        z = world.prior.sample(s["concept"], rng)
        out.append(world.encode_audio(z))
    return np.vstack(out)


def evaluate_runs(run_dirs, out_dir=None) -> dict:
    """Compare one or more run directories; optionally write report artifacts.

    All runs must share the same world hash, base seed, and sample count
    (the comparisons are paired by sample index).
    """
    runs = [load_run_dir(d) for d in run_dirs]
    if not runs:
        raise SchemaMismatch("no run directories given")
    world_hash = runs[0]["meta"]["world_hash"]
    base_seed = runs[0]["meta"]["config"]["run"]["base_seed"]
    num_samples = len(runs[0]["trajectories"]["samples"])
    for r in runs[1:]:
        if r["meta"]["world_hash"] != world_hash:
            raise SchemaMismatch(
                f"world hash mismatch: {r['dir']} has {r['meta']['world_hash'][:12]}..., "
                f"expected {world_hash[:12]}..."
            )
        if r["meta"]["config"]["run"]["base_seed"] != base_seed:
            raise SchemaMismatch(f"base seed mismatch in {r['dir']}; comparisons are paired")
        if len(r["trajectories"]["samples"]) != num_samples:
            raise SchemaMismatch(f"sample count mismatch in {r['dir']}")

    world = SyntheticWorld.from_dict(runs[0]["meta"]["world"])
    gt = matched_ground_truth(world, base_seed, runs[0]["trajectories"]["samples"])

    per_run = []
    for r in runs:
        samples = r["trajectories"]["samples"]
        rows = _csv_rows(r)
        col = lambda name: np.array([float(row[name]) for row in rows])
        v = col("v_final")
        embeddings = np.array([s["audio_embedding"] for s in samples], dtype=float)
        concepts = [s["concept"] for s in samples]
        report = {
            "dir": r["dir"],
            "mode": r["meta"]["mode"],
            "num_samples": num_samples,
            "mean_v": float(v.mean()),
            "mean_dcos_tv": float(col("dcos_tv").mean()),
            "mean_dcos_ta": float(col("dcos_ta").mean()),
            "mean_dcos_va": float(col("dcos_va").mean()),
            "mean_dcos_total": float(col("dcos_total").mean()),
            "retrieval_accuracy": retrieval_accuracy(world, zip(embeddings, concepts)),
            "frechet_to_matched": frechet_distance(embeddings, gt),
            "_v": v,
            "_dcos_total": col("dcos_total"),
        }
        per_run.append(report)

    pairs = []
    for i in range(len(per_run)):
        for j in range(i + 1, len(per_run)):
            a, b = per_run[i], per_run[j]
            dv = a["_v"] - b["_v"]
            pairs.append(
                {
                    "run_a": a["dir"],
                    "run_b": b["dir"],
                    "mode_a": a["mode"],
                    "mode_b": b["mode"],
                    "mean_v_delta": float(np.mean(dv)),
                    "mean_dcos_total_delta": float(np.mean(a["_dcos_total"] - b["_dcos_total"])),
                    "sign_test_p_a_less_v": sign_test_pvalue(dv),
                    "sign_test_p_b_less_v": sign_test_pvalue(-dv),
                }
            )

    report = {
        "format": _META_FORMAT,
        "world_hash": world_hash,
        "base_seed": base_seed,
        "runs": [{k: v for k, v in r.items() if not k.startswith("_")} for r in per_run],
        "pairs": pairs,
    }
    if out_dir is not None:
        _write_eval_artifacts(out_dir, report, runs, per_run)
    return report


def _csv_rows(run: dict):
    path = os.path.join(run["dir"], "results.csv")
    with open(path, "r", encoding="utf-8", newline="") as fh:
        reader = csv.DictReader(fh)
        rows = list(reader)
    if reader.fieldnames != list(CSV_COLUMNS):
        raise SchemaMismatch(f"{path}: unexpected CSV columns {reader.fieldnames}")
    return rows


def _write_eval_artifacts(out_dir, report: dict, runs: list[dict], per_run: list[dict]):
    os.makedirs(out_dir, exist_ok=True)
    with open(os.path.join(out_dir, "report.json"), "w", encoding="utf-8") as fh:
        json.dump(report, fh, indent=2, sort_keys=True)
        fh.write("\n")

    with open(os.path.join(out_dir, "report.csv"), "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(
            [
                "run_dir",
                "mode",
                "num_samples",
                "mean_v",
                "mean_dcos_tv",
                "mean_dcos_ta",
                "mean_dcos_va",
                "mean_dcos_total",
                "retrieval_accuracy",
                "frechet_to_matched",
            ]
        )
        for r in per_run:
            writer.writerow(
                [
                    r["dir"],
                    r["mode"],
                    r["num_samples"],
                    repr(r["mean_v"]),
                    repr(r["mean_dcos_tv"]),
                    repr(r["mean_dcos_ta"]),
                    repr(r["mean_dcos_va"]),
                    repr(r["mean_dcos_total"]),
                    repr(r["retrieval_accuracy"]),
                    repr(r["frechet_to_matched"]),
                ]
            )

    # Per-sample table across runs, in the stable semantic-report schema.
    with open(os.path.join(out_dir, "samples.csv"), "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(SAMPLE_CSV_COLUMNS)
        for run in runs:
            rows = _csv_rows(run)
            rep = SemanticReport(
                v=np.array([float(r["v_final"]) for r in rows]),
                dcos_tv=np.array([float(r["dcos_tv"]) for r in rows]),
                dcos_ta=np.array([float(r["dcos_ta"]) for r in rows]),
                dcos_va=np.array([float(r["dcos_va"]) for r in rows]),
                dcos_total=np.array([float(r["dcos_total"]) for r in rows]),
            )
            rep.write_csv_rows(writer, run["meta"]["mode"])

    # Tidy per-step trace for external plotting.
    with open(os.path.join(out_dir, "vtrace.csv"), "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["run_dir", "mode", "step", "t", "mean_v_after"])
        for run in runs:
            samples = run["trajectories"]["samples"]
            t_grid = samples[0]["t_grid"]
            traces = np.array([s["v_after"] for s in samples], dtype=float)
            means = traces.mean(axis=0)
            for step, (t, mv) in enumerate(zip(t_grid, means)):
                writer.writerow([run["dir"], run["meta"]["mode"], step, t, repr(float(mv))])


def build_world(cfg: ExperimentConfig) -> SyntheticWorld:
    return make_world(
        concepts=cfg.world.concepts,
        dim=cfg.world.dim,
        latent_dim=cfg.world.latent_dim,
        sigma_mod=cfg.world.sigma_mod,
        seed=cfg.world.seed,
    )


def world_summary(world: SyntheticWorld) -> dict:
    """Construction diagnostics logged by world generation."""
    from .geometry import gram as _gram

    cos_max = 0.0
    for i in range(world.concepts):
        for j in range(i + 1, world.concepts):
            cos_max = max(cos_max, float(world.anchors[i] @ world.anchors[j]))
    construction_cos = [
        float(world.encode_audio(world.prior.means[c]) @ world.anchors[c])
        for c in range(world.concepts)
    ]
    matched_volumes = [
        _gram(world.anchors[c], world.encode_audio(world.prior.means[c]), world.anchors[c]).volume
        for c in range(world.concepts)
    ]
    return {
        "max_pairwise_anchor_cos": cos_max,
        "min_construction_cos": min(construction_cos),
        "max_matched_volume": max(matched_volumes),
        "matched_volumes": matched_volumes,
    }
