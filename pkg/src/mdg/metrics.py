"""Semantic-consistency and distribution-level metrics.

``semantic_report`` tabulates, per embedding triplet, the spanned volume V
and the three cross-modal cosine distances (text-video, text-audio,
video-audio) plus their sum. ``frechet_distance`` is the closed-form
Gaussian 2-Wasserstein statistic between two embedding populations,

    ||mu1 - mu2||^2 + tr(S1 + S2 - 2 (S1 S2)^{1/2}),

with the matrix square root taken through a symmetric eigendecomposition
(tr((S1 S2)^{1/2}) = tr((sqrt(S2) S1 sqrt(S2))^{1/2})) and negative
roundoff eigenvalues clamped to zero. Covariances use the unbiased (n - 1)
estimator.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np
from scipy.stats import binomtest

from .errors import DimensionMismatch, EmptyInput, NonFiniteInput, TooFewSamples
from .geometry import cosine_distance, gram

SAMPLE_CSV_COLUMNS = (
    "sample_id",
    "mode",
    "v",
    "dcos_tv",
    "dcos_ta",
    "dcos_va",
    "dcos_total",
)


@dataclass(frozen=True)
class SemanticReport:
    """Per-sample volume and cosine-distance metrics with their means."""

    v: np.ndarray
    dcos_tv: np.ndarray
    dcos_ta: np.ndarray
    dcos_va: np.ndarray
    dcos_total: np.ndarray

    @property
    def num_samples(self) -> int:
        return self.v.shape[0]

    def means(self) -> dict:
        return {
            "v": float(self.v.mean()),
            "dcos_tv": float(self.dcos_tv.mean()),
            "dcos_ta": float(self.dcos_ta.mean()),
            "dcos_va": float(self.dcos_va.mean()),
            "dcos_total": float(self.dcos_total.mean()),
        }

    def to_dict(self) -> dict:
        return {
            "means": self.means(),
            "per_sample": {
                "v": [float(x) for x in self.v],
                "dcos_tv": [float(x) for x in self.dcos_tv],
                "dcos_ta": [float(x) for x in self.dcos_ta],
                "dcos_va": [float(x) for x in self.dcos_va],
                "dcos_total": [float(x) for x in self.dcos_total],
            },
        }

    def to_json(self, path):
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.to_dict(), fh, indent=2, sort_keys=True)
            fh.write("\n")

    def write_csv_rows(self, writer, mode: str, start_id: int = 0):
        """Append one row per sample in the stable column order."""
        for i in range(self.num_samples):
            writer.writerow(
                [
                    start_id + i,
                    mode,
                    repr(float(self.v[i])),
                    repr(float(self.dcos_tv[i])),
                    repr(float(self.dcos_ta[i])),
                    repr(float(self.dcos_va[i])),
                    repr(float(self.dcos_total[i])),
                ]
            )


def semantic_report(triplets) -> SemanticReport:
    """Per-sample semantic metrics for (video, audio, text) embedding triplets."""
    triplets = list(triplets)
    if not triplets:
        raise EmptyInput("no triplets given")
    v, tv, ta, va = [], [], [], []
    for ev, ea, ep in triplets:
        v.append(gram(ev, ea, ep).volume)
        tv.append(cosine_distance(ep, ev))
        ta.append(cosine_distance(ep, ea))
        va.append(cosine_distance(ev, ea))
    v = np.asarray(v)
    tv = np.asarray(tv)
    ta = np.asarray(ta)
    va = np.asarray(va)
    return SemanticReport(v=v, dcos_tv=tv, dcos_ta=ta, dcos_va=va, dcos_total=tv + ta + va)


@dataclass(frozen=True)
class FrechetReport:
    """Fitted Gaussian parameters of two embedding sets and their distance."""

    mean_a: np.ndarray
    cov_a: np.ndarray
    mean_b: np.ndarray
    cov_b: np.ndarray
    distance: float


def _fit_gaussian(samples, label: str):
    samples = np.asarray(samples, dtype=float)
    if samples.ndim != 2:
        raise DimensionMismatch(f"{label}: expected (n, D) samples, got {samples.shape}")
    if samples.shape[0] < 2:
        raise TooFewSamples(f"{label}: need at least 2 samples, got {samples.shape[0]}")
    if not np.all(np.isfinite(samples)):
        raise NonFiniteInput(f"{label}: samples contain NaN or infinity")
    mean = samples.mean(axis=0)
    cov = np.cov(samples, rowvar=False, ddof=1)
    cov = np.atleast_2d(cov)
    return mean, cov


def _sqrtm_psd(C: np.ndarray) -> np.ndarray:
    w, Q = np.linalg.eigh(0.5 * (C + C.T))
    w = np.clip(w, 0.0, None)  # eigenvalues in [-1e-10, 0) are roundoff
    return (Q * np.sqrt(w)) @ Q.T


def frechet_distance_gaussian(mean_a, cov_a, mean_b, cov_b) -> float:
    """Squared Gaussian 2-Wasserstein distance from exact parameters."""
    mean_a = np.asarray(mean_a, dtype=float)
    mean_b = np.asarray(mean_b, dtype=float)
    cov_a = np.atleast_2d(np.asarray(cov_a, dtype=float))
    cov_b = np.atleast_2d(np.asarray(cov_b, dtype=float))
    if mean_a.shape != mean_b.shape or cov_a.shape != cov_b.shape:
        raise DimensionMismatch("parameter shapes disagree")
    sqrt_b = _sqrtm_psd(cov_b)
    inner = sqrt_b @ cov_a @ sqrt_b
    eigvals = np.clip(np.linalg.eigvalsh(0.5 * (inner + inner.T)), 0.0, None)
    trace_term = float(np.trace(cov_a) + np.trace(cov_b) - 2.0 * np.sum(np.sqrt(eigvals)))
    dist = float(np.sum((mean_a - mean_b) ** 2)) + trace_term
    return max(dist, 0.0)


def frechet_report(set_a, set_b) -> FrechetReport:
    """Fit Gaussians to two embedding sets and compute their distance."""
    mean_a, cov_a = _fit_gaussian(set_a, "set_a")
    mean_b, cov_b = _fit_gaussian(set_b, "set_b")
    if mean_a.shape != mean_b.shape:
        raise DimensionMismatch(
            f"sets live in different dimensions: {mean_a.shape} vs {mean_b.shape}"
        )
    return FrechetReport(
        mean_a=mean_a,
        cov_a=cov_a,
        mean_b=mean_b,
        cov_b=cov_b,
        distance=frechet_distance_gaussian(mean_a, cov_a, mean_b, cov_b),
    )


def frechet_distance(set_a, set_b) -> float:
    """Gaussian Fréchet statistic between two embedding sets."""
    return frechet_report(set_a, set_b).distance


def retrieval_accuracy(world, embedded_targets) -> float:
    """Fraction of embeddings whose nearest anchor is their target concept."""
    items = list(embedded_targets)
    if not items:
        raise EmptyInput("no embeddings given")
    hits = 0
    for embedding, concept in items:
        world._check_concept(concept)
        sims = world.anchors @ np.asarray(embedding, dtype=float)
        hits += int(np.argmax(sims) == concept)
    return hits / len(items)


def sign_test_pvalue(deltas) -> float:
    """One-sided sign test that the deltas are predominantly negative.

    ``deltas`` are paired differences (treatment - control); ties are
    discarded. Returns 1.0 when every pair ties.
    """
    deltas = np.asarray(deltas, dtype=float)
    wins = int(np.sum(deltas < 0))
    n = int(np.sum(deltas != 0))
    if n == 0:
        return 1.0
    return float(binomtest(wins, n, 0.5, alternative="greater").pvalue)
