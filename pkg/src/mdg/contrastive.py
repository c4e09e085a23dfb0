"""Contrastive losses over matched (video, audio, text) triplets.

Two volume-based InfoNCE directions are provided: anchor on the matched
(video, audio) pair and contrast text candidates (AV2T), or anchor on text
and contrast matched (video, audio) pairs (T2AV). The similarity inside
the softmax is exp(-V / tau) with V the triplet volume, so smaller volume
means a better match. A conventional pairwise-cosine InfoNCE is included
as a baseline.

All reductions go through log-sum-exp; with temperatures like 0.07 the raw
exponentials overflow otherwise.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import logsumexp

from .errors import DimensionMismatch, EmptyBatch

MODALITY_PAIRS = (("v", "a"), ("v", "p"), ("a", "p"))


@dataclass(frozen=True)
class TripletBatch:
    """B matched triplets of unit-norm embeddings, rows aligned by index.

    ``video[i]``, ``audio[i]``, ``text[i]`` describe the same underlying
    sample. B >= 2 so every anchor has at least one negative.
    """

    video: np.ndarray
    audio: np.ndarray
    text: np.ndarray
    temperature: float = 0.07

    def __post_init__(self):
        for name in ("video", "audio", "text"):
            arr = np.asarray(getattr(self, name), dtype=float)
            object.__setattr__(self, name, arr)
        if not (self.video.shape == self.audio.shape == self.text.shape):
            raise DimensionMismatch(
                f"modality arrays must share shape, got {self.video.shape}, "
                f"{self.audio.shape}, {self.text.shape}"
            )
        if self.video.ndim != 2:
            raise DimensionMismatch("modality arrays must be (B, D)")
        if self.video.shape[0] < 2:
            raise EmptyBatch(f"need B >= 2 triplets, got {self.video.shape[0]}")
        if not self.temperature > 0:
            raise ValueError(f"temperature must be positive, got {self.temperature}")

    @property
    def batch_size(self) -> int:
        return self.video.shape[0]


def volume_table(video: np.ndarray, audio: np.ndarray, text: np.ndarray) -> np.ndarray:
    """Matrix of volumes table[i, j] = V(video_i, audio_i, text_j).

    Uses the closed-form determinant of a 3x3 Gram matrix with unit
    diagonal: det = 1 + 2*k12*k13*k23 - k12^2 - k13^2 - k23^2.
    """
    k_va = np.einsum("bd,bd->b", video, audio)  # cos(v_i, a_i)
    k_vp = video @ text.T                       # cos(v_i, p_j)
    k_ap = audio @ text.T                       # cos(a_i, p_j)
    det = (
        1.0
        + 2.0 * k_va[:, None] * k_vp * k_ap
        - k_va[:, None] ** 2
        - k_vp**2
        - k_ap**2
    )
    return np.sqrt(np.clip(det, 0.0, 1.0))


def _mean_cross_entropy(logits: np.ndarray) -> float:
    """Mean over rows of -(logit of the diagonal - logsumexp of the row)."""
    lse = logsumexp(logits, axis=1)
    return float(np.mean(lse - np.diag(logits)))


def infonce_from_volumes(volumes: np.ndarray, temperature: float) -> float:
    """InfoNCE on a precomputed volume table (rows = anchors, diag = matched)."""
    volumes = np.asarray(volumes, dtype=float)
    if volumes.ndim != 2 or volumes.shape[0] != volumes.shape[1]:
        raise DimensionMismatch(f"volume table must be square, got {volumes.shape}")
    if volumes.shape[0] < 2:
        raise EmptyBatch("need at least two anchors")
    return _mean_cross_entropy(-volumes / temperature)


def loss_av2t(batch: TripletBatch) -> float:
    """Volume InfoNCE anchored on matched (video, audio), contrasting texts."""
    table = volume_table(batch.video, batch.audio, batch.text)
    return infonce_from_volumes(table, batch.temperature)


def loss_t2av(batch: TripletBatch) -> float:
    """Volume InfoNCE anchored on text, contrasting matched (video, audio) pairs."""
    table = volume_table(batch.video, batch.audio, batch.text)
    # row i = text anchor i, column j = candidate pair (video_j, audio_j)
    return infonce_from_volumes(table.T, batch.temperature)


def loss_pairwise_infonce(batch: TripletBatch, modality_pair) -> float:
    """Standard cosine InfoNCE between one modality pair of the batch."""
    pair = tuple(modality_pair)
    if pair not in MODALITY_PAIRS:
        raise ValueError(f"modality_pair must be one of {MODALITY_PAIRS}, got {pair}")
    by_letter = {"v": batch.video, "a": batch.audio, "p": batch.text}
    x, y = by_letter[pair[0]], by_letter[pair[1]]
    logits = (x @ y.T) / batch.temperature
    return _mean_cross_entropy(logits)
