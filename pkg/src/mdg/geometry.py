"""Embedding geometry: unit normalization, Gram matrix, parallelotope volume.

The alignment measure for a (video, audio, text) embedding triplet is the
volume of the parallelotope spanned by the three unit vectors,

    V = sqrt(det(Z^T Z)),   Z = [e_v | e_a | e_p]  (D x 3, unit columns).

Matched triplets collapse toward V = 0 (linear dependence); unrelated ones
approach the orthonormal maximum V = 1 (Hadamard bound for unit columns).

The analytic gradient of V with respect to one column c is

    dV/dz_c = V * (Z K^{-1})[:, c],    K = Z^T Z,

which is the steepest-ascent direction treating the column as a free
vector. Near the singular set (V below ``V_FLOOR``) the gradient of
V^2 = det(K) is returned instead, computed through the adjugate so it
stays finite at rank-deficient K.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DimensionMismatch, NumericalError, SingularGram, ZeroVector

# Column order inside Z for the three modalities.
VIDEO, AUDIO, TEXT = 0, 1, 2

# Below this volume the V objective switches to V^2 (smooth at det K = 0).
V_FLOOR = 1e-6

_ZERO_NORM_TOL = 1e-12
_DET_ERROR_TOL = -1e-6

_EYE3 = np.eye(3)


def normalize(v) -> np.ndarray:
    """Scale ``v`` to unit Euclidean norm.

    Idempotent on already-unit vectors. Raises ``ZeroVector`` when the norm
    is at or below 1e-12, and ``DimensionMismatch`` for vectors too short to
    span a 3-volume (D < 3).
    """
    v = np.asarray(v, dtype=float)
    if v.ndim != 1:
        raise DimensionMismatch(f"expected a 1-d vector, got shape {v.shape}")
    if v.shape[0] < 3:
        raise DimensionMismatch(
            f"embedding dimension must be >= 3, got {v.shape[0]}"
        )
    n = float(np.linalg.norm(v))
    if n <= _ZERO_NORM_TOL:
        raise ZeroVector(f"norm {n:.3e} is below {_ZERO_NORM_TOL:.0e}")
    return v / n


@dataclass(frozen=True)
class TripletGram:
    """Stacked triplet Z (D x 3, columns video/audio/text), its Gram matrix
    K = Z^T Z, and the spanned volume sqrt(det K)."""

    Z: np.ndarray
    K: np.ndarray
    volume: float


def gram(ev, ea, ep) -> TripletGram:
    """Build the 3x3 Gram matrix of a unit-norm embedding triplet.

    Columns are ordered (video, audio, text). All three embeddings must
    share the same dimension D >= 3.
    """
    ev = np.asarray(ev, dtype=float)
    ea = np.asarray(ea, dtype=float)
    ep = np.asarray(ep, dtype=float)
    if not (ev.shape == ea.shape == ep.shape) or ev.ndim != 1:
        raise DimensionMismatch(
            f"embeddings must share one dimension, got {ev.shape}, {ea.shape}, {ep.shape}"
        )
    if ev.shape[0] < 3:
        raise DimensionMismatch(f"embedding dimension must be >= 3, got {ev.shape[0]}")
    Z = np.column_stack([ev, ea, ep])
    K = Z.T @ Z
    K = 0.5 * (K + K.T)  # kill 1-ulp asymmetry from summation order
    return TripletGram(Z=Z, K=K, volume=volume(K))


def volume(g) -> float:
    """Parallelotope volume sqrt(det K) of a triplet Gram matrix.

    Accepts a ``TripletGram`` or a raw 3x3 Gram matrix of unit columns.
    Roundoff is clamped at both Gram bounds: tiny negative determinants
    (PSD in exact arithmetic) become 0, and determinants a hair above 1
    (Hadamard bound for unit columns) become 1. A determinant below -1e-6
    indicates a corrupted K and raises ``NumericalError``.
    """
    K = g.K if isinstance(g, TripletGram) else np.asarray(g, dtype=float)
    if K.shape != (3, 3):
        raise DimensionMismatch(f"Gram matrix must be 3x3, got {K.shape}")
    det = float(np.linalg.det(K))
    if det < _DET_ERROR_TOL:
        raise NumericalError(f"det(K) = {det:.3e} is far below zero; K is corrupted")
    if det < 0.0:
        det = 0.0
    elif 1.0 < det < 1.0 + 1e-9:
        det = 1.0
    return float(np.sqrt(det))


def _adjugate3(K: np.ndarray) -> np.ndarray:
    """Closed-form adjugate of a 3x3 matrix (det(K) * K^{-1}, finite always)."""
    a, b, c = K[0]
    d, e, f = K[1]
    g_, h, i = K[2]
    cof = np.array(
        [
            [e * i - f * h, -(d * i - f * g_), d * h - e * g_],
            [-(b * i - c * h), a * i - c * g_, -(a * h - b * g_)],
            [b * f - c * e, -(a * f - c * d), a * e - b * d],
        ]
    )
    return cof.T


def volume_grad(g: TripletGram, column: int, v_floor: float = V_FLOOR) -> np.ndarray:
    """Gradient of the volume with respect to one column of Z.

    Returns dV/dz_c = V * (Z K^{-1})[:, c] for non-degenerate triplets.
    When V < ``v_floor`` the returned vector is the gradient of
    V^2 = det(K) instead, i.e. 2 * (Z adj(K))[:, c], which is finite at
    singular K (and exactly zero at rank 1). ``SingularGram`` is raised
    only if even that fallback is non-finite.
    """
    if column not in (VIDEO, AUDIO, TEXT):
        raise DimensionMismatch(f"column must be one of 0, 1, 2, got {column}")
    if g.volume >= v_floor:
        x = np.linalg.solve(g.K, _EYE3[:, column])
        return g.volume * (g.Z @ x)
    grad = 2.0 * (g.Z @ _adjugate3(g.K)[:, column])
    if not np.all(np.isfinite(grad)):
        raise SingularGram("V^2 fallback gradient is non-finite")
    return grad


def cosine_distance(e1, e2) -> float:
    """1 - cosine similarity between two unit-norm embeddings, in [0, 2]."""
    e1 = np.asarray(e1, dtype=float)
    e2 = np.asarray(e2, dtype=float)
    if e1.shape != e2.shape or e1.ndim != 1:
        raise DimensionMismatch(f"shape mismatch: {e1.shape} vs {e2.shape}")
    d = 1.0 - float(e1 @ e2)
    return min(max(d, 0.0), 2.0)
