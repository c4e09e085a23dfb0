"""Synthetic tri-modal universe: concept anchors, modality encoders, and a
per-concept latent Gaussian prior.

Each of J concepts owns a unit anchor direction in the shared D-dimensional
embedding space. Video and text conditions are noisy re-normalized copies
of the anchor. Audio lives in an L-dimensional latent space: a per-concept
Gaussian supplies clean latents, and the audio encoder is an affine map
followed by normalization, built by least squares so that the component
mean of concept c encodes (almost) exactly onto anchor c. The linear
encoder keeps every Jacobian exact, which the guidance chain rule and its
finite-difference tests rely on.

The default construction is deliberately uneven: component means point in
random directions with spread norms, so the least-squares encoder
amplifies some latent directions much more than others, the way a real
frozen encoder treats a generator's latent space. That unevenness is what
gives an unguided sampler visible semantic drift (and retrieval mistakes)
for guidance to correct. Setting ``mean_jitter=0`` and
``mean_norm_spread=0`` yields an orthogonal, perfectly conditioned
encoder instead.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass

import numpy as np

from .diffusion import GaussianMixturePrior
from .errors import ConfigParse, InvalidDims, InvariantViolation, UnknownConcept, ZeroVector
from .geometry import normalize

DEFAULT_ANCHOR_COS_CAP = 0.5
DEFAULT_MEAN_SCALE = 1.0
DEFAULT_MEAN_JITTER = 1.0
DEFAULT_MEAN_NORM_SPREAD = 0.25
DEFAULT_VAR_RANGE = (0.09, 0.36)
DEFAULT_WEIGHT_DECAY = 1.0
DEFAULT_BIAS_SCALE = 0.3
_CONSTRUCTION_MIN_COS = 0.99
_WORLD_FORMAT = 1


@dataclass(frozen=True)
class SyntheticWorld:
    """Immutable bundle of anchors, encoders and the audio-latent prior."""

    concepts: int
    dim: int
    latent_dim: int
    sigma_mod: float
    seed: int
    anchors: np.ndarray         # (J, D) unit rows
    encoder_weight: np.ndarray  # (D, L)
    encoder_bias: np.ndarray    # (D,)
    prior: GaussianMixturePrior

    def _check_concept(self, concept: int):
        if not 0 <= concept < self.concepts:
            raise UnknownConcept(f"concept {concept} of {self.concepts}")

    def encode_audio(self, z0) -> np.ndarray:
        """Shared-space embedding of a clean audio latent: normalize(W z0 + b)."""
        z0 = np.asarray(z0, dtype=float)
        y = self.encoder_weight @ z0 + self.encoder_bias
        return normalize(y)

    def encode_audio_vjp(self, z0, u) -> np.ndarray:
        """Pullback u -> W^T ((I - e e^T) / ||W z0 + b||) u of the encoder."""
        z0 = np.asarray(z0, dtype=float)
        u = np.asarray(u, dtype=float)
        y = self.encoder_weight @ z0 + self.encoder_bias
        n = float(np.linalg.norm(y))
        if n <= 1e-12:
            raise ZeroVector("encoder output has near-zero norm")
        e = y / n
        return self.encoder_weight.T @ ((u - e * float(e @ u)) / n)

    def emit_condition(self, concept: int, seed) -> tuple[np.ndarray, np.ndarray]:
        """Draw the (video, text) condition embeddings for a concept.

        Each is normalize(anchor + sigma_mod * noise) with independent noise
        per modality, deterministic for a given seed.
        """
        self._check_concept(concept)
        rng = np.random.default_rng(seed)
        anchor = self.anchors[concept]
        ev = normalize(anchor + self.sigma_mod * rng.standard_normal(self.dim))
        ep = normalize(anchor + self.sigma_mod * rng.standard_normal(self.dim))
        return ev, ep

    def to_dict(self) -> dict:
        return {
            "format": _WORLD_FORMAT,
            "concepts": self.concepts,
            "dim": self.dim,
            "latent_dim": self.latent_dim,
            "sigma_mod": float(self.sigma_mod),
            "seed": self.seed,
            "anchors": self.anchors.tolist(),
            "encoder_weight": self.encoder_weight.tolist(),
            "encoder_bias": self.encoder_bias.tolist(),
            "prior": {
                "weights": self.prior.weights.tolist(),
                "means": self.prior.means.tolist(),
                "variances": self.prior.variances.tolist(),
            },
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "SyntheticWorld":
        prior = GaussianMixturePrior(
            weights=np.asarray(doc["prior"]["weights"], dtype=float),
            means=np.asarray(doc["prior"]["means"], dtype=float),
            variances=np.asarray(doc["prior"]["variances"], dtype=float),
        )
        return cls(
            concepts=int(doc["concepts"]),
            dim=int(doc["dim"]),
            latent_dim=int(doc["latent_dim"]),
            sigma_mod=float(doc["sigma_mod"]),
            seed=int(doc["seed"]),
            anchors=np.asarray(doc["anchors"], dtype=float),
            encoder_weight=np.asarray(doc["encoder_weight"], dtype=float),
            encoder_bias=np.asarray(doc["encoder_bias"], dtype=float),
            prior=prior,
        )

    def save(self, path):
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.to_dict(), fh, indent=2, sort_keys=True)
            fh.write("\n")

    @classmethod
    def load(cls, path) -> "SyntheticWorld":
        try:
            with open(path, "r", encoding="utf-8") as fh:
                return cls.from_dict(json.load(fh))
        except (OSError, json.JSONDecodeError, KeyError) as exc:
            raise ConfigParse(f"cannot load world file {path}: {exc}") from exc

    def world_hash(self) -> str:
        payload = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(payload.encode("utf-8")).hexdigest()


def _draw_anchors(
    rng: np.random.Generator, concepts: int, dim: int, cos_cap: float, max_attempts: int
) -> np.ndarray:
    """Greedy rejection sampling of unit anchors with pairwise cosine <= cos_cap."""
    anchors = []
    attempts = 0
    while len(anchors) < concepts:
        if attempts >= max_attempts:
            raise InvariantViolation(
                f"could not place {concepts} anchors with pairwise cosine <= "
                f"{cos_cap} in dimension {dim} within {max_attempts} attempts"
            )
        attempts += 1
        candidate = normalize(rng.standard_normal(dim))
        if all(float(candidate @ a) <= cos_cap for a in anchors):
            anchors.append(candidate)
    return np.vstack(anchors)


def _draw_means(
    rng: np.random.Generator,
    concepts: int,
    latent_dim: int,
    scale: float,
    jitter: float,
    norm_spread: float,
) -> np.ndarray:
    """Component means around norm scale * sqrt(L).

    ``jitter`` in [0, 1] interpolates the directions between an orthogonal
    frame (0: the least-squares encoder is perfectly conditioned) and raw
    Gaussian directions (1: the encoder realistically amplifies some latent
    directions). ``norm_spread`` adds lognormal spread to the norms, giving
    concepts uneven encoder gain. For J > L an orthogonal frame does not
    exist and Gaussian directions are always used.
    """
    gauss = rng.standard_normal((concepts, latent_dim))
    gauss = gauss / np.linalg.norm(gauss, axis=1, keepdims=True)
    if concepts <= latent_dim and jitter < 1.0:
        g = rng.standard_normal((latent_dim, latent_dim))
        q, r = np.linalg.qr(g)
        q = q * np.sign(np.diag(r))  # deterministic sign convention
        directions = (1.0 - jitter) * q[:concepts] + jitter * gauss
    else:
        directions = gauss
    directions = directions / np.linalg.norm(directions, axis=1, keepdims=True)
    norms = scale * np.sqrt(latent_dim) * np.ones(concepts)
    if norm_spread > 0:
        norms = norms * np.exp(norm_spread * rng.standard_normal(concepts))
    return norms[:, None] * directions


def _component_weights(concepts: int, decay: float) -> np.ndarray:
    """Mixture weights proportional to decay^c, normalized to sum to one.

    decay = 1 gives a uniform prior; smaller values model the class
    imbalance of a pretrained generator, which skews the unconditional
    branch of classifier-free guidance.
    """
    w = decay ** np.arange(concepts, dtype=float)
    w = w / w.sum()
    # renormalize in a second pass so the sum is exactly representable
    return w / w.sum()


def make_world(
    concepts: int = 8,
    dim: int = 16,
    latent_dim: int = 8,
    sigma_mod: float = 0.05,
    seed: int = 0,
    *,
    anchor_cos_cap: float = DEFAULT_ANCHOR_COS_CAP,
    mean_scale: float = DEFAULT_MEAN_SCALE,
    mean_jitter: float = DEFAULT_MEAN_JITTER,
    mean_norm_spread: float = DEFAULT_MEAN_NORM_SPREAD,
    var_range: tuple[float, float] = DEFAULT_VAR_RANGE,
    weight_decay: float = DEFAULT_WEIGHT_DECAY,
    bias_scale: float = DEFAULT_BIAS_SCALE,
    max_anchor_attempts: int = 1000,
) -> SyntheticWorld:
    """Construct a synthetic world, deterministic for a given seed.

    The audio encoder weight solves W @ means.T = anchors.T - bias by least
    squares, so each component mean lands on its anchor after encoding
    (exactly when J <= L). Construction fails with ``InvariantViolation``
    when the anchor cosine cap or the encode-onto-anchor property cannot be
    met.
    """
    if dim < 3 or latent_dim < 2 or concepts < 2:
        raise InvalidDims(
            f"need dim >= 3, latent_dim >= 2, concepts >= 2; "
            f"got ({concepts}, {dim}, {latent_dim})"
        )
    if sigma_mod < 0:
        raise InvalidDims(f"sigma_mod must be >= 0, got {sigma_mod}")
    rng = np.random.default_rng(seed)
    anchors = _draw_anchors(rng, concepts, dim, anchor_cos_cap, max_anchor_attempts)
    means = _draw_means(rng, concepts, latent_dim, mean_scale, mean_jitter, mean_norm_spread)
    variances = rng.uniform(var_range[0], var_range[1], size=(concepts, latent_dim))
    # A sizeable encoder bias makes the embedding direction sensitive to the
    # radial inflation that classifier-free guidance induces in the latent;
    # with b ~ 0 that distortion would be invisible after normalization.
    bias = bias_scale * normalize(rng.standard_normal(dim))
    targets = anchors.T - bias[:, None]                  # (D, J)
    weight = targets @ np.linalg.pinv(means.T)           # (D, L)
    prior = GaussianMixturePrior(
        weights=_component_weights(concepts, weight_decay),
        means=means,
        variances=variances,
    )
    world = SyntheticWorld(
        concepts=concepts,
        dim=dim,
        latent_dim=latent_dim,
        sigma_mod=float(sigma_mod),
        seed=seed,
        anchors=anchors,
        encoder_weight=weight,
        encoder_bias=bias,
        prior=prior,
    )
    for c in range(concepts):
        cos = float(world.encode_audio(means[c]) @ anchors[c])
        if cos < _CONSTRUCTION_MIN_COS:
            raise InvariantViolation(
                f"concept {c}: encoded mean has cosine {cos:.4f} < "
                f"{_CONSTRUCTION_MIN_COS} with its anchor (try latent_dim >= concepts)"
            )
    return world
