"""Guided DDIM sampling: volume or pairwise-cosine steering of the audio
latent toward the (video, text) condition.

Per reverse iteration the sampler predicts noise with classifier-free
guidance, takes the deterministic DDIM transition, and then optionally
runs N inner optimization steps on the latent it just produced (reusing
that iteration's noise prediction, which the inner objective treats as
constant under detachment). The first ceil(warmup_fraction * num_steps)
iterations are always unguided; the last one ends at t = 0, where the
inner objective acts on the clean latent directly.

The objective chain is z_t -> z0_tilde -> audio embedding -> objective.
With the denoiser detached (default) the z_t -> z0_tilde Jacobian is
1/sqrt(abar_t) times the identity; the encoder and normalization Jacobians
are applied analytically. Setting ``detach_denoiser=False`` additionally
differentiates through the oracle's noise prediction.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import geometry
from .diffusion import (
    LatentState,
    NoiseSchedule,
    OracleDenoiser,
    cfg_combine,
    ddim_step,
    ddim_timesteps,
    predict_clean,
)
from .errors import ConfigInvalid, DimensionMismatch
from .geometry import AUDIO, cosine_distance, gram, volume_grad

MODES = ("none", "pairwise", "volume")
OPTIMIZERS = ("gd", "adam")

DEFAULT_CFG_SCALE = 2.5


@dataclass
class GuidanceConfig:
    """Knobs of the per-step latent optimization.

    ``eta`` and ``inner_steps`` may be zero, which makes any mode an exact
    no-op equal to ``mode="none"`` (useful as a control). Adam moments are
    reset at every denoising step unless ``adam_persist_state`` is set.
    """

    mode: str = "none"
    eta: float = 0.1
    inner_steps: int = 1
    warmup_fraction: float = 0.2
    optimizer: str = "adam"
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_eps: float = 1e-8
    detach_denoiser: bool = True
    adam_persist_state: bool = False
    v_floor: float = geometry.V_FLOOR

    def validate(self):
        if self.mode not in MODES:
            raise ConfigInvalid(f"mode must be one of {MODES}, got {self.mode!r}")
        if self.optimizer not in OPTIMIZERS:
            raise ConfigInvalid(
                f"optimizer must be one of {OPTIMIZERS}, got {self.optimizer!r}"
            )
        if self.eta < 0:
            raise ConfigInvalid(f"eta must be >= 0, got {self.eta}")
        if self.inner_steps < 0:
            raise ConfigInvalid(f"inner_steps must be >= 0, got {self.inner_steps}")
        if not 0.0 <= self.warmup_fraction <= 1.0:
            raise ConfigInvalid(
                f"warmup_fraction must be in [0, 1], got {self.warmup_fraction}"
            )
        if not (0.0 <= self.adam_beta1 < 1.0 and 0.0 <= self.adam_beta2 < 1.0):
            raise ConfigInvalid("adam betas must lie in [0, 1)")
        if self.adam_eps <= 0:
            raise ConfigInvalid("adam_eps must be positive")
        return self


class AdamOptimizer:
    """Minimal Adam with bias correction, one parameter vector."""

    def __init__(self, beta1=0.9, beta2=0.999, eps=1e-8):
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.m = None
        self.v = None
        self.count = 0

    def step(self, z: np.ndarray, grad: np.ndarray, eta: float) -> np.ndarray:
        if self.m is None:
            self.m = np.zeros_like(grad)
            self.v = np.zeros_like(grad)
        self.count += 1
        self.m = self.beta1 * self.m + (1.0 - self.beta1) * grad
        self.v = self.beta2 * self.v + (1.0 - self.beta2) * grad * grad
        m_hat = self.m / (1.0 - self.beta1**self.count)
        v_hat = self.v / (1.0 - self.beta2**self.count)
        return z - eta * m_hat / (np.sqrt(v_hat) + self.eps)


def guidance_step(zt, grad, eta: float, optimizer: AdamOptimizer | None = None) -> np.ndarray:
    """One descent update of the latent: plain gd, or Adam when given state."""
    zt = np.asarray(zt, dtype=float)
    grad = np.asarray(grad, dtype=float)
    if zt.shape != grad.shape:
        raise DimensionMismatch(f"latent {zt.shape} vs gradient {grad.shape}")
    if optimizer is None:
        return zt - eta * grad
    return optimizer.step(zt, grad, eta)


def objective_and_grad(
    zt,
    t: int,
    eps_hat,
    ev,
    ep,
    world,
    schedule: NoiseSchedule,
    config: GuidanceConfig,
    eps_fn=None,
    eps_vjp=None,
):
    """Alignment objective at z_t and its gradient with respect to z_t.

    Volume mode scores V(e_v, e_a, e_p); pairwise mode scores
    (1 - cos(v, a)) + (1 - cos(p, a)), the two audio-involving distances.
    ``eps_hat`` is the noise prediction treated as constant under
    detachment; with ``detach_denoiser=False`` the prediction is recomputed
    via ``eps_fn`` and its Jacobian enters through ``eps_vjp``.
    """
    if config.mode == "none":
        raise ConfigInvalid("objective_and_grad requires mode != 'none'")
    zt = np.asarray(zt, dtype=float)
    if t == 0:
        z0 = zt  # the latent is already clean; the chain reduces to the encoder
    else:
        if not config.detach_denoiser:
            if eps_fn is None or eps_vjp is None:
                raise ConfigInvalid("detach_denoiser=False needs eps_fn and eps_vjp")
            eps_hat = eps_fn(zt)
        z0 = predict_clean(zt, t, eps_hat, schedule)
    ea = world.encode_audio(z0)
    if config.mode == "volume":
        g = gram(ev, ea, ep)
        value = g.volume
        grad_e = volume_grad(g, AUDIO, v_floor=config.v_floor)
    else:  # pairwise
        value = cosine_distance(ev, ea) + cosine_distance(ep, ea)
        grad_e = -(np.asarray(ev, dtype=float) + np.asarray(ep, dtype=float))
    grad_z0 = world.encode_audio_vjp(z0, grad_e)
    if t == 0:
        return float(value), grad_z0
    ab = schedule.alpha_bar(t)
    if config.detach_denoiser:
        grad_zt = grad_z0 / np.sqrt(ab)
    else:
        grad_zt = (grad_z0 - np.sqrt(1.0 - ab) * eps_vjp(zt, grad_z0)) / np.sqrt(ab)
    return float(value), grad_zt


@dataclass(frozen=True)
class StepRecord:
    """Observability snapshot of one reverse step (before/after guidance)."""

    t: int
    z_before: np.ndarray
    z_after: np.ndarray
    v_before: float
    v_after: float
    dcos_tv: float
    dcos_ta: float
    dcos_va: float


@dataclass
class GuidedTrajectory:
    """Full record of one guided sampling run."""

    records: list[StepRecord] = field(default_factory=list)
    final: LatentState | None = None
    audio_embedding: np.ndarray | None = None
    v_final: float = math.nan
    dcos_tv: float = math.nan
    dcos_ta: float = math.nan
    dcos_va: float = math.nan

    @property
    def dcos_total(self) -> float:
        return self.dcos_tv + self.dcos_ta + self.dcos_va


def _probe(z, t, eps_hat, ev, ep, world, schedule):
    """Volume and pairwise distances of the clean prediction at (z, t)."""
    z0 = z if t == 0 else predict_clean(z, t, eps_hat, schedule)
    ea = world.encode_audio(z0)
    v = gram(ev, ea, ep).volume
    return v, cosine_distance(ep, ev), cosine_distance(ep, ea), cosine_distance(ev, ea)


def warmup_step_count(config: GuidanceConfig, num_steps: int) -> int:
    """Number of leading DDIM iterations that run unguided."""
    return math.ceil(config.warmup_fraction * num_steps)


def mdg_sample(
    world,
    concept: int,
    ev,
    ep,
    schedule: NoiseSchedule,
    config: GuidanceConfig,
    seed,
    num_steps: int = 30,
    cfg_scale: float = DEFAULT_CFG_SCALE,
) -> GuidedTrajectory:
    """Run the guided reverse loop from z_T ~ N(0, I); deterministic per seed.

    Every iteration: classifier-free noise prediction at the current
    latent, the DDIM transition to the next level, then (past the warmup
    boundary, modes other than "none") N inner optimization steps on the
    just-produced latent, reusing the transition's noise prediction. The
    final iteration lands on t = 0, so the last guidance acts on the clean
    latent itself. One ``StepRecord`` per iteration, holding the arrived
    latent before and after guidance.
    """
    config.validate()
    world._check_concept(concept)
    ev = np.asarray(ev, dtype=float)
    ep = np.asarray(ep, dtype=float)
    denoiser = OracleDenoiser(world.prior, schedule)
    rng = np.random.default_rng(seed)
    z = rng.standard_normal(world.latent_dim)
    ts = ddim_timesteps(schedule, num_steps)
    warmup = warmup_step_count(config, num_steps)
    guided_mode = config.mode != "none"
    optimizer = None
    if guided_mode and config.optimizer == "adam" and config.adam_persist_state:
        optimizer = AdamOptimizer(config.adam_beta1, config.adam_beta2, config.adam_eps)

    def eps_fn_at(t, zt):
        cond = denoiser.eps(zt, t, concept)
        uncond = denoiser.eps(zt, t, None)
        return cfg_combine(cond, uncond, cfg_scale)

    trajectory = GuidedTrajectory()
    for k in range(num_steps):
        t_from, t = int(ts[k]), int(ts[k + 1])
        eps_hat = eps_fn_at(t_from, z)
        z = ddim_step(z, t_from, t, eps_hat, schedule)
        z_before = z.copy()
        v_before, d_tv, d_ta, d_va = _probe(z, t, eps_hat, ev, ep, world, schedule)
        if guided_mode and k >= warmup and config.inner_steps > 0:
            if config.optimizer == "adam" and not config.adam_persist_state:
                optimizer = AdamOptimizer(
                    config.adam_beta1, config.adam_beta2, config.adam_eps
                )
            step_opt = optimizer if config.optimizer == "adam" else None
            eps_vjp = None
            if not config.detach_denoiser and t >= 1:
                def eps_vjp(zt, u, _t=t):
                    vc = denoiser.eps_vjp(zt, _t, u, concept)
                    vu = denoiser.eps_vjp(zt, _t, u, None)
                    return vu + cfg_scale * (vc - vu)
            for _ in range(config.inner_steps):
                _, grad = objective_and_grad(
                    z,
                    t,
                    eps_hat,
                    ev,
                    ep,
                    world,
                    schedule,
                    config,
                    eps_fn=(lambda zt, _t=t: eps_fn_at(_t, zt)) if t >= 1 else None,
                    eps_vjp=eps_vjp,
                )
                z = guidance_step(z, grad, config.eta, step_opt)
            v_after, d_tv, d_ta, d_va = _probe(z, t, eps_hat, ev, ep, world, schedule)
        else:
            v_after = v_before
        trajectory.records.append(
            StepRecord(
                t=t,
                z_before=z_before,
                z_after=z.copy(),
                v_before=v_before,
                v_after=v_after,
                dcos_tv=d_tv,
                dcos_ta=d_ta,
                dcos_va=d_va,
            )
        )

    ea = world.encode_audio(z)
    trajectory.final = LatentState(z=z, t=0)
    trajectory.audio_embedding = ea
    trajectory.v_final = gram(ev, ea, ep).volume
    trajectory.dcos_tv = cosine_distance(ep, ev)
    trajectory.dcos_ta = cosine_distance(ep, ea)
    trajectory.dcos_va = cosine_distance(ev, ea)
    return trajectory
