"""Latent diffusion substrate: noise schedule, forward/reverse algebra, and
the closed-form Gaussian-mixture oracle denoiser.

The forward process adds Gaussian noise with a linear beta schedule:

    z_t = sqrt(abar_t) z_0 + sqrt(1 - abar_t) eps,   abar_t = prod_{i<=t}(1 - beta_i)

with the boundary convention abar_0 = 1. Reverse sampling is deterministic
DDIM over a sub-sampled timestep grid; at the final transition to t = 0 the
step returns the predicted clean latent exactly.

Instead of a trained noise predictor, ``OracleDenoiser`` computes the exact
Bayes posterior under a diagonal Gaussian-mixture prior over clean latents:
E[z_0 | z_t] is available per coordinate in closed form, and the implied
eps-prediction is (z_t - sqrt(abar_t) E[z_0 | z_t]) / sqrt(1 - abar_t).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import logsumexp

from .errors import (
    DimensionMismatch,
    InvalidRange,
    TimestepOrder,
    TimestepOutOfRange,
    UnknownConcept,
)

DEFAULT_GRID_STEPS = 1000
DEFAULT_BETA_START = 1e-4
DEFAULT_BETA_END = 0.02
DEFAULT_DDIM_STEPS = 30


@dataclass(frozen=True)
class NoiseSchedule:
    """Per-step noise rates beta_t (t = 1..T) and cumulative abar_t."""

    betas: np.ndarray
    alpha_bars: np.ndarray

    @property
    def num_steps(self) -> int:
        return self.betas.shape[0]

    def alpha_bar(self, t: int) -> float:
        """Cumulative product abar_t, with abar_0 = 1 by convention."""
        if not 0 <= t <= self.num_steps:
            raise TimestepOutOfRange(f"t = {t} not in [0, {self.num_steps}]")
        if t == 0:
            return 1.0
        return float(self.alpha_bars[t - 1])


def make_schedule(
    num_steps: int = DEFAULT_GRID_STEPS,
    beta_start: float = DEFAULT_BETA_START,
    beta_end: float = DEFAULT_BETA_END,
) -> NoiseSchedule:
    """Linear beta schedule over ``num_steps`` grid steps."""
    if num_steps < 1:
        raise InvalidRange(f"num_steps must be >= 1, got {num_steps}")
    if not (0.0 < beta_start <= beta_end < 1.0):
        raise InvalidRange(
            f"need 0 < beta_start <= beta_end < 1, got ({beta_start}, {beta_end})"
        )
    betas = np.linspace(beta_start, beta_end, num_steps)
    alpha_bars = np.cumprod(1.0 - betas)
    return NoiseSchedule(betas=betas, alpha_bars=alpha_bars)


def ddim_timesteps(schedule: NoiseSchedule, num_steps: int = DEFAULT_DDIM_STEPS) -> np.ndarray:
    """Descending timestep grid T = t_0 > t_1 > ... > t_num_steps = 0.

    Adjacent entries form the (t, t_prev) pairs of the reverse loop.
    """
    T = schedule.num_steps
    if not 1 <= num_steps <= T:
        raise InvalidRange(f"num_steps must be in [1, {T}], got {num_steps}")
    ts = np.rint(np.linspace(T, 0, num_steps + 1)).astype(int)
    if np.any(np.diff(ts) >= 0):
        raise InvalidRange(f"sub-sampled grid is not strictly decreasing: {ts}")
    return ts


def _check_same_shape(a: np.ndarray, b: np.ndarray, what: str):
    if a.shape != b.shape:
        raise DimensionMismatch(f"{what}: shape {a.shape} vs {b.shape}")


def forward_sample(z0, t: int, eps, schedule: NoiseSchedule) -> np.ndarray:
    """Draw z_t = sqrt(abar_t) z_0 + sqrt(1 - abar_t) eps (eps supplied).

    Broadcasts over leading axes; the trailing axis is the latent dimension.
    """
    z0 = np.asarray(z0, dtype=float)
    eps = np.asarray(eps, dtype=float)
    _check_same_shape(z0, eps, "z0 vs eps")
    ab = schedule.alpha_bar(t)
    return np.sqrt(ab) * z0 + np.sqrt(1.0 - ab) * eps


def predict_clean(zt, t: int, eps_hat, schedule: NoiseSchedule) -> np.ndarray:
    """Invert the forward marginal: z0_tilde = (z_t - sqrt(1-abar_t) eps_hat) / sqrt(abar_t)."""
    if t < 1:
        raise TimestepOutOfRange(f"predict_clean needs t >= 1, got {t}")
    zt = np.asarray(zt, dtype=float)
    eps_hat = np.asarray(eps_hat, dtype=float)
    _check_same_shape(zt, eps_hat, "zt vs eps_hat")
    ab = schedule.alpha_bar(t)
    return (zt - np.sqrt(1.0 - ab) * eps_hat) / np.sqrt(ab)


def ddim_step(zt, t: int, t_prev: int, eps_hat, schedule: NoiseSchedule) -> np.ndarray:
    """One deterministic DDIM transition from level t to t_prev < t.

    z_{t_prev} = sqrt(abar_{t_prev}) z0_tilde + sqrt(1 - abar_{t_prev}) eps_hat.
    With abar_0 = 1 the final transition returns the clean prediction
    exactly. t_prev = t is the identity.
    """
    if t_prev > t:
        raise TimestepOrder(f"t_prev = {t_prev} must be <= t = {t}")
    zt = np.asarray(zt, dtype=float)
    if t_prev == t:
        return zt
    z0 = predict_clean(zt, t, eps_hat, schedule)
    ab_prev = schedule.alpha_bar(t_prev)
    return np.sqrt(ab_prev) * z0 + np.sqrt(1.0 - ab_prev) * np.asarray(eps_hat, dtype=float)


def cfg_combine(eps_cond, eps_uncond, scale: float) -> np.ndarray:
    """Classifier-free guidance mix: eps_uncond + scale * (eps_cond - eps_uncond)."""
    eps_cond = np.asarray(eps_cond, dtype=float)
    eps_uncond = np.asarray(eps_uncond, dtype=float)
    _check_same_shape(eps_cond, eps_uncond, "eps_cond vs eps_uncond")
    return eps_uncond + scale * (eps_cond - eps_uncond)


@dataclass(frozen=True)
class LatentState:
    """A latent vector together with its diffusion level."""

    z: np.ndarray
    t: int

    def __post_init__(self):
        object.__setattr__(self, "z", np.asarray(self.z, dtype=float))
        if self.z.ndim != 1 or self.z.shape[0] < 1:
            raise DimensionMismatch(f"latent must be a 1-d vector, got {self.z.shape}")
        if self.t < 0:
            raise TimestepOutOfRange(f"t = {self.t} must be >= 0")


@dataclass(frozen=True)
class GaussianMixturePrior:
    """Diagonal Gaussian mixture over clean latents, one component per concept."""

    weights: np.ndarray    # (J,) positive, summing to 1
    means: np.ndarray      # (J, L)
    variances: np.ndarray  # (J, L) positive diagonals

    def __post_init__(self):
        object.__setattr__(self, "weights", np.asarray(self.weights, dtype=float))
        object.__setattr__(self, "means", np.asarray(self.means, dtype=float))
        object.__setattr__(self, "variances", np.asarray(self.variances, dtype=float))
        if self.means.ndim != 2 or self.weights.ndim != 1:
            raise DimensionMismatch("means must be (J, L) and weights (J,)")
        if self.variances.shape != self.means.shape:
            raise DimensionMismatch("variances must match means shape")
        if self.weights.shape[0] != self.means.shape[0]:
            raise DimensionMismatch("one weight per component required")
        if np.any(self.weights <= 0):
            raise InvalidRange("mixture weights must be positive")
        if abs(float(self.weights.sum()) - 1.0) > 1e-9:
            raise InvalidRange(f"weights must sum to 1, got {self.weights.sum()!r}")
        if np.any(self.variances <= 0):
            raise InvalidRange("variances must be positive")

    @property
    def num_components(self) -> int:
        return self.means.shape[0]

    @property
    def latent_dim(self) -> int:
        return self.means.shape[1]

    def sample(self, component: int, rng: np.random.Generator) -> np.ndarray:
        """Draw one clean latent from the given component."""
        if not 0 <= component < self.num_components:
            raise UnknownConcept(f"component {component} of {self.num_components}")
        return self.means[component] + np.sqrt(self.variances[component]) * rng.standard_normal(
            self.latent_dim
        )


class OracleDenoiser:
    """Exact Bayes-posterior noise predictor for a Gaussian-mixture prior.

    Conditional on component c, the per-coordinate posterior mean is

        E[z0 | z_t] = mu_c + sqrt(abar_t) var_c / (abar_t var_c + 1 - abar_t)
                      * (z_t - sqrt(abar_t) mu_c)

    and unconditionally the per-component posteriors are mixed with
    responsibilities proportional to w_c * N(z_t; sqrt(abar_t) mu_c,
    abar_t var_c + 1 - abar_t), computed in log space.
    """

    def __init__(self, prior: GaussianMixturePrior, schedule: NoiseSchedule):
        self.prior = prior
        self.schedule = schedule

    def _check_condition(self, condition):
        if condition is not None and not 0 <= condition < self.prior.num_components:
            raise UnknownConcept(
                f"condition {condition} of {self.prior.num_components} components"
            )

    def _log_responsibilities(self, z: np.ndarray, ab: float) -> np.ndarray:
        # z: (..., L) -> log r: (..., J)
        s = ab * self.prior.variances + (1.0 - ab)          # (J, L)
        diff = z[..., None, :] - np.sqrt(ab) * self.prior.means  # (..., J, L)
        log_pdf = -0.5 * np.sum(diff**2 / s + np.log(2.0 * np.pi * s), axis=-1)
        log_r = np.log(self.prior.weights) + log_pdf
        return log_r - logsumexp(log_r, axis=-1, keepdims=True)

    def posterior_mean(self, z, t: int, condition=None) -> np.ndarray:
        """E[z0 | z_t], conditional on a component or mixed over all of them."""
        self._check_condition(condition)
        z = np.asarray(z, dtype=float)
        ab = self.schedule.alpha_bar(t)
        if t == 0:
            return z
        if condition is not None:
            mu = self.prior.means[condition]
            var = self.prior.variances[condition]
            s = ab * var + (1.0 - ab)
            return mu + np.sqrt(ab) * var / s * (z - np.sqrt(ab) * mu)
        s = ab * self.prior.variances + (1.0 - ab)                    # (J, L)
        gain = np.sqrt(ab) * self.prior.variances / s                 # (J, L)
        diff = z[..., None, :] - np.sqrt(ab) * self.prior.means       # (..., J, L)
        per_component = self.prior.means + gain * diff                # (..., J, L)
        r = np.exp(self._log_responsibilities(z, ab))                 # (..., J)
        return np.sum(r[..., None] * per_component, axis=-2)

    def eps(self, z, t: int, condition=None) -> np.ndarray:
        """Implied noise prediction (z_t - sqrt(abar_t) E[z0|z_t]) / sqrt(1 - abar_t)."""
        if t < 1:
            raise TimestepOutOfRange(f"eps prediction needs t >= 1, got {t}")
        z = np.asarray(z, dtype=float)
        ab = self.schedule.alpha_bar(t)
        m = self.posterior_mean(z, t, condition)
        return (z - np.sqrt(ab) * m) / np.sqrt(1.0 - ab)

    def eps_vjp(self, z, t: int, u, condition=None) -> np.ndarray:
        """Vector-Jacobian product u -> (d eps / d z_t)^T u at a single latent.

        Used when guidance differentiates through the denoiser instead of
        detaching it. The Jacobian of the conditional posterior mean is
        diagonal; the unconditional one adds rank-one terms from the
        responsibilities.
        """
        if t < 1:
            raise TimestepOutOfRange(f"eps prediction needs t >= 1, got {t}")
        self._check_condition(condition)
        z = np.asarray(z, dtype=float)
        u = np.asarray(u, dtype=float)
        _check_same_shape(z, u, "z vs u")
        ab = self.schedule.alpha_bar(t)
        if condition is not None:
            var = self.prior.variances[condition]
            s = ab * var + (1.0 - ab)
            jm_u = np.sqrt(ab) * var / s * u
        else:
            s = ab * self.prior.variances + (1.0 - ab)                 # (J, L)
            gain = np.sqrt(ab) * self.prior.variances / s
            diff = z[None, :] - np.sqrt(ab) * self.prior.means         # (J, L)
            per_component = self.prior.means + gain * diff             # (J, L)
            r = np.exp(self._log_responsibilities(z, ab))              # (J,)
            d = -diff / s                                              # grad of log pdf
            d_bar = r @ d
            grad_r = r[:, None] * (d - d_bar)                          # (J, L)
            # (dm/dz)^T u = sum_c r_c gain_c u + sum_c (m_c . u) grad_r_c
            jm_u = (r[:, None] * gain * u[None, :]).sum(axis=0)
            jm_u = jm_u + (per_component @ u) @ grad_r
        return (u - np.sqrt(ab) * jm_u) / np.sqrt(1.0 - ab)
