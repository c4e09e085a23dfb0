"""Fast invariant suites runnable from the command line (`mdg selftest`).

Each check is a cut-down version of the corresponding property test:
seconds, not minutes, and entirely deterministic.
"""

from __future__ import annotations

import numpy as np

from .contrastive import TripletBatch, loss_av2t, loss_t2av
from .diffusion import OracleDenoiser, ddim_timesteps, forward_sample, make_schedule, predict_clean
from .geometry import AUDIO, gram, normalize, volume_grad
from .metrics import frechet_distance, frechet_distance_gaussian
from .world import make_world


def _random_unit_rows(rng, n, d):
    x = rng.standard_normal((n, d))
    return x / np.linalg.norm(x, axis=1, keepdims=True)


def check_geometry_bounds() -> bool:
    rng = np.random.default_rng(11)
    for _ in range(500):
        ev, ea, ep = _random_unit_rows(rng, 3, 16)
        v = gram(ev, ea, ep).volume
        if not 0.0 <= v <= 1.0:
            return False
    return True


def check_geometry_degeneracy() -> bool:
    rng = np.random.default_rng(12)
    for _ in range(100):
        ev, ea = _random_unit_rows(rng, 2, 16)
        coeffs = rng.standard_normal(2)
        ep = normalize(coeffs[0] * ev + coeffs[1] * ea)
        if gram(ev, ea, ep).volume > 1e-7:
            return False
    return True


def check_geometry_gradient() -> bool:
    rng = np.random.default_rng(13)
    h = 1e-5
    checked = 0
    while checked < 10:
        ev, ea, ep = _random_unit_rows(rng, 3, 16)
        g = gram(ev, ea, ep)
        if g.volume <= 0.05:
            continue
        checked += 1
        grad = volume_grad(g, AUDIO)
        fd = np.zeros_like(ea)
        for k in range(ea.shape[0]):
            delta = np.zeros_like(ea)
            delta[k] = h
            vp = gram(ev, ea + delta, ep).volume
            vm = gram(ev, ea - delta, ep).volume
            fd[k] = (vp - vm) / (2 * h)
        rel = np.linalg.norm(grad - fd) / max(np.linalg.norm(fd), 1e-8)
        if rel > 1e-4:
            return False
    return True


def check_diffusion_round_trip() -> bool:
    schedule = make_schedule(64)
    rng = np.random.default_rng(14)
    z0 = rng.standard_normal(8)
    for t in range(1, 65):
        eps = rng.standard_normal(8)
        zt = forward_sample(z0, t, eps, schedule)
        if np.max(np.abs(predict_clean(zt, t, eps, schedule) - z0)) > 1e-10:
            return False
    return True


def check_schedule_monotone() -> bool:
    schedule = make_schedule()
    ab = schedule.alpha_bars
    return bool(np.all(np.diff(ab) < 0) and ab[-1] < 0.01)


def check_oracle_single_gaussian() -> bool:
    schedule = make_schedule(100)
    prior_mean = np.zeros((1, 8))
    prior_var = np.ones((1, 8))
    from .diffusion import GaussianMixturePrior

    prior = GaussianMixturePrior(np.array([1.0]), prior_mean, prior_var)
    den = OracleDenoiser(prior, schedule)
    rng = np.random.default_rng(15)
    z = rng.standard_normal(8)
    for t in (1, 25, 50, 100):
        ab = schedule.alpha_bar(t)
        expected = np.sqrt(1.0 - ab) * z
        if np.max(np.abs(den.eps(z, t) - expected)) > 1e-9:
            return False
    return True


def check_contrastive_uniform() -> bool:
    e = normalize(np.ones(8))
    stack = np.tile(e, (4, 1))
    batch = TripletBatch(video=stack, audio=stack, text=stack, temperature=0.07)
    target = np.log(4.0)
    return (
        abs(loss_av2t(batch) - target) < 1e-9 and abs(loss_t2av(batch) - target) < 1e-9
    )


def check_frechet() -> bool:
    rng = np.random.default_rng(16)
    a = rng.standard_normal((64, 6))
    if frechet_distance(a, a) > 1e-6:
        return False
    n = 6
    d = frechet_distance_gaussian(np.zeros(n), np.eye(n), np.zeros(n), 4 * np.eye(n))
    return abs(d - n) < 1e-6


def check_world_invariants() -> bool:
    world = make_world(concepts=8, dim=16, latent_dim=8, sigma_mod=0.05, seed=7)
    for c in range(world.concepts):
        if float(world.encode_audio(world.prior.means[c]) @ world.anchors[c]) < 0.99:
            return False
    for i in range(world.concepts):
        for j in range(i + 1, world.concepts):
            if float(world.anchors[i] @ world.anchors[j]) > 0.5:
                return False
    return True


def check_ddim_grid() -> bool:
    schedule = make_schedule()
    ts = ddim_timesteps(schedule, 30)
    return ts[0] == 1000 and ts[-1] == 0 and len(ts) == 31


CHECKS = [
    ("geometry.volume_bounds", check_geometry_bounds),
    ("geometry.degeneracy", check_geometry_degeneracy),
    ("geometry.gradient_vs_fd", check_geometry_gradient),
    ("diffusion.round_trip", check_diffusion_round_trip),
    ("diffusion.schedule_monotone", check_schedule_monotone),
    ("diffusion.oracle_single_gaussian", check_oracle_single_gaussian),
    ("diffusion.ddim_grid", check_ddim_grid),
    ("contrastive.uniform_batch", check_contrastive_uniform),
    ("metrics.frechet", check_frechet),
    ("world.construction", check_world_invariants),
]


def run_selftest(print_fn=print) -> bool:
    ok = True
    for name, fn in CHECKS:
        passed = False
        try:
            passed = bool(fn())
        except Exception as exc:  # a crash is a failure, not an abort
            print_fn(f"[FAIL] {name}: {type(exc).__name__}: {exc}")
            ok = False
            continue
        print_fn(f"[{'ok' if passed else 'FAIL'}] {name}")
        ok = ok and passed
    return ok
