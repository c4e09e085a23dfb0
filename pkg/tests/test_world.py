import json

import numpy as np
import pytest

from helpers import fd_grad, rel_err
from mdg.errors import InvalidDims, InvariantViolation, UnknownConcept, ZeroVector
from mdg.geometry import gram
from mdg.world import SyntheticWorld, make_world


class TestConstruction:
    def test_deterministic_bit_for_bit(self):
        a = make_world(seed=42)
        b = make_world(seed=42)
        assert a.to_dict() == b.to_dict()
        assert a.world_hash() == b.world_hash()

    def test_different_seeds_differ(self):
        assert make_world(seed=1).world_hash() != make_world(seed=2).world_hash()

    @pytest.mark.parametrize("seed", [7, 20, 42])
    def test_invariants(self, seed):
        world = make_world(seed=seed)
        for c in range(world.concepts):
            e = world.encode_audio(world.prior.means[c])
            assert abs(np.linalg.norm(e) - 1.0) < 1e-9
            assert float(e @ world.anchors[c]) >= 0.99
        for i in range(world.concepts):
            assert abs(np.linalg.norm(world.anchors[i]) - 1.0) < 1e-9
            for j in range(i + 1, world.concepts):
                assert float(world.anchors[i] @ world.anchors[j]) <= 0.5
        assert abs(world.prior.weights.sum() - 1.0) < 1e-9

    def test_zero_noise_conditions_hit_anchor(self):
        world = make_world(concepts=2, dim=8, latent_dim=8, sigma_mod=0.0, seed=1)
        ev, ep = world.emit_condition(0, seed=123)
        np.testing.assert_allclose(ev, world.anchors[0], atol=1e-14)
        np.testing.assert_allclose(ep, world.anchors[0], atol=1e-14)

    def test_anchor_cap_unreachable(self):
        with pytest.raises(InvariantViolation):
            make_world(concepts=100, dim=3, latent_dim=100, seed=0)

    def test_encode_target_unreachable(self):
        # J targets cannot live in an L-dimensional encoder range when L < J
        with pytest.raises(InvariantViolation):
            make_world(concepts=8, dim=16, latent_dim=4, seed=0)

    @pytest.mark.parametrize(
        "kwargs",
        [
            dict(dim=2),
            dict(latent_dim=1),
            dict(concepts=1),
            dict(sigma_mod=-0.1),
        ],
    )
    def test_invalid_dims(self, kwargs):
        with pytest.raises(InvalidDims):
            make_world(**kwargs)


class TestEmitCondition:
    def test_seeded_determinism(self, default_world):
        a = default_world.emit_condition(3, seed=9)
        b = default_world.emit_condition(3, seed=9)
        np.testing.assert_array_equal(a[0], b[0])
        np.testing.assert_array_equal(a[1], b[1])

    def test_different_seeds_differ(self, default_world):
        a = default_world.emit_condition(3, seed=9)
        b = default_world.emit_condition(3, seed=10)
        assert not np.array_equal(a[0], b[0])

    def test_modalities_independent(self, default_world):
        ev, ep = default_world.emit_condition(0, seed=5)
        assert not np.array_equal(ev, ep)

    def test_concentration_quantile(self):
        # 99% of draws at sigma_mod = 0.05 stay within cos >= 1 - 2*sigma
        world = make_world(seed=3)
        cos = []
        for k in range(1000):
            ev, _ = world.emit_condition(1, seed=[77, k])
            cos.append(float(ev @ world.anchors[1]))
        assert np.quantile(cos, 0.01) >= 1.0 - 2 * world.sigma_mod

    def test_unknown_concept(self, default_world):
        with pytest.raises(UnknownConcept):
            default_world.emit_condition(default_world.concepts, seed=0)


class TestEncodeAudio:
    def test_means_encode_onto_anchors(self, default_world):
        for c in range(default_world.concepts):
            e = default_world.encode_audio(default_world.prior.means[c])
            assert float(e @ default_world.anchors[c]) >= 0.99

    def test_vjp_matches_fd(self, default_world):
        rng = np.random.default_rng(4)
        for _ in range(5):
            z0 = rng.standard_normal(default_world.latent_dim)
            u = rng.standard_normal(default_world.dim)
            analytic = default_world.encode_audio_vjp(z0, u)
            fd = fd_grad(lambda z: float(u @ default_world.encode_audio(z)), z0, h=1e-6)
            assert rel_err(analytic, fd) <= 1e-5

    def test_scale_invariance_without_bias(self):
        world = make_world(seed=5, bias_scale=0.0)
        rng = np.random.default_rng(6)
        z0 = rng.standard_normal(world.latent_dim)
        np.testing.assert_allclose(
            world.encode_audio(2.0 * z0), world.encode_audio(z0), atol=1e-12
        )

    def test_zero_output_raises(self):
        world = make_world(seed=5, bias_scale=0.0)
        with pytest.raises(ZeroVector):
            world.encode_audio(np.zeros(world.latent_dim))


class TestSerialization:
    def test_round_trip(self, tmp_path, default_world):
        path = tmp_path / "world.json"
        default_world.save(path)
        loaded = SyntheticWorld.load(path)
        assert loaded.to_dict() == default_world.to_dict()
        assert loaded.world_hash() == default_world.world_hash()
        rng = np.random.default_rng(7)
        z0 = rng.standard_normal(default_world.latent_dim)
        np.testing.assert_array_equal(
            loaded.encode_audio(z0), default_world.encode_audio(z0)
        )

    def test_file_is_valid_json(self, tmp_path, default_world):
        path = tmp_path / "world.json"
        default_world.save(path)
        with open(path) as fh:
            doc = json.load(fh)
        assert doc["concepts"] == default_world.concepts
        assert len(doc["anchors"]) == default_world.concepts


class TestEndToEndGeometry:
    def test_matched_triplet_near_degenerate(self):
        world = make_world(seed=8, sigma_mod=0.0)
        for c in range(world.concepts):
            anchor = world.anchors[c]
            ea = world.encode_audio(world.prior.means[c])
            assert gram(anchor, ea, anchor).volume <= 0.15

    def test_cross_concept_volumes_exceed_matched(self, default_world):
        world = default_world
        wins = 0
        total = 0
        for c in range(world.concepts):
            ev, ep = world.emit_condition(c, seed=[11, c])
            matched = gram(ev, world.encode_audio(world.prior.means[c]), ep).volume
            for other in range(world.concepts):
                if other == c:
                    continue
                total += 1
                mismatched = gram(
                    ev, world.encode_audio(world.prior.means[other]), ep
                ).volume
                wins += int(mismatched > matched)
        assert wins / total >= 0.95


class TestWorldSummary:
    def test_zero_noise_summary_values(self):
        from mdg.runner import world_summary

        world = make_world(seed=8, sigma_mod=0.0)
        summary = world_summary(world)
        assert summary["max_matched_volume"] <= 0.15
        assert summary["min_construction_cos"] >= 0.99
        assert summary["max_pairwise_anchor_cos"] <= 0.5
        assert len(summary["matched_volumes"]) == world.concepts
