import math

import numpy as np
import pytest

from helpers import random_orthogonal, random_unit_rows
from mdg.errors import (
    DimensionMismatch,
    EmptyInput,
    NonFiniteInput,
    TooFewSamples,
    UnknownConcept,
)
from mdg.geometry import gram, normalize
from mdg.metrics import (
    frechet_distance,
    frechet_distance_gaussian,
    frechet_report,
    retrieval_accuracy,
    semantic_report,
    sign_test_pvalue,
)
from mdg.world import make_world


def triplet_with_cosines(cos_va, cos_vp, cos_ap):
    """Three unit vectors in R^3 with prescribed pairwise cosines, via the
    Cholesky factor of their Gram matrix (columns ordered v, a, p)."""
    G = np.array(
        [
            [1.0, cos_va, cos_vp],
            [cos_va, 1.0, cos_ap],
            [cos_vp, cos_ap, 1.0],
        ]
    )
    L = np.linalg.cholesky(G)
    return L[0], L[1], L[2]


class TestSemanticReport:
    def test_identical_triplets_all_zero(self):
        e = normalize([1.0, 2.0, 3.0])
        report = semantic_report([(e, e, e)] * 3)
        assert report.num_samples == 3
        for field in (report.v, report.dcos_tv, report.dcos_ta, report.dcos_va):
            np.testing.assert_allclose(field, 0.0, atol=1e-7)
        np.testing.assert_allclose(report.dcos_total, 0.0, atol=1e-7)

    def test_orthonormal_triplets(self):
        e = np.eye(3)
        report = semantic_report([(e[0], e[1], e[2])])
        assert abs(report.v[0] - 1.0) < 1e-12
        for field in (report.dcos_tv, report.dcos_ta, report.dcos_va):
            assert abs(field[0] - 1.0) < 1e-12
        assert abs(report.dcos_total[0] - 3.0) < 1e-12

    def test_reported_row_sums_to_published_total(self):
        # pairwise distance means (tv, ta, va) = (0.703, 0.891, 0.893)
        # must produce a total within 0.002 of the published 2.488
        ev, ea, ep = triplet_with_cosines(
            cos_va=1.0 - 0.893, cos_vp=1.0 - 0.703, cos_ap=1.0 - 0.891
        )
        report = semantic_report([(ev, ea, ep)])
        assert abs(report.dcos_tv[0] - 0.703) < 1e-9
        assert abs(report.dcos_ta[0] - 0.891) < 1e-9
        assert abs(report.dcos_va[0] - 0.893) < 1e-9
        assert abs(report.means()["dcos_total"] - 2.488) <= 0.002

    def test_total_is_sum_of_pairs(self):
        rng = np.random.default_rng(0)
        triplets = [tuple(random_unit_rows(rng, 3, 8)) for _ in range(20)]
        report = semantic_report(triplets)
        np.testing.assert_allclose(
            report.dcos_total,
            report.dcos_tv + report.dcos_ta + report.dcos_va,
            atol=1e-9,
        )

    def test_mean_v_matches_external_average(self):
        rng = np.random.default_rng(1)
        triplets = [tuple(random_unit_rows(rng, 3, 8)) for _ in range(15)]
        report = semantic_report(triplets)
        external = np.mean([gram(*t).volume for t in triplets])
        assert abs(report.means()["v"] - external) <= 1e-12

    def test_empty_input(self):
        with pytest.raises(EmptyInput):
            semantic_report([])

    def test_json_round_trip(self, tmp_path):
        rng = np.random.default_rng(2)
        report = semantic_report([tuple(random_unit_rows(rng, 3, 6)) for _ in range(4)])
        path = tmp_path / "report.json"
        report.to_json(path)
        import json

        with open(path) as fh:
            doc = json.load(fh)
        assert doc["means"]["v"] == report.means()["v"]
        assert len(doc["per_sample"]["v"]) == 4


class TestFrechet:
    def test_self_distance(self):
        rng = np.random.default_rng(3)
        a = rng.standard_normal((40, 6))
        assert frechet_distance(a, a) <= 1e-6

    def test_mean_shift_only(self):
        rng = np.random.default_rng(4)
        cov = np.cov(rng.standard_normal((50, 4)), rowvar=False)
        mu = rng.standard_normal(4)
        d = rng.standard_normal(4)
        dist = frechet_distance_gaussian(mu, cov, mu + d, cov)
        assert abs(dist - float(d @ d)) < 1e-9

    def test_scaled_isotropic_closed_form(self):
        for n in (2, 6, 16):
            dist = frechet_distance_gaussian(
                np.zeros(n), np.eye(n), np.zeros(n), 4.0 * np.eye(n)
            )
            assert abs(dist - n) < 1e-9

    def test_symmetry(self):
        rng = np.random.default_rng(5)
        a = rng.standard_normal((30, 5))
        b = rng.standard_normal((25, 5)) + 0.5
        assert abs(frechet_distance(a, b) - frechet_distance(b, a)) < 1e-8

    def test_rotation_invariance(self):
        rng = np.random.default_rng(6)
        a = rng.standard_normal((40, 5))
        b = rng.standard_normal((40, 5)) * 1.3 + 0.2
        q = random_orthogonal(rng, 5)
        assert abs(frechet_distance(a @ q.T, b @ q.T) - frechet_distance(a, b)) < 1e-6

    def test_report_fields(self):
        rng = np.random.default_rng(7)
        a = rng.standard_normal((30, 3))
        b = rng.standard_normal((30, 3))
        report = frechet_report(a, b)
        np.testing.assert_allclose(report.mean_a, a.mean(axis=0))
        np.testing.assert_allclose(report.cov_b, np.cov(b, rowvar=False))
        assert report.distance >= 0

    def test_too_few_samples(self):
        with pytest.raises(TooFewSamples):
            frechet_distance(np.zeros((1, 3)), np.zeros((5, 3)))

    def test_non_finite(self):
        bad = np.zeros((5, 3))
        bad[0, 0] = np.nan
        with pytest.raises(NonFiniteInput):
            frechet_distance(bad, np.zeros((5, 3)))

    def test_dimension_mismatch(self):
        rng = np.random.default_rng(8)
        with pytest.raises(DimensionMismatch):
            frechet_distance(rng.standard_normal((5, 3)), rng.standard_normal((5, 4)))


class TestRetrieval:
    def test_exact_anchors(self, default_world):
        items = [(default_world.anchors[c], c) for c in range(default_world.concepts)]
        assert retrieval_accuracy(default_world, items) == 1.0

    def test_wrong_anchors(self, default_world):
        J = default_world.concepts
        items = [(default_world.anchors[(c + 1) % J], c) for c in range(J)]
        assert retrieval_accuracy(default_world, items) == 0.0

    def test_random_embeddings_near_chance(self, default_world):
        rng = np.random.default_rng(9)
        items = [
            (e, int(rng.integers(default_world.concepts)))
            for e in random_unit_rows(rng, 10_000, default_world.dim)
        ]
        acc = retrieval_accuracy(default_world, items)
        assert abs(acc - 1.0 / default_world.concepts) <= 0.02

    def test_empty(self, default_world):
        with pytest.raises(EmptyInput):
            retrieval_accuracy(default_world, [])

    def test_unknown_concept(self, default_world):
        with pytest.raises(UnknownConcept):
            retrieval_accuracy(default_world, [(default_world.anchors[0], 99)])


class TestSignTest:
    def test_all_ties_give_one(self):
        assert sign_test_pvalue(np.zeros(10)) == 1.0

    def test_exact_small_case(self):
        # three negative deltas: one-sided p = (1/2)^3
        assert abs(sign_test_pvalue([-1.0, -0.5, -2.0]) - 0.125) < 1e-12

    def test_strong_improvement_is_significant(self):
        assert sign_test_pvalue(-np.ones(50)) < 1e-12

    def test_balanced_deltas_not_significant(self):
        rng = np.random.default_rng(0)  # 98 of 200 negative
        deltas = rng.standard_normal(200)
        assert sign_test_pvalue(deltas) > 0.01

    def test_ties_are_discarded(self):
        assert abs(sign_test_pvalue([-1.0, 0.0, -1.0, 0.0, -1.0]) - 0.125) < 1e-12


def test_world_with_tight_clusters_scores_zero_distance():
    # generated == ground truth distributions give a vanishing statistic
    world = make_world(seed=11)
    rng = np.random.default_rng(12)
    emb = []
    for _ in range(120):
        c = int(rng.integers(world.concepts))
        emb.append(world.encode_audio(world.prior.sample(c, rng)))
    emb = np.array(emb)
    assert frechet_distance(emb, emb) <= 1e-6
