from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from maxcut_rl.graph import cut_value, generate_er
from maxcut_rl.rounding import (
    GW_ALPHA,
    cut_of_hyperplane,
    cut_of_hyperplanes,
    expected_cut_analytic,
    pgw,
    round_embedding,
    sample_uniform_sphere,
)
from maxcut_rl.sdp import Embedding, sdp_objective, solve_sdp


def random_embedding(n, d, seed):
    return Embedding(np.random.default_rng(seed).standard_normal((n, d)))


class TestSphere:
    def test_unit_norm(self):
        rng = np.random.default_rng(0)
        for d in (1, 2, 7, 50):
            assert abs(np.linalg.norm(sample_uniform_sphere(d, rng)) - 1) <= 1e-9
        batch = sample_uniform_sphere(5, rng, size=100)
        np.testing.assert_allclose(np.linalg.norm(batch, axis=1), 1.0, atol=1e-9)

    def test_d1_is_sign(self):
        draws = sample_uniform_sphere(1, np.random.default_rng(1), size=200)
        assert set(draws.ravel().tolist()) == {1.0, -1.0}

    def test_mean_near_zero(self):
        draws = sample_uniform_sphere(3, np.random.default_rng(2), size=100_000)
        assert np.all(np.abs(draws.mean(axis=0)) < 0.02)
        # second moment of a uniform point on S^2 is I/3
        np.testing.assert_allclose(draws.T @ draws / len(draws), np.eye(3) / 3, atol=0.01)

    def test_seeded(self):
        a = sample_uniform_sphere(4, 9, size=3)
        b = sample_uniform_sphere(4, 9, size=3)
        np.testing.assert_array_equal(a, b)

    def test_bad_dim(self):
        with pytest.raises(ValueError):
            sample_uniform_sphere(0, 1)


class TestRound:
    def test_k2(self, k2_antipodal):
        assert round_embedding(k2_antipodal, [1.0, 0.0]).tolist() == [1, -1]

    def test_tie_goes_positive(self, k2_antipodal):
        assert round_embedding(k2_antipodal, [0.0, 1.0]).tolist() == [1, 1]

    def test_sign_symmetry(self):
        e = random_embedding(20, 3, 4)
        g = generate_er(20, 0.3, 4)
        h = sample_uniform_sphere(3, 5)
        x, y = round_embedding(e, h), round_embedding(e, -h)
        np.testing.assert_array_equal(x, -y)
        assert cut_value(g, x) == cut_value(g, y)

    def test_dim_mismatch(self, k2_antipodal):
        with pytest.raises(ValueError):
            round_embedding(k2_antipodal, [1.0, 0.0, 0.0])


class TestCutOfHyperplane:
    def test_k2(self, k2, k2_antipodal):
        assert cut_of_hyperplane(k2, k2_antipodal, [1.0, 0.0]) == 1
        assert cut_of_hyperplane(k2, k2_antipodal, [0.0, 1.0]) == 0

    def test_k3_planar_always_two(self, k3, k3_planar):
        planes = sample_uniform_sphere(2, np.random.default_rng(3), size=2000)
        assert set(cut_of_hyperplanes(k3, k3_planar, planes).tolist()) == {2}

    @settings(max_examples=50, deadline=None)
    @given(st.integers(2, 25), st.integers(1, 6), st.integers(0, 2**32 - 1))
    def test_path_equivalence(self, n, d, seed):
        g = generate_er(n, 0.4, seed)
        e = random_embedding(n, d, seed)
        for s in sample_uniform_sphere(d, seed + 1, size=5):
            assert cut_of_hyperplane(g, e, s) == cut_value(g, round_embedding(e, s))
            assert cut_of_hyperplane(g, e, s) == cut_of_hyperplane(g, e, -s)

    def test_path_equivalence_with_ties(self):
        # vectors on coordinate axes tie exactly on axis-aligned normals
        e = Embedding(np.array([[1.0, 0.0], [0.0, 1.0], [-1.0, 0.0], [0.0, -1.0]]))
        g = generate_er(4, 1.0, 0)
        for s in ([1.0, 0.0], [0.0, 1.0], [-1.0, 0.0], [0.0, -1.0]):
            assert cut_of_hyperplane(g, e, s) == cut_value(g, round_embedding(e, s))

    def test_weighted(self):
        from maxcut_rl.graph import Graph

        g = Graph(3, ((1, 2, 5), (2, 3, -2), (1, 3, 1)))
        e = random_embedding(3, 2, 1)
        for s in sample_uniform_sphere(2, 2, size=20):
            assert cut_of_hyperplane(g, e, s) == cut_value(g, round_embedding(e, s))


class TestExpectedCut:
    def test_values(self, k2, k2_antipodal, k3, k3_planar):
        assert expected_cut_analytic(k2, k2_antipodal) == pytest.approx(1.0)
        assert expected_cut_analytic(k3, k3_planar) == pytest.approx(2.0)
        g = generate_er(6, 0.7, 1)
        assert expected_cut_analytic(g, Embedding(np.ones((6, 3)))) == 0.0

    def test_matches_angular_quadrature_d2(self):
        # in d=2 the normal is (cos t, sin t), t ~ U[0, 2pi): average the cut on a fine grid
        g = generate_er(15, 0.4, 8)
        e = random_embedding(15, 2, 8)
        t = (np.arange(200_000) + 0.5) * (2 * math.pi / 200_000)
        planes = np.stack([np.cos(t), np.sin(t)], axis=1)
        quad = float(cut_of_hyperplanes(g, e, planes).mean())
        assert expected_cut_analytic(g, e) == pytest.approx(quad, abs=1e-3)

    @pytest.mark.parametrize("seed", range(10))
    def test_gw_ratio_random_feasible(self, seed):
        n = 10 + 5 * seed
        g = generate_er(n, 0.3, seed)
        e = random_embedding(n, 1 + seed % 5, seed)
        assert expected_cut_analytic(g, e) >= GW_ALPHA * sdp_objective(g, e)

    def test_pointwise_inequality(self):
        t = np.linspace(-1, 1, 200_001)
        assert np.all(np.arccos(t) / np.pi >= GW_ALPHA * (1 - t) / 2)


class TestPgw:
    def test_rank_one_embedding(self):
        g = generate_er(12, 0.5, 2)
        a = np.where(np.random.default_rng(0).random(12) < 0.5, 1, -1)
        e = Embedding(np.stack([a, np.zeros(12)], axis=1).astype(float))
        res = pgw(g, e, 64, 1)
        want = cut_value(g, a)
        assert res.avg_cut == want and res.max_cut == want

    def test_b1(self):
        g = generate_er(20, 0.3, 1)
        e, _ = solve_sdp(g, seed=1)
        res = pgw(g, e, 1, 3)
        assert res.avg_cut == res.max_cut

    def test_result_invariants(self):
        g = generate_er(40, 0.3, 2)
        e, _ = solve_sdp(g, seed=2)
        res = pgw(g, e, 256, 123)
        assert res.avg_cut <= res.max_cut
        assert res.max_cut >= math.ceil(res.avg_cut)
        assert res.max_cut == cut_value(g, res.incumbent)
        assert res.samples == 256 and len(res.cuts) == 256
        assert res.avg_cut == pytest.approx(res.cuts.mean())

    def test_monte_carlo_consistency(self):
        g = generate_er(60, 0.2, 3)
        e, _ = solve_sdp(g, seed=3)
        for seed in range(5):
            res = pgw(g, e, 256, seed)
            sigma = res.cuts.std(ddof=1)
            assert abs(res.avg_cut - expected_cut_analytic(g, e)) <= 4 * sigma / 16

    def test_seeded(self):
        g = generate_er(30, 0.3, 2)
        e, _ = solve_sdp(g, seed=2)
        assert pgw(g, e, 32, 5).avg_cut == pgw(g, e, 32, 5).avg_cut

    def test_bad_b(self, k2, k2_antipodal):
        with pytest.raises(ValueError):
            pgw(k2, k2_antipodal, 0, 1)
