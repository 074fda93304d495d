import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from dsbfsm.errors import DomainError
from dsbfsm.stage1 import BandPerformance
from dsbfsm.stage2 import (
    BandSimilarityParams,
    band_score,
    band_similarity_matrix,
    cluster_bands,
    correlation_matrix,
    pearson_correlation,
    select_bands,
)


def perfs(rows):
    return [BandPerformance(np.asarray(r, dtype=float), float(np.mean(r))) for r in rows]


profiles_strategy = st.integers(2, 9).flatmap(
    lambda n: st.lists(
        st.lists(st.floats(0.05, 0.9, allow_nan=False), min_size=3, max_size=3),
        min_size=n,
        max_size=n,
    )
)


class TestCorrelation:
    def test_identical(self):
        assert pearson_correlation([0.1, 0.5, 0.3], [0.1, 0.5, 0.3]) == pytest.approx(1.0, abs=1e-15)

    def test_negated(self):
        assert pearson_correlation([0.1, 0.5, 0.3], [-0.1, -0.5, -0.3]) == pytest.approx(-1.0, abs=1e-15)

    def test_constant(self):
        assert pearson_correlation([0.4, 0.4, 0.4], [0.1, 0.5, 0.3]) == 0.0

    def test_length_mismatch(self):
        with pytest.raises(DomainError):
            pearson_correlation([1.0, 2.0], [1.0, 2.0, 3.0])

    @given(profiles_strategy)
    def test_matrix_matches_pairwise(self, rows):
        p = np.array(rows)
        corr = correlation_matrix(p)
        for i in range(len(rows)):
            for j in range(len(rows)):
                assert corr[i, j] == pytest.approx(pearson_correlation(p[i], p[j]), abs=1e-12)


class TestBandSimilarity:
    def test_identical_profiles(self):
        w = band_similarity_matrix(perfs([[0.2, 0.6, 0.4]] * 3))
        np.testing.assert_allclose(w, np.ones((3, 3)) - np.eye(3), atol=1e-15)

    def test_offset_profile_hand_value(self):
        # corr = 1 and mean |diff| = 0.1
        w = band_similarity_matrix(perfs([[0.2, 0.6, 0.4], [0.3, 0.7, 0.5]]), BandSimilarityParams(200, 30))
        assert w[0, 1] == pytest.approx(math.exp(-3.0), abs=1e-12)
        assert w[0, 1] == pytest.approx(0.0498, abs=1e-4)

    def test_uncorrelated_profiles_vanish(self):
        # second profile is constant, so corr = 0 and the distance term is exp(-30 * 0)
        w = band_similarity_matrix(perfs([[0.3, 0.5, 0.4], [0.4, 0.4, 0.4]]))
        assert w[0, 1] == pytest.approx(math.exp(-200.0) * math.exp(-30 * 0.2 / 3), rel=1e-12)

    def test_param_validation(self):
        with pytest.raises(DomainError):
            BandSimilarityParams(c_b=-1)
        with pytest.raises(DomainError):
            BandSimilarityParams(t_b=0)

    @given(profiles_strategy)
    def test_structure(self, rows):
        w = band_similarity_matrix(perfs(rows))
        np.testing.assert_array_equal(w, w.T)
        assert np.all(np.diag(w) == 0)
        off = w[~np.eye(len(rows), dtype=bool)]
        assert np.all((off >= 0) & (off <= 1))

    @given(profiles_strategy, st.floats(-0.05, 0.09))
    def test_shift_invariance(self, rows, shift):
        p = BandSimilarityParams(c_b=2.0, c_v=5.0)
        a = band_similarity_matrix(perfs(rows), p)
        b = band_similarity_matrix(perfs(np.array(rows) + shift), p)
        np.testing.assert_allclose(a, b, atol=1e-12)


class TestClusterBands:
    def test_two_groups(self):
        rows = [[0.9, 0.2, 0.5]] * 3 + [[0.1, 0.8, 0.3]] * 2
        clusters = cluster_bands(perfs(rows))
        assert sorted(clusters) == [[0, 1, 2], [3, 4]]

    def test_single_band(self):
        assert cluster_bands(perfs([[0.5, 0.7]])) == [[0]]

    def test_all_identical(self):
        assert cluster_bands(perfs([[0.2, 0.4, 0.9]] * 6)) == [list(range(6))]


class TestBandScore:
    def test_singleton_is_zero(self):
        w = band_similarity_matrix(perfs([[0.2, 0.6], [0.6, 0.2]]))
        assert band_score(0, [0], perfs([[0.2, 0.6], [0.6, 0.2]]), w) == 0.0

    def test_zero_performance(self):
        p = perfs([[0.0, 0.0], [0.5, 0.5]])
        assert band_score(0, [0, 1], p, np.array([[0.0, 0.7], [0.7, 0.0]])) == 0.0

    def test_hand_value(self):
        p = perfs([[0.7, 0.9], [0.5, 0.5]])
        w = np.array([[0.0, 0.5], [0.5, 0.0]])
        assert band_score(0, [0, 1], p, w) == pytest.approx(0.4, abs=1e-15)

    def test_membership(self):
        p = perfs([[0.7, 0.9], [0.5, 0.5]])
        with pytest.raises(DomainError):
            band_score(0, [1], p, np.zeros((2, 2)))


class TestSelectBands:
    def test_dominant_band_selected(self):
        rows = [
            [0.9, 0.5, 0.7],
            [0.88, 0.52, 0.66],
            [0.92, 0.46, 0.68],
            [0.1, 0.8, 0.3],
            [0.12, 0.82, 0.31],
        ]
        res = select_bands(perfs(rows), BandSimilarityParams(c_b=5.0, c_v=5.0))
        assert sorted(res.clusters) == [[0, 1, 2], [3, 4]]
        w = res.similarity
        # band 0 leads its cluster on both factors of the score
        assert np.argmax([np.mean(r) for r in rows[:3]]) == 0
        assert np.argmax(w[:3, :3].sum(axis=1)) == 0
        assert 0 in res.selected

    def test_single_band(self):
        res = select_bands(perfs([[0.3, 0.6]]))
        assert res.selected == [0]
        assert res.eta.tolist() == [0.0]

    def test_identical_bands_lowest_index(self):
        res = select_bands(perfs([[0.3, 0.6, 0.2]] * 4))
        assert res.selected == [0]

    def test_json_schema(self):
        res = select_bands(perfs([[0.3, 0.6, 0.2]] * 2 + [[0.9, 0.1, 0.5]]))
        payload = json.loads(res.to_json({"c_b": 200}))
        assert set(payload) == {"method", "clusters", "eta", "selected", "params"}
        assert payload["params"] == {"c_b": 200}
        assert res.to_json({"c_b": 200}) == res.to_json({"c_b": 200})

    @settings(max_examples=40, deadline=None)
    @given(profiles_strategy)
    def test_invariants(self, rows):
        p = perfs(rows)
        res = select_bands(p, BandSimilarityParams(c_b=2.0, c_v=5.0))
        flat = sorted(b for c in res.clusters for b in c)
        assert flat == list(range(len(rows)))
        assert len(res.selected) == res.n_clusters
        assert np.all(res.eta >= 0)
        for members, chosen in zip(res.clusters, res.selected):
            assert chosen in members
            best = max(res.eta[m] for m in members)
            assert chosen == min(m for m in members if res.eta[m] == best)

    @settings(max_examples=40, deadline=None)
    @given(profiles_strategy, st.randoms(use_true_random=False))
    def test_permutation_equivariance(self, rows, rnd):
        n = len(rows)
        perm = list(range(n))
        rnd.shuffle(perm)
        params = BandSimilarityParams(c_b=2.0, c_v=5.0)
        a = select_bands(perfs(rows), params)
        b = select_bands(perfs([rows[k] for k in perm]), params)
        # band perm[k] of the original sits at position k of the permuted input
        mapped = sorted(sorted(perm[k] for k in c) for c in b.clusters)
        assert mapped == sorted(a.clusters)
        for k in range(n):
            assert b.eta[k] == pytest.approx(a.eta[perm[k]], abs=1e-12)
