import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mwclust.clusters import (
    ClusterScheme,
    NeighborhoodIndex,
    SchemaError,
    WeightedSample,
    build_index,
    pair_weight_sums,
)


def two_way(g, h):
    return ClusterScheme.from_labels(g, h)


class TestClusterScheme:
    def test_canonicalizes_arbitrary_labels(self):
        scheme = ClusterScheme.from_labels(["b", "a", "b"], [10, 10, 3])
        assert scheme.n == 3
        g, h = scheme.labels
        # dense 0-based ids; same partition as the input labels
        assert sorted(set(g.tolist())) == [0, 1]
        assert g[0] == g[2] != g[1]
        assert h[0] == h[1] != h[2]

    def test_drops_empty_label_values(self):
        scheme = ClusterScheme.from_labels([0, 5, 5], [1, 1, 2])
        assert scheme.n_clusters == (2, 2)

    def test_rejects_length_mismatch(self):
        with pytest.raises(SchemaError):
            ClusterScheme.from_labels([0, 1], [0, 1, 2])

    def test_rejects_empty(self):
        with pytest.raises(SchemaError):
            ClusterScheme.from_labels([], [])

    def test_default_dim_names(self):
        scheme = ClusterScheme.from_labels([0, 1], [0, 1])
        assert scheme.dims == ("G", "H")


class TestWeightedSample:
    def test_promotes_vector_to_column(self):
        s = WeightedSample(W=np.arange(3.0), omega=np.ones(3))
        assert s.W.shape == (3, 1)

    def test_rejects_nonfinite(self):
        with pytest.raises(SchemaError):
            WeightedSample(W=np.array([1.0, np.nan]), omega=np.ones(2))

    def test_rejects_weight_mismatch(self):
        with pytest.raises(SchemaError):
            WeightedSample(W=np.ones((3, 2)), omega=np.ones(2))


class TestNeighborhoodIndex:
    def test_neighborhood_is_union_of_clusters(self):
        # 2x2 grid, one observation per cell
        scheme = two_way([0, 0, 1, 1], [0, 1, 0, 1])
        index = build_index(scheme)
        assert index.neighborhood(0).tolist() == [0, 1, 2]
        assert index.neighborhood(3).tolist() == [1, 2, 3]

    def test_neighborhood_sizes_inclusion_exclusion(self):
        rng = np.random.default_rng(3)
        g = rng.integers(0, 4, 40)
        h = rng.integers(0, 5, 40)
        index = build_index(two_way(g, h))
        brute = np.array(
            [((g == g[i]) | (h == h[i])).sum() for i in range(40)]
        )
        np.testing.assert_array_equal(index.neighborhood_sizes(), brute)

    def test_neighborhood_brute_force_members(self):
        rng = np.random.default_rng(4)
        g = rng.integers(0, 3, 25)
        h = rng.integers(0, 6, 25)
        index = build_index(two_way(g, h))
        for i in range(25):
            expect = np.flatnonzero((g == g[i]) | (h == h[i]))
            np.testing.assert_array_equal(index.neighborhood(i), expect)

    def test_out_of_range(self):
        index = build_index(two_way([0, 1], [0, 1]))
        with pytest.raises(IndexError):
            index.neighborhood(2)

    def test_requires_two_dims(self):
        scheme = ClusterScheme.from_labels([0, 1], dims=("G",))
        with pytest.raises(SchemaError):
            NeighborhoodIndex(scheme)

    @given(st.integers(min_value=0, max_value=2**31 - 1))
    @settings(max_examples=30, deadline=None)
    def test_self_membership_and_symmetry(self, seed):
        rng = np.random.default_rng(seed)
        n = int(rng.integers(2, 30))
        g = rng.integers(0, 5, n)
        h = rng.integers(0, 5, n)
        index = build_index(two_way(g, h))
        hoods = [set(index.neighborhood(i).tolist()) for i in range(n)]
        for i in range(n):
            assert i in hoods[i]
            for j in hoods[i]:
                assert i in hoods[j]


class TestPairWeightSums:
    def test_per_cluster_squared_sums(self):
        scheme = two_way([0, 0, 1], [0, 1, 2])
        index = build_index(scheme)
        out = pair_weight_sums(index, np.array([1.0, 2.0, 3.0]), "per-cluster-L1-squared")
        np.testing.assert_allclose(out["G"], [9.0, 9.0])
        np.testing.assert_allclose(out["H"], [1.0, 4.0, 9.0])

    def test_cross_pair_abs_matches_pair_enumeration(self):
        rng = np.random.default_rng(9)
        g = rng.integers(0, 4, 30)
        h = rng.integers(0, 4, 30)
        w = rng.normal(size=30)
        index = build_index(two_way(g, h))
        out = pair_weight_sums(index, w, "cross-pair-abs")
        for pos, dim in enumerate(("G", "H")):
            lab = (g, h)[pos]
            brute = sum(
                abs(w[i] * w[j])
                for i in range(30)
                for j in range(30)
                if lab[i] == lab[j]
            )
            assert out[dim] == pytest.approx(brute, rel=1e-12)

    def test_unknown_mode(self):
        index = build_index(two_way([0, 1], [0, 1]))
        with pytest.raises(ValueError):
            pair_weight_sums(index, np.ones(2), "nope")
