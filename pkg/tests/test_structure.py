import numpy as np
import pytest

from swrec import grouping, structure
from swrec.errors import IntegrityError

from tests.conftest import random_clusters


def clusters_from_lists(item_lists, k):
    """OverlappingClusters from explicit per-cluster item lists (equal R)."""
    m = 1 + max(i for items in item_lists for i in items)
    per_item = [[] for _ in range(m)]
    for j, items in enumerate(item_lists):
        for i in items:
            per_item[i].append(j)
    r = len(per_item[0])
    assert all(len(a) == r for a in per_item)
    assignments = np.array([sorted(a) for a in per_item], dtype=np.int32)
    return grouping.OverlappingClusters(
        k=k, assignments=assignments, centroids=np.zeros((k, 1)), inertia=0.0
    )


class TestBuildMask:
    def test_three_overlapping_clusters_nine_items(self):
        # clusters {1..7}, {3..9}, {1,2,8,9} over items 1..9 (0-based below):
        # every item sits in exactly two clusters
        lists = [
            [0, 1, 2, 3, 4, 5, 6],
            [2, 3, 4, 5, 6, 7, 8],
            [0, 1, 7, 8],
        ]
        clusters = clusters_from_lists(lists, 3)
        mask = structure.build_mask(clusters, 9)
        enc = mask.transposed()
        assert np.array_equal(enc[0].indices, np.arange(0, 7))
        assert np.array_equal(enc[1].indices, np.arange(2, 9))
        assert np.array_equal(enc[2].indices, np.array([0, 1, 7, 8]))
        assert np.array_equal(mask.neuron_degrees(), [7, 7, 4])
        assert np.array_equal(mask.row_degrees(), np.full(9, 2))

    def test_density_and_degrees_exhaustive(self):
        clusters = random_clusters(20, 8, 2, seed=0)
        mask = structure.build_mask(clusters, 20)
        assert mask.density == 2 / 8
        dense = mask.pattern.toarray()
        assert np.array_equal(dense.sum(axis=1), np.full(20, 2))
        assert dense.sum() == mask.nnz

    def test_transpose_consistency(self):
        clusters = random_clusters(15, 6, 3, seed=1)
        mask = structure.build_mask(clusters, 15)
        assert np.array_equal(
            mask.transposed().toarray(), mask.pattern.toarray().T
        )

    def test_roundtrip_assignments(self):
        clusters = random_clusters(12, 5, 2, seed=2)
        mask = structure.build_mask(clusters, 12)
        back = mask.to_assignments()
        for i in range(12):
            assert np.array_equal(np.sort(back[i]), clusters.assignments[i])

    def test_wrong_item_count(self):
        clusters = random_clusters(10, 4, 1, seed=3)
        with pytest.raises(IntegrityError):
            structure.build_mask(clusters, 11)

    def test_out_of_range_cluster_id(self):
        clusters = random_clusters(10, 4, 1, seed=4)
        clusters.assignments[0, 0] = 4
        with pytest.raises(IntegrityError):
            structure.build_mask(clusters, 10)


class TestMaskFromPattern:
    def test_arbitrary_pattern(self):
        import scipy.sparse as sp

        rng = np.random.default_rng(5)
        pattern = sp.csr_matrix((rng.random((10, 4)) < 0.3).astype(np.int8))
        mask = structure.mask_from_pattern(pattern)
        assert mask.m == 10
        assert mask.k == 4
        assert mask.nnz == pattern.nnz


class TestCountParameters:
    def test_formula(self):
        clusters = random_clusters(20, 8, 2, seed=6)
        mask = structure.build_mask(clusters, 20)
        counts = structure.count_parameters(mask)
        assert counts["weight_parameters"] == 2 * 20 * 2
        assert counts["parameters"] == 2 * 20 * 2 + 8 + 20
        assert counts["flops_per_example"] == 4 * 20 * 2

    def test_published_scale_calibration(self):
        # m=20108, R=1500: weight parameters must equal the published
        # 60.324M figure (2 m R, biases excluded)
        m, k, r = 20108, 15000, 1500
        assignments = np.tile(np.arange(r, dtype=np.int32), (m, 1))
        clusters = grouping.OverlappingClusters(
            k=k, assignments=assignments, centroids=np.zeros((k, 1)),
            inertia=0.0,
        )
        mask = structure.build_mask(clusters, m)
        counts = structure.count_parameters(mask)
        assert counts["weight_parameters"] == 60_324_000
        assert counts["flops_per_example"] == 2 * counts["weight_parameters"]

    def test_density_ratio(self):
        clusters = random_clusters(30, 10, 3, seed=7)
        mask = structure.build_mask(clusters, 30)
        assert mask.density == pytest.approx(3 / 10)
