import numpy as np
import pytest

from swrec import graph

from tests.conftest import random_interactions


class TestCooccurrence:
    def test_matches_dense_triple_loop(self):
        matrix = random_interactions(20, 8, 0.3, seed=4)
        x = np.zeros((20, 8))
        for u, row in enumerate(matrix.rows):
            x[u, row] = 1.0
        expected = np.zeros((8, 8))
        for i in range(8):
            for j in range(8):
                for u in range(20):
                    expected[i, j] += x[u, i] * x[u, j]
        got = graph.build_cooccurrence(matrix).full().toarray()
        assert np.array_equal(got, expected)

    def test_diagonal_is_popularity(self):
        matrix = random_interactions(30, 10, 0.25, seed=5)
        co = graph.build_cooccurrence(matrix)
        counts = np.zeros(10)
        for row in matrix.rows:
            counts[row] += 1
        assert np.array_equal(co.popularity, counts)

    def test_symmetry(self):
        matrix = random_interactions(25, 12, 0.3, seed=6)
        full = graph.build_cooccurrence(matrix).full()
        diff = (full - full.T).tocoo()
        assert diff.nnz == 0

    def test_upper_storage_only(self):
        matrix = random_interactions(15, 6, 0.4, seed=7)
        co = graph.build_cooccurrence(matrix)
        coo = co.upper.tocoo()
        assert np.all(coo.row <= coo.col)


class TestLaplacian:
    def test_two_item_hand_case(self):
        # Y = [[2,2],[2,2]], deg = 4 each, so every entry of the normalized
        # matrix is 2 / (sqrt(4) * sqrt(4)) = 0.5
        matrix = random_interactions(2, 2, 1.0, seed=0)
        matrix.rows = [np.array([0, 1], dtype=np.int32)] * 2
        lap = graph.build_laplacian(graph.build_cooccurrence(matrix))
        assert np.allclose(lap.matrix.toarray(), 0.5)

    def test_matches_dense_oracle(self):
        matrix = random_interactions(40, 15, 0.2, seed=8)
        co = graph.build_cooccurrence(matrix)
        y = co.full().toarray().astype(np.float64)
        deg = y.sum(axis=1)
        inv = np.zeros_like(deg)
        inv[deg > 0] = 1.0 / np.sqrt(deg[deg > 0])
        expected = inv[:, None] * y * inv[None, :]
        got = graph.build_laplacian(co).matrix.toarray()
        assert np.allclose(got, expected, atol=1e-12)

    def test_exact_symmetry(self):
        matrix = random_interactions(50, 20, 0.15, seed=9)
        lap = graph.build_laplacian(graph.build_cooccurrence(matrix))
        diff = (lap.matrix - lap.matrix.T).tocoo()
        assert diff.nnz == 0  # bitwise, not just numerically, symmetric

    @pytest.mark.parametrize("seed", range(20))
    def test_spectrum_in_unit_interval_with_top_one(self, seed):
        # eigenvalues of the normalized affinity lie in [0, 1]; the largest
        # is exactly 1 on the nonzero-degree component (eigvec D^1/2 * 1)
        rng = np.random.default_rng(seed)
        matrix = random_interactions(
            int(rng.integers(10, 60)), int(rng.integers(5, 25)),
            float(rng.uniform(0.1, 0.5)), seed=seed,
        )
        lap = graph.build_laplacian(graph.build_cooccurrence(matrix))
        active = np.setdiff1d(np.arange(matrix.m), lap.zero_degree_items)
        sub = lap.matrix.toarray()[np.ix_(active, active)]
        vals = np.linalg.eigvalsh(sub)
        assert vals.min() >= -1e-10
        assert vals.max() <= 1 + 1e-10
        assert abs(vals.max() - 1.0) <= 1e-8

    def test_zero_degree_items_reported(self):
        matrix = random_interactions(10, 5, 0.5, seed=3)
        matrix.rows = [r[r != 2] for r in matrix.rows]  # silence item 2
        lap = graph.build_laplacian(graph.build_cooccurrence(matrix))
        assert 2 in lap.zero_degree_items
        assert lap.matrix[2].nnz == 0

    def test_dump_triplets_roundtrip(self, tmp_path):
        matrix = random_interactions(12, 6, 0.4, seed=2)
        lap = graph.build_laplacian(graph.build_cooccurrence(matrix))
        path = tmp_path / "lap.txt"
        graph.dump_triplets(lap, path)
        lines = path.read_text().splitlines()
        assert lines[0].startswith("# m=6")
        got = np.zeros((6, 6))
        for line in lines[1:]:
            i, j, v = line.split()
            got[int(i), int(j)] = float(v)
        assert np.array_equal(got, lap.matrix.toarray())
