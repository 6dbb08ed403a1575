"""Item co-occurrence graph and its degree-normalized Laplacian.

The adjacency is Y = X^T X where X is the binary user-item matrix, so the
edge weight between two items is the number of users consuming both, and
the diagonal holds item popularities.  The Laplacian here is the
normalized affinity D^{-1/2} Y D^{-1/2} (not I - A); its spectrum lies in
[0, 1] and the top eigenvalue of the nonzero-degree component is exactly 1.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp


@dataclass
class CooccurrenceGraph:
    """Symmetric co-occurrence counts, stored upper-triangular.

    Only entries with row <= col are kept; `full()` mirrors them on access.
    Counts are exact integers.
    """

    m: int
    upper: sp.csr_matrix
    degrees: np.ndarray
    _full: sp.csr_matrix | None = field(default=None, repr=False)

    def full(self) -> sp.csr_matrix:
        if self._full is None:
            strict = sp.triu(self.upper, k=1)
            self._full = (self.upper + strict.T).tocsr()
        return self._full

    @property
    def popularity(self) -> np.ndarray:
        """Diagonal of Y: number of users consuming each item."""
        return self.upper.diagonal()


@dataclass
class NormalizedLaplacian:
    m: int
    matrix: sp.csr_matrix
    zero_degree_items: np.ndarray


def build_cooccurrence(matrix) -> CooccurrenceGraph:
    """Compute Y = X^T X via the sparse product, without a dense m x m."""
    x = matrix.to_csr(dtype=np.int64)
    y = (x.T @ x).tocsr()
    y.sum_duplicates()
    degrees = np.asarray(y.sum(axis=1)).ravel().astype(np.int64)
    upper = sp.triu(y, k=0).tocsr()
    return CooccurrenceGraph(m=matrix.m, upper=upper, degrees=degrees)


def build_laplacian(graph: CooccurrenceGraph) -> NormalizedLaplacian:
    """Scale Y symmetrically by inverse square-root degrees.

    Zero-degree items keep all-zero rows/columns and are reported so that
    downstream stages can give them zero embeddings.
    """
    deg = graph.degrees.astype(np.float64)
    zero = np.flatnonzero(deg == 0).astype(np.int64)
    inv_sqrt = np.zeros_like(deg)
    nz = deg > 0
    inv_sqrt[nz] = 1.0 / np.sqrt(deg[nz])

    y = graph.full().tocoo()
    # grouping the two degree factors keeps symmetry exact bitwise:
    # inv[i]*inv[j] is the same product for (i,j) and (j,i)
    data = y.data.astype(np.float64) * (inv_sqrt[y.row] * inv_sqrt[y.col])
    lap = sp.csr_matrix((data, (y.row, y.col)), shape=(graph.m, graph.m))
    return NormalizedLaplacian(m=graph.m, matrix=lap, zero_degree_items=zero)


def dump_triplets(lap: NormalizedLaplacian, path) -> None:
    """Write the Laplacian as `row col value` text triplets."""
    coo = lap.matrix.tocoo()
    with open(path, "w") as fh:
        fh.write(f"# m={lap.m} nnz={coo.nnz}\n")
        for i, j, v in zip(coo.row, coo.col, coo.data):
            fh.write(f"{i} {j} {float(v)!r}\n")
