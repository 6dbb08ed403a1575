"""Connectivity mask between items and hidden neurons.

One hidden neuron per overlapping cluster; item i connects to neuron j iff
cluster j is among item i's assignments.  The decoder uses the transposed
pattern.  The mask never changes once built: the structure is fixed first,
then only those connections are trained.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from .errors import IntegrityError


@dataclass
class ConnectivityMask:
    m: int
    k: int
    pattern: sp.csr_matrix  # m x K boolean occupancy (item-major)
    _transposed: sp.csr_matrix | None = field(default=None, repr=False)

    @property
    def nnz(self) -> int:
        return int(self.pattern.nnz)

    @property
    def density(self) -> float:
        return self.nnz / (self.m * self.k)

    def row_degrees(self) -> np.ndarray:
        return np.diff(self.pattern.indptr)

    def neuron_degrees(self) -> np.ndarray:
        return np.diff(self.transposed().indptr)

    def transposed(self) -> sp.csr_matrix:
        """Neuron-major (K x m) view for the encoder orientation."""
        if self._transposed is None:
            self._transposed = self.pattern.T.tocsr()
            self._transposed.sort_indices()
        return self._transposed

    def to_assignments(self) -> np.ndarray:
        """Recover per-item sorted cluster-id lists (rows may vary in length)."""
        self.pattern.sort_indices()
        return np.split(self.pattern.indices, self.pattern.indptr[1:-1])


def build_mask(clusters, m: int) -> ConnectivityMask:
    """Mask from overlapping clusters; bit (i, j) set iff j in assignments(i)."""
    assignments = np.asarray(clusters.assignments)
    if assignments.shape[0] != m:
        raise IntegrityError(
            f"assignments cover {assignments.shape[0]} items, expected {m}"
        )
    if assignments.size and (assignments.min() < 0 or assignments.max() >= clusters.k):
        raise IntegrityError(
            f"cluster id out of range [0, {clusters.k}) in assignments"
        )
    r = assignments.shape[1]
    indptr = np.arange(0, m * r + 1, r, dtype=np.int64)
    indices = assignments.astype(np.int32).ravel()
    data = np.ones(m * r, dtype=np.int8)
    pattern = sp.csr_matrix((data, indices, indptr), shape=(m, clusters.k))
    pattern.sort_indices()
    return ConnectivityMask(m=m, k=clusters.k, pattern=pattern)


def mask_from_pattern(pattern: sp.csr_matrix) -> ConnectivityMask:
    """Wrap an arbitrary boolean item x neuron pattern (e.g. after pruning)."""
    pattern = pattern.tocsr().astype(np.int8)
    pattern.sort_indices()
    m, k = pattern.shape
    return ConnectivityMask(m=m, k=k, pattern=pattern)


def count_parameters(mask: ConnectivityMask) -> dict:
    """Parameter and flop accounting for one encoder/decoder pair.

    parameters = encoder weights + decoder weights + hidden and output
    biases; flops counts one multiply-add pair per weight per direction.
    ``weight_parameters`` (biases excluded) is reported alongside because
    published per-model totals follow that convention.
    """
    weights = 2 * mask.nnz
    return {
        "parameters": weights + mask.k + mask.m,
        "weight_parameters": weights,
        "flops_per_example": 2 * weights,
    }
