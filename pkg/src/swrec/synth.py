"""Planted-structure synthetic interaction data.

Items are partitioned into blocks; designated overlap items belong to two
adjacent blocks, exercising the R > 1 assignment path.  Each user gets a
home block and consumes home-block items with ``within_block_p`` and the
rest with ``cross_block_p``.  An optional heavy-tailed per-item popularity
multiplier skews consumption toward popular items.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigurationError, SwrecError
from .ingest import InteractionMatrix

_MAX_RESAMPLES = 100


@dataclass(frozen=True)
class PlantedSpec:
    n_users: int
    m_items: int
    n_blocks: int
    within_block_p: float
    cross_block_p: float
    overlap_items_per_pair: int = 0
    popularity_exponent: float = 0.0  # 0 disables the popularity multiplier
    seed: int = 0

    def validate(self) -> None:
        if not 0.0 <= self.cross_block_p < self.within_block_p <= 1.0:
            raise ConfigurationError(
                "need 0 <= cross_block_p < within_block_p <= 1"
            )
        if self.n_blocks > self.m_items or self.n_blocks < 1:
            raise ConfigurationError("need 1 <= n_blocks <= m_items")
        if self.n_users < 1:
            raise ConfigurationError("need at least one user")
        if self.overlap_items_per_pair < 0:
            raise ConfigurationError("overlap_items_per_pair must be >= 0")


@dataclass
class PlantedTruth:
    item_blocks: list[np.ndarray]  # per item, sorted block ids (1 or 2)
    primary_block: np.ndarray  # length m
    user_blocks: np.ndarray  # length n

    def to_dict(self) -> dict:
        return {
            "item_blocks": [b.tolist() for b in self.item_blocks],
            "primary_block": self.primary_block.tolist(),
            "user_blocks": self.user_blocks.tolist(),
        }


def generate(spec: PlantedSpec):
    """Draw (InteractionMatrix, PlantedTruth); deterministic per seed.

    Users whose draw comes out empty are re-sampled (bounded retries).
    """
    spec.validate()
    rng = np.random.default_rng(spec.seed)
    m, n, b = spec.m_items, spec.n_users, spec.n_blocks

    bounds = np.linspace(0, m, b + 1).astype(int)
    primary = np.zeros(m, dtype=np.int64)
    for j in range(b):
        primary[bounds[j] : bounds[j + 1]] = j

    # membership[i] = set of blocks item i belongs to
    membership = [{int(primary[i])} for i in range(m)]
    if spec.overlap_items_per_pair and b > 1:
        for j in range(b - 1):
            block_items = np.arange(bounds[j], bounds[j + 1])
            count = min(spec.overlap_items_per_pair, len(block_items))
            shared = rng.choice(block_items, size=count, replace=False)
            for i in shared:
                membership[int(i)].add(j + 1)

    if spec.popularity_exponent > 0:
        ranks = rng.permutation(m) + 1
        mult = ranks.astype(np.float64) ** (-spec.popularity_exponent)
        mult *= m / mult.sum()  # mean 1
    else:
        mult = np.ones(m)

    block_of_item = [np.array(sorted(s)) for s in membership]
    in_block = np.zeros((b, m), dtype=bool)
    for i, blocks in enumerate(block_of_item):
        in_block[blocks, i] = True

    base_p = np.where(in_block, spec.within_block_p, spec.cross_block_p)
    probs = np.minimum(base_p * mult, 1.0)  # (b, m)

    user_blocks = rng.integers(b, size=n)
    rows = []
    for u in range(n):
        p = probs[user_blocks[u]]
        row = np.flatnonzero(rng.random(m) < p)
        retries = 0
        while row.size == 0:
            retries += 1
            if retries > _MAX_RESAMPLES:
                raise SwrecError(
                    "could not draw a non-empty user row; "
                    "increase the consumption probabilities"
                )
            row = np.flatnonzero(rng.random(m) < p)
        rows.append(row.astype(np.int32))

    user_ids = [f"u{u}" for u in range(n)]
    item_ids = [f"i{i}" for i in range(m)]
    matrix = InteractionMatrix(
        n=n,
        m=m,
        rows=rows,
        user_ids=user_ids,
        item_ids=item_ids,
        user_index={uid: u for u, uid in enumerate(user_ids)},
        item_index={iid: i for i, iid in enumerate(item_ids)},
    )
    truth = PlantedTruth(
        item_blocks=block_of_item, primary_block=primary, user_blocks=user_blocks
    )
    return matrix, truth
