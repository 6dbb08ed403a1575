import numpy as np
import pytest
import scipy.sparse as sp

from swrec import grouping, structure, swdae, synth


def random_interactions(n, m, density, seed):
    """Random binary InteractionMatrix with at least one item per user."""
    from swrec.ingest import InteractionMatrix

    rng = np.random.default_rng(seed)
    rows = []
    for _ in range(n):
        row = np.flatnonzero(rng.random(m) < density)
        if row.size == 0:
            row = np.array([rng.integers(m)])
        rows.append(row.astype(np.int32))
    user_ids = [f"u{u}" for u in range(n)]
    item_ids = [f"i{i}" for i in range(m)]
    return InteractionMatrix(
        n=n,
        m=m,
        rows=rows,
        user_ids=user_ids,
        item_ids=item_ids,
        user_index={u: k for k, u in enumerate(user_ids)},
        item_index={i: k for k, i in enumerate(item_ids)},
    )


def random_clusters(m, k, r, seed):
    """Uniform random overlapping assignment: each item in exactly r of k."""
    rng = np.random.default_rng(seed)
    assignments = np.empty((m, r), dtype=np.int32)
    for i in range(m):
        assignments[i] = np.sort(rng.choice(k, size=r, replace=False))
    return grouping.OverlappingClusters(
        k=k, assignments=assignments, centroids=np.zeros((k, 1)), inertia=0.0
    )


def small_model(m, k, r, seed, loss_kind="bernoulli"):
    mask = structure.build_mask(random_clusters(m, k, r, seed), m)
    return swdae.init_model(mask, seed=seed, loss_kind=loss_kind)


def dense_of(w):
    return np.asarray(w.todense()) if sp.issparse(w) else np.asarray(w)


@pytest.fixture(scope="session")
def tiny_planted():
    """Small planted dataset reused across structural smoke tests."""
    return synth.generate(
        synth.PlantedSpec(
            n_users=400,
            m_items=60,
            n_blocks=3,
            within_block_p=0.4,
            cross_block_p=0.02,
            overlap_items_per_pair=3,
            seed=11,
        )
    )
