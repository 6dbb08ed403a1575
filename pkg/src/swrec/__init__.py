"""swrec: sparse-and-wide denoising autoencoder recommender.

Learns overlapping item groups from implicit feedback via spectral
embedding of the item co-occurrence Laplacian, fixes a sparse autoencoder
connectivity structure from the groups, trains it with the denoising
criterion, and evaluates top-N ranking quality against fully-connected,
pruned and L1-regularized baselines.
"""

__version__ = "0.1.0"

from . import (  # noqa: F401
    baselines,
    diagnostics,
    evaluation,
    graph,
    grouping,
    ingest,
    spectral,
    storage,
    structure,
    swdae,
    synth,
)
