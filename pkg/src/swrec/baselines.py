"""Structure-learning comparison points.

* fully-connected DAE: the SW pipeline with a saturated mask (R = K), so
  every code path is shared and differences isolate the structure effect;
* magnitude pruning with retraining: global per-matrix threshold keeping
  the largest-magnitude fraction of trained weights, survivors frozen as
  the new mask;
* L1 activation regularization: the FC model trained with a penalty on the
  hidden activations.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from . import structure, swdae
from .errors import ConfigurationError
from .grouping import OverlappingClusters


@dataclass(frozen=True)
class PruneConfig:
    keep_fraction: float
    retrain_epochs: int = 100

    def validate(self) -> None:
        if not 0.0 < self.keep_fraction <= 1.0:
            raise ConfigurationError("keep_fraction must be in (0, 1]")

    @property
    def percent_removed(self) -> int:
        """Prune-X naming: X = percent of weights removed."""
        return round(100 * (1.0 - self.keep_fraction))


@dataclass(frozen=True)
class RegConfig:
    lambda1: float

    def validate(self) -> None:
        if self.lambda1 < 0:
            raise ConfigurationError("lambda1 must be >= 0")


def saturated_clusters(m: int, k: int) -> OverlappingClusters:
    """Every item in every cluster: the mask degenerates to all-ones."""
    assignments = np.tile(np.arange(k, dtype=np.int32), (m, 1))
    return OverlappingClusters(
        k=k,
        assignments=assignments,
        centroids=np.zeros((k, 1)),
        inertia=0.0,
    )


def fc_model(m: int, k: int, seed=0, loss_kind="bernoulli") -> swdae.SwDaeModel:
    mask = structure.build_mask(saturated_clusters(m, k), m)
    return swdae.init_model(mask, seed=seed, loss_kind=loss_kind)


def train_fc(
    m, k, train_rows, corruption, train_cfg, seed=0, loss_kind="bernoulli",
    callback=None,
):
    """Fully-connected DAE trained through the identical SW pipeline."""
    model = fc_model(m, k, seed=seed, loss_kind=loss_kind)
    log = swdae.train(model, train_rows, corruption, train_cfg, callback=callback)
    return model, log


def _keep_topk(w: sp.csr_matrix, keep: int) -> sp.csr_matrix:
    """Zero out all but the ``keep`` largest-magnitude stored entries."""
    coo = w.tocoo()
    if keep >= coo.nnz:
        return w.copy()
    order = np.argsort(-np.abs(coo.data), kind="stable")[:keep]
    out = sp.csr_matrix(
        (coo.data[order], (coo.row[order], coo.col[order])), shape=w.shape
    )
    out.sort_indices()
    return out


def prune_and_retrain(
    model: swdae.SwDaeModel, cfg: PruneConfig, train_rows, corruption, train_cfg
):
    """Magnitude-prune a trained model and retrain the survivors.

    Encoder and decoder are thresholded separately; biases are never
    pruned.  The surviving pattern becomes a frozen mask (encoder and
    decoder patterns may differ).  Neurons that lose every connection keep
    their bias, with a warning.
    """
    cfg.validate()
    keep_enc = math.ceil(cfg.keep_fraction * model.w_enc.nnz)
    keep_dec = math.ceil(cfg.keep_fraction * model.w_dec.nnz)
    pruned = swdae.SwDaeModel(
        m=model.m,
        k=model.k,
        w_enc=_keep_topk(model.w_enc, keep_enc),
        w_dec=_keep_topk(model.w_dec, keep_dec),
        b_hidden=model.b_hidden.copy(),
        b_out=model.b_out.copy(),
        loss_kind=model.loss_kind,
        seed=model.seed,
    )
    dead = int(np.sum(np.diff(pruned.w_enc.indptr) == 0))
    if dead:
        warnings.warn(
            f"{dead} hidden neuron(s) lost all encoder connections; "
            f"retained with bias only",
            RuntimeWarning,
            stacklevel=2,
        )
    retrain_cfg = swdae.TrainConfig(
        batch_size=train_cfg.batch_size,
        epochs=cfg.retrain_epochs,
        learning_rate=train_cfg.learning_rate,
        adam_beta1=train_cfg.adam_beta1,
        adam_beta2=train_cfg.adam_beta2,
        adam_eps=train_cfg.adam_eps,
        seed=train_cfg.seed,
    )
    log = swdae.train(pruned, train_rows, corruption, retrain_cfg)
    return pruned, log


def train_fc_reg(
    m, k, train_rows, corruption, train_cfg, reg: RegConfig, seed=0,
    loss_kind="bernoulli", callback=None,
):
    """FC-DAE with an L1 penalty on the hidden activations."""
    reg.validate()
    model = fc_model(m, k, seed=seed, loss_kind=loss_kind)
    log = swdae.train(
        model, train_rows, corruption, train_cfg,
        callback=callback, l1_hidden=reg.lambda1,
    )
    return model, log
