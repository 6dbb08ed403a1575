"""Weight-matrix norms and the layer-product generalization bound.

Reports per-layer spectral norm, Frobenius norm and stable rank
(srank = ||W||_F^2 / ||W||_2^2), plus the composite quantity
sqrt(prod_j ||W_j||_2^2 * sum_j srank(W_j) / n).  Constant factors of the
underlying big-O bound are dropped, so only comparisons between models on
the same data are meaningful.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .errors import ConfigurationError


@dataclass
class LayerNorms:
    spectral_norm: float
    frobenius_norm: float
    stable_rank: float


@dataclass
class NormReport:
    layers: list[LayerNorms]
    bound: float
    n: int
    epoch: int | None = None

    def to_dict(self) -> dict:
        return {
            "layers": [
                {
                    "spectral_norm": l.spectral_norm,
                    "frobenius_norm": l.frobenius_norm,
                    "stable_rank": l.stable_rank,
                }
                for l in self.layers
            ],
            "bound": self.bound,
            "n": self.n,
            "epoch": self.epoch,
        }


def spectral_norm(w, tol=1e-6, max_iters=1000, seed=0) -> float:
    """Largest singular value by power iteration on W^T W (sparse matvecs).

    Non-convergence is a diagnostic warning, not an error; the last
    iterate's value is returned.
    """
    if sp.issparse(w):
        wt = w.T.tocsr()
        w = w.tocsr()
    else:
        w = np.asarray(w, dtype=np.float64)
        wt = w.T
    rng = np.random.default_rng(seed)
    v = rng.standard_normal(w.shape[1])
    v /= np.linalg.norm(v)
    sigma_sq = 0.0
    for _ in range(max_iters):
        u = wt @ (w @ v)
        sigma_sq = float(np.dot(v, u))
        norm_u = np.linalg.norm(u)
        if norm_u == 0.0:
            return 0.0
        resid = np.linalg.norm(u - sigma_sq * v)
        v = u / norm_u
        if resid <= tol * max(sigma_sq, np.finfo(float).tiny):
            return math.sqrt(max(sigma_sq, 0.0))
    warnings.warn(
        f"power iteration did not reach tol={tol} in {max_iters} iterations; "
        f"returning last estimate",
        RuntimeWarning,
        stacklevel=2,
    )
    return math.sqrt(max(sigma_sq, 0.0))


def frobenius_norm(w) -> float:
    if sp.issparse(w):
        return float(np.sqrt((w.multiply(w)).sum()))
    return float(np.linalg.norm(np.asarray(w)))


def stable_rank(w, **kw) -> float:
    fro = frobenius_norm(w)
    if fro == 0.0:
        raise ConfigurationError("stable rank of the zero matrix is undefined")
    sig = spectral_norm(w, **kw)
    return fro * fro / (sig * sig)


def generalization_bound(layers, n: int, **kw) -> float:
    """sqrt(prod ||W_j||_2^2 * sum srank(W_j) / n), product in log space."""
    if not layers:
        raise ConfigurationError("need at least one layer")
    if n < 1:
        raise ConfigurationError("n must be >= 1")
    log_prod = 0.0
    srank_sum = 0.0
    for w in layers:
        fro = frobenius_norm(w)
        if fro == 0.0:
            return 0.0
        sig = spectral_norm(w, **kw)
        log_prod += 2.0 * math.log(sig)
        srank_sum += fro * fro / (sig * sig)
    return math.exp(0.5 * (log_prod + math.log(srank_sum) - math.log(n)))


def norm_report(model, n: int, epoch: int | None = None, **kw) -> NormReport:
    """Norms and bound for the model's encoder and decoder weight matrices."""
    mats = [model.w_enc, model.w_dec]
    layers = []
    for w in mats:
        fro = frobenius_norm(w)
        sig = spectral_norm(w, **kw)
        srank = fro * fro / (sig * sig) if sig > 0 else float("nan")
        layers.append(
            LayerNorms(spectral_norm=sig, frobenius_norm=fro, stable_rank=srank)
        )
    bound = generalization_bound(mats, n, **kw)
    return NormReport(layers=layers, bound=bound, n=n, epoch=epoch)


def tracking_callback(n: int, series: list, **kw):
    """Training callback appending one NormReport per epoch to ``series``."""

    def _cb(epoch, model, entry):
        report = norm_report(model, n, epoch=epoch, **kw)
        series.append(report)
        entry["encoder_spectral_norm"] = report.layers[0].spectral_norm
        entry["generalization_bound"] = report.bound

    return _cb
