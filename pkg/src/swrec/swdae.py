"""Sparse-and-wide denoising autoencoder.

Weights exist only at masked positions: the encoder is a K x m CSR matrix,
the decoder an m x K CSR matrix whose pattern is the transposed encoder
pattern for cluster-built models (pruned models may have independent
patterns).  Corruption is inverted dropout, the hidden activation is a
sigmoid, and the decoder produces pre-activation logits scored either with
a Bernoulli (sigmoid) or multinomial (softmax) negative log-likelihood.

All training math runs in 64-bit.  Every random draw comes from seeded
generators and batch reductions are plain ordered numpy sums, so training
is bit-reproducible.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from .errors import ConfigurationError, NumericError, TrainingDivergedError

LOSS_KINDS = ("bernoulli", "multinomial")


@dataclass(frozen=True)
class CorruptionConfig:
    input_dropout_p: float = 0.6
    hidden_dropout_p: float = 0.2
    seed: int = 0

    def validate(self) -> None:
        for p in (self.input_dropout_p, self.hidden_dropout_p):
            if not 0.0 <= p < 1.0:
                raise ConfigurationError(f"dropout probability {p} not in [0, 1)")


@dataclass(frozen=True)
class TrainConfig:
    batch_size: int = 500
    epochs: int = 100
    learning_rate: float = 0.001
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_eps: float = 1e-8
    seed: int = 0

    def validate(self) -> None:
        if self.batch_size < 1:
            raise ConfigurationError("batch_size must be >= 1")
        if self.learning_rate <= 0:
            raise ConfigurationError("learning_rate must be > 0")
        if self.epochs < 0:
            raise ConfigurationError("epochs must be >= 0")


@dataclass
class SwDaeModel:
    m: int
    k: int
    w_enc: sp.csr_matrix  # K x m
    w_dec: sp.csr_matrix  # m x K
    b_hidden: np.ndarray
    b_out: np.ndarray
    loss_kind: str = "bernoulli"
    seed: int = 0
    _enc_rows: np.ndarray | None = field(default=None, repr=False)
    _dec_rows: np.ndarray | None = field(default=None, repr=False)

    def __post_init__(self):
        if self.loss_kind not in LOSS_KINDS:
            raise ConfigurationError(f"unknown loss kind {self.loss_kind!r}")

    def enc_index(self):
        """(row, col) per stored encoder entry, in CSR data order."""
        if self._enc_rows is None:
            self._enc_rows = np.repeat(
                np.arange(self.k), np.diff(self.w_enc.indptr)
            )
        return self._enc_rows, self.w_enc.indices

    def dec_index(self):
        if self._dec_rows is None:
            self._dec_rows = np.repeat(
                np.arange(self.m), np.diff(self.w_dec.indptr)
            )
        return self._dec_rows, self.w_dec.indices

    @property
    def weight_nnz(self) -> int:
        return int(self.w_enc.nnz + self.w_dec.nnz)

    def copy(self) -> "SwDaeModel":
        return SwDaeModel(
            m=self.m,
            k=self.k,
            w_enc=self.w_enc.copy(),
            w_dec=self.w_dec.copy(),
            b_hidden=self.b_hidden.copy(),
            b_out=self.b_out.copy(),
            loss_kind=self.loss_kind,
            seed=self.seed,
        )

    def encode(self, x: np.ndarray) -> np.ndarray:
        """Clean encoder pass; accepts a vector or a batch of rows."""
        single = x.ndim == 1
        xb = np.atleast_2d(np.asarray(x, dtype=np.float64))
        h = _sigmoid((self.w_enc @ xb.T).T + self.b_hidden)
        return h[0] if single else h

    def score(self, x: np.ndarray) -> np.ndarray:
        """Clean forward pass returning decoder pre-activation logits."""
        single = x.ndim == 1
        h = self.encode(x)
        hb = np.atleast_2d(h)
        logits = (self.w_dec @ hb.T).T + self.b_out
        return logits[0] if single else logits


def _sigmoid(z: np.ndarray) -> np.ndarray:
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def init_model(mask, seed=0, loss_kind="bernoulli") -> SwDaeModel:
    """Glorot-style uniform init with per-neuron masked fan counts.

    For hidden neuron j with d_j masked connections, fan_in = fan_out = d_j,
    so every weight touching j is drawn from U(-s_j, s_j) with
    s_j = sqrt(6 / (2 d_j)).  Biases start at zero.  Encoder values are
    drawn first (CSR order, neuron-major), then decoder values (item-major).
    """
    rng = np.random.default_rng(seed)
    enc_pat = mask.transposed()  # K x m
    dec_pat = mask.pattern  # m x K
    deg = mask.neuron_degrees().astype(np.float64)
    scale = np.zeros(mask.k)
    nz = deg > 0
    scale[nz] = np.sqrt(6.0 / (2.0 * deg[nz]))

    enc_rows = np.repeat(np.arange(mask.k), np.diff(enc_pat.indptr))
    enc_vals = rng.uniform(-1.0, 1.0, size=enc_pat.nnz) * scale[enc_rows]
    dec_vals = rng.uniform(-1.0, 1.0, size=dec_pat.nnz) * scale[dec_pat.indices]

    w_enc = sp.csr_matrix(
        (enc_vals, enc_pat.indices.copy(), enc_pat.indptr.copy()),
        shape=(mask.k, mask.m),
    )
    w_dec = sp.csr_matrix(
        (dec_vals, dec_pat.indices.copy(), dec_pat.indptr.copy()),
        shape=(mask.m, mask.k),
    )
    return SwDaeModel(
        m=mask.m,
        k=mask.k,
        w_enc=w_enc,
        w_dec=w_dec,
        b_hidden=np.zeros(mask.k),
        b_out=np.zeros(mask.m),
        loss_kind=loss_kind,
        seed=seed,
    )


def corrupt(x: np.ndarray, p: float, rng: np.random.Generator) -> np.ndarray:
    """Inverted dropout: survivors scaled by 1/(1-p); zeros stay zero."""
    if p <= 0.0:
        return np.array(x, dtype=np.float64, copy=True)
    keep = rng.random(x.shape) >= p
    return np.asarray(x, dtype=np.float64) * keep / (1.0 - p)


def forward(model: SwDaeModel, x_tilde: np.ndarray, hidden_keep=None, hidden_p=0.0):
    """Masked forward pass over a batch (B x m).

    Returns (h_raw, h_used, logits) where h_used carries the inverted
    hidden dropout when a keep mask is supplied.
    """
    xb = np.atleast_2d(np.asarray(x_tilde, dtype=np.float64))
    z = (model.w_enc @ xb.T).T + model.b_hidden
    if not np.all(np.isfinite(z)):
        raise NumericError("non-finite value at the hidden pre-activation")
    h_raw = _sigmoid(z)
    if hidden_keep is not None:
        h_used = h_raw * hidden_keep / (1.0 - hidden_p)
    else:
        h_used = h_raw
    logits = (model.w_dec @ h_used.T).T + model.b_out
    if not np.all(np.isfinite(logits)):
        raise NumericError("non-finite value at the decoder output")
    return h_raw, h_used, logits


def loss_from_logits(loss_kind: str, logits: np.ndarray, x: np.ndarray) -> float:
    """Mean over the batch of the per-example negative log-likelihood."""
    logits = np.atleast_2d(logits)
    x = np.atleast_2d(np.asarray(x, dtype=np.float64))
    if loss_kind == "bernoulli":
        per_ex = np.logaddexp(0.0, logits).sum(axis=1) - (x * logits).sum(axis=1)
    elif loss_kind == "multinomial":
        lse = _logsumexp(logits)
        per_ex = x.sum(axis=1) * lse - (x * logits).sum(axis=1)
    else:
        raise ConfigurationError(f"unknown loss kind {loss_kind!r}")
    return float(per_ex.mean())


def _logsumexp(logits: np.ndarray) -> np.ndarray:
    peak = logits.max(axis=1, keepdims=True)
    return (peak + np.log(np.exp(logits - peak).sum(axis=1, keepdims=True))).ravel()


def _softmax(logits: np.ndarray) -> np.ndarray:
    e = np.exp(logits - logits.max(axis=1, keepdims=True))
    return e / e.sum(axis=1, keepdims=True)


def backward(
    model: SwDaeModel,
    x_tilde: np.ndarray,
    x: np.ndarray,
    h_raw: np.ndarray,
    h_used: np.ndarray,
    logits: np.ndarray,
    hidden_keep=None,
    hidden_p=0.0,
    l1_hidden: float = 0.0,
):
    """Analytic gradients of the batch-mean loss w.r.t. masked parameters.

    Gradient arrays are aligned with the CSR data arrays of w_enc / w_dec.
    The optional L1 term penalizes the post-sigmoid, pre-dropout hidden
    activation (always positive, so its gradient is l1 / B everywhere).
    """
    xb = np.atleast_2d(np.asarray(x_tilde, dtype=np.float64))
    xc = np.atleast_2d(np.asarray(x, dtype=np.float64))
    logits = np.atleast_2d(logits)
    h_raw = np.atleast_2d(h_raw)
    h_used = np.atleast_2d(h_used)
    batch = xb.shape[0]

    if model.loss_kind == "bernoulli":
        dlogits = (_sigmoid(logits) - xc) / batch
    else:
        dlogits = (xc.sum(axis=1, keepdims=True) * _softmax(logits) - xc) / batch

    g_b_out = dlogits.sum(axis=0)
    dec_rows, dec_cols = model.dec_index()
    g_dec = np.einsum("bi,bi->i", dlogits[:, dec_rows], h_used[:, dec_cols])

    dh_used = (model.w_dec.T @ dlogits.T).T
    if hidden_keep is not None:
        dh_raw = dh_used * hidden_keep / (1.0 - hidden_p)
    else:
        dh_raw = dh_used
    if l1_hidden:
        dh_raw = dh_raw + l1_hidden / batch
    dz = dh_raw * h_raw * (1.0 - h_raw)

    g_b_hidden = dz.sum(axis=0)
    enc_rows, enc_cols = model.enc_index()
    g_enc = np.einsum("bi,bi->i", dz[:, enc_rows], xb[:, enc_cols])
    return {"w_enc": g_enc, "w_dec": g_dec, "b_hidden": g_b_hidden, "b_out": g_b_out}


@dataclass
class TrainLog:
    header: dict
    epochs: list[dict]


class _Adam:
    """Adam state over a dict of parameter arrays (moments only on masked
    positions, since the weight arrays hold only masked values)."""

    def __init__(self, params: dict, cfg: TrainConfig):
        self.cfg = cfg
        self.t = 0
        self.m = {k: np.zeros_like(v) for k, v in params.items()}
        self.v = {k: np.zeros_like(v) for k, v in params.items()}

    def step(self, params: dict, grads: dict) -> None:
        c = self.cfg
        self.t += 1
        lr_t = c.learning_rate * np.sqrt(1.0 - c.adam_beta2**self.t)
        lr_t /= 1.0 - c.adam_beta1**self.t
        for key, g in grads.items():
            self.m[key] = c.adam_beta1 * self.m[key] + (1 - c.adam_beta1) * g
            self.v[key] = c.adam_beta2 * self.v[key] + (1 - c.adam_beta2) * g * g
            params[key] -= lr_t * self.m[key] / (np.sqrt(self.v[key]) + c.adam_eps)


def _dense_rows(rows, m: int) -> np.ndarray:
    if isinstance(rows, np.ndarray) and rows.ndim == 2:
        return np.asarray(rows, dtype=np.float64)
    x = np.zeros((len(rows), m))
    for i, idx in enumerate(rows):
        x[i, idx] = 1.0
    return x


def train(
    model: SwDaeModel,
    train_rows,
    corruption: CorruptionConfig,
    cfg: TrainConfig,
    callback=None,
    l1_hidden: float = 0.0,
) -> TrainLog:
    """Train in place with shuffled mini-batches and Adam.

    ``train_rows`` is a list of per-user item-index arrays or a dense
    array.  ``callback(epoch, model, entry)`` runs after each epoch and may
    add fields (e.g. validation NDCG) to the epoch's log entry.
    """
    corruption.validate()
    cfg.validate()
    x_all = _dense_rows(train_rows, model.m)
    n = x_all.shape[0]
    if n == 0:
        raise ConfigurationError("empty training set")

    shuffle_rng = np.random.default_rng(cfg.seed)
    noise_rng = np.random.default_rng(corruption.seed)
    params = {
        "w_enc": model.w_enc.data,
        "w_dec": model.w_dec.data,
        "b_hidden": model.b_hidden,
        "b_out": model.b_out,
    }
    adam = _Adam(params, cfg)
    header = {
        "epochs": cfg.epochs,
        "batch_size": cfg.batch_size,
        "learning_rate": cfg.learning_rate,
        "input_dropout_p": corruption.input_dropout_p,
        "hidden_dropout_p": corruption.hidden_dropout_p,
        "loss_kind": model.loss_kind,
        "l1_hidden": l1_hidden,
        "train_seed": cfg.seed,
        "corruption_seed": corruption.seed,
        "n_train_users": n,
    }
    log = TrainLog(header=header, epochs=[])

    hp = corruption.hidden_dropout_p
    for epoch in range(cfg.epochs):
        perm = shuffle_rng.permutation(n)
        total_loss = 0.0
        n_batches = 0
        for start in range(0, n, cfg.batch_size):
            xb = x_all[perm[start : start + cfg.batch_size]]
            x_tilde = corrupt(xb, corruption.input_dropout_p, noise_rng)
            keep = (noise_rng.random((xb.shape[0], model.k)) >= hp) if hp > 0 else None
            h_raw, h_used, logits = forward(model, x_tilde, keep, hp)
            batch_loss = loss_from_logits(model.loss_kind, logits, xb)
            if l1_hidden:
                batch_loss += l1_hidden * float(h_raw.sum(axis=1).mean())
            if not np.isfinite(batch_loss):
                raise TrainingDivergedError(
                    f"non-finite loss at epoch {epoch}, batch {n_batches}",
                    epoch=epoch,
                    batch=n_batches,
                )
            grads = backward(
                model, x_tilde, xb, h_raw, h_used, logits, keep, hp, l1_hidden
            )
            adam.step(params, grads)
            total_loss += batch_loss
            n_batches += 1
        entry = {"epoch": epoch, "train_loss": total_loss / max(n_batches, 1)}
        if callback is not None:
            callback(epoch, model, entry)
        log.epochs.append(entry)
    return log


def encode_dataset(model: SwDaeModel, rows) -> np.ndarray:
    """Clean hidden activations for every row (n x K)."""
    return model.encode(_dense_rows(rows, model.m))


@dataclass
class StackedModel:
    layers: list[SwDaeModel]

    @property
    def depth(self) -> int:
        return len(self.layers)

    @property
    def m(self) -> int:
        return self.layers[0].m

    def encode(self, x: np.ndarray) -> np.ndarray:
        a = x
        for layer in self.layers:
            a = layer.encode(a)
        return a

    def score(self, x: np.ndarray) -> np.ndarray:
        """Full forward pass; the final decoder output stays pre-activation."""
        single = x.ndim == 1
        a = np.atleast_2d(np.asarray(x, dtype=np.float64))
        for layer in self.layers:
            a = layer.encode(a)
        for depth, layer in enumerate(reversed(self.layers)):
            z = (layer.w_dec @ a.T).T + layer.b_out
            a = z if depth == self.depth - 1 else _sigmoid(z)
        return a[0] if single else a


def stack_layer(
    stacked: StackedModel,
    train_rows,
    grouping_cfg,
    corruption: CorruptionConfig,
    train_cfg: TrainConfig,
    algo: str = "laplacian",
    loss_kind: str = "bernoulli",
) -> StackedModel:
    """Greedy layer-wise growth: encode, regroup the hidden units, build the
    next mask, train the new layer on the encodings, append."""
    from . import structure
    from .grouping import cluster_activations

    x_all = _dense_rows(train_rows, stacked.m)
    h = stacked.encode(x_all)
    clusters = cluster_activations(h, grouping_cfg, algo=algo)
    mask = structure.build_mask(clusters, h.shape[1])
    layer = init_model(mask, seed=train_cfg.seed, loss_kind=loss_kind)
    train(layer, h, corruption, train_cfg)
    return StackedModel(layers=list(stacked.layers) + [layer])


def fine_tune(
    stacked: StackedModel,
    train_rows,
    corruption: CorruptionConfig,
    cfg: TrainConfig,
) -> TrainLog:
    """End-to-end pass over the whole stack with the denoising objective.

    Hidden dropout applies uniformly at every hidden activation.  Gradients
    exist only at masked positions of every layer.
    """
    corruption.validate()
    cfg.validate()
    x_all = _dense_rows(train_rows, stacked.m)
    n = x_all.shape[0]
    loss_kind = stacked.layers[0].loss_kind
    d = stacked.depth

    # flatten the stack into 2d sparse affine layers: encoders then decoders
    weights = [lyr.w_enc for lyr in stacked.layers]
    weights += [lyr.w_dec for lyr in reversed(stacked.layers)]
    biases = [lyr.b_hidden for lyr in stacked.layers]
    biases += [lyr.b_out for lyr in reversed(stacked.layers)]
    idx = []
    for w in weights:
        rows = np.repeat(np.arange(w.shape[0]), np.diff(w.indptr))
        idx.append((rows, w.indices))

    params = {}
    for j, w in enumerate(weights):
        params[f"w{j}"] = w.data
    for j, b in enumerate(biases):
        params[f"b{j}"] = b
    adam = _Adam(params, cfg)
    shuffle_rng = np.random.default_rng(cfg.seed)
    noise_rng = np.random.default_rng(corruption.seed)
    hp = corruption.hidden_dropout_p

    log = TrainLog(
        header={"fine_tune": True, "epochs": cfg.epochs, "depth": d}, epochs=[]
    )
    for epoch in range(cfg.epochs):
        perm = shuffle_rng.permutation(n)
        total_loss = 0.0
        n_batches = 0
        for start in range(0, n, cfg.batch_size):
            xb = x_all[perm[start : start + cfg.batch_size]]
            batch = xb.shape[0]
            a = corrupt(xb, corruption.input_dropout_p, noise_rng)
            acts = [a]  # post-dropout activations feeding each layer
            raws: list[np.ndarray | None] = [None]
            keeps: list[np.ndarray | None] = [None]
            for j, (w, b) in enumerate(zip(weights, biases)):
                z = (w @ acts[-1].T).T + b
                if j == len(weights) - 1:
                    logits = z
                    break
                a_raw = _sigmoid(z)
                if hp > 0:
                    keep = noise_rng.random(a_raw.shape) >= hp
                    a_used = a_raw * keep / (1.0 - hp)
                else:
                    keep, a_used = None, a_raw
                acts.append(a_used)
                raws.append(a_raw)
                keeps.append(keep)

            batch_loss = loss_from_logits(loss_kind, logits, xb)
            if not np.isfinite(batch_loss):
                raise TrainingDivergedError(
                    f"non-finite loss at epoch {epoch}, batch {n_batches}",
                    epoch=epoch,
                    batch=n_batches,
                )
            if loss_kind == "bernoulli":
                dz = (_sigmoid(logits) - xb) / batch
            else:
                dz = (xb.sum(axis=1, keepdims=True) * _softmax(logits) - xb) / batch

            grads = {}
            for j in range(len(weights) - 1, -1, -1):
                rows, cols = idx[j]
                grads[f"w{j}"] = np.einsum(
                    "bi,bi->i", dz[:, rows], acts[j][:, cols]
                )
                grads[f"b{j}"] = dz.sum(axis=0)
                if j == 0:
                    break
                da = (weights[j].T @ dz.T).T
                if keeps[j] is not None:
                    da = da * keeps[j] / (1.0 - hp)
                dz = da * raws[j] * (1.0 - raws[j])
            adam.step(params, grads)
            total_loss += batch_loss
            n_batches += 1
        log.epochs.append(
            {"epoch": epoch, "train_loss": total_loss / max(n_batches, 1)}
        )
    return log
