"""On-disk formats for datasets and trained models.

Dataset directory layout::

    interactions.bin   binary CSR: magic "SWRC", u8 version, i64 n, m, nnz,
                       then i64 row pointers (n+1) and i32 column indices
    users.txt          one user id per line (row order)
    items.txt          one item id per line (column order)
    split.json         user sets plus per-user fold-in/holdout item indices
    truth.json         (synthetic datasets only) planted block labels

Model file (single binary artifact)::

    magic "SWDM", u8 version, u8 loss code, i64 seed, i64 n_layers, then
    per layer: i64 m, K; encoder CSR (i64 nnz, i64 indptr, i32 indices,
    f64 data); decoder CSR likewise; f64 hidden and output biases.
"""

from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np
import scipy.sparse as sp

from .errors import InputError
from .ingest import HeldOutUser, InteractionMatrix, SplitSpec
from .swdae import LOSS_KINDS, StackedModel, SwDaeModel

_DATASET_MAGIC = b"SWRC"
_MODEL_MAGIC = b"SWDM"
_VERSION = 1


def _write_array(fh, arr: np.ndarray, dtype) -> None:
    arr = np.ascontiguousarray(arr, dtype=dtype)
    fh.write(arr.tobytes())


def _read_array(fh, count: int, dtype) -> np.ndarray:
    dtype = np.dtype(dtype)
    buf = fh.read(count * dtype.itemsize)
    if len(buf) != count * dtype.itemsize:
        raise InputError("truncated binary file")
    return np.frombuffer(buf, dtype=dtype).copy()


def save_dataset(directory, matrix: InteractionMatrix, spec: SplitSpec = None,
                 held_out=None, truth=None) -> None:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    csr = matrix.to_csr()
    with open(directory / "interactions.bin", "wb") as fh:
        fh.write(_DATASET_MAGIC)
        fh.write(struct.pack("<B", _VERSION))
        fh.write(struct.pack("<qqq", matrix.n, matrix.m, csr.nnz))
        _write_array(fh, csr.indptr, np.int64)
        _write_array(fh, csr.indices, np.int32)
    (directory / "users.txt").write_text(
        "".join(f"{u}\n" for u in matrix.user_ids)
    )
    (directory / "items.txt").write_text(
        "".join(f"{i}\n" for i in matrix.item_ids)
    )
    if spec is not None:
        payload = {
            "train_users": spec.train_users.tolist(),
            "val_users": spec.val_users.tolist(),
            "test_users": spec.test_users.tolist(),
            "fold_in_fraction": spec.fold_in_fraction,
            "seed": spec.seed,
            "held_out": {
                str(hu.user): {
                    "fold_in": hu.fold_in.tolist(),
                    "holdout": hu.holdout.tolist(),
                }
                for hu in (held_out or [])
            },
        }
        write_json(directory / "split.json", payload)
    if truth is not None:
        write_json(directory / "truth.json", truth.to_dict())


def load_dataset(directory):
    """Returns (InteractionMatrix, SplitSpec | None, held_out list)."""
    directory = Path(directory)
    path = directory / "interactions.bin"
    if not path.exists():
        raise InputError(f"no interactions.bin under {directory}")
    with open(path, "rb") as fh:
        if fh.read(4) != _DATASET_MAGIC:
            raise InputError(f"{path} is not a swrec dataset file")
        (version,) = struct.unpack("<B", fh.read(1))
        if version != _VERSION:
            raise InputError(f"unsupported dataset version {version}")
        n, m, nnz = struct.unpack("<qqq", fh.read(24))
        indptr = _read_array(fh, n + 1, np.int64)
        indices = _read_array(fh, nnz, np.int32)

    user_ids = (directory / "users.txt").read_text().splitlines()
    item_ids = (directory / "items.txt").read_text().splitlines()
    rows = [indices[indptr[u] : indptr[u + 1]] for u in range(n)]
    matrix = InteractionMatrix(
        n=n,
        m=m,
        rows=rows,
        user_ids=user_ids,
        item_ids=item_ids,
        user_index={u: k for k, u in enumerate(user_ids)},
        item_index={i: k for k, i in enumerate(item_ids)},
    )

    spec, held_out = None, []
    split_path = directory / "split.json"
    if split_path.exists():
        payload = json.loads(split_path.read_text())
        spec = SplitSpec(
            train_users=np.array(payload["train_users"], dtype=np.int64),
            val_users=np.array(payload["val_users"], dtype=np.int64),
            test_users=np.array(payload["test_users"], dtype=np.int64),
            fold_in_fraction=payload["fold_in_fraction"],
            seed=payload["seed"],
        )
        held_out = [
            HeldOutUser(
                user=int(u),
                fold_in=np.array(part["fold_in"], dtype=np.int32),
                holdout=np.array(part["holdout"], dtype=np.int32),
            )
            for u, part in payload["held_out"].items()
        ]
    return matrix, spec, held_out


def _write_csr(fh, w: sp.csr_matrix) -> None:
    fh.write(struct.pack("<q", w.nnz))
    _write_array(fh, w.indptr, np.int64)
    _write_array(fh, w.indices, np.int32)
    _write_array(fh, w.data, np.float64)


def _read_csr(fh, shape) -> sp.csr_matrix:
    (nnz,) = struct.unpack("<q", fh.read(8))
    indptr = _read_array(fh, shape[0] + 1, np.int64)
    indices = _read_array(fh, nnz, np.int32)
    data = _read_array(fh, nnz, np.float64)
    return sp.csr_matrix((data, indices, indptr), shape=shape)


def save_model(path, model) -> None:
    layers = model.layers if isinstance(model, StackedModel) else [model]
    with open(path, "wb") as fh:
        fh.write(_MODEL_MAGIC)
        fh.write(struct.pack("<B", _VERSION))
        fh.write(struct.pack("<B", LOSS_KINDS.index(layers[0].loss_kind)))
        fh.write(struct.pack("<q", layers[0].seed))
        fh.write(struct.pack("<q", len(layers)))
        for layer in layers:
            fh.write(struct.pack("<qq", layer.m, layer.k))
            _write_csr(fh, layer.w_enc)
            _write_csr(fh, layer.w_dec)
            _write_array(fh, layer.b_hidden, np.float64)
            _write_array(fh, layer.b_out, np.float64)


def load_model(path):
    """Returns a SwDaeModel, or a StackedModel when depth > 1."""
    with open(path, "rb") as fh:
        if fh.read(4) != _MODEL_MAGIC:
            raise InputError(f"{path} is not a swrec model file")
        (version,) = struct.unpack("<B", fh.read(1))
        if version != _VERSION:
            raise InputError(f"unsupported model version {version}")
        (loss_code,) = struct.unpack("<B", fh.read(1))
        (seed,) = struct.unpack("<q", fh.read(8))
        (n_layers,) = struct.unpack("<q", fh.read(8))
        layers = []
        for _ in range(n_layers):
            m, k = struct.unpack("<qq", fh.read(16))
            w_enc = _read_csr(fh, (k, m))
            w_dec = _read_csr(fh, (m, k))
            b_hidden = _read_array(fh, k, np.float64)
            b_out = _read_array(fh, m, np.float64)
            layers.append(
                SwDaeModel(
                    m=m,
                    k=k,
                    w_enc=w_enc,
                    w_dec=w_dec,
                    b_hidden=b_hidden,
                    b_out=b_out,
                    loss_kind=LOSS_KINDS[loss_code],
                    seed=seed,
                )
            )
    return layers[0] if len(layers) == 1 else StackedModel(layers=layers)


def write_json(path, payload) -> None:
    """Canonical JSON (sorted keys, fixed separators) for bit-reproducible
    reports."""
    Path(path).write_text(
        json.dumps(payload, sort_keys=True, separators=(",", ":")) + "\n"
    )
