"""Loading raw interaction events and building the binary user-item matrix.

Input files are headerless delimited text ``user,item,value[,timestamp]``.
Ids are arbitrary strings mapped to dense 0-based indices.  The split
follows the strong-generalization protocol: validation/test users are
disjoint from training users and each held-out user's history is divided
into a fold-in part and a holdout part.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from .errors import (
    ConfigurationError,
    EmptyDatasetError,
    InputError,
    ParseError,
)


@dataclass(frozen=True)
class InteractionEvent:
    user_id: str
    item_id: str
    value: float
    timestamp: int | None = None


@dataclass
class InteractionMatrix:
    """Binary user x item occupancy in row-sparse form.

    ``rows[u]`` is the sorted array of item indices consumed by user ``u``.
    """

    n: int
    m: int
    rows: list[np.ndarray]
    user_ids: list[str]
    item_ids: list[str]
    user_index: dict[str, int] = field(repr=False)
    item_index: dict[str, int] = field(repr=False)

    def to_csr(self, dtype=np.float64) -> sp.csr_matrix:
        indptr = np.zeros(self.n + 1, dtype=np.int64)
        for u, row in enumerate(self.rows):
            indptr[u + 1] = indptr[u] + len(row)
        indices = (
            np.concatenate(self.rows).astype(np.int32)
            if self.n
            else np.zeros(0, dtype=np.int32)
        )
        data = np.ones(len(indices), dtype=dtype)
        return sp.csr_matrix((data, indices, indptr), shape=(self.n, self.m))

    def row_vector(self, u: int, dtype=np.float64) -> np.ndarray:
        x = np.zeros(self.m, dtype=dtype)
        x[self.rows[u]] = 1.0
        return x

    @property
    def nnz(self) -> int:
        return sum(len(r) for r in self.rows)


@dataclass(frozen=True)
class SplitSpec:
    train_users: np.ndarray
    val_users: np.ndarray
    test_users: np.ndarray
    fold_in_fraction: float
    seed: int


@dataclass(frozen=True)
class HeldOutUser:
    user: int
    fold_in: np.ndarray
    holdout: np.ndarray


_DELIMS = {"csv": ",", "tsv": "\t"}


def load_events(path, format="csv", binarize_threshold=0.0):
    """Parse delimited events, keeping rows with value >= threshold."""
    if format not in _DELIMS:
        raise ConfigurationError(f"unknown format {format!r}; expected csv or tsv")
    events = []
    try:
        handle = open(path, newline="")
    except OSError as exc:
        raise InputError(f"cannot read {path}: {exc}") from exc
    with handle:
        reader = csv.reader(handle, delimiter=_DELIMS[format])
        for line_no, record in enumerate(reader, start=1):
            if not record or (len(record) == 1 and not record[0].strip()):
                continue
            if len(record) < 3:
                raise ParseError(
                    f"line {line_no}: expected user,item,value[,timestamp], "
                    f"got {len(record)} fields",
                    line_number=line_no,
                )
            user, item = record[0].strip(), record[1].strip()
            if not user or not item:
                raise ParseError(
                    f"line {line_no}: empty user or item id", line_number=line_no
                )
            try:
                value = float(record[2])
            except ValueError as exc:
                raise ParseError(
                    f"line {line_no}: bad value {record[2]!r}", line_number=line_no
                ) from exc
            if not math.isfinite(value):
                raise ParseError(
                    f"line {line_no}: non-finite value", line_number=line_no
                )
            timestamp = None
            if len(record) >= 4 and record[3].strip():
                try:
                    timestamp = int(float(record[3]))
                except ValueError as exc:
                    raise ParseError(
                        f"line {line_no}: bad timestamp {record[3]!r}",
                        line_number=line_no,
                    ) from exc
            if value >= binarize_threshold:
                events.append(InteractionEvent(user, item, value, timestamp))
    return events


def build_matrix(events, min_user_events=0, min_item_users=0):
    """Binarize, deduplicate and filter events into an InteractionMatrix.

    User-count and item-count filters are applied alternately until a fixed
    point, since removing items can push users below threshold and vice
    versa.
    """
    if not events:
        raise EmptyDatasetError("no events to build a matrix from")

    # user -> set of items, insertion-ordered for deterministic indexing
    pairs: dict[str, dict[str, None]] = {}
    for ev in events:
        pairs.setdefault(ev.user_id, {})[ev.item_id] = None

    while True:
        changed = False
        if min_user_events > 0:
            drop = [u for u, items in pairs.items() if len(items) < min_user_events]
            if drop:
                changed = True
                for u in drop:
                    del pairs[u]
        if min_item_users > 0:
            counts: dict[str, int] = {}
            for items in pairs.values():
                for i in items:
                    counts[i] = counts.get(i, 0) + 1
            bad = {i for i, c in counts.items() if c < min_item_users}
            if bad:
                changed = True
                for u in list(pairs):
                    kept = {i: None for i in pairs[u] if i not in bad}
                    if len(kept) != len(pairs[u]):
                        pairs[u] = kept
                # emptied users re-enter the user filter on the next pass
                empties = [u for u, items in pairs.items() if not items]
                for u in empties:
                    del pairs[u]
        if not changed:
            break

    if not pairs:
        raise EmptyDatasetError("all events removed by count filters")

    user_ids = list(pairs)
    item_ids_seen: dict[str, None] = {}
    for items in pairs.values():
        for i in items:
            item_ids_seen[i] = None
    item_ids = list(item_ids_seen)
    user_index = {u: k for k, u in enumerate(user_ids)}
    item_index = {i: k for k, i in enumerate(item_ids)}

    rows = []
    for u in user_ids:
        idx = np.fromiter(
            (item_index[i] for i in pairs[u]), dtype=np.int32, count=len(pairs[u])
        )
        idx.sort()
        rows.append(idx)

    return InteractionMatrix(
        n=len(user_ids),
        m=len(item_ids),
        rows=rows,
        user_ids=user_ids,
        item_ids=item_ids,
        user_index=user_index,
        item_index=item_index,
    )


def split_users(matrix, n_val, n_test, fold_in_fraction=0.8, seed=0):
    """Pick disjoint validation/test user sets and fold-in/holdout partitions.

    Only users with at least two items are eligible for holding out, so the
    holdout is always non-empty (fold-in size is the ceiling of the
    fraction).  Deterministic given the seed.
    """
    if not 0.0 < fold_in_fraction < 1.0:
        raise ConfigurationError("fold_in_fraction must be in (0, 1)")
    if n_val < 0 or n_test < 0:
        raise ConfigurationError("n_val and n_test must be nonnegative")
    if n_val + n_test >= matrix.n:
        raise ConfigurationError(
            f"n_val + n_test = {n_val + n_test} must be < n = {matrix.n}"
        )

    rng = np.random.default_rng(seed)
    eligible = np.array(
        [u for u in range(matrix.n) if len(matrix.rows[u]) >= 2], dtype=np.int64
    )
    if len(eligible) < n_val + n_test:
        raise ConfigurationError(
            f"only {len(eligible)} users have >= 2 items; "
            f"cannot hold out {n_val + n_test}"
        )
    order = rng.permutation(eligible)
    val = np.sort(order[:n_val])
    test = np.sort(order[n_val : n_val + n_test])
    held = set(val.tolist()) | set(test.tolist())
    train = np.array([u for u in range(matrix.n) if u not in held], dtype=np.int64)

    held_out = []
    for u in np.concatenate([val, test]):
        items = matrix.rows[u]
        k = math.ceil(fold_in_fraction * len(items))
        if k >= len(items):
            k = len(items) - 1
        perm = rng.permutation(len(items))
        fold_in = np.sort(items[perm[:k]])
        holdout = np.sort(items[perm[k:]])
        held_out.append(HeldOutUser(user=int(u), fold_in=fold_in, holdout=holdout))

    spec = SplitSpec(
        train_users=train,
        val_users=val,
        test_users=test,
        fold_in_fraction=fold_in_fraction,
        seed=seed,
    )
    return spec, held_out
