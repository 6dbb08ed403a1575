"""Top-N ranking evaluation: Recall@R, NDCG@R, cold-start slicing.

Held-out users are scored by a clean forward pass on their fold-in items;
fold-in items are excluded from the ranking and the holdout items act as
binary relevance labels.  Ties among equal scores are broken by a seeded
random permutation applied before a stable sort, so degenerate models do
not pick up index-order bias.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import ConfigurationError


@dataclass
class RankedList:
    user: int
    ordering: np.ndarray  # item ids, best first, fold-in excluded
    scores: np.ndarray  # aligned with ordering


@dataclass
class EvalReport:
    cutoffs: tuple
    user_count: int
    per_user: dict  # metric name -> list of per-user values
    means: dict  # metric name -> float
    config: dict

    def to_dict(self) -> dict:
        return {
            "cutoffs": list(self.cutoffs),
            "user_count": self.user_count,
            "means": self.means,
            "per_user": {k: list(map(float, v)) for k, v in self.per_user.items()},
            "config": self.config,
        }


def score_user(model, fold_in: np.ndarray, m: int) -> np.ndarray:
    """Decoder logits from the binary fold-in vector (no corruption)."""
    x = np.zeros(m)
    x[fold_in] = 1.0
    return model.score(x)


def rank_items(scores: np.ndarray, exclude: np.ndarray, tie_perm: np.ndarray) -> RankedList:
    """Order all non-excluded items by descending score.

    ``tie_perm`` is a permutation of the item ids; equal scores keep its
    order under the stable sort.
    """
    shuffled_scores = scores[tie_perm]
    order = np.argsort(-shuffled_scores, kind="stable")
    ordering = tie_perm[order]
    keep = ~np.isin(ordering, exclude)
    ordering = ordering[keep]
    return RankedList(user=-1, ordering=ordering, scores=scores[ordering])


def recall_at(ranked: RankedList, holdout, cutoff: int) -> float:
    if cutoff < 1:
        raise ConfigurationError("cutoff must be >= 1")
    holdout = np.asarray(holdout)
    if holdout.size == 0:
        raise ConfigurationError("empty holdout; user should be excluded upstream")
    top = ranked.ordering[:cutoff]
    hits = int(np.isin(top, holdout).sum())
    return hits / min(cutoff, holdout.size)


def ndcg_at(ranked: RankedList, holdout, cutoff: int) -> float:
    if cutoff < 1:
        raise ConfigurationError("cutoff must be >= 1")
    holdout = np.asarray(holdout)
    if holdout.size == 0:
        raise ConfigurationError("empty holdout; user should be excluded upstream")
    top = ranked.ordering[:cutoff]
    rel = np.isin(top, holdout)
    ranks = np.arange(1, len(top) + 1)
    dcg = float((rel / np.log2(ranks + 1)).sum())
    n_ideal = min(cutoff, holdout.size)
    idcg = float((1.0 / np.log2(np.arange(1, n_ideal + 1) + 1)).sum())
    return dcg / idcg


def evaluate(model, held_out_users, m: int, cutoffs=(20, 50, 100), tie_seed=0,
             config=None) -> EvalReport:
    """Score, rank and aggregate metrics over held-out users.

    The tie permutation is drawn once per user from a generator seeded with
    ``tie_seed``, so the report is deterministic.
    """
    rng = np.random.default_rng(tie_seed)
    per_user: dict[str, list[float]] = {}
    for c in cutoffs:
        per_user[f"recall@{c}"] = []
        per_user[f"ndcg@{c}"] = []
    users = []
    for hu in held_out_users:
        scores = score_user(model, hu.fold_in, m)
        ranked = rank_items(scores, hu.fold_in, rng.permutation(m))
        ranked.user = hu.user
        users.append(hu.user)
        for c in cutoffs:
            per_user[f"recall@{c}"].append(recall_at(ranked, hu.holdout, c))
            per_user[f"ndcg@{c}"].append(ndcg_at(ranked, hu.holdout, c))
    means = {k: (float(np.mean(v)) if v else math.nan) for k, v in per_user.items()}
    report_config = {"cutoffs": list(cutoffs), "tie_seed": tie_seed}
    if config:
        report_config.update(config)
    per_user["user"] = users
    return EvalReport(
        cutoffs=tuple(cutoffs),
        user_count=len(users),
        per_user=per_user,
        means=means,
        config=report_config,
    )


def cold_start_filter(held_out_users, mode: str, value) -> list:
    """Keep only low-activity users, by fold-in size.

    ``mode`` is ``count_at_most`` (keep users with <= value fold-in items)
    or ``bottom_quantile`` (keep the fraction ``value`` of users with the
    smallest fold-in sets; ties resolve by user index).
    """
    if mode == "count_at_most":
        subset = [hu for hu in held_out_users if hu.fold_in.size <= value]
    elif mode == "bottom_quantile":
        if not 0.0 < value <= 1.0:
            raise ConfigurationError("quantile must be in (0, 1]")
        keyed = sorted(held_out_users, key=lambda hu: (hu.fold_in.size, hu.user))
        count = int(round(value * len(keyed)))
        subset = keyed[:count]
    else:
        raise ConfigurationError(f"unknown cold-start mode {mode!r}")
    if not subset:
        raise ConfigurationError("cold-start filter selected no users")
    return subset
