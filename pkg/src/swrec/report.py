"""Delimited reports and the figures rendered alongside them."""

from __future__ import annotations

import csv
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402


def write_csv(path, rows: list[dict], fieldnames=None) -> None:
    if fieldnames is None:
        fieldnames = list(rows[0]) if rows else []
    with open(path, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=fieldnames)
        writer.writeheader()
        writer.writerows(rows)


def plot_sweep(rows: list[dict], axis: str, path) -> None:
    """Validation/test NDCG@100 against the sweep axis, mean over seeds."""
    values = sorted({row[axis] for row in rows})
    fig, ax = plt.subplots(figsize=(5, 3.2))
    for metric, style in (("val_ndcg@100", "o-"), ("test_ndcg@100", "s--")):
        means = []
        for v in values:
            pts = [row[metric] for row in rows if row[axis] == v and metric in row]
            means.append(sum(pts) / len(pts) if pts else float("nan"))
        ax.plot(values, means, style, label=metric)
    ax.set_xlabel(axis)
    ax.set_ylabel("NDCG@100")
    ax.legend()
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def plot_norm_series(entries: list[dict], path) -> None:
    """Encoder spectral norm and generalization bound per epoch."""
    epochs = [e["epoch"] for e in entries]
    fig, axes = plt.subplots(1, 2, figsize=(8, 3.2))
    axes[0].plot(epochs, [e["encoder_spectral_norm"] for e in entries], "o-")
    axes[0].set_xlabel("epoch")
    axes[0].set_ylabel("encoder spectral norm")
    axes[1].plot(epochs, [e["generalization_bound"] for e in entries], "s-")
    axes[1].set_xlabel("epoch")
    axes[1].set_ylabel("generalization bound")
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def plot_metric_histograms(per_user: dict, cutoffs, path) -> None:
    """Per-user metric distributions for an evaluation report."""
    metrics = [f"recall@{c}" for c in cutoffs] + [f"ndcg@{c}" for c in cutoffs]
    metrics = [m for m in metrics if m in per_user]
    fig, axes = plt.subplots(1, len(metrics), figsize=(3 * len(metrics), 3))
    if len(metrics) == 1:
        axes = [axes]
    for ax, metric in zip(axes, metrics):
        ax.hist(per_user[metric], bins=20, range=(0, 1))
        ax.set_title(metric)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def eval_artifacts(report, out_json_path) -> None:
    """Write the JSON report plus per-user CSV and histogram figure next
    to it."""
    from .storage import write_json

    out = Path(out_json_path)
    write_json(out, report.to_dict())
    rows = []
    count = report.user_count
    for i in range(count):
        row = {"user": report.per_user["user"][i]}
        for key, vals in report.per_user.items():
            if key != "user":
                row[key] = vals[i]
        rows.append(row)
    write_csv(out.with_suffix(".csv"), rows)
    plot_metric_histograms(report.per_user, report.cutoffs, out.with_suffix(".png"))
