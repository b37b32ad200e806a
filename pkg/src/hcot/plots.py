"""Figure rendering for run artifacts; written next to the CSV output."""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402

from .metrics import MetricsRecord, ProfileRow  # noqa: E402

_GROUP_COLORS = {"g": "#c0392b", "inner": "#27ae60", "outer": "#2980b9"}
_GROUP_LABELS = {
    "g": "ground truth",
    "inner": "same coarse group",
    "outer": "other coarse groups",
}


def render_profile(rows: "list[ProfileRow]", path: str) -> None:
    """Bar chart of the sorted-probability profile, one bar per rank."""
    order = {"g": 0, "inner": 1, "outer": 2}
    rows = sorted(rows, key=lambda r: (order[r.rank_group], r.rank))
    positions = range(len(rows))
    heights = [max(r.mean_probability, 1e-12) for r in rows]
    colors = [_GROUP_COLORS[r.rank_group] for r in rows]
    fig, ax = plt.subplots(figsize=(7, 4))
    ax.bar(positions, heights, color=colors)
    ax.set_yscale("log")
    ax.set_xlabel("class rank (sorted within group)")
    ax.set_ylabel("mean predicted probability")
    handles = [
        plt.Rectangle((0, 0), 1, 1, color=_GROUP_COLORS[g]) for g in ("g", "inner", "outer")
    ]
    ax.legend(handles, [_GROUP_LABELS[g] for g in ("g", "inner", "outer")], frameon=False)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def render_training_curves(records: "list[MetricsRecord]", path: str) -> None:
    epochs = [r.epoch for r in records]
    fig, (ax1, ax2) = plt.subplots(1, 2, figsize=(10, 4))
    ax1.plot(epochs, [r.fine_error for r in records], label="fine error")
    ax1.plot(epochs, [r.coarse_error for r in records], label="coarse error")
    ax1.plot(epochs, [r.top5_error for r in records], label="top-5 error")
    ax1.set_xlabel("epoch")
    ax1.set_ylabel("error rate")
    ax1.legend(frameon=False)
    ax2.plot(epochs, [r.xe_loss for r in records], label="cross entropy")
    ax2.plot(epochs, [r.hce_loss for r in records], label="complement entropy")
    ax2.set_xlabel("epoch")
    ax2.set_ylabel("test-split loss component")
    ax2.legend(frameon=False)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def render_compare(rows: "list[dict]", path: str) -> None:
    objectives = [row["objective"] for row in rows]
    x = range(len(objectives))
    width = 0.35
    fig, ax = plt.subplots(figsize=(6, 4))
    ax.bar([i - width / 2 for i in x], [row["fine_error"] for row in rows], width, label="fine error")
    ax.bar([i + width / 2 for i in x], [row["coarse_error"] for row in rows], width, label="coarse error")
    ax.set_xticks(list(x))
    ax.set_xticklabels(objectives)
    ax.set_ylabel("test error rate")
    ax.legend(frameon=False)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def render_ablation(rows: "list[dict]", path: str) -> None:
    n_values = [row["n_coarse"] for row in rows]
    fig, ax1 = plt.subplots(figsize=(6, 4))
    ax1.plot(n_values, [row["fine_error"] for row in rows], "o-", color="#2c3e50")
    ax1.set_xlabel("number of coarse groups")
    ax1.set_ylabel("fine error", color="#2c3e50")
    ax2 = ax1.twinx()
    ax2.plot(n_values, [row["staircase_gap"] for row in rows], "s--", color="#c0392b")
    ax2.set_ylabel("sibling vs non-relative probability gap", color="#c0392b")
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
