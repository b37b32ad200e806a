"""Evaluation and diagnostics: error rates, mass splits, probability profiles.

Coarse predictions are always derived by mapping the fine argmax through
the hierarchy; there is no separate coarse head.  Argmax ties break toward
the lowest class index.  All computations are pure functions of their
inputs.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, fields

import numpy as np

from .hierarchy import LabelHierarchy
from .network import Network
from .objectives import LogitBatch, masked_softmax


class MetricsError(ValueError):
    pass


@dataclass(frozen=True)
class MetricsRecord:
    """One evaluation row; the CSV header lists these fields in order."""

    epoch: int
    fine_error: float
    coarse_error: float
    top5_error: float
    mean_mass_g: float
    mean_mass_inner: float
    mean_mass_outer: float
    xe_loss: float
    hce_loss: float


METRICS_FIELDS = tuple(f.name for f in fields(MetricsRecord))


@dataclass(frozen=True)
class ProfileRow:
    """Position-wise mean of sorted probabilities within one rank group."""

    rank_group: str  # g | inner | outer
    rank: int
    mean_probability: float


PROFILE_FIELDS = ("rank_group", "rank", "mean_probability")


def _full_softmax(batch: LogitBatch) -> np.ndarray:
    return masked_softmax(batch.values, np.ones_like(batch.values, dtype=bool))


def predictions(batch: LogitBatch) -> np.ndarray:
    """Fine argmax per row; ties go to the lowest index."""
    return batch.values.argmax(axis=1)


def fine_error(batch: LogitBatch) -> float:
    if batch.num_samples == 0:
        raise MetricsError("empty batch")
    return float((predictions(batch) != batch.labels).mean())


def coarse_error(batch: LogitBatch, h: LabelHierarchy) -> float:
    """Fraction of rows whose fine argmax falls outside the true coarse group."""
    if batch.num_samples == 0:
        raise MetricsError("empty batch")
    coarse = h.coarse_map
    return float((coarse[predictions(batch)] != coarse[batch.labels]).mean())


def topk_error(batch: LogitBatch, k: int) -> float:
    """Fraction of rows where the label is not among the k largest logits.

    A label ranked exactly k-th is not an error; ties rank lower indices
    first, consistent with the argmax convention.
    """
    if not 1 <= k <= batch.num_classes:
        raise MetricsError(f"k={k} out of range [1, {batch.num_classes}]")
    rows = np.arange(batch.num_samples)
    z_g = batch.values[rows, batch.labels][:, None]
    greater = (batch.values > z_g).sum(axis=1)
    cols = np.arange(batch.num_classes)[None, :]
    equal_lower = ((batch.values == z_g) & (cols < batch.labels[:, None])).sum(axis=1)
    rank = greater + equal_lower
    return float((rank >= k).mean())


def mass_summary(batch: LogitBatch, h: LabelHierarchy) -> tuple[float, float, float]:
    """Mean over rows of (p_g, summed sibling mass, summed non-relative mass).

    Computed from the full softmax, so the three means add to 1.
    """
    probs = _full_softmax(batch)
    rows = np.arange(batch.num_samples)
    mass_g = probs[rows, batch.labels]
    inner = (probs * h.inner_masks[batch.labels]).sum(axis=1)
    outer = (probs * h.outer_masks[batch.labels]).sum(axis=1)
    return float(mass_g.mean()), float(inner.mean()), float(outer.mean())


def staircase_gap(batch: LogitBatch, h: LabelHierarchy) -> float:
    """Mean per-row gap between average sibling and average non-relative
    probability; empty groups contribute zero to their side."""
    probs = _full_softmax(batch)
    inner_mask = h.inner_masks[batch.labels]
    outer_mask = h.outer_masks[batch.labels]
    inner_count = inner_mask.sum(axis=1)
    outer_count = outer_mask.sum(axis=1)
    inner_mean = np.where(
        inner_count > 0, (probs * inner_mask).sum(axis=1) / np.maximum(inner_count, 1), 0.0
    )
    outer_mean = np.where(
        outer_count > 0, (probs * outer_mask).sum(axis=1) / np.maximum(outer_count, 1), 0.0
    )
    return float((inner_mean - outer_mean).mean())


def _group_profile(probs: np.ndarray, mask: np.ndarray, group: str) -> list[ProfileRow]:
    # Sort each row's masked probabilities descending; -1 marks inactive
    # entries (probabilities are >= 0, so they sort last).
    filled = np.where(mask, probs, -1.0)
    ordered = np.sort(filled, axis=1)[:, ::-1]
    valid = ordered >= 0.0
    sums = np.where(valid, ordered, 0.0).sum(axis=0)
    counts = valid.sum(axis=0)
    return [
        ProfileRow(group, rank, float(sums[rank] / counts[rank]))
        for rank in range(probs.shape[1])
        if counts[rank] > 0
    ]


def probability_profile(batch: LogitBatch, h: LabelHierarchy) -> list[ProfileRow]:
    """Position-wise averaged sorted probabilities per rank group.

    Per row: the ground-truth probability, the descending-sorted sibling
    probabilities, and the descending-sorted non-relative probabilities,
    all from the full softmax; each rank is averaged over the rows that
    have it.
    """
    if batch.num_samples == 0:
        raise MetricsError("empty batch")
    probs = _full_softmax(batch)
    rows = np.arange(batch.num_samples)
    out = [ProfileRow("g", 0, float(probs[rows, batch.labels].mean()))]
    out += _group_profile(probs, h.inner_masks[batch.labels], "inner")
    out += _group_profile(probs, h.outer_masks[batch.labels], "outer")
    return out


def penultimate_activations(net: Network, inputs: np.ndarray) -> np.ndarray:
    """Input to the final layer, used as the sample embedding."""
    if net.num_layers < 2:
        raise MetricsError("network too shallow: need at least 2 layers for embeddings")
    _, cache = net.forward(inputs)
    return cache.penultimate


def export_embeddings(net: Network, inputs: np.ndarray, fine_labels: np.ndarray,
                      h: LabelHierarchy, path: str) -> int:
    """Write penultimate activations with fine/coarse labels as CSV.

    Returns the number of data rows written.  Output is deterministic for
    a fixed network and dataset.
    """
    acts = penultimate_activations(net, inputs)
    coarse = h.coarse_map[np.asarray(fine_labels, dtype=np.int64)]
    header = [f"dim_{i}" for i in range(acts.shape[1])] + ["fine_label", "coarse_label"]
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for row, f, c in zip(acts, fine_labels, coarse):
            writer.writerow([repr(float(v)) for v in row] + [int(f), int(c)])
    return acts.shape[0]


def write_metrics_csv(records: "list[MetricsRecord]", path: str) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(METRICS_FIELDS)
        for rec in records:
            writer.writerow(
                [rec.epoch] + [repr(float(getattr(rec, name))) for name in METRICS_FIELDS[1:]]
            )


def read_metrics_csv(path: str) -> list[MetricsRecord]:
    with open(path, "r", newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        return [
            MetricsRecord(
                epoch=int(row["epoch"]),
                **{name: float(row[name]) for name in METRICS_FIELDS[1:]},
            )
            for row in reader
        ]


def write_profile_csv(rows: "list[ProfileRow]", path: str) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(PROFILE_FIELDS)
        for row in rows:
            writer.writerow([row.rank_group, row.rank, repr(float(row.mean_probability))])


def read_profile_csv(path: str) -> list[ProfileRow]:
    with open(path, "r", newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        return [
            ProfileRow(row["rank_group"], int(row["rank"]), float(row["mean_probability"]))
            for row in reader
        ]
