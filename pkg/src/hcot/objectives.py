"""Classification objectives over raw logits, with analytic logit gradients.

Three objectives share one numerical core (a masked, max-shifted softmax):

* cross entropy: ``mean_i -log softmax(z_i)[g_i]``
* complement entropy: ``mean_i H(softmax of z_i restricted to K \\ {g_i})``,
  the Shannon entropy of the prediction renormalized over the incorrect
  classes
* hierarchical complement entropy: ``mean_i [H over siblings of g_i
  + H over non-relatives of g_i]``, the same construction split along a
  two-level label hierarchy

The combined training losses subtract a complement term from cross
entropy, so minimizing them maximizes the complement entropies.  For the
entropy of a subset-restricted softmax, the gradient with respect to an
active logit is ``-p_j (log p_j + H)``; inactive logits (including the
ground truth) get exactly zero.  Empty subsets contribute zero value and
zero gradient, which makes the one-group and all-singletons hierarchies
degenerate to plain complement entropy.

All functions are pure; reductions run in fixed index order, so results
are bit-stable for identical inputs.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .hierarchy import LabelHierarchy

# Probabilities are clamped out of the log argument at this floor so the
# 0*log(0) = 0 convention holds without branching.
_LOG_FLOOR = 1e-300


class ObjectiveError(ValueError):
    """Invalid input to an objective (empty batch, size mismatch, ...)."""


@dataclass(frozen=True)
class LogitBatch:
    """N x K raw scores with one ground-truth fine label per row."""

    values: np.ndarray
    labels: np.ndarray

    def __post_init__(self) -> None:
        values = np.asarray(self.values, dtype=np.float64)
        labels = np.asarray(self.labels, dtype=np.int64)
        if values.ndim != 2:
            raise ObjectiveError(f"logits must be 2-D, got shape {values.shape}")
        if labels.shape != (values.shape[0],):
            raise ObjectiveError(
                f"labels shape {labels.shape} does not match batch of {values.shape[0]}"
            )
        if not np.isfinite(values).all():
            raise ObjectiveError("logits contain non-finite entries")
        if values.shape[0] and (labels.min() < 0 or labels.max() >= values.shape[1]):
            raise ObjectiveError("labels out of range for the class count")
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "labels", labels)

    @property
    def num_samples(self) -> int:
        return self.values.shape[0]

    @property
    def num_classes(self) -> int:
        return self.values.shape[1]


@dataclass(frozen=True)
class ObjectiveResult:
    """Batch-mean objective value with its N x K logit gradient.

    ``per_sample`` holds the unreduced per-row values for diagnostics;
    ``value`` is their mean and ``grad`` already carries the 1/N factor.
    """

    value: float
    grad: np.ndarray
    per_sample: np.ndarray


@dataclass(frozen=True)
class SubsetDistribution:
    """Softmax probabilities restricted to an explicit index subset."""

    indices: np.ndarray
    probs: np.ndarray


def masked_softmax(values: np.ndarray, mask: np.ndarray) -> np.ndarray:
    """Row-wise softmax over the True entries of ``mask``; zero elsewhere.

    Max-shifted before exponentiation so large logits cannot overflow.
    Rows with an empty mask come back all zero.
    """
    shifted_max = np.where(mask, values, -np.inf).max(axis=1, keepdims=True)
    shifted_max = np.where(np.isfinite(shifted_max), shifted_max, 0.0)
    weights = np.exp(np.where(mask, values - shifted_max, -np.inf))
    totals = weights.sum(axis=1, keepdims=True)
    return weights / np.where(totals > 0.0, totals, 1.0)


def _entropy_and_grad(probs: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Per-row Shannon entropy of a masked softmax and its logit gradient.

    grad[j] = -p_j (log p_j + H) on the active set; entries with p_j = 0
    (inactive or underflowed) come out exactly zero.
    """
    logp = np.log(np.maximum(probs, _LOG_FLOOR))
    h = -(probs * logp).sum(axis=1)
    grad = -probs * (logp + h[:, None])
    return h, grad


def _normalization_factors(mask: np.ndarray) -> np.ndarray:
    """Per-row 1/log(subset size); rows with size <= 1 are left unscaled."""
    sizes = mask.sum(axis=1)
    return np.where(sizes > 1, 1.0 / np.log(np.maximum(sizes, 2)), 1.0)


def subset_softmax(z: np.ndarray, subset: "list[int] | tuple[int, ...] | np.ndarray") -> SubsetDistribution:
    """Softmax of one logit row restricted to ``subset``.

    The subset may be empty (an empty distribution is returned).  Indices
    must be distinct and in range.
    """
    z = np.asarray(z, dtype=np.float64)
    if z.ndim != 1:
        raise ObjectiveError(f"expected a 1-D logit row, got shape {z.shape}")
    indices = np.asarray(subset, dtype=np.int64)
    if indices.size == 0:
        return SubsetDistribution(indices=indices, probs=np.zeros(0))
    if indices.min() < 0 or indices.max() >= z.shape[0]:
        raise ObjectiveError("subset index out of range")
    if np.unique(indices).size != indices.size:
        raise ObjectiveError("subset contains duplicate indices")
    selected = z[indices]
    weights = np.exp(selected - selected.max())
    return SubsetDistribution(indices=indices, probs=weights / weights.sum())


def shannon_entropy(d: SubsetDistribution) -> float:
    """-sum p log p in nats; empty and singleton distributions give 0."""
    if d.probs.size <= 1:
        return 0.0
    logp = np.log(np.maximum(d.probs, _LOG_FLOOR))
    return float(-(d.probs * logp).sum())


def cross_entropy(batch: LogitBatch) -> ObjectiveResult:
    """Batch-mean negative log softmax probability of the ground truth.

    grad per row is (softmax(z) - onehot(g)) / N.
    """
    if batch.num_samples == 0:
        raise ObjectiveError("empty batch")
    values, labels = batch.values, batch.labels
    n = batch.num_samples
    rows = np.arange(n)
    shift = values.max(axis=1, keepdims=True)
    weights = np.exp(values - shift)
    totals = weights.sum(axis=1, keepdims=True)
    probs = weights / totals
    log_z = shift[:, 0] + np.log(totals[:, 0])
    per_sample = log_z - values[rows, labels]
    grad = probs.copy()
    grad[rows, labels] -= 1.0
    grad /= n
    return ObjectiveResult(value=float(per_sample.mean()), grad=grad, per_sample=per_sample)


def complement_entropy(batch: LogitBatch, normalize: bool = False) -> ObjectiveResult:
    """Batch-mean entropy of the softmax restricted to the incorrect classes.

    With ``normalize`` each row's entropy (and gradient) is divided by
    log of the subset size; subsets of size <= 1 are left unscaled.
    """
    if batch.num_samples == 0:
        raise ObjectiveError("empty batch")
    if batch.num_classes < 2:
        raise ObjectiveError("complement entropy needs at least 2 classes")
    n = batch.num_samples
    mask = np.ones_like(batch.values, dtype=bool)
    mask[np.arange(n), batch.labels] = False
    probs = masked_softmax(batch.values, mask)
    per_sample, grad = _entropy_and_grad(probs)
    if normalize:
        factors = _normalization_factors(mask)
        per_sample = per_sample * factors
        grad = grad * factors[:, None]
    return ObjectiveResult(value=float(per_sample.mean()), grad=grad / n, per_sample=per_sample)


def hierarchical_complement_entropy(
    batch: LogitBatch, h: LabelHierarchy, normalize: bool = False
) -> ObjectiveResult:
    """Sibling-subset entropy plus non-relative-subset entropy, batch-mean.

    The two subsets are disjoint, so the gradient is the sum of the two
    subset-entropy gradients and stays exactly zero at the ground truth.
    Empty subsets (one-group or singleton-group hierarchies) contribute
    zero, which reduces this objective to plain complement entropy.
    """
    if batch.num_samples == 0:
        raise ObjectiveError("empty batch")
    if h.num_fine != batch.num_classes:
        raise ObjectiveError(
            f"hierarchy covers {h.num_fine} classes but logits have {batch.num_classes}"
        )
    n = batch.num_samples
    inner_mask = h.inner_masks[batch.labels]
    outer_mask = h.outer_masks[batch.labels]
    inner_h, inner_grad = _entropy_and_grad(masked_softmax(batch.values, inner_mask))
    outer_h, outer_grad = _entropy_and_grad(masked_softmax(batch.values, outer_mask))
    if normalize:
        inner_factors = _normalization_factors(inner_mask)
        outer_factors = _normalization_factors(outer_mask)
        inner_h, inner_grad = inner_h * inner_factors, inner_grad * inner_factors[:, None]
        outer_h, outer_grad = outer_h * outer_factors, outer_grad * outer_factors[:, None]
    per_sample = inner_h + outer_h
    grad = (inner_grad + outer_grad) / n
    return ObjectiveResult(value=float(per_sample.mean()), grad=grad, per_sample=per_sample)


def _combined(primary: ObjectiveResult, complement: ObjectiveResult) -> ObjectiveResult:
    return ObjectiveResult(
        value=primary.value - complement.value,
        grad=primary.grad - complement.grad,
        per_sample=primary.per_sample - complement.per_sample,
    )


def cot_loss(batch: LogitBatch, normalize: bool = False) -> ObjectiveResult:
    """Cross entropy minus complement entropy."""
    return _combined(cross_entropy(batch), complement_entropy(batch, normalize))


def hcot_loss(batch: LogitBatch, h: LabelHierarchy, normalize: bool = False) -> ObjectiveResult:
    """Cross entropy minus hierarchical complement entropy."""
    return _combined(
        cross_entropy(batch), hierarchical_complement_entropy(batch, h, normalize)
    )


OBJECTIVES = ("xe", "cot", "hcot")


@dataclass(frozen=True)
class LossBreakdown:
    """Combined training loss plus its components for logging.

    ``complement_value`` is NaN when the objective has no complement term;
    ``complement_used`` records whether that term fed the gradient.
    """

    total: ObjectiveResult
    xe_value: float
    complement_value: float
    complement_used: bool


def training_loss(
    batch: LogitBatch,
    h: "LabelHierarchy | None",
    objective: str,
    normalize: bool = False,
) -> LossBreakdown:
    """Dispatch the configured training objective.

    ``xe`` ignores the hierarchy, ``cot`` subtracts plain complement
    entropy, ``hcot`` subtracts the hierarchical variant (``h`` required).
    """
    if objective == "xe":
        xe = cross_entropy(batch)
        return LossBreakdown(
            total=xe, xe_value=xe.value, complement_value=float("nan"), complement_used=False
        )
    if objective == "cot":
        xe = cross_entropy(batch)
        comp = complement_entropy(batch, normalize)
        return LossBreakdown(
            total=_combined(xe, comp),
            xe_value=xe.value,
            complement_value=comp.value,
            complement_used=True,
        )
    if objective == "hcot":
        if h is None:
            raise ObjectiveError("objective 'hcot' requires a label hierarchy")
        xe = cross_entropy(batch)
        comp = hierarchical_complement_entropy(batch, h, normalize)
        return LossBreakdown(
            total=_combined(xe, comp),
            xe_value=xe.value,
            complement_value=comp.value,
            complement_used=True,
        )
    raise ObjectiveError(f"unknown objective {objective!r}; expected one of {OBJECTIVES}")


def complement_term(
    batch: LogitBatch,
    h: "LabelHierarchy | None",
    objective: str,
    normalize: bool = False,
) -> ObjectiveResult:
    """The complement entropy an objective maximizes (ascent direction).

    Used by the alternating schedule, where the complement step descends
    on the negated value.  ``xe`` has no complement term.
    """
    if objective == "cot":
        return complement_entropy(batch, normalize)
    if objective == "hcot":
        if h is None:
            raise ObjectiveError("objective 'hcot' requires a label hierarchy")
        return hierarchical_complement_entropy(batch, h, normalize)
    raise ObjectiveError(f"objective {objective!r} has no complement term")
