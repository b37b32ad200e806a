"""SGD-with-momentum training in two schedules.

The direct schedule takes one step per minibatch on the combined loss
(cross entropy minus the complement term).  The alternating schedule takes
two: first an ascent step on the complement entropy (descent on its
negation), then, after a fresh forward pass on the same minibatch, a
descent step on cross entropy.  Each phase of the alternating schedule
keeps its own velocity buffers.

Everything is deterministic given the config: shuffling draws a fresh
permutation per epoch from (seed, epoch), and batches are visited in
fixed order.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .data import Dataset
from .hierarchy import LabelHierarchy
from .network import Network
from .objectives import LogitBatch, complement_term, training_loss

SCHEDULES = ("direct", "alternating")


class NumericalError(RuntimeError):
    """A loss or parameter became non-finite during training."""


@dataclass(frozen=True)
class TrainConfig:
    epochs: int
    batch_size: int
    lr: float
    momentum: float = 0.9
    weight_decay: float = 1e-4
    lr_milestones: tuple[int, ...] = ()
    seed: int = 0
    objective: str = "hcot"
    schedule: str = "direct"
    normalize_entropy: bool = False
    # Learning-rate multiplier for the complement step of the alternating
    # schedule; both steps share the base rate by default.
    complement_lr_scale: float = 1.0

    def __post_init__(self) -> None:
        if self.epochs < 1:
            raise ValueError("epochs must be >= 1")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if not self.lr > 0:
            raise ValueError("lr must be > 0")
        if not 0.0 <= self.momentum < 1.0:
            raise ValueError("momentum must be in [0, 1)")
        if self.weight_decay < 0:
            raise ValueError("weight_decay must be >= 0")
        milestones = tuple(int(m) for m in self.lr_milestones)
        if list(milestones) != sorted(set(milestones)):
            raise ValueError("lr_milestones must be strictly increasing")
        if milestones and (milestones[0] < 0 or milestones[-1] >= self.epochs):
            raise ValueError("lr_milestones must lie in [0, epochs)")
        if self.objective not in ("xe", "cot", "hcot"):
            raise ValueError(f"unknown objective {self.objective!r}")
        if self.schedule not in SCHEDULES:
            raise ValueError(f"unknown schedule {self.schedule!r}")
        if self.seed < 0:
            raise ValueError("seed must be non-negative")
        if not self.complement_lr_scale > 0:
            raise ValueError("complement_lr_scale must be > 0")
        object.__setattr__(self, "lr_milestones", milestones)


@dataclass
class OptimizerState:
    """Velocity buffers matching the network parameters, zero at start."""

    velocities: list[np.ndarray]

    @classmethod
    def for_network(cls, net: Network) -> "OptimizerState":
        return cls(velocities=[np.zeros_like(p) for p in net.parameters()])


@dataclass
class TrainerState:
    """Optimizer state for both phases; the direct schedule uses ``primary``."""

    primary: OptimizerState
    complement: OptimizerState

    @classmethod
    def for_network(cls, net: Network) -> "TrainerState":
        return cls(
            primary=OptimizerState.for_network(net),
            complement=OptimizerState.for_network(net),
        )


@dataclass
class EpochStats:
    epoch: int
    lr: float
    batches: int
    updates: int
    mean_loss: float
    mean_xe: float
    mean_complement: float
    complement_used: bool
    batch_losses: list[float] = field(default_factory=list)


def sgd_step(
    net: Network,
    state: OptimizerState,
    lr: float,
    momentum: float,
    weight_decay: float,
) -> None:
    """v <- momentum*v + grad + weight_decay*theta; theta <- theta - lr*v.

    Gradient buffers are left untouched; the caller clears them.
    """
    for param, grad, vel in zip(net.parameters(), net.gradients(), state.velocities):
        vel *= momentum
        vel += grad
        if weight_decay:
            vel += weight_decay * param
        param -= lr * vel
    net.mark_parameters_updated()


def lr_at(cfg: TrainConfig, epoch: int) -> float:
    """Initial rate divided by 10 at each milestone reached."""
    drops = sum(1 for m in cfg.lr_milestones if m <= epoch)
    return cfg.lr * (0.1**drops)


def epoch_permutation(seed: int, epoch: int, n: int) -> np.ndarray:
    """Deterministic shuffle for one epoch, derived from (seed, epoch)."""
    rng = np.random.default_rng(np.random.SeedSequence([seed, epoch]))
    return rng.permutation(n)


def _check_finite(value: float, epoch: int, batch_index: int) -> None:
    if not np.isfinite(value):
        raise NumericalError(
            f"non-finite loss {value!r} at epoch {epoch}, batch {batch_index}"
        )


def _checked_batch(logits: np.ndarray, labels: np.ndarray, epoch: int, batch_index: int) -> LogitBatch:
    if not np.isfinite(logits).all():
        raise NumericalError(
            f"non-finite logits at epoch {epoch}, batch {batch_index} "
            "(training diverged)"
        )
    return LogitBatch(logits, labels)


def _minibatches(data: Dataset, cfg: TrainConfig, epoch: int):
    n = data.inputs.shape[0]
    perm = epoch_permutation(cfg.seed, epoch, n)
    for batch_index, start in enumerate(range(0, n, cfg.batch_size)):
        idx = perm[start : start + cfg.batch_size]
        yield batch_index, data.inputs[idx], data.fine_labels[idx]


def train_epoch_direct(
    net: Network,
    data: Dataset,
    h: "LabelHierarchy | None",
    cfg: TrainConfig,
    state: TrainerState,
    epoch: int,
    augment_fn=None,
) -> EpochStats:
    """One pass over the data: single combined-loss update per minibatch."""
    if data.inputs.shape[0] == 0:
        raise ValueError("empty dataset")
    lr = lr_at(cfg, epoch)
    losses: list[float] = []
    xe_sum = 0.0
    comp_sum = 0.0
    comp_used = False
    updates = 0
    for batch_index, inputs, labels in _minibatches(data, cfg, epoch):
        if augment_fn is not None:
            inputs = augment_fn(epoch, batch_index, inputs)
        logits, cache = net.forward(inputs)
        breakdown = training_loss(
            _checked_batch(logits, labels, epoch, batch_index), h, cfg.objective,
            cfg.normalize_entropy,
        )
        _check_finite(breakdown.total.value, epoch, batch_index)
        net.zero_gradients()
        net.backward(cache, breakdown.total.grad)
        sgd_step(net, state.primary, lr, cfg.momentum, cfg.weight_decay)
        updates += 1
        losses.append(breakdown.total.value)
        xe_sum += breakdown.xe_value
        if breakdown.complement_used:
            comp_sum += breakdown.complement_value
            comp_used = True
    batches = len(losses)
    return EpochStats(
        epoch=epoch,
        lr=lr,
        batches=batches,
        updates=updates,
        mean_loss=sum(losses) / batches,
        mean_xe=xe_sum / batches,
        mean_complement=comp_sum / batches if comp_used else float("nan"),
        complement_used=comp_used,
        batch_losses=losses,
    )


def train_epoch_alternating(
    net: Network,
    data: Dataset,
    h: "LabelHierarchy | None",
    cfg: TrainConfig,
    state: TrainerState,
    epoch: int,
    augment_fn=None,
) -> EpochStats:
    """One pass with two updates per minibatch.

    Step 1 descends on the negated complement entropy (i.e. ascends it);
    step 2 re-runs the forward pass (parameters moved) and descends on
    cross entropy.  With objective ``xe`` step 1 is skipped and the epoch
    collapses to plain cross-entropy training.
    """
    if data.inputs.shape[0] == 0:
        raise ValueError("empty dataset")
    lr = lr_at(cfg, epoch)
    losses: list[float] = []
    xe_sum = 0.0
    comp_sum = 0.0
    comp_used = False
    updates = 0
    for batch_index, inputs, labels in _minibatches(data, cfg, epoch):
        if augment_fn is not None:
            inputs = augment_fn(epoch, batch_index, inputs)
        comp_value = float("nan")
        if cfg.objective != "xe":
            logits, cache = net.forward(inputs)
            comp = complement_term(
                _checked_batch(logits, labels, epoch, batch_index), h, cfg.objective,
                cfg.normalize_entropy,
            )
            _check_finite(comp.value, epoch, batch_index)
            net.zero_gradients()
            net.backward(cache, -comp.grad)
            sgd_step(
                net,
                state.complement,
                lr * cfg.complement_lr_scale,
                cfg.momentum,
                cfg.weight_decay,
            )
            updates += 1
            comp_value = comp.value
            comp_sum += comp_value
            comp_used = True
        logits, cache = net.forward(inputs)
        breakdown = training_loss(
            _checked_batch(logits, labels, epoch, batch_index), None, "xe",
            cfg.normalize_entropy,
        )
        _check_finite(breakdown.total.value, epoch, batch_index)
        net.zero_gradients()
        net.backward(cache, breakdown.total.grad)
        sgd_step(net, state.primary, lr, cfg.momentum, cfg.weight_decay)
        updates += 1
        xe_sum += breakdown.xe_value
        if cfg.objective != "xe":
            losses.append(breakdown.xe_value - comp_value)
        else:
            losses.append(breakdown.xe_value)
    batches = len(losses)
    return EpochStats(
        epoch=epoch,
        lr=lr,
        batches=batches,
        updates=updates,
        mean_loss=sum(losses) / batches,
        mean_xe=xe_sum / batches,
        mean_complement=comp_sum / batches if comp_used else float("nan"),
        complement_used=comp_used,
        batch_losses=losses,
    )


def train_epoch(
    net: Network,
    data: Dataset,
    h: "LabelHierarchy | None",
    cfg: TrainConfig,
    state: TrainerState,
    epoch: int,
    augment_fn=None,
) -> EpochStats:
    fn = train_epoch_direct if cfg.schedule == "direct" else train_epoch_alternating
    return fn(net, data, h, cfg, state, epoch, augment_fn)
