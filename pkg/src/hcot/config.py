"""Experiment configuration: YAML schema, validation, and seed fan-out.

One master seed drives a whole run.  Purpose-specific seeds are derived
through numpy's SeedSequence with a documented stream index, so data
generation, parameter init, and epoch shuffling draw from independent,
reproducible streams:

    stream 0 -> dataset generation
    stream 1 -> network init
    stream 2 -> epoch shuffling / training
    stream 3 -> input augmentation

The derived seed for stream i is the first 64-bit word of
``SeedSequence([master, i]).generate_state(1)``.
"""

from __future__ import annotations

import hashlib
import json
import os
from dataclasses import dataclass, field

import numpy as np
import yaml

from .data import SyntheticSpec
from .trainer import TrainConfig

ENV_DATA_DIR = "HCE_DATA_DIR"

SEED_STREAM_DATA = 0
SEED_STREAM_INIT = 1
SEED_STREAM_TRAIN = 2
SEED_STREAM_AUGMENT = 3

HIERARCHY_BUILTINS = ("data", "none", "builtin:flat", "builtin:identity")


class ConfigError(ValueError):
    """Invalid or incoherent experiment configuration."""


def derive_seed(master: int, stream: int) -> int:
    """Deterministic per-purpose seed from the master seed."""
    ss = np.random.SeedSequence([int(master), int(stream)])
    return int(ss.generate_state(1, np.uint64)[0])


@dataclass(frozen=True)
class DatasetConfig:
    kind: str  # synthetic | cifar100
    synthetic: "SyntheticSpec | None" = None
    cifar_path: "str | None" = None
    augment: bool = False
    normalize: bool = True


@dataclass(frozen=True)
class ExperimentConfig:
    dataset: DatasetConfig
    hierarchy: str
    hidden: tuple[int, ...]
    train: TrainConfig
    seed: int
    output: str
    granularities: tuple[int, ...] = ()
    ablation_hierarchies: "dict[int, str]" = field(default_factory=dict)

    def to_dict(self) -> dict:
        d: dict = {
            "dataset": {"kind": self.dataset.kind},
            "hierarchy": self.hierarchy,
            "network": {"hidden": list(self.hidden)},
            "train": {
                "objective": self.train.objective,
                "schedule": self.train.schedule,
                "epochs": self.train.epochs,
                "batch_size": self.train.batch_size,
                "lr": self.train.lr,
                "momentum": self.train.momentum,
                "weight_decay": self.train.weight_decay,
                "lr_milestones": list(self.train.lr_milestones),
                "normalize_entropy": self.train.normalize_entropy,
                "complement_lr_scale": self.train.complement_lr_scale,
            },
            "seed": self.seed,
            "output": self.output,
        }
        if self.dataset.kind == "synthetic":
            spec = self.dataset.synthetic
            d["dataset"].update(
                num_coarse=spec.num_coarse,
                fines_per_coarse=spec.fines_per_coarse,
                dim=spec.dim,
                samples_per_fine=spec.samples_per_fine,
                coarse_spread=spec.coarse_spread,
                fine_spread=spec.fine_spread,
                noise_sigma=spec.noise_sigma,
            )
        else:
            d["dataset"].update(
                path=self.dataset.cifar_path,
                augment=self.dataset.augment,
                normalize=self.dataset.normalize,
            )
        if self.granularities:
            d["ablation"] = {
                "granularities": list(self.granularities),
                "hierarchies": {str(k): v for k, v in self.ablation_hierarchies.items()},
            }
        return d


def config_digest(cfg: ExperimentConfig) -> str:
    """SHA-256 of the canonical JSON form of the resolved config."""
    canonical = json.dumps(cfg.to_dict(), sort_keys=True)
    return hashlib.sha256(canonical.encode("utf-8")).hexdigest()


def _require(condition: bool, message: str) -> None:
    if not condition:
        raise ConfigError(message)


def _dataset_from_dict(raw: dict, master_seed: int) -> DatasetConfig:
    kind = raw.get("kind")
    _require(kind in ("synthetic", "cifar100"), f"dataset.kind must be 'synthetic' or 'cifar100', got {kind!r}")
    if kind == "synthetic":
        try:
            spec = SyntheticSpec(
                num_coarse=int(raw.get("num_coarse", 3)),
                fines_per_coarse=int(raw.get("fines_per_coarse", 3)),
                dim=int(raw.get("dim", 16)),
                samples_per_fine=int(raw.get("samples_per_fine", 200)),
                coarse_spread=float(raw.get("coarse_spread", 10.0)),
                fine_spread=float(raw.get("fine_spread", 2.0)),
                noise_sigma=float(raw.get("noise_sigma", 1.0)),
                seed=derive_seed(master_seed, SEED_STREAM_DATA),
            )
        except ValueError as exc:
            raise ConfigError(f"dataset: {exc}") from exc
        return DatasetConfig(kind="synthetic", synthetic=spec)
    path = raw.get("path") or os.environ.get(ENV_DATA_DIR)
    _require(
        bool(path),
        f"dataset.path is required for cifar100 (or set ${ENV_DATA_DIR})",
    )
    return DatasetConfig(
        kind="cifar100",
        cifar_path=str(path),
        augment=bool(raw.get("augment", False)),
        normalize=bool(raw.get("normalize", True)),
    )


def resolve_config(raw: dict, overrides: "dict | None" = None) -> ExperimentConfig:
    """Validate a raw config mapping, applying CLI overrides on top.

    Recognized override keys: seed, objective, schedule, hierarchy, output.
    """
    overrides = dict(overrides or {})
    if not isinstance(raw, dict):
        raise ConfigError("config file must contain a mapping at the top level")
    raw = dict(raw)

    seed = overrides.get("seed", raw.get("seed", 0))
    _require(isinstance(seed, int) and seed >= 0, f"seed must be a non-negative integer, got {seed!r}")

    dataset_raw = raw.get("dataset")
    _require(isinstance(dataset_raw, dict), "dataset: section is required")
    dataset = _dataset_from_dict(dataset_raw, seed)

    hierarchy = overrides.get("hierarchy", raw.get("hierarchy"))
    if hierarchy is None:
        hierarchy = "data" if dataset.kind == "synthetic" else "none"
    hierarchy = str(hierarchy)
    if hierarchy not in HIERARCHY_BUILTINS and not os.path.isfile(hierarchy):
        raise ConfigError(
            f"hierarchy: {hierarchy!r} is neither a builtin "
            f"({', '.join(HIERARCHY_BUILTINS)}) nor an existing file"
        )
    _require(
        hierarchy != "data" or dataset.kind == "synthetic",
        "hierarchy: 'data' is only available for synthetic datasets",
    )

    network_raw = raw.get("network", {}) or {}
    hidden = tuple(int(w) for w in network_raw.get("hidden", [32]))
    _require(all(w >= 1 for w in hidden), "network.hidden widths must be >= 1")

    train_raw = dict(raw.get("train", {}) or {})
    for key in ("objective", "schedule"):
        if key in overrides:
            train_raw[key] = overrides[key]
    try:
        train = TrainConfig(
            epochs=int(train_raw.get("epochs", 1)),
            batch_size=int(train_raw.get("batch_size", 128)),
            lr=float(train_raw.get("lr", 0.1)),
            momentum=float(train_raw.get("momentum", 0.9)),
            weight_decay=float(train_raw.get("weight_decay", 1e-4)),
            lr_milestones=tuple(int(m) for m in train_raw.get("lr_milestones", [])),
            seed=derive_seed(seed, SEED_STREAM_TRAIN),
            objective=str(train_raw.get("objective", "hcot")),
            schedule=str(train_raw.get("schedule", "direct")),
            normalize_entropy=bool(train_raw.get("normalize_entropy", False)),
            complement_lr_scale=float(train_raw.get("complement_lr_scale", 1.0)),
        )
    except ValueError as exc:
        raise ConfigError(f"train: {exc}") from exc

    _require(
        not (train.objective == "hcot" and hierarchy == "none"),
        "hierarchy: objective 'hcot' requires a label hierarchy, but the "
        "'hierarchy' field is 'none'",
    )

    output = overrides.get("output", raw.get("output"))
    _require(bool(output), "output: an output directory is required")

    ablation_raw = raw.get("ablation", {}) or {}
    granularities = tuple(int(g) for g in overrides.get(
        "granularities", ablation_raw.get("granularities", [])
    ))
    _require(all(g >= 1 for g in granularities), "ablation.granularities must be >= 1")
    ablation_hierarchies = {
        int(k): str(v) for k, v in (ablation_raw.get("hierarchies", {}) or {}).items()
    }
    for path in ablation_hierarchies.values():
        _require(os.path.isfile(path), f"ablation.hierarchies: file not found: {path}")

    return ExperimentConfig(
        dataset=dataset,
        hierarchy=hierarchy,
        hidden=hidden,
        train=train,
        seed=int(seed),
        output=str(output),
        granularities=granularities,
        ablation_hierarchies=ablation_hierarchies,
    )


def load_config(path: str, overrides: "dict | None" = None) -> ExperimentConfig:
    if not os.path.isfile(path):
        raise ConfigError(f"config file not found: {path}")
    with open(path, "r", encoding="utf-8") as fh:
        try:
            raw = yaml.safe_load(fh)
        except yaml.YAMLError as exc:
            raise ConfigError(f"{path}: invalid YAML: {exc}") from exc
    return resolve_config(raw or {}, overrides)
