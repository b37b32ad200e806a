"""Experiment orchestration: wires data, hierarchy, network, trainer, and
metrics together and writes all run artifacts.

Every run directory receives: ``metrics.csv`` (one row per epoch),
``profile.csv`` (final-epoch probability profile over the test split),
``final.ckpt``, ``manifest.json`` (resolved config + hash, enough to re-run
bit-identically), and rendered figures next to the delimited output.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass

import numpy as np

from . import plots
from .config import (
    SEED_STREAM_AUGMENT,
    SEED_STREAM_INIT,
    ConfigError,
    ExperimentConfig,
    config_digest,
    derive_seed,
)
from .data import (
    Dataset,
    augment_crop_flip,
    channel_mean_normalize,
    generate_synthetic,
    load_cifar100,
)
from .hierarchy import (
    LabelHierarchy,
    flat_hierarchy,
    identity_hierarchy,
    load_hierarchy,
)
from .metrics import (
    MetricsRecord,
    ProfileRow,
    coarse_error,
    fine_error,
    mass_summary,
    probability_profile,
    staircase_gap,
    topk_error,
    write_metrics_csv,
    write_profile_csv,
)
from .network import Network, mlp_spec, save_checkpoint
from .objectives import (
    LogitBatch,
    cross_entropy,
    hierarchical_complement_entropy,
)
from .trainer import TrainerState, train_epoch

COMPARE_FIELDS = (
    "objective",
    "fine_error",
    "coarse_error",
    "top5_error",
    "mass_g",
    "mass_inner",
    "mass_outer",
    "staircase_gap",
    "xe_loss",
    "hce_loss",
    "hce_used",
)

ABLATION_FIELDS = ("n_coarse", "fine_error", "coarse_error", "staircase_gap")


@dataclass
class RunData:
    train: Dataset
    test: Dataset
    hierarchy: LabelHierarchy
    num_classes: int
    input_dim: int


@dataclass
class RunResult:
    records: "list[MetricsRecord]"
    profile: "list[ProfileRow]"
    gap: float
    hce_used: bool
    out_dir: str
    net: Network


def _load_data(cfg: ExperimentConfig) -> RunData:
    if cfg.dataset.kind == "synthetic":
        train, test, data_hierarchy = generate_synthetic(cfg.dataset.synthetic)
        num_classes = data_hierarchy.num_fine
    else:
        train, _ = load_cifar100(cfg.dataset.cifar_path, "train")
        test, _ = load_cifar100(cfg.dataset.cifar_path, "test")
        if cfg.dataset.normalize:
            train, test, _ = channel_mean_normalize(train, test)
        data_hierarchy = None
        num_classes = 100
    if cfg.hierarchy == "data":
        hierarchy = data_hierarchy
    elif cfg.hierarchy == "none" or cfg.hierarchy == "builtin:flat":
        hierarchy = flat_hierarchy(num_classes)
    elif cfg.hierarchy == "builtin:identity":
        hierarchy = identity_hierarchy(num_classes)
    else:
        hierarchy = load_hierarchy(cfg.hierarchy)
        if hierarchy.num_fine != num_classes:
            raise ConfigError(
                f"hierarchy: file covers {hierarchy.num_fine} classes but the "
                f"dataset has {num_classes}"
            )
    if int(train.fine_labels.max()) >= num_classes:
        raise ConfigError("dataset labels exceed the class count")
    return RunData(
        train=train,
        test=test,
        hierarchy=hierarchy,
        num_classes=num_classes,
        input_dim=train.dim,
    )


def evaluate(
    net: Network,
    test: Dataset,
    h: LabelHierarchy,
    epoch: int,
    objective: str,
) -> tuple[MetricsRecord, LogitBatch]:
    """Test-split metrics for one epoch.

    The reported complement loss uses the run's effective complement
    hierarchy: the configured one for ``hcot``, the single-group one for
    ``cot`` and ``xe`` (where it is reported but never trained on).
    """
    logits, _ = net.forward(test.inputs)
    batch = LogitBatch(logits, test.fine_labels)
    mass_g, mass_inner, mass_outer = mass_summary(batch, h)
    complement_h = h if objective == "hcot" else flat_hierarchy(h.num_fine)
    record = MetricsRecord(
        epoch=epoch,
        fine_error=fine_error(batch),
        coarse_error=coarse_error(batch, h),
        top5_error=topk_error(batch, min(5, batch.num_classes)),
        mean_mass_g=mass_g,
        mean_mass_inner=mass_inner,
        mean_mass_outer=mass_outer,
        xe_loss=cross_entropy(batch).value,
        hce_loss=hierarchical_complement_entropy(batch, complement_h).value,
    )
    return record, batch


def _prepare_out_dir(out_dir: str, force: bool) -> None:
    if os.path.isdir(out_dir) and os.listdir(out_dir):
        if not force:
            raise ConfigError(
                f"output directory {out_dir!r} already exists and is not empty "
                "(pass --force to overwrite)"
            )
    os.makedirs(out_dir, exist_ok=True)


def _write_manifest(cfg: ExperimentConfig, out_dir: str, artifacts: "list[str]") -> None:
    manifest = {
        "config": cfg.to_dict(),
        "config_sha256": config_digest(cfg),
        "seed": cfg.seed,
        "derived_seeds": {
            "data": cfg.dataset.synthetic.seed if cfg.dataset.synthetic else None,
            "init": derive_seed(cfg.seed, SEED_STREAM_INIT),
            "train": cfg.train.seed,
        },
        "artifacts": sorted(artifacts),
    }
    with open(os.path.join(out_dir, "manifest.json"), "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")


def run_experiment(cfg: ExperimentConfig, force: bool = False, render: bool = True) -> RunResult:
    """Train to cfg.train.epochs and write all artifacts into cfg.output."""
    out_dir = cfg.output
    _prepare_out_dir(out_dir, force)
    data = _load_data(cfg)
    net = Network(
        mlp_spec(data.input_dim, cfg.hidden, data.num_classes),
        seed=derive_seed(cfg.seed, SEED_STREAM_INIT),
    )
    state = TrainerState.for_network(net)

    augment_fn = None
    if cfg.dataset.kind == "cifar100" and cfg.dataset.augment:
        augment_seed = derive_seed(cfg.seed, SEED_STREAM_AUGMENT)

        def augment_fn(epoch: int, batch_index: int, inputs: np.ndarray) -> np.ndarray:
            seed = np.random.SeedSequence([augment_seed, epoch, batch_index])
            return augment_crop_flip(inputs, int(seed.generate_state(1, np.uint64)[0]))

    records: list[MetricsRecord] = []
    final_batch: "LogitBatch | None" = None
    for epoch in range(cfg.train.epochs):
        train_epoch(net, data.train, data.hierarchy, cfg.train, state, epoch, augment_fn)
        record, batch = evaluate(net, data.test, data.hierarchy, epoch, cfg.train.objective)
        records.append(record)
        final_batch = batch

    profile = probability_profile(final_batch, data.hierarchy)
    gap = staircase_gap(final_batch, data.hierarchy)

    metrics_path = os.path.join(out_dir, "metrics.csv")
    profile_path = os.path.join(out_dir, "profile.csv")
    checkpoint_path = os.path.join(out_dir, "final.ckpt")
    write_metrics_csv(records, metrics_path)
    write_profile_csv(profile, profile_path)
    save_checkpoint(net, checkpoint_path, seed=cfg.seed, epoch=cfg.train.epochs - 1)
    artifacts = ["metrics.csv", "profile.csv", "final.ckpt", "manifest.json"]
    if render:
        plots.render_profile(profile, os.path.join(out_dir, "profile.png"))
        plots.render_training_curves(records, os.path.join(out_dir, "training_curves.png"))
        artifacts += ["profile.png", "training_curves.png"]
    _write_manifest(cfg, out_dir, artifacts)
    return RunResult(
        records=records,
        profile=profile,
        gap=gap,
        hce_used=cfg.train.objective != "xe",
        out_dir=out_dir,
        net=net,
    )


def _replace_train(cfg: ExperimentConfig, **train_kwargs) -> ExperimentConfig:
    from dataclasses import replace

    return replace(cfg, train=replace(cfg.train, **train_kwargs))


def run_compare(cfg: ExperimentConfig, force: bool = False, render: bool = True) -> "list[dict]":
    """Run xe, cot, and hcot with identical seeds and data; write compare.csv.

    Rows come back in fixed objective order.
    """
    from dataclasses import replace

    _prepare_out_dir(cfg.output, force)
    rows: list[dict] = []
    results: dict[str, RunResult] = {}
    for objective in ("xe", "cot", "hcot"):
        sub = _replace_train(cfg, objective=objective)
        sub = replace(sub, output=os.path.join(cfg.output, objective))
        result = run_experiment(sub, force=force, render=render)
        results[objective] = result
        final = result.records[-1]
        rows.append(
            {
                "objective": objective,
                "fine_error": final.fine_error,
                "coarse_error": final.coarse_error,
                "top5_error": final.top5_error,
                "mass_g": final.mean_mass_g,
                "mass_inner": final.mean_mass_inner,
                "mass_outer": final.mean_mass_outer,
                "staircase_gap": result.gap,
                "xe_loss": final.xe_loss,
                "hce_loss": final.hce_loss,
                "hce_used": result.hce_used,
            }
        )
    _write_rows(rows, COMPARE_FIELDS, os.path.join(cfg.output, "compare.csv"))
    if render:
        plots.render_compare(rows, os.path.join(cfg.output, "compare.png"))
    return rows


def _hierarchy_name_for_granularity(cfg: ExperimentConfig, n: int, num_classes: int, data_nc: int) -> str:
    if n == 1:
        return "builtin:flat"
    if n == num_classes:
        return "builtin:identity"
    if n == data_nc and cfg.dataset.kind == "synthetic":
        return "data"
    if n in cfg.ablation_hierarchies:
        return cfg.ablation_hierarchies[n]
    raise ConfigError(
        f"ablation: no hierarchy available for {n} coarse groups; provide one "
        "under ablation.hierarchies"
    )


def run_ablation_nc(cfg: ExperimentConfig, force: bool = False, render: bool = True) -> "list[dict]":
    """One hcot experiment per coarse-group granularity, shared seed."""
    from dataclasses import replace

    if not cfg.granularities:
        raise ConfigError("ablation.granularities (or --granularities) is required")
    _prepare_out_dir(cfg.output, force)
    if cfg.dataset.kind == "synthetic":
        spec = cfg.dataset.synthetic
        num_classes, data_nc = spec.num_fine, spec.num_coarse
    else:
        num_classes, data_nc = 100, 20
    rows: list[dict] = []
    for n in cfg.granularities:
        hierarchy = _hierarchy_name_for_granularity(cfg, n, num_classes, data_nc)
        sub = replace(
            _replace_train(cfg, objective="hcot"),
            hierarchy=hierarchy,
            output=os.path.join(cfg.output, f"nc_{n}"),
        )
        result = run_experiment(sub, force=force, render=render)
        final = result.records[-1]
        rows.append(
            {
                "n_coarse": n,
                "fine_error": final.fine_error,
                "coarse_error": final.coarse_error,
                "staircase_gap": result.gap,
            }
        )
    _write_rows(rows, ABLATION_FIELDS, os.path.join(cfg.output, "ablation.csv"))
    if render:
        plots.render_ablation(rows, os.path.join(cfg.output, "ablation.png"))
    return rows


def _write_rows(rows: "list[dict]", field_names: tuple, path: str) -> None:
    import csv

    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(field_names)
        for row in rows:
            out = []
            for name in field_names:
                value = row[name]
                out.append(repr(float(value)) if isinstance(value, float) else value)
            writer.writerow(out)
