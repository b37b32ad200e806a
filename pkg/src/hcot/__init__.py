"""Hierarchical complement entropy objectives and a training harness."""

from .hierarchy import (
    HierarchyError,
    HierarchySlices,
    LabelHierarchy,
    block_hierarchy,
    flat_hierarchy,
    identity_hierarchy,
    load_hierarchy,
    parse_hierarchy,
    serialize_hierarchy,
)
from .objectives import (
    LogitBatch,
    ObjectiveError,
    ObjectiveResult,
    SubsetDistribution,
    complement_entropy,
    cot_loss,
    cross_entropy,
    hcot_loss,
    hierarchical_complement_entropy,
    shannon_entropy,
    subset_softmax,
    training_loss,
)
from .network import LayerSpec, Network, dense, flatten, load_checkpoint, mlp_spec, relu, save_checkpoint
from .trainer import (
    NumericalError,
    OptimizerState,
    TrainConfig,
    TrainerState,
    lr_at,
    sgd_step,
    train_epoch,
    train_epoch_alternating,
    train_epoch_direct,
)
from .data import (
    DataFormatError,
    DataMissingError,
    Dataset,
    SyntheticSpec,
    augment_crop_flip,
    generate_synthetic,
    load_cifar100,
    load_dataset,
    save_dataset,
    synthetic_centers,
)
from .metrics import (
    MetricsRecord,
    ProfileRow,
    coarse_error,
    export_embeddings,
    fine_error,
    mass_summary,
    probability_profile,
    staircase_gap,
    topk_error,
)

__version__ = "0.1.0"
