"""Dataset ingestion: synthetic Gaussian clusters and the CIFAR-100 binary.

The synthetic generator builds a geometrically real hierarchy: coarse
cluster centers are spread wide, fine centers sit near their coarse
parent, and samples scatter around fine centers.  Siblings are therefore
genuinely more confusable than non-siblings, which is the regime the
hierarchical objectives target.

The CIFAR-100 loader reads the official binary files bit-exactly: each
record is 3074 bytes (coarse label byte, fine label byte, then 3072 image
bytes in channel-planar order).

Synthetic datasets can be exported to a flat binary for cross-
implementation comparison:

    bytes 0..7    magic ``HCOTDATA``
    bytes 8..11   little-endian uint32 header length L
    bytes 12..    UTF-8 JSON header: {"format_version", "split",
                  "num_samples", "dim"}
    then          inputs as little-endian float64, row-major
    then          fine labels as little-endian float64 (integer-valued)
"""

from __future__ import annotations

import json
import os
import struct
from dataclasses import dataclass

import numpy as np

from .hierarchy import LabelHierarchy, block_hierarchy

DATASET_MAGIC = b"HCOTDATA"
CIFAR_RECORD_BYTES = 3074
CIFAR_IMAGE_BYTES = 3072
CIFAR_FINE_CLASSES = 100
CIFAR_COARSE_CLASSES = 20


class DataMissingError(FileNotFoundError):
    """A required dataset file is absent."""


class DataFormatError(ValueError):
    """A dataset file exists but does not match the documented format."""


@dataclass(frozen=True)
class Dataset:
    """Immutable input matrix plus fine labels for one split."""

    inputs: np.ndarray
    fine_labels: np.ndarray
    split: str

    def __post_init__(self) -> None:
        inputs = np.asarray(self.inputs, dtype=np.float64)
        labels = np.asarray(self.fine_labels, dtype=np.int64)
        if inputs.ndim != 2 or inputs.shape[0] == 0:
            raise DataFormatError(f"inputs must be a non-empty 2-D matrix, got {inputs.shape}")
        if labels.shape != (inputs.shape[0],):
            raise DataFormatError("label count does not match input rows")
        if not np.isfinite(inputs).all():
            raise DataFormatError("inputs contain non-finite values")
        if labels.min() < 0:
            raise DataFormatError("labels must be non-negative")
        if self.split not in ("train", "test"):
            raise DataFormatError(f"split must be 'train' or 'test', got {self.split!r}")
        inputs.setflags(write=False)
        labels.setflags(write=False)
        object.__setattr__(self, "inputs", inputs)
        object.__setattr__(self, "fine_labels", labels)

    @property
    def num_samples(self) -> int:
        return self.inputs.shape[0]

    @property
    def dim(self) -> int:
        return self.inputs.shape[1]


@dataclass(frozen=True)
class SyntheticSpec:
    """Parameters of the hierarchical Gaussian-cluster generator.

    ``coarse_spread > fine_spread > 0`` keeps the hierarchy geometric:
    sibling centers sit closer together than non-sibling centers.
    """

    num_coarse: int
    fines_per_coarse: int
    dim: int
    samples_per_fine: int
    coarse_spread: float
    fine_spread: float
    noise_sigma: float
    seed: int

    def __post_init__(self) -> None:
        if self.num_coarse < 1 or self.fines_per_coarse < 1:
            raise ValueError("num_coarse and fines_per_coarse must be >= 1")
        if self.dim < 1 or self.samples_per_fine < 1:
            raise ValueError("dim and samples_per_fine must be >= 1")
        if not self.coarse_spread > self.fine_spread > 0:
            raise ValueError("need coarse_spread > fine_spread > 0")
        if self.noise_sigma < 0:
            raise ValueError("noise_sigma must be >= 0")
        if self.seed < 0:
            raise ValueError("seed must be non-negative")

    @property
    def num_fine(self) -> int:
        return self.num_coarse * self.fines_per_coarse


def _draw_centers(rng: np.random.Generator, spec: SyntheticSpec) -> tuple[np.ndarray, np.ndarray]:
    coarse = rng.normal(0.0, spec.coarse_spread, size=(spec.num_coarse, spec.dim))
    offsets = rng.normal(0.0, spec.fine_spread, size=(spec.num_coarse, spec.fines_per_coarse, spec.dim))
    fine = (coarse[:, None, :] + offsets).reshape(spec.num_fine, spec.dim)
    return coarse, fine


def synthetic_centers(spec: SyntheticSpec) -> tuple[np.ndarray, np.ndarray]:
    """The (coarse, fine) cluster centers generate_synthetic samples around."""
    return _draw_centers(np.random.default_rng(spec.seed), spec)


def _sample_split(
    rng: np.random.Generator, fine_centers: np.ndarray, per_fine: int, sigma: float, split: str
) -> Dataset:
    k, dim = fine_centers.shape
    noise = rng.normal(0.0, 1.0, size=(k, per_fine, dim))
    inputs = (fine_centers[:, None, :] + sigma * noise).reshape(k * per_fine, dim)
    labels = np.repeat(np.arange(k, dtype=np.int64), per_fine)
    return Dataset(inputs=inputs, fine_labels=labels, split=split)


def generate_synthetic(spec: SyntheticSpec) -> tuple[Dataset, Dataset, LabelHierarchy]:
    """Build (train, test, hierarchy) deterministically from the spec seed.

    The test split draws samples_per_fine // 4 samples per fine class
    (at least one) from the same stream, after the train split.
    """
    rng = np.random.default_rng(spec.seed)
    _, fine_centers = _draw_centers(rng, spec)
    train = _sample_split(rng, fine_centers, spec.samples_per_fine, spec.noise_sigma, "train")
    test_per_fine = max(1, spec.samples_per_fine // 4)
    test = _sample_split(rng, fine_centers, test_per_fine, spec.noise_sigma, "test")
    return train, test, block_hierarchy(spec.num_coarse, spec.fines_per_coarse)


def cifar_file_for_split(root: str, split: str) -> str:
    name = "train.bin" if split == "train" else "test.bin"
    return os.path.join(root, name)


def load_cifar100(root: str, split: str) -> tuple[Dataset, np.ndarray]:
    """Parse one split of the CIFAR-100 binary distribution.

    Returns the dataset (images scaled to [0, 1], flattened channel-planar)
    and the per-record coarse label array.
    """
    if split not in ("train", "test"):
        raise DataFormatError(f"split must be 'train' or 'test', got {split!r}")
    path = cifar_file_for_split(root, split)
    if not os.path.isfile(path):
        raise DataMissingError(f"CIFAR-100 binary file not found: {path}")
    raw = np.fromfile(path, dtype=np.uint8)
    if raw.size == 0 or raw.size % CIFAR_RECORD_BYTES != 0:
        raise DataFormatError(
            f"{path}: file length {raw.size} is not a positive multiple of "
            f"the {CIFAR_RECORD_BYTES}-byte record size"
        )
    records = raw.reshape(-1, CIFAR_RECORD_BYTES)
    coarse = records[:, 0].astype(np.int64)
    fine = records[:, 1].astype(np.int64)
    if fine.max() >= CIFAR_FINE_CLASSES:
        raise DataFormatError(f"{path}: fine label byte {fine.max()} out of range")
    if coarse.max() >= CIFAR_COARSE_CLASSES:
        raise DataFormatError(f"{path}: coarse label byte {coarse.max()} out of range")
    inputs = records[:, 2:].astype(np.float64) / 255.0
    return Dataset(inputs=inputs, fine_labels=fine, split=split), coarse


def channel_mean_normalize(train: Dataset, test: Dataset) -> tuple[Dataset, Dataset, np.ndarray]:
    """Subtract per-channel means computed from the train split from both."""
    per_channel = train.inputs.reshape(train.num_samples, 3, -1)
    means = per_channel.mean(axis=(0, 2))
    def shift(ds: Dataset) -> Dataset:
        pixels = ds.inputs.reshape(ds.num_samples, 3, -1) - means[None, :, None]
        return Dataset(pixels.reshape(ds.num_samples, -1), ds.fine_labels, ds.split)
    return shift(train), shift(test), means


def horizontal_flip(inputs: np.ndarray) -> np.ndarray:
    """Mirror 32x32x3 channel-planar images along the width axis."""
    n = inputs.shape[0]
    return inputs.reshape(n, 3, 32, 32)[:, :, :, ::-1].reshape(n, CIFAR_IMAGE_BYTES)


def pad_and_crop(inputs: np.ndarray, offsets: np.ndarray, pad: int = 4) -> np.ndarray:
    """Zero-pad by ``pad`` and crop back to 32x32 at per-image offsets.

    Offset (pad, pad) reproduces the original image.
    """
    n = inputs.shape[0]
    imgs = inputs.reshape(n, 3, 32, 32)
    padded = np.zeros((n, 3, 32 + 2 * pad, 32 + 2 * pad), dtype=inputs.dtype)
    padded[:, :, pad : pad + 32, pad : pad + 32] = imgs
    out = np.empty_like(imgs)
    for i in range(n):
        oy, ox = offsets[i]
        out[i] = padded[i, :, oy : oy + 32, ox : ox + 32]
    return out.reshape(n, CIFAR_IMAGE_BYTES)


def augment_crop_flip(inputs: np.ndarray, seed: int) -> np.ndarray:
    """Pad-4 random crop plus 50% horizontal flip, deterministic in seed."""
    inputs = np.asarray(inputs)
    if inputs.ndim != 2 or inputs.shape[1] != CIFAR_IMAGE_BYTES:
        raise DataFormatError(
            f"augmentation expects flattened 32x32x3 images ({CIFAR_IMAGE_BYTES} wide), "
            f"got shape {inputs.shape}"
        )
    rng = np.random.default_rng(seed)
    n = inputs.shape[0]
    offsets = rng.integers(0, 9, size=(n, 2))
    flips = rng.random(n) < 0.5
    out = pad_and_crop(inputs, offsets)
    flipped = horizontal_flip(out)
    return np.where(flips[:, None], flipped, out)


def save_dataset(ds: Dataset, path: str) -> None:
    """Write the documented flat binary export."""
    header = {
        "format_version": 1,
        "split": ds.split,
        "num_samples": ds.num_samples,
        "dim": ds.dim,
    }
    payload = json.dumps(header, sort_keys=True).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(DATASET_MAGIC)
        fh.write(struct.pack("<I", len(payload)))
        fh.write(payload)
        fh.write(np.ascontiguousarray(ds.inputs, dtype="<f8").tobytes())
        fh.write(ds.fine_labels.astype("<f8").tobytes())


def load_dataset(path: str) -> Dataset:
    with open(path, "rb") as fh:
        magic = fh.read(len(DATASET_MAGIC))
        if magic != DATASET_MAGIC:
            raise DataFormatError(f"{path}: not a dataset export (bad magic)")
        (header_len,) = struct.unpack("<I", fh.read(4))
        header = json.loads(fh.read(header_len).decode("utf-8"))
        n, dim = header["num_samples"], header["dim"]
        inputs = np.frombuffer(fh.read(n * dim * 8), dtype="<f8").reshape(n, dim)
        labels = np.frombuffer(fh.read(n * 8), dtype="<f8")
        if inputs.size != n * dim or labels.size != n:
            raise DataFormatError(f"{path}: truncated payload")
    return Dataset(inputs=inputs.copy(), fine_labels=labels.astype(np.int64), split=header["split"])
