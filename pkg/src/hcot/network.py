"""Small feed-forward classifier with explicit forward caches and backprop.

Layer kinds are dense, relu, and flatten; that is all the desk-scale
experiments need.  Forward returns the cache backward consumes; backward
accumulates into gradient buffers and never touches parameters, so the
optimizer owns every mutation.  Gradients with respect to the loss arrive
at the logit boundary (see objectives) and are chained back here.

Checkpoint layout (documented for cross-implementation use):

    bytes 0..7    magic ``HCOTNET1``
    bytes 8..11   little-endian uint32 header length L
    bytes 12..    UTF-8 JSON header: {"format_version", "layers", "seed",
                  "epoch", "param_count"}
    then          parameter data as little-endian float64, layer by layer
                  (dense layers store the weight matrix row-major, then
                  the bias vector)
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass

import numpy as np

CHECKPOINT_MAGIC = b"HCOTNET1"


class NetworkError(ValueError):
    """Inconsistent layer specs, shape mismatches, or stale caches."""


@dataclass(frozen=True)
class LayerSpec:
    """One layer: kind in {dense, relu, flatten}; dense carries its dims."""

    kind: str
    in_dim: int | None = None
    out_dim: int | None = None

    def to_dict(self) -> dict:
        if self.kind == "dense":
            return {"kind": "dense", "in_dim": self.in_dim, "out_dim": self.out_dim}
        return {"kind": self.kind}

    @classmethod
    def from_dict(cls, d: dict) -> "LayerSpec":
        return cls(kind=d["kind"], in_dim=d.get("in_dim"), out_dim=d.get("out_dim"))


def dense(in_dim: int, out_dim: int) -> LayerSpec:
    return LayerSpec("dense", in_dim, out_dim)


def relu() -> LayerSpec:
    return LayerSpec("relu")


def flatten() -> LayerSpec:
    return LayerSpec("flatten")


def mlp_spec(input_dim: int, hidden: "list[int] | tuple[int, ...]", num_classes: int) -> list[LayerSpec]:
    """Dense/relu stack ending in a ``num_classes``-wide linear layer."""
    specs: list[LayerSpec] = []
    width = input_dim
    for h in hidden:
        specs.append(dense(width, h))
        specs.append(relu())
        width = h
    specs.append(dense(width, num_classes))
    return specs


class _DenseLayer:
    def __init__(self, in_dim: int, out_dim: int, rng: np.random.Generator, dtype) -> None:
        # He-style fan-in scaled uniform init; biases start at zero.
        limit = np.sqrt(6.0 / in_dim)
        self.weight = rng.uniform(-limit, limit, size=(in_dim, out_dim)).astype(dtype)
        self.bias = np.zeros(out_dim, dtype=dtype)
        self.grad_weight = np.zeros_like(self.weight)
        self.grad_bias = np.zeros_like(self.bias)

    def forward(self, x: np.ndarray) -> np.ndarray:
        if x.shape[1] != self.weight.shape[0]:
            raise NetworkError(
                f"dense layer expects width {self.weight.shape[0]}, got {x.shape[1]}"
            )
        return x @ self.weight + self.bias

    def backward(self, x: np.ndarray, grad_out: np.ndarray) -> np.ndarray:
        self.grad_weight += x.T @ grad_out
        self.grad_bias += grad_out.sum(axis=0)
        return grad_out @ self.weight.T


class _ReluLayer:
    def forward(self, x: np.ndarray) -> np.ndarray:
        return np.maximum(x, 0.0)

    def backward(self, x: np.ndarray, grad_out: np.ndarray) -> np.ndarray:
        return np.where(x > 0.0, grad_out, 0.0)


class _FlattenLayer:
    def forward(self, x: np.ndarray) -> np.ndarray:
        return x.reshape(x.shape[0], -1)

    def backward(self, x: np.ndarray, grad_out: np.ndarray) -> np.ndarray:
        return grad_out.reshape(x.shape)


@dataclass
class ForwardCache:
    """Per-layer inputs retained for the matching backward pass."""

    layer_inputs: list[np.ndarray]
    logits: np.ndarray
    param_version: int

    @property
    def penultimate(self) -> np.ndarray:
        """Input to the final layer (the embedding the classifier reads)."""
        return self.layer_inputs[-1]


class Network:
    """Ordered layer stack over flat parameter/gradient buffer lists.

    Single-writer: forward/backward/updates must not run concurrently on
    one instance.  Parameter mutation goes through the optimizer, which
    bumps ``param_version`` so stale caches are rejected.
    """

    def __init__(self, specs: "list[LayerSpec] | tuple[LayerSpec, ...]", seed: int, dtype=np.float64) -> None:
        if not specs:
            raise NetworkError("network needs at least one layer")
        self.specs = tuple(specs)
        self.seed = int(seed)
        self.dtype = np.dtype(dtype)
        rng = np.random.default_rng(self.seed)
        self.layers: list = []
        width: int | None = None
        for spec in self.specs:
            if spec.kind == "dense":
                if spec.in_dim is None or spec.out_dim is None:
                    raise NetworkError("dense layer spec needs in_dim and out_dim")
                if spec.in_dim < 1 or spec.out_dim < 1:
                    raise NetworkError("dense layer dims must be positive")
                if width is not None and width != spec.in_dim:
                    raise NetworkError(
                        f"dense in_dim {spec.in_dim} does not chain from previous width {width}"
                    )
                self.layers.append(_DenseLayer(spec.in_dim, spec.out_dim, rng, self.dtype))
                width = spec.out_dim
            elif spec.kind == "relu":
                self.layers.append(_ReluLayer())
            elif spec.kind == "flatten":
                self.layers.append(_FlattenLayer())
                width = None  # width known only once an input flows through
            else:
                raise NetworkError(f"unknown layer kind {spec.kind!r}")
        self.param_version = 0

    @property
    def num_layers(self) -> int:
        return len(self.layers)

    @property
    def input_dim(self) -> int | None:
        for layer in self.layers:
            if isinstance(layer, _DenseLayer):
                return layer.weight.shape[0]
        return None

    @property
    def output_dim(self) -> int | None:
        for layer in reversed(self.layers):
            if isinstance(layer, _DenseLayer):
                return layer.weight.shape[1]
        return None

    def parameters(self) -> list[np.ndarray]:
        params: list[np.ndarray] = []
        for layer in self.layers:
            if isinstance(layer, _DenseLayer):
                params.extend([layer.weight, layer.bias])
        return params

    def gradients(self) -> list[np.ndarray]:
        grads: list[np.ndarray] = []
        for layer in self.layers:
            if isinstance(layer, _DenseLayer):
                grads.extend([layer.grad_weight, layer.grad_bias])
        return grads

    def parameter_count(self) -> int:
        return sum(p.size for p in self.parameters())

    def zero_gradients(self) -> None:
        for g in self.gradients():
            g[...] = 0.0

    def mark_parameters_updated(self) -> None:
        self.param_version += 1

    def forward(self, inputs: np.ndarray) -> tuple[np.ndarray, ForwardCache]:
        """Run the stack; returns logits and the cache for backward."""
        x = np.asarray(inputs, dtype=self.dtype)
        if x.ndim < 2:
            raise NetworkError(f"inputs must have a batch dimension, got shape {x.shape}")
        layer_inputs: list[np.ndarray] = []
        for layer in self.layers:
            layer_inputs.append(x)
            x = layer.forward(x)
        return x, ForwardCache(layer_inputs=layer_inputs, logits=x, param_version=self.param_version)

    def backward(self, cache: ForwardCache, logit_grad: np.ndarray) -> list[np.ndarray]:
        """Chain logit gradients into the parameter gradient buffers."""
        if cache.param_version != self.param_version:
            raise NetworkError(
                "stale forward cache: parameters changed since the forward pass"
            )
        grad = np.asarray(logit_grad, dtype=self.dtype)
        if grad.shape != cache.logits.shape:
            raise NetworkError(
                f"logit gradient shape {grad.shape} does not match logits {cache.logits.shape}"
            )
        for layer, x in zip(reversed(self.layers), reversed(cache.layer_inputs)):
            grad = layer.backward(x, grad)
        return self.gradients()

    def snapshot(self) -> list[np.ndarray]:
        """Copies of all parameters, for trajectory comparisons."""
        return [p.copy() for p in self.parameters()]

    def load_parameters(self, values: "list[np.ndarray]") -> None:
        params = self.parameters()
        if len(values) != len(params):
            raise NetworkError("parameter list length mismatch")
        for p, v in zip(params, values):
            if p.shape != np.shape(v):
                raise NetworkError("parameter shape mismatch")
            p[...] = v
        self.mark_parameters_updated()


def save_checkpoint(net: Network, path: str, *, seed: int, epoch: int) -> None:
    """Write the documented binary checkpoint (header + float64 params)."""
    header = {
        "format_version": 1,
        "layers": [spec.to_dict() for spec in net.specs],
        "seed": int(seed),
        "epoch": int(epoch),
        "param_count": net.parameter_count(),
    }
    payload = json.dumps(header, sort_keys=True).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(CHECKPOINT_MAGIC)
        fh.write(struct.pack("<I", len(payload)))
        fh.write(payload)
        for param in net.parameters():
            fh.write(np.ascontiguousarray(param, dtype="<f8").tobytes())


def load_checkpoint(path: str, dtype=np.float64) -> tuple[Network, dict]:
    """Rebuild a network from a checkpoint; returns (network, header)."""
    with open(path, "rb") as fh:
        magic = fh.read(len(CHECKPOINT_MAGIC))
        if magic != CHECKPOINT_MAGIC:
            raise NetworkError(f"{path}: not a checkpoint file (bad magic)")
        (header_len,) = struct.unpack("<I", fh.read(4))
        header = json.loads(fh.read(header_len).decode("utf-8"))
        specs = [LayerSpec.from_dict(d) for d in header["layers"]]
        net = Network(specs, seed=header["seed"], dtype=dtype)
        for param in net.parameters():
            raw = fh.read(param.size * 8)
            if len(raw) != param.size * 8:
                raise NetworkError(f"{path}: truncated parameter data")
            param[...] = np.frombuffer(raw, dtype="<f8").reshape(param.shape)
        trailing = fh.read(1)
        if trailing:
            raise NetworkError(f"{path}: trailing bytes after parameter data")
    net.mark_parameters_updated()
    return net, header
