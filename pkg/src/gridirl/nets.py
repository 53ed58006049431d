"""Parametric reward models with exact reverse-mode gradients.

Two layer kinds cover every architecture used here. A "dense" layer maps
each state's feature row independently (equivalently, a width-one
convolution over states), and a "conv3x3" layer correlates zero-padded
3x3 windows over channel grids, preserving the spatial size. Networks
list any conv layers first; once the grid is flattened into per-state
rows it stays flat. The final layer always has a single identity output,
so a forward pass yields one reward per state.

Inputs are either a feature matrix of shape (n_states, n_features) or a
channel grid of shape (n_channels, height, width) whose row-major
flattening matches the MDP state indexing.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "AdaGradState",
    "FeatureMatrix",
    "GridTensor",
    "LayerSpec",
    "NetworkParams",
    "adagrad_update",
    "apply_weight_decay",
    "backward",
    "conv_network",
    "feature_network",
    "forward",
    "init_network",
    "linear_model",
    "load_params",
    "save_params",
]

FeatureMatrix = np.ndarray
GridTensor = np.ndarray

_KINDS = ("dense", "conv3x3")
_ACTIVATIONS = ("relu", "identity")

_SNAPSHOT_DTYPE = np.dtype("<f8")


@dataclass(frozen=True)
class LayerSpec:
    """One layer: kind, input and output width, and activation."""

    kind: str
    n_in: int
    n_out: int
    activation: str

    def __post_init__(self) -> None:
        if self.kind not in _KINDS:
            raise ValueError(f"unknown layer kind {self.kind!r}")
        if self.activation not in _ACTIVATIONS:
            raise ValueError(f"unknown activation {self.activation!r}")
        if self.n_in < 1 or self.n_out < 1:
            raise ValueError("layer widths must be positive")

    def weight_shape(self) -> tuple[int, ...]:
        if self.kind == "dense":
            return (self.n_in, self.n_out)
        return (self.n_out, self.n_in, 3, 3)


@dataclass
class NetworkParams:
    """Layer specs plus one weight and bias block per layer.

    Weight blocks stay writable (the optimizer updates them in place);
    everything else about the architecture is fixed at construction.
    """

    layers: tuple[LayerSpec, ...]
    weights: list[np.ndarray]
    biases: list[np.ndarray]

    def __post_init__(self) -> None:
        layers = tuple(self.layers)
        if not layers:
            raise ValueError("a network needs at least one layer")
        if len(self.weights) != len(layers) or len(self.biases) != len(layers):
            raise ValueError("weights and biases must match the layer count")
        seen_dense = False
        for i, spec in enumerate(layers):
            if spec.kind == "dense":
                seen_dense = True
            elif seen_dense:
                raise ValueError("conv3x3 layers must precede all dense layers")
            if i > 0 and spec.n_in != layers[i - 1].n_out:
                raise ValueError(
                    f"layer {i} expects {spec.n_in} inputs but layer {i - 1} "
                    f"produces {layers[i - 1].n_out}"
                )
        final = layers[-1]
        if final.n_out != 1 or final.activation != "identity":
            raise ValueError("the final layer must be a single identity output")
        weights = []
        biases = []
        for i, spec in enumerate(layers):
            w = np.ascontiguousarray(self.weights[i], dtype=np.float64)
            b = np.ascontiguousarray(self.biases[i], dtype=np.float64)
            if w.shape != spec.weight_shape():
                raise ValueError(
                    f"layer {i} weight shape {w.shape} != {spec.weight_shape()}"
                )
            if b.shape != (spec.n_out,):
                raise ValueError(f"layer {i} bias shape {b.shape} != ({spec.n_out},)")
            weights.append(w)
            biases.append(b)
        object.__setattr__(self, "layers", layers)
        object.__setattr__(self, "weights", weights)
        object.__setattr__(self, "biases", biases)


def init_network(layers, seed: int) -> NetworkParams:
    """Fresh parameters: uniform weights in +-sqrt(6 / (fan_in + fan_out)),
    zero biases. Identical seeds give bit-identical parameters."""
    rng = np.random.default_rng(seed)
    weights = []
    biases = []
    for spec in layers:
        if spec.kind == "dense":
            fan_in, fan_out = spec.n_in, spec.n_out
        else:
            fan_in, fan_out = spec.n_in * 9, spec.n_out * 9
        limit = np.sqrt(6.0 / (fan_in + fan_out))
        weights.append(rng.uniform(-limit, limit, size=spec.weight_shape()))
        biases.append(np.zeros(spec.n_out))
    return NetworkParams(tuple(layers), weights, biases)


def linear_model(n_features: int, seed: int = 0) -> NetworkParams:
    """A single dense layer mapping features straight to the reward."""
    return init_network([LayerSpec("dense", n_features, 1, "identity")], seed)


def feature_network(n_features: int, hidden=(32, 32), seed: int = 0) -> NetworkParams:
    """Dense ReLU stack on per-state feature rows."""
    specs = []
    width_in = n_features
    for width in hidden:
        specs.append(LayerSpec("dense", width_in, int(width), "relu"))
        width_in = int(width)
    specs.append(LayerSpec("dense", width_in, 1, "identity"))
    return init_network(specs, seed)


def conv_network(
    n_channels: int,
    conv_channels=(16, 16),
    hidden=(32, 32),
    seed: int = 0,
) -> NetworkParams:
    """3x3 convolutions over raw channel grids followed by a dense head."""
    specs = []
    width_in = n_channels
    for width in conv_channels:
        specs.append(LayerSpec("conv3x3", width_in, int(width), "relu"))
        width_in = int(width)
    for width in hidden:
        specs.append(LayerSpec("dense", width_in, int(width), "relu"))
        width_in = int(width)
    specs.append(LayerSpec("dense", width_in, 1, "identity"))
    return init_network(specs, seed)


@dataclass
class ForwardCache:
    """Activations saved by forward() for the matching backward() call."""

    n_layers: int
    n_states: int
    grid_shape: tuple[int, int] | None
    flatten_layer: int | None
    inputs: list = field(default_factory=list)
    pre_activations: list = field(default_factory=list)
    padded_inputs: list = field(default_factory=list)


def _conv3x3_apply(grid: np.ndarray, kernel: np.ndarray, bias: np.ndarray):
    _, height, width = grid.shape
    padded = np.zeros((grid.shape[0], height + 2, width + 2))
    padded[:, 1:-1, 1:-1] = grid
    out = np.tile(bias[:, None, None], (1, height, width))
    for dy in range(3):
        for dx in range(3):
            window = padded[:, dy : dy + height, dx : dx + width]
            out += np.einsum("oc,chw->ohw", kernel[:, :, dy, dx], window)
    return out, padded


def _conv3x3_grads(delta: np.ndarray, kernel: np.ndarray, padded: np.ndarray):
    _, height, width = delta.shape
    grad_kernel = np.empty_like(kernel)
    grad_padded = np.zeros_like(padded)
    for dy in range(3):
        for dx in range(3):
            window = padded[:, dy : dy + height, dx : dx + width]
            grad_kernel[:, :, dy, dx] = np.einsum("ohw,chw->oc", delta, window)
            grad_padded[:, dy : dy + height, dx : dx + width] += np.einsum(
                "oc,ohw->chw", kernel[:, :, dy, dx], delta
            )
    grad_bias = delta.sum(axis=(1, 2))
    return grad_kernel, grad_bias, grad_padded[:, 1:-1, 1:-1]


def forward(params: NetworkParams, x) -> tuple[np.ndarray, ForwardCache]:
    """Map features (or raw channel grids) to one reward per state.

    Returns the reward vector and a cache of intermediate activations for
    backward(). Grid input is flattened row-major into per-state rows at
    the first dense layer.
    """
    current = np.asarray(x, dtype=np.float64)
    if current.ndim == 2:
        grid_shape = None
        n_states = current.shape[0]
    elif current.ndim == 3:
        grid_shape = (current.shape[1], current.shape[2])
        n_states = grid_shape[0] * grid_shape[1]
    else:
        raise ValueError(f"input must be 2-D or 3-D, got shape {current.shape}")

    cache = ForwardCache(
        n_layers=len(params.layers),
        n_states=n_states,
        grid_shape=grid_shape,
        flatten_layer=None,
    )
    for i, spec in enumerate(params.layers):
        if spec.kind == "dense":
            if current.ndim == 3:
                channels = current.shape[0]
                current = current.reshape(channels, n_states).T
                cache.flatten_layer = i
            if current.shape[1] != spec.n_in:
                raise ValueError(
                    f"layer {i} expects {spec.n_in} features, got {current.shape[1]}"
                )
            cache.inputs.append(current)
            cache.padded_inputs.append(None)
            z = current @ params.weights[i] + params.biases[i]
        else:
            if current.ndim != 3:
                raise ValueError(f"conv3x3 layer {i} needs grid input")
            if current.shape[0] != spec.n_in:
                raise ValueError(
                    f"layer {i} expects {spec.n_in} channels, got {current.shape[0]}"
                )
            cache.inputs.append(current)
            z, padded = _conv3x3_apply(current, params.weights[i], params.biases[i])
            cache.padded_inputs.append(padded)
        cache.pre_activations.append(z)
        current = np.maximum(z, 0.0) if spec.activation == "relu" else z

    reward = current[:, 0] if current.ndim == 2 else current.reshape(-1)
    return reward, cache


def backward(params: NetworkParams, cache: ForwardCache, error_signal) -> list:
    """Gradients of error_signal . reward with respect to every parameter.

    Returns one (weight_grad, bias_grad) pair per layer, in layer order.
    The cache must come from a forward() call on the same network.
    """
    if cache is None or not isinstance(cache, ForwardCache):
        raise ValueError("backward() needs the cache returned by forward()")
    if cache.n_layers != len(params.layers) or len(cache.inputs) != len(params.layers):
        raise ValueError("cache does not match this network")
    error = np.asarray(error_signal, dtype=np.float64)
    if error.shape != (cache.n_states,):
        raise ValueError(
            f"error signal must have shape ({cache.n_states},), got {error.shape}"
        )

    if params.layers[-1].kind == "dense":
        delta = error[:, None]
    else:
        delta = error.reshape((1,) + cache.grid_shape)

    grads: list = [None] * len(params.layers)
    for i in reversed(range(len(params.layers))):
        spec = params.layers[i]
        if spec.activation == "relu":
            delta = delta * (cache.pre_activations[i] > 0.0)
        if spec.kind == "dense":
            grad_w = cache.inputs[i].T @ delta
            grad_b = delta.sum(axis=0)
            delta = delta @ params.weights[i].T
            if cache.flatten_layer == i:
                channels = params.layers[i].n_in
                delta = delta.T.reshape((channels,) + cache.grid_shape)
        else:
            grad_w, grad_b, delta = _conv3x3_grads(
                delta, params.weights[i], cache.padded_inputs[i]
            )
        grads[i] = (grad_w, grad_b)
    return grads


@dataclass
class AdaGradState:
    """Accumulated squared gradients plus the step-size settings.

    Updates are ascent steps, new = old + lr * g / (sqrt(acc) + damping);
    callers maximize the demonstration log-likelihood.
    """

    learning_rate: float
    damping: float
    accumulators: list

    @classmethod
    def for_params(
        cls,
        params: NetworkParams,
        learning_rate: float = 0.1,
        damping: float = 1e-8,
    ) -> "AdaGradState":
        if learning_rate <= 0.0 or damping <= 0.0:
            raise ValueError("learning_rate and damping must be positive")
        accumulators = [
            (np.zeros_like(w), np.zeros_like(b))
            for w, b in zip(params.weights, params.biases)
        ]
        return cls(learning_rate, damping, accumulators)


def _check_blocks(params: NetworkParams, blocks, label: str) -> None:
    if len(blocks) != len(params.layers):
        raise ValueError(f"{label} does not match the layer count")
    for i, (block_w, block_b) in enumerate(blocks):
        if block_w.shape != params.weights[i].shape or block_b.shape != params.biases[i].shape:
            raise ValueError(f"{label} block {i} has mismatched shapes")


def adagrad_update(params: NetworkParams, grads, state: AdaGradState):
    """Apply one in-place adaptive ascent step; returns (params, state)."""
    _check_blocks(params, grads, "gradient list")
    _check_blocks(params, state.accumulators, "accumulator list")
    for i, (grad_w, grad_b) in enumerate(grads):
        acc_w, acc_b = state.accumulators[i]
        acc_w += grad_w * grad_w
        acc_b += grad_b * grad_b
        params.weights[i] += state.learning_rate * grad_w / (np.sqrt(acc_w) + state.damping)
        params.biases[i] += state.learning_rate * grad_b / (np.sqrt(acc_b) + state.damping)
    return params, state


def apply_weight_decay(grads, params: NetworkParams, strength: float):
    """Subtract strength * weight from each weight gradient, in place.

    Biases are left untouched. With ascent steps this pulls weights
    toward zero, matching a Gaussian prior on the weights.
    """
    if strength < 0.0:
        raise ValueError(f"weight decay strength must be nonnegative, got {strength}")
    _check_blocks(params, grads, "gradient list")
    for (grad_w, _), w in zip(grads, params.weights):
        grad_w -= strength * w
    return grads


def save_params(params: NetworkParams, path) -> None:
    """Write a flat binary snapshot.

    Layout: uint32 layer count, then one length-prefixed ASCII record
    "kind n_in n_out activation" per layer, then the raw little-endian
    float64 weight and bias blocks in layer order.
    """
    with open(path, "wb") as fh:
        fh.write(struct.pack("<I", len(params.layers)))
        for spec in params.layers:
            record = f"{spec.kind} {spec.n_in} {spec.n_out} {spec.activation}".encode("ascii")
            fh.write(struct.pack("<I", len(record)))
            fh.write(record)
        for w, b in zip(params.weights, params.biases):
            fh.write(np.ascontiguousarray(w, dtype=_SNAPSHOT_DTYPE).tobytes())
            fh.write(np.ascontiguousarray(b, dtype=_SNAPSHOT_DTYPE).tobytes())


def load_params(path) -> NetworkParams:
    """Read a snapshot written by save_params()."""
    with open(path, "rb") as fh:
        blob = fh.read()
    try:
        offset = 4
        (n_layers,) = struct.unpack_from("<I", blob, 0)
        specs = []
        for _ in range(n_layers):
            (record_len,) = struct.unpack_from("<I", blob, offset)
            offset += 4
            record = blob[offset : offset + record_len].decode("ascii")
            offset += record_len
            kind, n_in, n_out, activation = record.split()
            specs.append(LayerSpec(kind, int(n_in), int(n_out), activation))
        weights = []
        biases = []
        for spec in specs:
            w_shape = spec.weight_shape()
            w_count = int(np.prod(w_shape))
            w = np.frombuffer(blob, _SNAPSHOT_DTYPE, w_count, offset).reshape(w_shape)
            offset += w_count * 8
            b = np.frombuffer(blob, _SNAPSHOT_DTYPE, spec.n_out, offset)
            offset += spec.n_out * 8
            weights.append(w.copy())
            biases.append(b.copy())
    except (struct.error, ValueError, IndexError) as exc:
        raise ValueError(f"corrupt parameter snapshot {path}: {exc}") from exc
    if offset != len(blob):
        raise ValueError(f"corrupt parameter snapshot {path}: trailing bytes")
    return NetworkParams(tuple(specs), weights, biases)
