"""Dense feed-forward ReLU networks.

Representation, JSON loading, exact evaluation, input-space gradients via
backpropagation, and the plain SGD kernel used by the surrogate trainer.
Networks are immutable after construction; `sgd_step` returns a new network.
"""

from __future__ import annotations

import enum
import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np


class Activation(enum.Enum):
    RELU = "relu"
    LINEAR = "linear"


class ModelFormatError(ValueError):
    """Model file does not conform to the model JSON schema."""


class TrainingError(RuntimeError):
    """A training step produced a non-finite loss."""


def _as_readonly(a, dtype=np.float64):
    out = np.array(a, dtype=dtype)
    out.setflags(write=False)
    return out


@dataclass(frozen=True)
class DenseLayer:
    """One dense layer: weights with shape (out, in), bias of length out."""

    weights: np.ndarray
    bias: np.ndarray
    activation: Activation

    def __post_init__(self):
        w = _as_readonly(self.weights)
        b = _as_readonly(self.bias)
        if w.ndim != 2:
            raise ValueError(f"weights must be 2-d, got shape {w.shape}")
        if b.ndim != 1:
            raise ValueError(f"bias must be 1-d, got shape {b.shape}")
        if w.shape[0] != b.shape[0]:
            raise ValueError(
                f"weights have {w.shape[0]} rows but bias has length {b.shape[0]}"
            )
        if not (np.isfinite(w).all() and np.isfinite(b).all()):
            raise ValueError("layer parameters must be finite")
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "bias", b)

    @property
    def in_dim(self) -> int:
        return self.weights.shape[1]

    @property
    def out_dim(self) -> int:
        return self.weights.shape[0]


@dataclass(frozen=True)
class DenseNetwork:
    """Ordered dense layers composing the function f: R^n -> R^k."""

    layers: tuple[DenseLayer, ...]

    def __post_init__(self):
        layers = tuple(self.layers)
        if not layers:
            raise ValueError("network must have at least one layer")
        for i in range(1, len(layers)):
            if layers[i].in_dim != layers[i - 1].out_dim:
                raise ValueError(
                    f"layer {i} expects {layers[i].in_dim} inputs but layer "
                    f"{i - 1} produces {layers[i - 1].out_dim} outputs"
                )
        object.__setattr__(self, "layers", layers)

    @property
    def input_dim(self) -> int:
        return self.layers[0].in_dim

    @property
    def output_dim(self) -> int:
        return self.layers[-1].out_dim


def _check_input(net: DenseNetwork, x: np.ndarray) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    if x.shape != (net.input_dim,):
        raise ValueError(f"input has shape {x.shape}, expected ({net.input_dim},)")
    if not np.isfinite(x).all():
        raise ValueError("input entries must be finite")
    return x


def forward(net: DenseNetwork, x: np.ndarray) -> np.ndarray:
    """Evaluate f(x) exactly (float64, deterministic)."""
    z = _check_input(net, x)
    for layer in net.layers:
        z = layer.weights @ z + layer.bias
        if layer.activation is Activation.RELU:
            z = np.maximum(z, 0.0)
    return z


def forward_batch(net: DenseNetwork, xs: np.ndarray) -> np.ndarray:
    """Evaluate f row-wise on an (m, input_dim) array."""
    zs = np.asarray(xs, dtype=np.float64)
    if zs.ndim != 2 or zs.shape[1] != net.input_dim:
        raise ValueError(f"batch has shape {zs.shape}, expected (m, {net.input_dim})")
    for layer in net.layers:
        zs = zs @ layer.weights.T + layer.bias
        if layer.activation is Activation.RELU:
            zs = np.maximum(zs, 0.0)
    return zs


def forward_trace(net: DenseNetwork, x: np.ndarray):
    """Forward pass keeping per-layer (pre, post) activations."""
    z = _check_input(net, x)
    trace = []
    for layer in net.layers:
        pre = layer.weights @ z + layer.bias
        post = np.maximum(pre, 0.0) if layer.activation is Activation.RELU else pre
        trace.append((pre, post))
        z = post
    return trace

def gradient(net: DenseNetwork, x: np.ndarray, output_index: int, sign: float = 1.0) -> np.ndarray:
    """Gradient of sign * f_i at x. Subgradient 0 is used at ReLU kinks."""
    if not 0 <= output_index < net.output_dim:
        raise IndexError(
            f"output index {output_index} out of range for {net.output_dim} outputs"
        )
    if sign not in (1.0, -1.0, 1, -1):
        raise ValueError("sign must be +1 or -1")
    trace = forward_trace(net, x)
    delta = np.zeros(net.output_dim)
    delta[output_index] = float(sign)
    # walk layers backwards; ReLU passes gradient only where pre > 0 (strict)
    for layer, (pre, _post) in zip(reversed(net.layers), reversed(trace)):
        if layer.activation is Activation.RELU:
            delta = delta * (pre > 0.0)
        delta = layer.weights.T @ delta
    return delta


def sgd_step(
    net: DenseNetwork, batch: tuple[np.ndarray, np.ndarray], learning_rate: float
) -> tuple[DenseNetwork, float]:
    """One full-batch gradient step on mean-squared error.

    Returns the updated network and the pre-step loss. The input network is
    left untouched (layers are immutable).
    """
    xs, ys = batch
    xs = np.asarray(xs, dtype=np.float64)
    ys = np.asarray(ys, dtype=np.float64)
    if xs.ndim != 2 or xs.shape[0] == 0:
        raise ValueError("batch inputs must be a nonempty (m, input_dim) array")
    if ys.shape != (xs.shape[0], net.output_dim):
        raise ValueError(
            f"batch targets have shape {ys.shape}, expected ({xs.shape[0]}, {net.output_dim})"
        )
    if xs.shape[1] != net.input_dim:
        raise ValueError(f"batch inputs have width {xs.shape[1]}, expected {net.input_dim}")

    m = xs.shape[0]
    pres = []
    posts = [xs]
    z = xs
    for layer in net.layers:
        pre = z @ layer.weights.T + layer.bias
        z = np.maximum(pre, 0.0) if layer.activation is Activation.RELU else pre
        pres.append(pre)
        posts.append(z)

    err = posts[-1] - ys
    loss = float(np.mean(err**2))
    if not np.isfinite(loss):
        raise TrainingError("non-finite MSE loss")

    # d(loss)/d(pred) for loss = mean over all m*k entries of err^2
    delta = (2.0 / (m * net.output_dim)) * err
    new_layers: list[DenseLayer] = [None] * len(net.layers)  # type: ignore[list-item]
    for i in range(len(net.layers) - 1, -1, -1):
        layer = net.layers[i]
        if layer.activation is Activation.RELU:
            delta = delta * (pres[i] > 0.0)
        grad_w = delta.T @ posts[i]
        grad_b = delta.sum(axis=0)
        new_layers[i] = DenseLayer(
            layer.weights - learning_rate * grad_w,
            layer.bias - learning_rate * grad_b,
            layer.activation,
        )
        delta = delta @ layer.weights
    return DenseNetwork(tuple(new_layers)), loss


def _layer_from_json(obj, index: int) -> DenseLayer:
    if not isinstance(obj, dict):
        raise ModelFormatError(f"layers[{index}] must be an object")
    for field in ("weights", "bias", "activation"):
        if field not in obj:
            raise ModelFormatError(f"layers[{index}] missing field '{field}'")
    act_name = obj["activation"]
    try:
        activation = Activation(act_name)
    except ValueError:
        raise ModelFormatError(
            f"layers[{index}].activation must be 'relu' or 'linear', got {act_name!r}"
        ) from None
    try:
        return DenseLayer(np.array(obj["weights"], dtype=np.float64),
                          np.array(obj["bias"], dtype=np.float64),
                          activation)
    except ValueError as exc:
        raise ModelFormatError(f"layers[{index}]: {exc}") from exc


def load_network(path: str | Path) -> DenseNetwork:
    """Load and validate a network from the model JSON schema.

    Schema: {"input_dim": int, "layers": [{"weights": [[float]],
    "bias": [float], "activation": "relu"|"linear"}]}. The final layer must
    be linear (regression outputs carry no activation).
    """
    path = Path(path)
    try:
        raw = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise ModelFormatError(f"{path}: not valid JSON ({exc})") from exc
    if not isinstance(raw, dict):
        raise ModelFormatError(f"{path}: top level must be an object")
    if "input_dim" not in raw:
        raise ModelFormatError(f"{path}: missing field 'input_dim'")
    if not isinstance(raw["input_dim"], int) or raw["input_dim"] < 1:
        raise ModelFormatError(f"{path}: 'input_dim' must be a positive integer")
    if "layers" not in raw or not isinstance(raw["layers"], list) or not raw["layers"]:
        raise ModelFormatError(f"{path}: 'layers' must be a nonempty array")

    layers = [_layer_from_json(obj, i) for i, obj in enumerate(raw["layers"])]
    if layers[0].in_dim != raw["input_dim"]:
        raise ModelFormatError(
            f"{path}: layers[0] expects {layers[0].in_dim} inputs, "
            f"input_dim says {raw['input_dim']}"
        )
    for i in range(1, len(layers)):
        if layers[i].in_dim != layers[i - 1].out_dim:
            raise ModelFormatError(
                f"{path}: layers[{i}] expects {layers[i].in_dim} inputs but "
                f"layers[{i - 1}] produces {layers[i - 1].out_dim} outputs"
            )
    if layers[-1].activation is not Activation.LINEAR:
        raise ModelFormatError(f"{path}: final layer must have linear activation")
    return DenseNetwork(tuple(layers))


def save_network(net: DenseNetwork, path: str | Path) -> None:
    """Write a network in the model JSON schema (floats kept exact via repr)."""
    doc = {
        "input_dim": net.input_dim,
        "layers": [
            {
                "weights": layer.weights.tolist(),
                "bias": layer.bias.tolist(),
                "activation": layer.activation.value,
            }
            for layer in net.layers
        ],
    }
    Path(path).write_text(json.dumps(doc))
