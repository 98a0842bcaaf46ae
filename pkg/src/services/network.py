"""
Dense ReLU classifier with dropout, softmax output, backpropagation and Adam.
"""

import logging
from dataclasses import dataclass
from typing import List, Optional, Tuple

import numpy as np

from ..models.schemas import ModelConfig

logger = logging.getLogger(__name__)

PROB_FLOOR = 1e-12


class DimensionMismatchError(ValueError):
    pass


class NonFiniteGradientError(ValueError):
    pass


@dataclass
class DenseLayer:
    """
    weights: (n_out, n_in); bias: (n_out,)
    """

    weights: np.ndarray
    bias: np.ndarray

    @property
    def n_in(self) -> int:
        return int(self.weights.shape[1])

    @property
    def n_out(self) -> int:
        return int(self.weights.shape[0])

    @property
    def parameter_count(self) -> int:
        return int(self.weights.size + self.bias.size)


@dataclass
class Network:
    layers: List[DenseLayer]
    config: ModelConfig
    labels: List[str]
    input_mean: np.ndarray
    input_std: np.ndarray

    @property
    def input_dim(self) -> int:
        return self.layers[0].n_in

    @property
    def n_classes(self) -> int:
        return self.layers[-1].n_out

    def parameters(self) -> List[np.ndarray]:
        params = []
        for layer in self.layers:
            params.extend([layer.weights, layer.bias])
        return params

    def fit_input_scaling(self, features: np.ndarray) -> None:
        """
        Store per-feature mean and std of the training inputs.
        """
        std = features.std(axis=0)
        self.input_mean = features.mean(axis=0)
        self.input_std = np.where(std > 0, std, 1.0)


@dataclass
class ForwardCache:
    inputs: List[np.ndarray]
    pre_activations: List[np.ndarray]
    masks: List[Optional[np.ndarray]]
    probs: np.ndarray


@dataclass
class AdamState:
    m: List[np.ndarray]
    v: List[np.ndarray]
    t: int = 0
    learning_rate: float = 0.001
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8

    @classmethod
    def create(cls, params: List[np.ndarray], **hyperparams) -> "AdamState":
        return cls(
            m=[np.zeros_like(p) for p in params],
            v=[np.zeros_like(p) for p in params],
            **hyperparams,
        )


def build_network(
    config: ModelConfig, seed: int = 0, labels: Optional[List[str]] = None
) -> Network:
    """
    Glorot-uniform weights, zero biases.
    """
    rng = np.random.default_rng(seed)
    sizes = config.layer_sizes
    layers = []
    for n_in, n_out in zip(sizes[:-1], sizes[1:]):
        limit = np.sqrt(6.0 / (n_in + n_out))
        layers.append(
            DenseLayer(
                weights=rng.uniform(-limit, limit, size=(n_out, n_in)),
                bias=np.zeros(n_out),
            )
        )
    if labels is None:
        labels = [f"class_{i}" for i in range(sizes[-1])]
    if len(labels) != sizes[-1]:
        raise DimensionMismatchError(
            f"{len(labels)} labels for an output layer of size {sizes[-1]}"
        )
    return Network(
        layers=layers,
        config=config,
        labels=list(labels),
        input_mean=np.zeros(sizes[0]),
        input_std=np.ones(sizes[0]),
    )


def parameter_count(net: Network) -> int:
    return sum(layer.parameter_count for layer in net.layers)


def model_summary(net: Network) -> str:
    """
    Layer table with parameter counts.
    """
    rows = [f"{'Layer (type)':<28}{'Output Shape':<18}Param #"]
    n_layers = len(net.layers)
    for i, layer in enumerate(net.layers):
        shape = f"(None, {layer.n_out})"
        rows.append(f"{f'dense_{i} (Dense)':<28}{shape:<18}{layer.parameter_count}")
        activation = "relu" if i < n_layers - 1 else "softmax"
        rows.append(f"{f'activation_{i} ({activation})':<28}{shape:<18}0")
        if i < n_layers - 1 and net.config.dropout_rate > 0:
            rows.append(f"{f'dropout_{i} (Dropout)':<28}{shape:<18}0")
    total = parameter_count(net)
    rows.append(f"Total params: {total:,}")
    rows.append(f"Trainable params: {total:,}")
    return "\n".join(rows)


def relu(x):
    return np.maximum(0.0, x)


def softmax(logits) -> np.ndarray:
    """
    Numerically stable softmax along the last axis.
    """
    logits = np.asarray(logits, dtype=np.float64)
    shifted = np.exp(logits - logits.max(axis=-1, keepdims=True))
    return shifted / shifted.sum(axis=-1, keepdims=True)


def dropout(
    x: np.ndarray, rate: float, rng: np.random.Generator
) -> Tuple[np.ndarray, np.ndarray]:
    """
    Inverted dropout: kept units are scaled by 1 / (1 - rate).
    """
    mask = (rng.random(x.shape) >= rate) / (1.0 - rate)
    return x * mask, mask


def forward(
    net: Network,
    inputs,
    mode: str = "infer",
    rng: Optional[np.random.Generator] = None,
) -> Tuple[np.ndarray, Optional[ForwardCache]]:
    """
    Run the network on one feature vector or a batch of them.

    Args:
        net: the network
        inputs: shape (n_features,) or (batch, n_features)
        mode: "train" applies dropout and returns a cache for backward
        rng: generator for dropout masks

    Returns:
        Class probabilities with the input's rank, and the cache (train mode only)
    """
    if mode not in ("train", "infer"):
        raise ValueError(f"Unknown mode: {mode}")
    x = np.asarray(inputs, dtype=np.float64)
    single = x.ndim == 1
    x = np.atleast_2d(x)
    if x.shape[1] != net.input_dim:
        raise DimensionMismatchError(
            f"Input has {x.shape[1]} features, network expects {net.input_dim}"
        )
    training = mode == "train"
    rate = net.config.dropout_rate
    if training and rate > 0 and rng is None:
        rng = np.random.default_rng()

    h = (x - net.input_mean) / net.input_std
    inputs_cache, pre_cache, masks = [], [], []
    for layer in net.layers[:-1]:
        inputs_cache.append(h)
        z = h @ layer.weights.T + layer.bias
        pre_cache.append(z)
        h = relu(z)
        mask = None
        if training and rate > 0:
            h, mask = dropout(h, rate, rng)
        masks.append(mask)

    last = net.layers[-1]
    inputs_cache.append(h)
    probs = softmax(h @ last.weights.T + last.bias)

    cache = ForwardCache(inputs_cache, pre_cache, masks, probs) if training else None
    return (probs[0] if single else probs), cache


def cross_entropy(probs, target) -> float:
    """
    Mean of -ln p[target] over the batch, probabilities clipped to [1e-12, 1].
    """
    probs = np.atleast_2d(np.asarray(probs, dtype=np.float64))
    target = np.atleast_2d(np.asarray(target, dtype=np.float64))
    if probs.shape != target.shape:
        raise DimensionMismatchError(f"probs {probs.shape} vs target {target.shape}")
    picked = np.sum(np.clip(probs, PROB_FLOOR, 1.0) * target, axis=1)
    return float(np.mean(-np.log(picked)))


def one_hot(labels, n_classes: int) -> np.ndarray:
    labels = np.asarray(labels, dtype=np.int64)
    encoded = np.zeros((labels.size, n_classes))
    encoded[np.arange(labels.size), labels] = 1.0
    return encoded


def backward(net: Network, cache: Optional[ForwardCache], target) -> List[np.ndarray]:
    """
    Gradients of the mean cross-entropy, ordered like ``net.parameters()``.
    """
    if cache is None:
        raise ValueError("backward needs the cache of a train-mode forward pass")
    target = np.atleast_2d(np.asarray(target, dtype=np.float64))
    batch = target.shape[0]

    # softmax + cross-entropy: dL/dz = p - y
    delta = (cache.probs - target) / batch
    grads: List[np.ndarray] = []
    for i in range(len(net.layers) - 1, -1, -1):
        layer = net.layers[i]
        grads[:0] = [delta.T @ cache.inputs[i], delta.sum(axis=0)]
        if i == 0:
            break
        upstream = delta @ layer.weights
        mask = cache.masks[i - 1]
        if mask is not None:
            upstream = upstream * mask
        delta = upstream * (cache.pre_activations[i - 1] > 0)
    return grads


def adam_step(
    state: AdamState, params: List[np.ndarray], grads: List[np.ndarray]
) -> Tuple[List[np.ndarray], AdamState]:
    """
    One bias-corrected Adam update, applied to ``params`` in place.
    """
    if len(params) != len(grads) or len(params) != len(state.m):
        raise ValueError("params, grads and optimizer state differ in length")
    for p, g in zip(params, grads):
        if p.shape != g.shape:
            raise ValueError(f"Gradient shape {g.shape} does not match parameter {p.shape}")
        if not np.all(np.isfinite(g)):
            raise NonFiniteGradientError(f"Non-finite gradient at step {state.t + 1}")

    state.t += 1
    correction1 = 1.0 - state.beta1**state.t
    correction2 = 1.0 - state.beta2**state.t
    for p, g, m, v in zip(params, grads, state.m, state.v):
        m *= state.beta1
        m += (1.0 - state.beta1) * g
        v *= state.beta2
        v += (1.0 - state.beta2) * g * g
        p -= state.learning_rate * (m / correction1) / (np.sqrt(v / correction2) + state.epsilon)
    return params, state


def predict(net: Network, inputs) -> np.ndarray:
    probs, _ = forward(net, inputs, mode="infer")
    return np.argmax(np.atleast_2d(probs), axis=1)


def accuracy(net: Network, inputs, labels) -> float:
    labels = np.asarray(labels)
    if labels.size == 0:
        return 0.0
    return float(np.mean(predict(net, inputs) == labels))
