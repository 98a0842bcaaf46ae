import hashlib
import json
import logging
from pathlib import Path
from typing import List, Union

import numpy as np
from pydantic import BaseModel, ValidationError

from ..models.schemas import ModelConfig
from .network import DenseLayer, Network, forward

logger = logging.getLogger(__name__)

FORMAT_VERSION = 1


class ModelFileError(ValueError):
    """Model file could not be loaded."""


class ModelVersionError(ModelFileError):
    pass


class CorruptModelError(ModelFileError):
    pass


class ModelShapeError(ModelFileError):
    pass


class LayerParams(BaseModel):
    weights: List[List[float]]
    bias: List[float]


class ModelFile(BaseModel):
    """
    On-disk JSON layout of a trained network.
    """

    format_version: int
    layer_sizes: List[int]
    hidden_activation: str
    output_activation: str
    dropout_rate: float
    standardize_inputs: bool = True
    labels: List[str]
    input_mean: List[float]
    input_std: List[float]
    layers: List[LayerParams]


def model_id_from_bytes(data: bytes) -> str:
    return hashlib.sha256(data).hexdigest()[:12]


def serialize_model(net: Network) -> bytes:
    payload = ModelFile(
        format_version=FORMAT_VERSION,
        layer_sizes=net.config.layer_sizes,
        hidden_activation=net.config.hidden_activation,
        output_activation=net.config.output_activation,
        dropout_rate=net.config.dropout_rate,
        standardize_inputs=net.config.standardize_inputs,
        labels=net.labels,
        input_mean=net.input_mean.tolist(),
        input_std=net.input_std.tolist(),
        layers=[
            LayerParams(weights=layer.weights.tolist(), bias=layer.bias.tolist())
            for layer in net.layers
        ],
    )
    # json floats are written with repr, which round-trips exactly
    return json.dumps(payload.model_dump()).encode("utf-8")


def save_model(net: Network, path: Union[str, Path]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    data = serialize_model(net)
    try:
        path.write_bytes(data)
    except OSError as e:
        logger.error(f"Error writing model to {path}: {e}")
        raise
    logger.info(f"Saved model {model_id_from_bytes(data)} to {path}")
    return path


def _as_matrix(rows: List[List[float]], n_out: int, n_in: int, where: str) -> np.ndarray:
    if len(rows) != n_out or any(len(row) != n_in for row in rows):
        raise ModelShapeError(f"{where}: expected a {n_out}x{n_in} weight matrix")
    return np.array(rows, dtype=np.float64).reshape(n_out, n_in)


def _as_vector(values: List[float], n: int, where: str) -> np.ndarray:
    if len(values) != n:
        raise ModelShapeError(f"{where}: expected {n} values, found {len(values)}")
    return np.array(values, dtype=np.float64)


def deserialize_model(data: bytes) -> Network:
    try:
        raw = json.loads(data.decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as e:
        raise CorruptModelError(f"Model file is not valid JSON: {e}") from e
    if not isinstance(raw, dict):
        raise CorruptModelError("Model file must contain a JSON object")
    version = raw.get("format_version")
    if version != FORMAT_VERSION:
        raise ModelVersionError(
            f"Unsupported model format version {version!r}, expected {FORMAT_VERSION}"
        )
    try:
        payload = ModelFile.model_validate(raw)
        config = ModelConfig(
            layer_sizes=payload.layer_sizes,
            dropout_rate=payload.dropout_rate,
            hidden_activation=payload.hidden_activation,
            output_activation=payload.output_activation,
            standardize_inputs=payload.standardize_inputs,
        )
    except ValidationError as e:
        raise CorruptModelError(f"Invalid model file: {e}") from e

    sizes = config.layer_sizes
    if len(payload.layers) != len(sizes) - 1:
        raise ModelShapeError(
            f"{len(payload.layers)} layers stored for layer sizes {sizes}"
        )
    if len(payload.labels) != sizes[-1]:
        raise ModelShapeError(f"{len(payload.labels)} labels for {sizes[-1]} outputs")

    layers = []
    for i, (params, n_in, n_out) in enumerate(zip(payload.layers, sizes[:-1], sizes[1:])):
        layers.append(
            DenseLayer(
                weights=_as_matrix(params.weights, n_out, n_in, f"layer {i}"),
                bias=_as_vector(params.bias, n_out, f"layer {i} bias"),
            )
        )
    return Network(
        layers=layers,
        config=config,
        labels=payload.labels,
        input_mean=_as_vector(payload.input_mean, sizes[0], "input_mean"),
        input_std=_as_vector(payload.input_std, sizes[0], "input_std"),
    )


def load_model(path: Union[str, Path]) -> Network:
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"Model file not found: {path}")
    try:
        return deserialize_model(path.read_bytes())
    except Exception as e:
        logger.error(f"Error loading model from {path}: {e}")
        raise


class ModelManager:
    """
    Holds one loaded network for inference. The network is never mutated
    after loading, so one manager can serve concurrent requests.
    """

    def __init__(self, net: Network, model_id: str, path: Union[str, Path, None] = None):
        self.net = net
        self.model_id = model_id
        self.path = Path(path) if path is not None else None

    @classmethod
    def from_path(cls, path: Union[str, Path]) -> "ModelManager":
        path = Path(path)
        net = load_model(path)
        model_id = model_id_from_bytes(path.read_bytes())
        logger.info(f"Loaded model {model_id} from {path} ({len(net.labels)} classes)")
        return cls(net, model_id, path)

    @classmethod
    def from_network(cls, net: Network) -> "ModelManager":
        return cls(net, model_id_from_bytes(serialize_model(net)))

    @property
    def labels(self) -> List[str]:
        return self.net.labels

    @property
    def input_dim(self) -> int:
        return self.net.input_dim

    def predict_proba(self, features: np.ndarray) -> np.ndarray:
        """
        Class probabilities for one feature vector or a batch.
        """
        probs, _ = forward(self.net, features, mode="infer")
        return probs
