"""
A small convolutional image classifier with logits and input gradients.

The model is immutable once built: `logits` and `input_grad` never touch the
weights, so one instance can be shared between evaluation threads. Training
lives in `ghostflare.models.training` and produces new instances.

Saved models are JSON:

    {
      "format": "ghostflare-classifier",
      "version": 1,
      "input": [h, w, 3],
      "classes": ["octagon", ...],
      "layers": [
        {"type": "conv", "stride": 2, "shape": [kh, kw, c_in, c_out],
         "weights": [hex floats, row-major], "bias": [hex floats]},
        {"type": "relu"},
        {"type": "maxpool", "size": 2},
        {"type": "flatten"},
        {"type": "dense", "shape": [n_in, n_out], "weights": [...], "bias": [...]}
      ]
    }

Floats are written with `float.hex` so a save/load cycle is bit-exact.
"""
import json
import logging
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from ghostflare.exceptions import DimMismatch, ParseError
from ghostflare.models.layers import Conv2D, Dense, Flatten, Layer, MaxPool, ReLU
from ghostflare.utils.numkit import RngStream

logger = logging.getLogger(__name__)

MODEL_FORMAT = "ghostflare-classifier"
MODEL_VERSION = 1


def softmax(logits: np.ndarray) -> np.ndarray:
    shifted = logits - np.max(logits, axis=-1, keepdims=True)
    exp = np.exp(shifted)
    return exp / exp.sum(axis=-1, keepdims=True)


class Classifier:
    """
    Ordered layer stack mapping an (h, w, 3) image to m logits.

    Attributes:
        layers (List[Layer]): Forward order.
        input_shape (Tuple[int, int, int]): (h, w, 3).
        class_names (List[str]): One name per logit.
    """

    def __init__(self, layers: Sequence[Layer], input_shape, class_names: Optional[Sequence[str]] = None):
        self.layers: List[Layer] = list(layers)
        self.input_shape = tuple(int(v) for v in input_shape)
        if len(self.input_shape) != 3 or self.input_shape[2] != 3:
            raise DimMismatch(f"Input shape must be (h, w, 3), got {self.input_shape}")

        shape = self.input_shape
        for layer in self.layers:
            for name, value in layer.params().items():
                if not np.all(np.isfinite(value)):
                    raise ValueError(f"{layer.kind} layer has non-finite {name}")
            shape = layer.output_shape(shape)
        if len(shape) != 1:
            raise DimMismatch(f"Network must end in a flat logit vector, ends in {shape}")
        self.num_classes = shape[0]

        if class_names is None:
            class_names = [str(i) for i in range(self.num_classes)]
        if len(class_names) != self.num_classes:
            raise DimMismatch(f"{len(class_names)} class names for {self.num_classes} logits")
        self.class_names = list(class_names)

    def _check_batch(self, batch: np.ndarray) -> np.ndarray:
        batch = np.asarray(batch, dtype=np.float64)
        if batch.shape[1:] != self.input_shape:
            raise DimMismatch(f"Model expects images of shape {self.input_shape}, got {batch.shape[1:]}")
        return batch

    def forward(self, batch: np.ndarray) -> Tuple[np.ndarray, list]:
        """Batch logits (n, m) plus the per-layer caches `backward` needs."""
        out = self._check_batch(batch)
        caches = []
        for layer in self.layers:
            out, cache = layer.forward(out)
            caches.append(cache)
        return out, caches

    def backward(self, grad_logits: np.ndarray, caches: list) -> Tuple[np.ndarray, List[Dict[str, np.ndarray]]]:
        """Gradient w.r.t. the input batch and per-layer parameter gradients."""
        grad = np.asarray(grad_logits, dtype=np.float64)
        param_grads: List[Dict[str, np.ndarray]] = [{} for _ in self.layers]
        for index in range(len(self.layers) - 1, -1, -1):
            grad, param_grads[index] = self.layers[index].backward(grad, caches[index])
        return grad, param_grads

    def batch_logits(self, batch: np.ndarray) -> np.ndarray:
        return self.forward(batch)[0]

    def logits(self, image: np.ndarray) -> np.ndarray:
        return self.batch_logits(np.asarray(image)[np.newaxis])[0]

    def probabilities(self, image: np.ndarray) -> np.ndarray:
        return softmax(self.logits(image))

    def predict(self, image: np.ndarray) -> int:
        return int(np.argmax(self.logits(image)))

    def batch_input_grad(self, batch: np.ndarray, cotangents: np.ndarray) -> np.ndarray:
        cotangents = np.asarray(cotangents, dtype=np.float64)
        _, caches = self.forward(batch)
        if cotangents.shape != (len(batch), self.num_classes):
            raise DimMismatch(f"Cotangent shape {cotangents.shape} does not match {len(batch)} x {self.num_classes} logits")
        return self.backward(cotangents, caches)[0]

    def input_grad(self, image: np.ndarray, cotangent) -> np.ndarray:
        """d(cotangent . Z(x)) / dx for one image."""
        cotangent = np.asarray(cotangent, dtype=np.float64)
        if cotangent.shape != (self.num_classes,):
            raise DimMismatch(f"Cotangent must have {self.num_classes} entries, got {cotangent.shape}")
        return self.batch_input_grad(np.asarray(image)[np.newaxis], cotangent[np.newaxis])[0]

    def with_params(self, params: List[Dict[str, np.ndarray]]) -> "Classifier":
        """A copy of this network carrying new parameter arrays."""
        return Classifier(
            [_rebuild(layer, p) for layer, p in zip(self.layers, params)], self.input_shape, self.class_names
        )

    def params(self) -> List[Dict[str, np.ndarray]]:
        return [layer.params() for layer in self.layers]

    def to_dict(self) -> Dict:
        layers = []
        for layer in self.layers:
            entry = layer.describe()
            for name, value in layer.params().items():
                entry[name] = [float(v).hex() for v in value.ravel()]
            layers.append(entry)
        return {
            "format": MODEL_FORMAT,
            "version": MODEL_VERSION,
            "input": list(self.input_shape),
            "classes": self.class_names,
            "layers": layers,
        }

    @classmethod
    def from_dict(cls, data: Dict) -> "Classifier":
        try:
            if data.get("format") != MODEL_FORMAT:
                raise ParseError(f"Not a {MODEL_FORMAT} file")
            layers = [_layer_from_dict(entry) for entry in data["layers"]]
            return cls(layers, data["input"], data.get("classes"))
        except (KeyError, TypeError, AttributeError) as exc:
            raise ParseError(f"Malformed model description: {exc!r}") from exc


def _rebuild(layer: Layer, params: Dict[str, np.ndarray]) -> Layer:
    if isinstance(layer, Conv2D):
        return Conv2D(params["weights"], params["bias"], layer.stride)
    if isinstance(layer, Dense):
        return Dense(params["weights"], params["bias"])
    return layer


def _floats(values, name: str) -> np.ndarray:
    try:
        return np.array([float.fromhex(v) if isinstance(v, str) else float(v) for v in values])
    except (TypeError, ValueError) as exc:
        raise ParseError(f"Bad number in '{name}': {exc}") from exc


def _layer_from_dict(entry: Dict) -> Layer:
    kind = entry["type"]
    if kind in ("conv", "dense"):
        shape = tuple(int(v) for v in entry["shape"])
        weights = _floats(entry["weights"], "weights")
        bias = _floats(entry["bias"], "bias")
        if weights.size != int(np.prod(shape)):
            raise DimMismatch(f"{kind} layer declares shape {shape} but holds {weights.size} weights")
        weights = weights.reshape(shape)
        if kind == "conv":
            return Conv2D(weights, bias, int(entry.get("stride", 1)))
        return Dense(weights, bias)
    if kind == "relu":
        return ReLU()
    if kind == "maxpool":
        return MaxPool(int(entry.get("size", 2)))
    if kind == "flatten":
        return Flatten()
    raise ParseError(f"Unknown layer type {kind!r}")


def save_classifier(model: Classifier, path) -> None:
    Path(path).write_text(json.dumps(model.to_dict()) + "\n", encoding="utf-8")
    logger.info("[save_classifier] wrote %s", path)


def load_classifier(path) -> Classifier:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise ParseError(f"Cannot read model {path}: {exc}") from exc
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ParseError(f"Invalid model JSON: {exc.msg}", offset=exc.pos) from exc
    if not isinstance(data, dict):
        raise ParseError("Model file must hold a JSON object", offset=0)
    return Classifier.from_dict(data)


def he_uniform(stream: RngStream, shape, fan_in: int) -> np.ndarray:
    limit = np.sqrt(6.0 / fan_in)
    return stream.uniform(-limit, limit, size=shape)


def build_default(
    stream: RngStream,
    width: int = 32,
    height: int = 32,
    class_names: Optional[Sequence[str]] = None,
    num_classes: int = 8,
) -> Classifier:
    """
    The default sign network: conv 16@5x5/2, relu, conv 32@3x3/2, relu,
    flatten, dense 64, relu, dense m. Weights are He-uniform, biases zero.
    """
    if class_names is not None:
        num_classes = len(class_names)
    conv1 = Conv2D(he_uniform(stream.substream(0), (5, 5, 3, 16), 5 * 5 * 3), np.zeros(16), stride=2)
    conv2 = Conv2D(he_uniform(stream.substream(1), (3, 3, 16, 32), 3 * 3 * 16), np.zeros(32), stride=2)
    h, w, c = conv2.output_shape(conv1.output_shape((height, width, 3)))
    flat = h * w * c
    dense1 = Dense(he_uniform(stream.substream(2), (flat, 64), flat), np.zeros(64))
    dense2 = Dense(he_uniform(stream.substream(3), (64, num_classes), 64), np.zeros(num_classes))
    return Classifier(
        [conv1, ReLU(), conv2, ReLU(), Flatten(), dense1, ReLU(), dense2],
        (height, width, 3),
        class_names,
    )
