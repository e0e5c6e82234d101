"""Minibatch SGD with momentum on softmax cross-entropy."""
import logging
from dataclasses import dataclass, field
from typing import List, Optional, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field
from tqdm import tqdm

from ghostflare.models.classifier import Classifier, build_default, softmax
from ghostflare.models.dataset import Dataset
from ghostflare.utils.numkit import RngStream

logger = logging.getLogger(__name__)


class TrainConfig(BaseModel):
    model_config = ConfigDict(frozen=True)

    learning_rate: float = Field(0.05, gt=0)
    momentum: float = Field(0.9, ge=0, lt=1)
    batch_size: int = Field(32, ge=1)
    epochs: int = Field(20, ge=0)
    train_fraction: float = Field(0.8, gt=0, le=1)
    # rescale any minibatch gradient whose global norm exceeds this
    clip_norm: Optional[float] = Field(5.0, gt=0)
    seed: int = 0


@dataclass
class TrainReport:
    train_accuracy: float
    test_accuracy: Optional[float]
    initial_loss: float
    epoch_losses: List[float] = field(default_factory=list)
    train_size: int = 0
    test_size: int = 0

    def to_dict(self):
        return {
            "train_accuracy": self.train_accuracy,
            "test_accuracy": self.test_accuracy,
            "initial_loss": self.initial_loss,
            "epoch_losses": self.epoch_losses,
            "train_size": self.train_size,
            "test_size": self.test_size,
        }


def cross_entropy(logits: np.ndarray, labels: np.ndarray) -> Tuple[float, np.ndarray]:
    """Mean softmax cross-entropy and its gradient w.r.t. the logits."""
    probs = softmax(logits)
    n = len(labels)
    picked = probs[np.arange(n), labels]
    loss = float(-np.mean(np.log(np.maximum(picked, 1e-300))))
    grad = probs.copy()
    grad[np.arange(n), labels] -= 1.0
    return loss, grad / n


def split_indices(dataset: Dataset, train_fraction: float, stream: RngStream) -> Tuple[np.ndarray, np.ndarray]:
    """Per-class shuffled split; each class keeps floor((1 - f) n) samples for testing."""
    train, test = [], []
    for label in range(dataset.num_classes):
        members = np.flatnonzero(dataset.labels == label)
        members = members[stream.substream(label).permutation(len(members))]
        n_test = int(np.floor(len(members) * (1.0 - train_fraction) + 1e-9))
        test.extend(members[:n_test])
        train.extend(members[n_test:])
    return np.sort(np.asarray(train, dtype=np.int64)), np.sort(np.asarray(test, dtype=np.int64))


def evaluate_loss(model: Classifier, dataset: Dataset, batch_size: int = 256) -> float:
    total = 0.0
    for start in range(0, len(dataset), batch_size):
        batch = slice(start, start + batch_size)
        loss, _ = cross_entropy(model.batch_logits(dataset.images[batch]), dataset.labels[batch])
        total += loss * len(dataset.labels[batch])
    return total / max(len(dataset), 1)


def accuracy(model: Classifier, dataset: Dataset, batch_size: int = 256) -> Optional[float]:
    if len(dataset) == 0:
        return None
    correct = 0
    for start in range(0, len(dataset), batch_size):
        batch = slice(start, start + batch_size)
        predicted = np.argmax(model.batch_logits(dataset.images[batch]), axis=1)
        correct += int(np.sum(predicted == dataset.labels[batch]))
    return correct / len(dataset)


def train(
    config: TrainConfig, dataset: Dataset, model: Optional[Classifier] = None, progress: bool = False
) -> Tuple[Classifier, TrainReport]:
    """
    Train `model` (default: a fresh `build_default` network) on the training
    split of `dataset`.

    Everything random (initial weights, split, batch order) comes from
    substreams of `config.seed`, so equal configs give identical weights.
    """
    if len(dataset) == 0:
        raise ValueError("Cannot train on an empty dataset")
    root = RngStream(config.seed)
    if model is None:
        width, height = dataset.image_size
        model = build_default(root.substream(0), width, height, dataset.class_names)

    train_idx, test_idx = split_indices(dataset, config.train_fraction, root.substream(1))
    train_set, test_set = dataset.subset(train_idx), dataset.subset(test_idx)

    params = [{k: v.copy() for k, v in p.items()} for p in model.params()]
    velocity = [{k: np.zeros_like(v) for k, v in p.items()} for p in params]
    initial_loss = evaluate_loss(model, train_set)
    losses = []

    epochs = tqdm(range(config.epochs), desc="training", disable=not progress)
    for epoch in epochs:
        order = root.substream(2, epoch).permutation(len(train_set))
        for start in range(0, len(order), config.batch_size):
            batch = order[start : start + config.batch_size]
            logits, caches = model.forward(train_set.images[batch])
            _, grad_logits = cross_entropy(logits, train_set.labels[batch])
            _, grads = model.backward(grad_logits, caches)

            if config.clip_norm is not None:
                norm = np.sqrt(sum(float(np.sum(g**2)) for layer in grads for g in layer.values()))
                if norm > config.clip_norm:
                    grads = [{k: g * (config.clip_norm / norm) for k, g in layer.items()} for layer in grads]

            for p, v, g in zip(params, velocity, grads):
                for name in p:
                    v[name] = config.momentum * v[name] - config.learning_rate * g[name]
                    p[name] = p[name] + v[name]
            model = model.with_params(params)

        losses.append(evaluate_loss(model, train_set))
        epochs.set_postfix(loss=f"{losses[-1]:.4f}")
        logger.info("[train] epoch %d/%d loss %.4f", epoch + 1, config.epochs, losses[-1])

    report = TrainReport(
        train_accuracy=accuracy(model, train_set),
        test_accuracy=accuracy(model, test_set),
        initial_loss=initial_loss,
        epoch_losses=losses,
        train_size=len(train_set),
        test_size=len(test_set),
    )
    logger.info("[train] train accuracy %.3f, test accuracy %s", report.train_accuracy, report.test_accuracy)
    return model, report
