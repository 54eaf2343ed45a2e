"""Training loop, evaluation, and single-image prediction with optional TTA."""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from .backbone import Model, model_forward
from .data import Dataset
from .errors import ConfigurationError, DimensionError, EvaluationError
from .seeds import STREAM_SHUFFLE, child_rng
from .tensor import AdamState, Tape, Tensor, adam_step, backward, softmax_cross_entropy_mean

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 10
    batch_size: int = 32
    learning_rate: float = 1e-3
    seed: int = 0
    width: int = 32
    segments: int = 2
    layers: int = 4


@dataclass
class EpochStats:
    loss: float
    accuracy: float


@dataclass
class EvalReport:
    accuracy: float
    per_class_accuracy: list[float]
    confusion: np.ndarray  # [C, C] int64, rows true class, columns predicted
    n_test: int


def _batch_tensor(dataset: Dataset, indices) -> tuple[Tensor, np.ndarray]:
    images = np.stack([dataset.items[i].pixels.data for i in indices])
    targets = np.array([dataset.items[i].label for i in indices], dtype=np.int64)
    return Tensor(images), targets


def fit(model: Model, dataset: Dataset, config: TrainConfig) -> list[EpochStats]:
    """Train in place on the dataset's train split; returns per-epoch stats.

    Each epoch shuffles the train items with a seeded permutation and steps
    Adam once per minibatch (the last batch may be smaller). The recorded
    accuracy is measured on the evolving model during the epoch. Identical
    (model, data, config) give bit-identical histories.
    """
    if len(dataset.class_names) != model.n_classes:
        raise ConfigurationError(
            f"dataset has {len(dataset.class_names)} classes, model expects {model.n_classes}")
    train_idx = dataset.indices("train") if dataset.split is not None \
        else list(range(len(dataset.items)))
    params = model.parameters()
    state = AdamState.for_params(params, learning_rate=config.learning_rate)
    history: list[EpochStats] = []
    for epoch in range(config.epochs):
        rng = child_rng(config.seed, STREAM_SHUFFLE, epoch)
        order = rng.permutation(len(train_idx))
        loss_sum = 0.0
        correct = 0
        for start in range(0, len(order), config.batch_size):
            chunk = [train_idx[j] for j in order[start:start + config.batch_size]]
            images, targets = _batch_tensor(dataset, chunk)
            with Tape() as tape:
                logits = model_forward(model, images)
                loss = softmax_cross_entropy_mean(logits, targets)
                backward(loss, tape)
            adam_step(params, state)
            loss_sum += float(loss.data[0]) * len(chunk)
            correct += int((logits.data.argmax(axis=1) == targets).sum())
        n = len(train_idx)
        stats = EpochStats(loss_sum / n, correct / n)
        history.append(stats)
        logger.info("epoch %d/%d loss %.6f acc %.4f",
                    epoch + 1, config.epochs, stats.loss, stats.accuracy)
    return history


def evaluate(model: Model, dataset: Dataset, batch_size: int = 64,
             forward=model_forward) -> EvalReport:
    """Confusion matrix and accuracy over the dataset's test split.

    Predictions take the argmax of the logits, ties broken toward the
    lower class index.
    """
    n_classes = len(dataset.class_names)
    if n_classes != model.n_classes:
        raise ConfigurationError(
            f"dataset has {n_classes} classes, model expects {model.n_classes}")
    test_idx = dataset.indices("test") if dataset.split is not None else []
    if not test_idx:
        raise EvaluationError("test split is empty")
    confusion = np.zeros((n_classes, n_classes), dtype=np.int64)
    for start in range(0, len(test_idx), batch_size):
        chunk = test_idx[start:start + batch_size]
        images, targets = _batch_tensor(dataset, chunk)
        logits = forward(model, images)
        predicted = logits.data.argmax(axis=1)
        np.add.at(confusion, (targets, predicted), 1)
    n_test = int(confusion.sum())
    row_sums = confusion.sum(axis=1)
    per_class = [int(confusion[i, i]) / int(row_sums[i]) if row_sums[i] else 0.0
                 for i in range(n_classes)]
    return EvalReport(float(np.trace(confusion)) / n_test, per_class, confusion, n_test)


def _softmax(logits: np.ndarray) -> np.ndarray:
    z = logits - logits.max()
    ez = np.exp(z)
    return ez / ez.sum()


def _forward_probs(model: Model, grid: np.ndarray) -> np.ndarray:
    logits = model_forward(model, Tensor(grid[None, None]))
    return _softmax(logits.data[0])


def predict(model: Model, image: Tensor) -> tuple[np.ndarray, int]:
    """Softmax probabilities (length C, summing to 1) and the argmax label."""
    if image.data.ndim != 3 or image.shape[0] != model.backbone_config.input_channels:
        raise DimensionError(f"predict expects an image [1, s, s], got {image.shape}")
    size = model.backbone_config.image_size
    if image.shape[1] != size or image.shape[2] != size:
        raise DimensionError(f"image is {image.shape[1]}x{image.shape[2]}, model wants {size}x{size}")
    probs = _forward_probs(model, image.data[0])
    return probs, int(probs.argmax())


def predict_tta(model: Model, image: Tensor) -> tuple[np.ndarray, int]:
    """Prediction averaged over the 8 dihedral transforms of the input.

    Probabilities are combined pairwise, (p0 + p180) + (p90 + p270) per
    mirror orbit, then halved three times. Addition of the same multiset
    of float vectors in this tree is invariant under any dihedral
    transform of the input, so the result is bit-identical for rotated or
    flipped inputs.
    """
    if image.data.ndim != 3 or image.shape[1] != image.shape[2]:
        raise DimensionError(f"predict_tta needs a square image, got {image.shape}")
    size = model.backbone_config.image_size
    if image.shape[1] != size:
        raise DimensionError(f"image is {image.shape[1]}x{image.shape[2]}, model wants {size}x{size}")

    def rotation_sum(grid: np.ndarray) -> np.ndarray:
        p = [_forward_probs(model, np.ascontiguousarray(np.rot90(grid, k)))
             for k in range(4)]
        return (p[0] + p[2]) + (p[1] + p[3])

    grid = image.data[0]
    total = rotation_sum(grid) + rotation_sum(np.ascontiguousarray(np.fliplr(grid)))
    probs = total / np.float32(8.0)
    return probs, int(probs.argmax())
