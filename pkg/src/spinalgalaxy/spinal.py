"""Gradual-input (SpinalNet-style) fully connected classification head.

The flattened feature vector is cut into equal segments. Hidden row 1 sees
only its segment; every later row sees its segment concatenated with the
previous row's output. Segments are assigned cyclically, row l reading
segment (l-1) mod S. A single linear output layer maps the concatenation
of all row outputs to class logits.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import ConfigurationError, DimensionError
from .tensor import Tensor, add_bias, concat, matmul, relu, slice_cols


@dataclass(frozen=True)
class SpinalConfig:
    input_dim: int
    segments: int
    layers: int
    width: int
    classes: int

    def __post_init__(self):
        for name in ("input_dim", "segments", "layers", "width", "classes"):
            if getattr(self, name) < 1:
                raise ConfigurationError(f"SpinalConfig.{name} must be positive")
        if self.classes < 2:
            raise ConfigurationError("SpinalConfig.classes must be at least 2")
        if self.input_dim % self.segments:
            raise ConfigurationError(
                f"segments ({self.segments}) must divide input_dim ({self.input_dim})")

    @property
    def segment_size(self) -> int:
        return self.input_dim // self.segments


@dataclass
class SpinalHead:
    config: SpinalConfig
    row_weights: list[Tensor]   # row 1: [f, W]; rows 2..L: [f+W, W]
    row_biases: list[Tensor]    # [W] each
    output_weight: Tensor       # [L*W, C]
    output_bias: Tensor         # [C]

    def parameters(self) -> list[Tensor]:
        """All parameters in serialization order: rows 1..L (weight, bias), then output."""
        params: list[Tensor] = []
        for w, b in zip(self.row_weights, self.row_biases):
            params.extend((w, b))
        params.extend((self.output_weight, self.output_bias))
        return params


def _uniform_fan_in(rng: np.random.Generator, fan_in: int, shape: tuple[int, ...]) -> Tensor:
    bound = 1.0 / math.sqrt(fan_in)
    return Tensor(rng.uniform(-bound, bound, shape).astype(np.float32), requires_grad=True)


def build_spinal_head(config: SpinalConfig, seed: int) -> SpinalHead:
    """Seeded head construction; identical seeds give bit-identical parameters.

    Weights are uniform on [-1/sqrt(fan_in), +1/sqrt(fan_in)], biases zero.
    """
    rng = np.random.default_rng(seed)
    f, width = config.segment_size, config.width
    row_weights, row_biases = [], []
    for layer in range(config.layers):
        fan_in = f if layer == 0 else f + width
        row_weights.append(_uniform_fan_in(rng, fan_in, (fan_in, width)))
        row_biases.append(Tensor(np.zeros(width, dtype=np.float32), requires_grad=True))
    fan_out = config.layers * width
    output_weight = _uniform_fan_in(rng, fan_out, (fan_out, config.classes))
    output_bias = Tensor(np.zeros(config.classes, dtype=np.float32), requires_grad=True)
    return SpinalHead(config, row_weights, row_biases, output_weight, output_bias)


def spinal_row_outputs(head: SpinalHead, features: Tensor) -> tuple[list[Tensor], Tensor]:
    """Per-row hidden outputs plus the final logits, for a [batch, F] input."""
    cfg = head.config
    if features.data.ndim != 2 or features.shape[1] != cfg.input_dim:
        raise DimensionError(
            f"spinal head expects features [batch, {cfg.input_dim}], got {features.shape}")
    f = cfg.segment_size
    outputs: list[Tensor] = []
    for layer in range(cfg.layers):
        seg_index = layer % cfg.segments
        segment = slice_cols(features, seg_index * f, (seg_index + 1) * f)
        row_in = segment if layer == 0 else concat([segment, outputs[-1]])
        pre = add_bias(matmul(row_in, head.row_weights[layer]), head.row_biases[layer])
        outputs.append(relu(pre))
    logits = add_bias(matmul(concat(outputs), head.output_weight), head.output_bias)
    return outputs, logits


def spinal_forward(head: SpinalHead, features: Tensor) -> Tensor:
    """Class logits [batch, C] for flattened features [batch, F]."""
    return spinal_row_outputs(head, features)[1]


def spinal_param_count(config: SpinalConfig) -> int:
    """Number of scalars in a head built from this config."""
    f, w, layers, classes = (config.segment_size, config.width,
                             config.layers, config.classes)
    return f * w + w + (layers - 1) * ((f + w) * w + w) + layers * w * classes + classes


def mlp_param_count(input_dim: int, hidden: int, classes: int) -> int:
    """Parameter count of a plain single-hidden-layer baseline head."""
    if input_dim < 1 or hidden < 1 or classes < 1:
        raise ConfigurationError("mlp_param_count: all arguments must be positive")
    return input_dim * hidden + hidden + hidden * classes + classes
