"""Small convolutional feature extractor feeding the spinal head.

Each block is a 3x3 convolution (1-pixel zero padding by default, so the
spatial extent halves cleanly per block), relu, then 2x2 max pooling. The
final activation volume is flattened channel-major, row, column into the
feature vector the head consumes.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import ConfigurationError, DimensionError
from .spinal import SpinalConfig, SpinalHead, build_spinal_head, spinal_forward
from .tensor import Tensor, conv2d, flatten, maxpool2, pad2d, relu

KERNEL = 3


@dataclass(frozen=True)
class BackboneConfig:
    image_size: int = 64
    blocks: tuple[int, ...] = (8, 16, 32)
    input_channels: int = 1
    padded: bool = True

    def __post_init__(self):
        if self.image_size < 2 or self.input_channels < 1 or not self.blocks:
            raise ConfigurationError("backbone config has non-positive extents")
        spatial_trace(self)  # validates


def spatial_trace(config: BackboneConfig) -> list[int]:
    """Spatial extent after each block; raises if any step is inadmissible.

    Per block the extent goes n -> conv -> pool: padded convs keep n, valid
    convs shrink it to n - 2; pooling then needs a positive even extent.
    """
    n = config.image_size
    trace = [n]
    for depth, _ in enumerate(config.blocks):
        conv_n = n if config.padded else n - (KERNEL - 1)
        if conv_n < 2 or conv_n % 2:
            raise ConfigurationError(
                f"image_size {config.image_size} with {len(config.blocks)} blocks is "
                f"inadmissible: extent {conv_n} at block {depth + 1} is not a positive "
                f"even integer (trace {trace + [conv_n]})")
        n = conv_n // 2
        trace.append(n)
    return trace


def feature_dim(config: BackboneConfig) -> int:
    final = spatial_trace(config)[-1]
    return config.blocks[-1] * final * final


@dataclass
class ConvBlock:
    kernels: Tensor  # [c_out, c_in, 3, 3]
    bias: Tensor     # [c_out]


@dataclass
class Model:
    backbone_config: BackboneConfig
    blocks: list[ConvBlock]
    head: SpinalHead
    class_names: list[str]

    @property
    def feature_dim(self) -> int:
        return self.head.config.input_dim

    @property
    def n_classes(self) -> int:
        return self.head.config.classes

    def parameters(self) -> list[Tensor]:
        """Serialization order: conv blocks (kernels, bias) then the head's order."""
        params: list[Tensor] = []
        for block in self.blocks:
            params.extend((block.kernels, block.bias))
        params.extend(self.head.parameters())
        return params

    def param_count(self) -> int:
        return sum(p.data.size for p in self.parameters())


def build_backbone(config: BackboneConfig, seed: int) -> tuple[list[ConvBlock], int]:
    """Seeded fan-in uniform init of all conv blocks; returns (blocks, feature_dim)."""
    rng = np.random.default_rng(seed)
    blocks: list[ConvBlock] = []
    c_in = config.input_channels
    for c_out in config.blocks:
        fan_in = c_in * KERNEL * KERNEL
        bound = 1.0 / math.sqrt(fan_in)
        kernels = Tensor(rng.uniform(-bound, bound, (c_out, c_in, KERNEL, KERNEL))
                         .astype(np.float32), requires_grad=True)
        bias = Tensor(np.zeros(c_out, dtype=np.float32), requires_grad=True)
        blocks.append(ConvBlock(kernels, bias))
        c_in = c_out
    return blocks, feature_dim(config)


def build_model(backbone_config: BackboneConfig, width: int, segments: int,
                layers: int, class_names: list[str], seed: int) -> Model:
    """Compose backbone and head; all randomness derives from one seed."""
    ss = np.random.SeedSequence([seed])
    backbone_seed, head_seed = (int(s.generate_state(1)[0]) for s in ss.spawn(2))
    blocks, dim = build_backbone(backbone_config, backbone_seed)
    head = build_spinal_head(
        SpinalConfig(dim, segments, layers, width, len(class_names)), head_seed)
    return Model(backbone_config, blocks, head, list(class_names))


def model_forward(model: Model, images: Tensor) -> Tensor:
    """Logits [batch, C] for a batch of images [batch, channels, s, s]."""
    cfg = model.backbone_config
    if images.data.ndim != 4:
        raise DimensionError(f"model_forward: images must be rank 4, got {images.shape}")
    b, c, h, w = images.shape
    if c != cfg.input_channels or h != cfg.image_size or w != cfg.image_size:
        raise DimensionError(
            f"model_forward: expected [batch, {cfg.input_channels}, {cfg.image_size}, "
            f"{cfg.image_size}], got {images.shape}")
    x = images
    for block in model.blocks:
        if cfg.padded:
            x = pad2d(x, 1)
        x = maxpool2(relu(conv2d(x, block.kernels, block.bias)))
    return spinal_forward(model.head, flatten(x))
