"""Checkpoint container: architecture + data configuration, then raw weights.

Layout: magic ``SPNL``, a 4-byte little-endian version (1), a 4-byte
little-endian length, that many bytes of UTF-8 JSON (the configuration
document), then every parameter as little-endian float32 in serialization
order: conv blocks (kernels row-major, then bias), then per head row
(weights row-major, then bias), then the output weights and bias.
Round-trips are bit-exact.
"""

from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

from .backbone import BackboneConfig, Model, build_model
from .errors import CheckpointError
from .fileio import write_bytes_atomic

MAGIC = b"SPNL"
VERSION = 1


def config_document(model: Model, extra: dict | None = None) -> dict:
    doc = {
        "blocks": list(model.backbone_config.blocks),
        "image_size": model.backbone_config.image_size,
        "input_channels": model.backbone_config.input_channels,
        "padded": model.backbone_config.padded,
        "width": model.head.config.width,
        "segments": model.head.config.segments,
        "layers": model.head.config.layers,
        "class_names": list(model.class_names),
    }
    if extra:
        doc.update(extra)
    return doc


def save_checkpoint(path, model: Model, extra: dict | None = None) -> None:
    """Write the model atomically; identical models give identical bytes."""
    config = json.dumps(config_document(model, extra), sort_keys=True,
                        separators=(",", ":")).encode("utf-8")
    blob = b"".join(np.ascontiguousarray(p.data, dtype="<f4").tobytes()
                    for p in model.parameters())
    payload = MAGIC + struct.pack("<II", VERSION, len(config)) + config + blob
    write_bytes_atomic(Path(path), payload)


def load_checkpoint(path) -> tuple[Model, dict]:
    """Rebuild a model bit-exactly from a checkpoint; returns (model, config)."""
    data = Path(path).read_bytes()
    if data[:4] != MAGIC:
        raise CheckpointError(f"bad magic {data[:4]!r}, expected {MAGIC!r}")
    if len(data) < 12:
        raise CheckpointError("checkpoint truncated before header")
    version, config_len = struct.unpack("<II", data[4:12])
    if version != VERSION:
        raise CheckpointError(f"unsupported checkpoint version {version}")
    if len(data) < 12 + config_len:
        raise CheckpointError("checkpoint truncated inside configuration document")
    try:
        config = json.loads(data[12:12 + config_len].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise CheckpointError(f"unreadable configuration document: {exc}") from exc

    try:
        backbone = BackboneConfig(image_size=config["image_size"],
                                  blocks=tuple(config["blocks"]),
                                  input_channels=config["input_channels"],
                                  padded=config["padded"])
        model = build_model(backbone, config["width"], config["segments"],
                            config["layers"], list(config["class_names"]), seed=0)
    except KeyError as exc:
        raise CheckpointError(f"configuration document missing field {exc}") from exc

    blob = data[12 + config_len:]
    expected = 4 * sum(p.data.size for p in model.parameters())
    if len(blob) != expected:
        raise CheckpointError(
            f"parameter blob is {len(blob)} bytes, expected {expected}")
    offset = 0
    for p in model.parameters():
        n = p.data.size
        values = np.frombuffer(blob, dtype="<f4", count=n, offset=offset)
        p.data = np.ascontiguousarray(values.reshape(p.data.shape), dtype=np.float32)
        offset += 4 * n
    return model, config
