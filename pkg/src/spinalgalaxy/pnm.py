"""Binary PNM (P5 grayscale / P6 color) decoding and P5 encoding.

Only maxval 255 is accepted. Color images collapse to grayscale through
the usual luma weights 0.299 R + 0.587 G + 0.114 B.
"""

from __future__ import annotations

import numpy as np

from .errors import DecodeError

_WHITESPACE = b" \t\r\n\x0b\x0c"


def _next_token(data: bytes, pos: int) -> tuple[bytes, int]:
    n = len(data)
    while pos < n:
        c = data[pos:pos + 1]
        if c in (b"#",):
            while pos < n and data[pos:pos + 1] != b"\n":
                pos += 1
        elif c in _WHITESPACE:
            pos += 1
        else:
            break
    if pos >= n:
        raise DecodeError("truncated header")
    start = pos
    while pos < n and data[pos:pos + 1] not in _WHITESPACE:
        pos += 1
    return data[start:pos], pos


def decode_image(data: bytes) -> np.ndarray:
    """Decode P5/P6 bytes to a float32 [h, w] grid of values in [0, 1]."""
    magic, pos = _next_token(data, 0)
    if magic not in (b"P5", b"P6"):
        raise DecodeError(f"unknown magic number {magic[:8]!r}")
    fields = []
    for name in ("width", "height", "maxval"):
        token, pos = _next_token(data, pos)
        try:
            value = int(token)
        except ValueError:
            raise DecodeError(f"non-numeric {name} field {token[:16]!r}") from None
        fields.append(value)
    width, height, maxval = fields
    if width < 1 or height < 1:
        raise DecodeError(f"invalid dimensions {width}x{height}")
    if maxval != 255:
        raise DecodeError(f"unsupported maxval {maxval}, only 255 is accepted")
    if pos >= len(data) or data[pos:pos + 1] not in _WHITESPACE:
        raise DecodeError("missing whitespace between header and payload")
    payload = data[pos + 1:]

    if magic == b"P5":
        needed = width * height
        if len(payload) < needed:
            raise DecodeError(f"truncated payload: expected {needed} bytes, got {len(payload)}")
        grid = np.frombuffer(payload, dtype=np.uint8, count=needed).reshape(height, width)
        return grid.astype(np.float32) / np.float32(255.0)

    needed = 3 * width * height
    if len(payload) < needed:
        raise DecodeError(f"truncated payload: expected {needed} bytes, got {len(payload)}")
    rgb = np.frombuffer(payload, dtype=np.uint8, count=needed).reshape(height, width, 3)
    rgb = rgb.astype(np.float32)
    luma = (np.float32(0.299) * rgb[:, :, 0] + np.float32(0.587) * rgb[:, :, 1]
            + np.float32(0.114) * rgb[:, :, 2])
    return luma / np.float32(255.0)


def encode_pgm(grid: np.ndarray) -> bytes:
    """Encode a uint8 [h, w] grid as binary P5 with maxval 255."""
    arr = np.ascontiguousarray(grid, dtype=np.uint8)
    if arr.ndim != 2:
        raise DecodeError(f"encode_pgm expects a rank-2 grid, got shape {arr.shape}")
    h, w = arr.shape
    return b"P5\n%d %d\n255\n" % (w, h) + arr.tobytes()


def quantize_unit(grid: np.ndarray) -> np.ndarray:
    """Map a [0, 1] float grid to uint8, rounding half away from zero."""
    return np.floor(np.clip(grid, 0.0, 1.0) * 255.0 + 0.5).astype(np.uint8)
