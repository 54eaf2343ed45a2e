"""Dense float32 tensors with a reverse-mode autodiff tape.

Everything is stored as contiguous row-major float32. Operations compute
eagerly with numpy and, while a Tape is active and an operand requires a
gradient, append a backward rule to the tape. `backward` replays the tape
once in reverse, accumulating gradients additively into every tensor that
requires them.

`matmul` deliberately goes through non-optimized einsum rather than BLAS:
the summation order per output element is then independent of the number
of rows, which makes batched and sample-at-a-time forward passes agree
bit for bit. Convolution uses tensordot (BLAS) for speed; it has no such
row-consistency requirement.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .errors import ContractError, DimensionError, OracleError


class Tensor:
    """N-dimensional float32 array (rank 1..4) with an optional gradient."""

    __slots__ = ("data", "grad", "requires_grad")

    def __init__(self, data, requires_grad: bool = False):
        arr = np.ascontiguousarray(data, dtype=np.float32)
        if arr.ndim == 0:
            arr = arr.reshape(1)
        if not 1 <= arr.ndim <= 4:
            raise DimensionError(f"tensor rank must be between 1 and 4, got {arr.ndim}")
        self.data = arr
        self.grad: np.ndarray | None = None
        self.requires_grad = bool(requires_grad)

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    def __repr__(self) -> str:
        return f"Tensor(shape={self.data.shape}, requires_grad={self.requires_grad})"


class Node:
    """One recorded operation: operand identities, result, backward rule."""

    __slots__ = ("inputs", "output", "backward_rule")

    def __init__(self, inputs: tuple[Tensor, ...], output: Tensor,
                 backward_rule: Callable[[np.ndarray], None]):
        self.inputs = inputs
        self.output = output
        self.backward_rule = backward_rule


class Tape:
    """Recording of one forward pass, in topological order.

    Used as a context manager; one tape per forward pass, discarded after
    `backward`.
    """

    def __init__(self):
        self.nodes: list[Node] = []

    def __enter__(self) -> "Tape":
        _TAPE_STACK.append(self)
        return self

    def __exit__(self, *exc) -> bool:
        _TAPE_STACK.pop()
        return False


_TAPE_STACK: list[Tape] = []


def _record(out: Tensor, inputs: tuple[Tensor, ...],
            backward_rule: Callable[[np.ndarray], None]) -> Tensor:
    if _TAPE_STACK and any(t.requires_grad for t in inputs):
        out.requires_grad = True
        _TAPE_STACK[-1].nodes.append(Node(inputs, out, backward_rule))
    return out


def _accumulate(t: Tensor, g: np.ndarray) -> None:
    if not t.requires_grad:
        return
    if t.grad is None:
        t.grad = np.zeros_like(t.data)
    t.grad += g


# ---------------------------------------------------------------------------
# operations


def matmul(a: Tensor, b: Tensor) -> Tensor:
    """Rank-2 matrix product [m,k] x [k,n] -> [m,n]."""
    if a.data.ndim != 2 or b.data.ndim != 2 or a.shape[1] != b.shape[0]:
        raise DimensionError(f"matmul: incompatible shapes {a.shape} x {b.shape}")
    out = Tensor(np.einsum("ik,kj->ij", a.data, b.data))

    def backward_rule(g: np.ndarray) -> None:
        if a.requires_grad:
            _accumulate(a, np.einsum("ij,kj->ik", g, b.data))
        if b.requires_grad:
            _accumulate(b, np.einsum("ik,ij->kj", a.data, g))

    return _record(out, (a, b), backward_rule)


def conv2d(x: Tensor, kernels: Tensor, bias: Tensor) -> Tensor:
    """Valid cross-correlation, stride 1, plus per-channel bias.

    x is [c_in,h,w] or batched [b,c_in,h,w]; kernels [c_out,c_in,kh,kw];
    bias [c_out]. Output spatial extents shrink by kh-1 and kw-1.
    """
    if kernels.data.ndim != 4:
        raise DimensionError(f"conv2d: kernels must be rank 4, got shape {kernels.shape}")
    if x.data.ndim not in (3, 4):
        raise DimensionError(f"conv2d: input must be rank 3 or 4, got shape {x.shape}")
    single = x.data.ndim == 3
    xd = x.data[None] if single else x.data
    co, ci, kh, kw = kernels.shape
    b, c_in, h, w = xd.shape
    if c_in != ci:
        raise DimensionError(f"conv2d: input channels {c_in} != kernel channels {ci}")
    if kh > h or kw > w:
        raise DimensionError(f"conv2d: kernel {kh}x{kw} larger than input {h}x{w}")
    if bias.shape != (co,):
        raise DimensionError(f"conv2d: bias shape {bias.shape} != ({co},)")

    patches = sliding_window_view(xd, (kh, kw), axis=(2, 3))  # [b,ci,oh,ow,kh,kw]
    out_d = np.tensordot(patches, kernels.data, axes=([1, 4, 5], [1, 2, 3]))
    out_d = np.ascontiguousarray(out_d.transpose(0, 3, 1, 2))  # [b,co,oh,ow]
    out_d += bias.data[None, :, None, None]
    out = Tensor(out_d[0] if single else out_d)

    def backward_rule(g: np.ndarray) -> None:
        gd = g[None] if single else g
        oh, ow = gd.shape[2], gd.shape[3]
        if bias.requires_grad:
            _accumulate(bias, gd.sum(axis=(0, 2, 3)))
        if kernels.requires_grad:
            _accumulate(kernels, np.tensordot(gd, patches, axes=([0, 2, 3], [0, 2, 3])))
        if x.requires_grad:
            dx = np.zeros_like(xd)
            for i in range(kh):
                for j in range(kw):
                    t = np.tensordot(gd, kernels.data[:, :, i, j], axes=([1], [0]))
                    dx[:, :, i:i + oh, j:j + ow] += t.transpose(0, 3, 1, 2)
            _accumulate(x, dx[0] if single else dx)

    return _record(out, (x, kernels, bias), backward_rule)


def maxpool2(x: Tensor) -> Tensor:
    """Non-overlapping 2x2 max pooling; input [c,h,w] or [b,c,h,w], h and w even.

    Backward routes the gradient to the argmax position of each window,
    first position in row-major order on ties.
    """
    if x.data.ndim not in (3, 4):
        raise DimensionError(f"maxpool2: input must be rank 3 or 4, got shape {x.shape}")
    single = x.data.ndim == 3
    xd = x.data[None] if single else x.data
    b, c, h, w = xd.shape
    if h % 2 or w % 2:
        raise DimensionError(f"maxpool2: spatial extents must be even, got {h}x{w}")
    h2, w2 = h // 2, w // 2
    windows = xd.reshape(b, c, h2, 2, w2, 2).transpose(0, 1, 2, 4, 3, 5).reshape(b, c, h2, w2, 4)
    idx = np.argmax(windows, axis=-1)
    out_d = np.take_along_axis(windows, idx[..., None], axis=-1)[..., 0]
    out = Tensor(out_d[0] if single else out_d)

    def backward_rule(g: np.ndarray) -> None:
        gd = g[None] if single else g
        dwin = np.zeros((b, c, h2, w2, 4), dtype=np.float32)
        np.put_along_axis(dwin, idx[..., None], gd[..., None], axis=-1)
        dx = dwin.reshape(b, c, h2, w2, 2, 2).transpose(0, 1, 2, 4, 3, 5).reshape(b, c, h, w)
        _accumulate(x, dx[0] if single else dx)

    return _record(out, (x,), backward_rule)


def relu(x: Tensor) -> Tensor:
    """Elementwise max(0, x); gradient is zero where x <= 0."""
    out = Tensor(np.maximum(x.data, 0))

    def backward_rule(g: np.ndarray) -> None:
        _accumulate(x, g * (x.data > 0))

    return _record(out, (x,), backward_rule)


def concat(parts: Sequence[Tensor]) -> Tensor:
    """Concatenate rank-2 tensors along columns; all parts share the leading extent."""
    parts = list(parts)
    if not parts:
        raise DimensionError("concat: part list is empty")
    m = parts[0].shape[0]
    for p in parts:
        if p.data.ndim != 2 or p.shape[0] != m:
            raise DimensionError(
                f"concat: leading extents differ: {[tuple(q.shape) for q in parts]}")
    out = Tensor(np.concatenate([p.data for p in parts], axis=1))
    offsets = np.cumsum([0] + [p.shape[1] for p in parts])

    def backward_rule(g: np.ndarray) -> None:
        for p, j0, j1 in zip(parts, offsets[:-1], offsets[1:]):
            _accumulate(p, g[:, j0:j1])

    return _record(out, tuple(parts), backward_rule)


def softmax_cross_entropy_mean(logits: Tensor, targets: Sequence[int]) -> Tensor:
    """Mean over the batch of -log softmax(logits)[target]; returns a scalar tensor.

    Stabilized by subtracting the row max before exponentiation.
    """
    if logits.data.ndim != 2:
        raise DimensionError(f"softmax_cross_entropy_mean: logits must be rank 2, got {logits.shape}")
    t = np.asarray(targets, dtype=np.int64)
    batch, n_classes = logits.shape
    if t.shape != (batch,):
        raise DimensionError(
            f"softmax_cross_entropy_mean: {batch} logit rows but {t.size} targets")
    if t.size and (t.min() < 0 or t.max() >= n_classes):
        raise IndexError(f"target index out of range [0, {n_classes})")

    # internal float64 keeps the scalar loss correctly rounded; storage stays f32
    z = logits.data.astype(np.float64)
    z -= z.max(axis=1, keepdims=True)
    ez = np.exp(z)
    sez = ez.sum(axis=1, keepdims=True)
    log_probs = z - np.log(sez)
    rows = np.arange(batch)
    out = Tensor(np.array([-log_probs[rows, t].mean()], dtype=np.float32))

    def backward_rule(g: np.ndarray) -> None:
        d = (ez / sez).astype(np.float32)
        d[rows, t] -= 1.0
        _accumulate(logits, d * (g[0] / np.float32(batch)))

    return _record(out, (logits,), backward_rule)


def add(a: Tensor, b: Tensor) -> Tensor:
    """Elementwise sum of two same-shape tensors."""
    if a.shape != b.shape:
        raise DimensionError(f"add: shapes differ: {a.shape} vs {b.shape}")
    out = Tensor(a.data + b.data)

    def backward_rule(g: np.ndarray) -> None:
        _accumulate(a, g)
        _accumulate(b, g)

    return _record(out, (a, b), backward_rule)


def mul(a: Tensor, b: Tensor) -> Tensor:
    """Elementwise product of two same-shape tensors."""
    if a.shape != b.shape:
        raise DimensionError(f"mul: shapes differ: {a.shape} vs {b.shape}")
    out = Tensor(a.data * b.data)

    def backward_rule(g: np.ndarray) -> None:
        _accumulate(a, g * b.data)
        _accumulate(b, g * a.data)

    return _record(out, (a, b), backward_rule)


def scale(x: Tensor, factor: float) -> Tensor:
    """Multiply every element by a constant."""
    out = Tensor(x.data * np.float32(factor))

    def backward_rule(g: np.ndarray) -> None:
        _accumulate(x, g * np.float32(factor))

    return _record(out, (x,), backward_rule)


def tensor_sum(x: Tensor) -> Tensor:
    """Sum of all elements, as a scalar tensor of shape (1,)."""
    out = Tensor(np.array([x.data.sum()], dtype=np.float32))

    def backward_rule(g: np.ndarray) -> None:
        _accumulate(x, np.full_like(x.data, g[0]))

    return _record(out, (x,), backward_rule)


def add_bias(x: Tensor, b: Tensor) -> Tensor:
    """Add a rank-1 bias [n] to every row of a rank-2 tensor [m,n]."""
    if x.data.ndim != 2 or b.data.ndim != 1 or x.shape[1] != b.shape[0]:
        raise DimensionError(f"add_bias: shapes {x.shape} and {b.shape} do not align")
    out = Tensor(x.data + b.data[None, :])

    def backward_rule(g: np.ndarray) -> None:
        _accumulate(x, g)
        _accumulate(b, g.sum(axis=0))

    return _record(out, (x, b), backward_rule)


def pad2d(x: Tensor, width: int = 1) -> Tensor:
    """Zero-pad the two trailing (spatial) axes of a rank-3 or rank-4 tensor."""
    if x.data.ndim not in (3, 4):
        raise DimensionError(f"pad2d: input must be rank 3 or 4, got shape {x.shape}")
    if width < 0:
        raise ContractError("pad2d: width must be non-negative")
    pad = [(0, 0)] * (x.data.ndim - 2) + [(width, width), (width, width)]
    out = Tensor(np.pad(x.data, pad))
    crop = (slice(None),) * (x.data.ndim - 2) + (slice(width, -width or None),) * 2

    def backward_rule(g: np.ndarray) -> None:
        _accumulate(x, g[crop])

    return _record(out, (x,), backward_rule)


def flatten(x: Tensor) -> Tensor:
    """Collapse all but the leading axis, row-major: [b, ...] -> [b, prod(rest)]."""
    if x.data.ndim < 2:
        raise DimensionError(f"flatten: input must have rank >= 2, got shape {x.shape}")
    shape = x.data.shape
    out = Tensor(x.data.reshape(shape[0], -1))

    def backward_rule(g: np.ndarray) -> None:
        _accumulate(x, g.reshape(shape))

    return _record(out, (x,), backward_rule)


def slice_cols(x: Tensor, start: int, stop: int) -> Tensor:
    """Columns [start, stop) of a rank-2 tensor, as a copy."""
    if x.data.ndim != 2:
        raise DimensionError(f"slice_cols: input must be rank 2, got shape {x.shape}")
    if not 0 <= start < stop <= x.shape[1]:
        raise DimensionError(f"slice_cols: range [{start},{stop}) invalid for width {x.shape[1]}")
    out = Tensor(x.data[:, start:stop])

    def backward_rule(g: np.ndarray) -> None:
        if x.requires_grad:
            dx = np.zeros_like(x.data)
            dx[:, start:stop] = g
            _accumulate(x, dx)

    return _record(out, (x,), backward_rule)


# ---------------------------------------------------------------------------
# backward pass and verification


def backward(loss: Tensor, tape: Tape) -> None:
    """Populate grad on every recorded tensor that requires it.

    Gradients accumulate additively across fan-out. The tape is replayed
    once, in reverse topological order.
    """
    if loss.data.size != 1:
        raise ContractError(f"backward: loss must be scalar, got shape {loss.shape}")
    loss.grad = np.ones_like(loss.data)
    for node in reversed(tape.nodes):
        g = node.output.grad
        if g is None:
            continue
        node.backward_rule(g)


def grad_check(f: Callable[[Tensor], Tensor], x: Tensor, step: float) -> float:
    """Compare backward's gradient of f at x against central differences.

    f must be deterministic and scalar-valued. Returns the maximum over
    coordinates of |analytic - numeric| / max(1e-8, |analytic| + |numeric|).
    The difference quotient uses the actually realized float32 step.
    """
    if step <= 0:
        raise ContractError("grad_check: step must be positive")
    x.requires_grad = True
    x.grad = None

    first = f(x)
    second = f(x)
    if first.data.tobytes() != second.data.tobytes():
        raise OracleError("grad_check: program is not deterministic under re-evaluation")
    if first.data.size != 1:
        raise ContractError(f"grad_check: program must be scalar-valued, got shape {first.shape}")

    with Tape() as tape:
        loss = f(x)
        backward(loss, tape)
    analytic = x.grad.reshape(-1).astype(np.float64).copy()

    flat = x.data.reshape(-1)
    h = np.float32(step)
    numeric = np.empty_like(analytic)
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + h
        hi = float(flat[i])
        f_hi = float(f(x).data[0])
        flat[i] = orig - h
        lo = float(flat[i])
        f_lo = float(f(x).data[0])
        flat[i] = orig
        numeric[i] = (f_hi - f_lo) / (hi - lo)

    denom = np.maximum(1e-8, np.abs(analytic) + np.abs(numeric))
    return float(np.max(np.abs(analytic - numeric) / denom)) if flat.size else 0.0


# ---------------------------------------------------------------------------
# optimizer


@dataclass
class AdamState:
    """Flat first/second moment estimates over a fixed parameter list."""

    first_moment: np.ndarray
    second_moment: np.ndarray
    step_count: int = 0
    learning_rate: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8

    @classmethod
    def for_params(cls, params: Sequence[Tensor], learning_rate: float = 1e-3,
                   beta1: float = 0.9, beta2: float = 0.999,
                   epsilon: float = 1e-8) -> "AdamState":
        n = sum(p.data.size for p in params)
        return cls(np.zeros(n, dtype=np.float32), np.zeros(n, dtype=np.float32),
                   0, learning_rate, beta1, beta2, epsilon)


def adam_step(params: Sequence[Tensor], state: AdamState) -> None:
    """Bias-corrected Adam update, in place; clears gradients afterwards."""
    total = sum(p.data.size for p in params)
    if total != state.first_moment.size or total != state.second_moment.size:
        raise ContractError(
            f"adam_step: state sized for {state.first_moment.size} values, got {total}")
    for p in params:
        if p.grad is None:
            raise ContractError("adam_step: a parameter is missing its gradient")

    state.step_count += 1
    b1, b2 = state.beta1, state.beta2
    corr1 = 1.0 - b1 ** state.step_count
    corr2 = 1.0 - b2 ** state.step_count
    offset = 0
    for p in params:
        n = p.data.size
        g = p.grad.reshape(-1)
        m = state.first_moment[offset:offset + n]
        v = state.second_moment[offset:offset + n]
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * (g * g)
        update = state.learning_rate * (m / corr1) / (np.sqrt(v / corr2) + state.epsilon)
        p.data -= update.reshape(p.data.shape)
        p.grad = None
        offset += n
