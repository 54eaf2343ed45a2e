"""Seeded random composite tensor programs for gradient checking.

Central differences in float32 are only meaningful away from
non-differentiable points and for gradient coordinates large enough to
move the loss by at least a few ulps. A candidate program is therefore
rejected (advancing a deterministic attempt counter) unless:

- every relu pre-activation sits clear of zero,
- every pooling window has a clear top-1 margin,
- the logit spread stays moderate, and
- every nonzero coordinate of the checked gradient exceeds the finite-
  difference resolution floor ~ ulp(loss) / (2h), with headroom.

Exactly-zero coordinates (dead relu paths, unselected pool positions) are
fine: the loss bits do not change under perturbation there, so the
numeric derivative is exactly zero too. All extents are at most 6.
"""

from __future__ import annotations

import numpy as np

from spinalgalaxy import (Tape, Tensor, backward, concat, conv2d, flatten, matmul,
                          maxpool2, relu, scale, softmax_cross_entropy_mean, tensor_sum)

STEP = 1e-3
RELU_MARGIN = 0.02
POOL_MARGIN = 0.02
LOGIT_SPAN_MAX = 8.0
FLOOR_HEADROOM = 6000.0


def _signed_uniform(rng, shape, lo, hi):
    mags = rng.uniform(lo, hi, shape)
    signs = rng.choice([-1.0, 1.0], shape)
    return Tensor((mags * signs).astype(np.float32))


def _pool_gaps(values):
    """Smallest top-1 to top-2 gap over all 2x2 pooling windows."""
    c, h, w = values.shape
    win = values.reshape(c, h // 2, 2, w // 2, 2).transpose(0, 1, 3, 2, 4).reshape(-1, 4)
    ordered = np.sort(win, axis=1)
    return float(np.min(ordered[:, 3] - ordered[:, 2]))


def _make_candidate(rng):
    kind = int(rng.integers(4))
    probes: list[tuple[str, np.ndarray]] = []

    if kind == 0:
        # x [m,k] -> matmul -> relu -> matmul -> softmax CE; checks x or the first weight
        m = int(rng.integers(2, 4))
        k, n = int(rng.integers(2, 5)), int(rng.integers(2, 5))
        c = int(rng.integers(2, 4))
        x0 = _signed_uniform(rng, (m, k), 0.4, 1.0)
        w1 = _signed_uniform(rng, (k, n), 0.5, 1.0)
        w2 = _signed_uniform(rng, (n, c), 0.5, 1.0)
        targets = rng.integers(0, c, m).tolist()
        check_weight = bool(rng.integers(2))

        def f(v):
            probes.clear()
            h1 = matmul(x0, v) if check_weight else matmul(v, w1)
            probes.append(("relu", h1.data))
            logits = matmul(relu(h1), w2)
            probes.append(("logits", logits.data))
            return softmax_cross_entropy_mean(logits, targets)

        check_tensor = w1 if check_weight else x0

    elif kind == 1:
        # image -> conv2d -> relu -> maxpool2 -> flatten -> matmul -> softmax CE
        ci, co = int(rng.integers(1, 3)), int(rng.integers(1, 3))
        h = int(rng.choice([5, 6]))
        kh = h - 3  # conv output 4x4, pools to 2x2
        x0 = _signed_uniform(rng, (ci, h, h), 0.3, 1.0)
        kernels = _signed_uniform(rng, (co, ci, kh, kh), 0.3, 0.7)
        bias = _signed_uniform(rng, (co,), 0.0, 0.3)
        c = int(rng.integers(2, 4))
        w = _signed_uniform(rng, (4, c), 0.5, 1.0)
        targets = rng.integers(0, c, co).tolist()
        check_kernels = bool(rng.integers(2))

        def f(v):
            probes.clear()
            conv = conv2d(x0, v, bias) if check_kernels else conv2d(v, kernels, bias)
            probes.append(("relu", conv.data))
            probes.append(("pool_in", np.maximum(conv.data, 0)))
            pooled = maxpool2(relu(conv))
            logits = matmul(flatten(pooled), w)
            probes.append(("logits", logits.data))
            return softmax_cross_entropy_mean(logits, targets)

        check_tensor = kernels if check_kernels else x0

    elif kind == 2:
        # two matmul branches concatenated, one rectified, then softmax CE
        m = int(rng.integers(2, 4))
        k = int(rng.integers(2, 5))
        n1, n2 = int(rng.integers(2, 4)), int(rng.integers(2, 4))
        c = int(rng.integers(2, 4))
        wa = _signed_uniform(rng, (k, n1), 0.5, 1.0)
        wb = _signed_uniform(rng, (k, n2), 0.5, 1.0)
        wout = _signed_uniform(rng, (n1 + n2, c), 0.5, 1.0)
        targets = rng.integers(0, c, m).tolist()
        check_tensor = _signed_uniform(rng, (m, k), 0.4, 1.0)

        def f(v):
            probes.clear()
            left = matmul(v, wa)
            probes.append(("relu", left.data))
            merged = concat([relu(left), matmul(v, wb)])
            logits = matmul(merged, wout)
            probes.append(("logits", logits.data))
            return softmax_cross_entropy_mean(logits, targets)

    else:
        # conv2d -> relu -> maxpool2 -> scaled sum (positive kernels limit cancellation)
        ci = int(rng.integers(1, 3))
        h = int(rng.choice([5, 6]))
        kh = h - 3
        kernels = Tensor(rng.uniform(0.25, 0.8, (2, ci, kh, kh)).astype(np.float32))
        bias = _signed_uniform(rng, (2,), 0.0, 0.2)
        check_tensor = _signed_uniform(rng, (ci, h, h), 0.3, 1.0)

        def f(v):
            probes.clear()
            conv = conv2d(v, kernels, bias)
            probes.append(("relu", conv.data))
            probes.append(("pool_in", np.maximum(conv.data, 0)))
            pooled = maxpool2(relu(conv))
            return scale(tensor_sum(flatten(pooled)), 0.25)

    return f, check_tensor, probes


def _well_conditioned(f, x, probes) -> bool:
    x.requires_grad = True
    x.grad = None
    with Tape() as tape:
        loss = f(x)
        backward(loss, tape)
    for tag, values in probes:
        if tag == "relu" and np.min(np.abs(values)) < RELU_MARGIN:
            return False
        if tag == "pool_in" and _pool_gaps(values) < POOL_MARGIN:
            return False
        if tag == "logits" and np.ptp(values) > LOGIT_SPAN_MAX:
            return False
    loss_value = abs(float(loss.data[0]))
    granule = float(np.spacing(np.float32(max(loss_value, 0.0625)))) / (2.0 * STEP)
    floor = FLOOR_HEADROOM * granule
    grad = x.grad.reshape(-1)
    nonzero = grad[grad != 0.0]
    return nonzero.size > 0 and float(np.min(np.abs(nonzero))) >= floor


def make_program(seed: int):
    """Deterministic (f, x): f scalar-valued over the core ops, x the checked leaf."""
    for attempt in range(2000):
        rng = np.random.default_rng(np.random.SeedSequence([seed, attempt, 20240901]))
        f, x, probes = _make_candidate(rng)
        if _well_conditioned(f, x, probes):
            x.grad = None
            return f, x
    raise AssertionError(f"no well-conditioned program found for seed {seed}")
