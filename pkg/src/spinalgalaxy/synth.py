"""Deterministic synthetic galaxy image generator.

Renders grayscale galaxies whose geometry follows the Hubble scheme:
ellipticals as anisotropic Gaussians with subtype-specific axis-ratio
bands (subtype En sits at elongation n = 10(1 - b/a)), spirals as two-arm
logarithmic spirals r = a*e^(b*theta) with a pitch tier per subtype plus a
central bulge, barred spirals with an additional elongated central bar,
and irregulars as a random mixture of Gaussian blobs. Every image gets a
random orientation, a small PSF blur, additive Gaussian noise, and is
written as a binary P5 file into a folder-per-class tree with a manifest.

Rendering is a pure function of (class, seed, image_size), so identical
seeds give byte-identical files.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .errors import ContractError
from .fileio import write_bytes_atomic, write_text_atomic
from .pnm import encode_pgm, quantize_unit
from .seeds import STREAM_SYNTH, child_rng, child_seed
from .taxonomy import class_names, subtype_pool

# Axis-ratio (b/a) sampling bands per elliptical subtype; disjoint by design.
AXIS_RATIO_BANDS = {"E0": (0.90, 1.00), "E3": (0.65, 0.75), "E7": (0.28, 0.35)}

# Logarithmic-spiral pitch coefficient b in r = a*e^(b*theta), per tier:
# tight (Sa/SBa), medium (Sb/SBb), loose (Sc/SBc).
SPIRAL_PITCH = {"a": 0.14, "b": 0.28, "c": 0.52}

# Bulge size (fraction of the disk scale radius) and amplitude per tier;
# bulges shrink from a to c, mirroring the tuning fork.
BULGE_SIZE = {"a": 0.55, "b": 0.33, "c": 0.18}
BULGE_AMP = {"a": 1.4, "b": 0.85, "c": 0.45}

NOISE_SIGMA = 0.02


@dataclass(frozen=True)
class SynthParams:
    label: str
    seed: int
    image_size: int


def _centered_grids(rng: np.random.Generator, size: int) -> tuple[np.ndarray, np.ndarray]:
    cy = (size - 1) / 2.0 + rng.uniform(-0.03, 0.03) * size
    cx = (size - 1) / 2.0 + rng.uniform(-0.03, 0.03) * size
    yy, xx = np.mgrid[0:size, 0:size].astype(np.float32)
    return xx - np.float32(cx), yy - np.float32(cy)


def _rotate(dx: np.ndarray, dy: np.ndarray, angle: float) -> tuple[np.ndarray, np.ndarray]:
    c, s = np.float32(math.cos(angle)), np.float32(math.sin(angle))
    return c * dx + s * dy, -s * dx + c * dy


def _gaussian_blur(img: np.ndarray, sigma: float) -> np.ndarray:
    radius = max(1, int(math.ceil(3.0 * sigma)))
    t = np.arange(-radius, radius + 1, dtype=np.float32)
    kernel = np.exp(np.float32(-0.5) * (t / np.float32(sigma)) ** 2)
    kernel /= kernel.sum()
    for axis in (0, 1):
        pad = [(0, 0), (0, 0)]
        pad[axis] = (radius, radius)
        padded = np.pad(img, pad, mode="reflect")
        img = np.tensordot(sliding_window_view(padded, kernel.size, axis=axis),
                           kernel, axes=([2], [0]))
    return img.astype(np.float32)


def _render_elliptical(rng: np.random.Generator, size: int, subtype: str) -> np.ndarray:
    lo, hi = AXIS_RATIO_BANDS[subtype]
    axis_ratio = rng.uniform(lo, hi)
    sigma_major = rng.uniform(0.13, 0.20) * size
    angle = rng.uniform(0.0, math.pi)
    dx, dy = _centered_grids(rng, size)
    xr, yr = _rotate(dx, dy, angle)
    return np.exp(-0.5 * ((xr / np.float32(sigma_major)) ** 2
                          + (yr / np.float32(axis_ratio * sigma_major)) ** 2))


def _render_spiral(rng: np.random.Generator, size: int, tier: str,
                   barred: bool) -> np.ndarray:
    pitch = SPIRAL_PITCH[tier] * rng.uniform(0.9, 1.1)
    disk_scale = rng.uniform(0.13, 0.18) * size
    disk_ratio = rng.uniform(0.62, 0.95)  # projection squash
    angle = rng.uniform(0.0, math.pi)
    phase = rng.uniform(0.0, 2.0 * math.pi)
    sharpness = rng.uniform(2.4, 3.4)
    bulge_sigma = BULGE_SIZE[tier] * disk_scale * rng.uniform(0.85, 1.15)
    bulge_amp = BULGE_AMP[tier] * rng.uniform(0.85, 1.15)

    dx, dy = _centered_grids(rng, size)
    xr, yr = _rotate(dx, dy, angle)
    yr_disk = yr / np.float32(disk_ratio)
    r_disk = np.hypot(xr, yr_disk)
    r_sky = np.hypot(xr, yr)
    theta = np.arctan2(yr_disk, xr)

    disk = np.exp(-r_disk / np.float32(disk_scale))
    winding = np.log(np.maximum(r_disk, 0.5) / np.float32(disk_scale)) / np.float32(pitch)
    arm_phase = 2.0 * (theta - winding) + np.float32(phase)
    arms = np.exp(np.float32(sharpness) * (np.cos(arm_phase) - 1.0))
    img = disk * (0.30 + 0.70 * arms)
    img += np.float32(bulge_amp) * np.exp(-0.5 * (r_sky / np.float32(bulge_sigma)) ** 2)

    if barred:
        bar_angle = rng.uniform(0.0, math.pi)
        bar_len = rng.uniform(0.55, 0.75) * disk_scale
        bar_width = rng.uniform(0.12, 0.16) * disk_scale
        bar_amp = rng.uniform(0.9, 1.2)
        xb, yb = _rotate(xr, yr_disk, bar_angle)
        img += np.float32(bar_amp) * np.exp(-0.5 * ((xb / np.float32(bar_len)) ** 2
                                                    + (yb / np.float32(bar_width)) ** 2))
    return img


def _render_irregular(rng: np.random.Generator, size: int) -> np.ndarray:
    n_blobs = int(rng.integers(3, 7))
    dx, dy = _centered_grids(rng, size)
    img = np.zeros((size, size), dtype=np.float32)
    for _ in range(n_blobs):
        off_x = rng.uniform(-0.22, 0.22) * size
        off_y = rng.uniform(-0.22, 0.22) * size
        sigma = rng.uniform(0.05, 0.11) * size
        ratio = rng.uniform(0.55, 1.0)
        angle = rng.uniform(0.0, math.pi)
        amp = rng.uniform(0.45, 1.0)
        xr, yr = _rotate(dx - np.float32(off_x), dy - np.float32(off_y), angle)
        img += np.float32(amp) * np.exp(-0.5 * ((xr / np.float32(sigma)) ** 2
                                                + (yr / np.float32(ratio * sigma)) ** 2))
    return img


def render_galaxy(label: str, seed: int, image_size: int) -> np.ndarray:
    """Render one galaxy of a 10-class label to a float32 [s, s] grid in [0, 1]."""
    if image_size < 8:
        raise ContractError(f"image_size must be at least 8, got {image_size}")
    rng = np.random.default_rng(seed)
    if label in AXIS_RATIO_BANDS:
        img = _render_elliptical(rng, image_size, label)
    elif label in ("Sa", "Sb", "Sc"):
        img = _render_spiral(rng, image_size, label[-1].lower(), barred=False)
    elif label in ("SBa", "SBb", "SBc"):
        img = _render_spiral(rng, image_size, label[-1].lower(), barred=True)
    elif label == "Irr":
        img = _render_irregular(rng, image_size)
    else:
        raise ContractError(f"unknown 10-class label {label!r}")

    img = _gaussian_blur(img.astype(np.float32), rng.uniform(0.7, 1.3))
    peak = float(img.max())
    if peak > 0.0:
        img *= np.float32(rng.uniform(0.72, 0.95) / peak)
    img += rng.normal(0.0, NOISE_SIGMA, img.shape).astype(np.float32)
    return np.clip(img, 0.0, 1.0).astype(np.float32)


def synth_generate(level: int, per_class: int, image_size: int, seed: int, out) -> Path:
    """Write per_class P5 images per class folder plus a manifest CSV.

    The manifest records, per file: relative path, class name, and the
    per-image render seed, so any single image can be regenerated.
    Returns the manifest path.
    """
    if per_class < 1:
        raise ContractError(f"per_class must be >= 1, got {per_class}")
    names = class_names(level)
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    rows: list[str] = []
    for label, name in enumerate(names):
        class_dir = out / name
        class_dir.mkdir(exist_ok=True)
        pool = subtype_pool(name)
        for i in range(per_class):
            pick = child_rng(seed, STREAM_SYNTH, level, label, i, 0)
            subtype = pool[int(pick.integers(len(pool)))]
            render_seed = child_seed(seed, STREAM_SYNTH, level, label, i, 1)
            img = render_galaxy(subtype, render_seed, image_size)
            filename = f"{name}_{i:05d}.pgm"
            write_bytes_atomic(class_dir / filename, encode_pgm(quantize_unit(img)))
            rows.append(f"{name}/{filename},{name},{render_seed}\n")
    manifest = out / "manifest.csv"
    write_text_atomic(manifest, "filename,class,seed\n" + "".join(rows))
    return manifest
