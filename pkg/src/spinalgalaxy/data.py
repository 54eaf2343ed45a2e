"""Image ingestion, preprocessing, and stratified train/test splitting.

Datasets come from a folder-per-class layout (root/<ClassName>/*.pgm|*.ppm).
Images are decoded, resized to a square target, and normalized to [-1, 1].
An optional metadata CSV (header ``filename,confidence``) drops rows whose
confidence falls below a threshold.
"""

from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import ConfigurationError, ContractError, DecodeError, LayoutError, SplitError
from .pnm import decode_image
from .seeds import STREAM_SPLIT, child_rng
from .taxonomy import class_names
from .tensor import Tensor

logger = logging.getLogger(__name__)

IMAGE_SUFFIXES = (".pgm", ".ppm")


@dataclass
class LabeledImage:
    pixels: Tensor          # [1, s, s], values in [-1, 1]
    label: int              # index into the dataset's class_names
    source_path: str = ""   # empty for images built in memory


@dataclass
class Dataset:
    items: list[LabeledImage]
    class_names: list[str]
    split: list[str] | None = None  # per-item "train" | "test", parallel to items

    def indices(self, tag: str) -> list[int]:
        if self.split is None:
            raise SplitError("dataset has no split assignment yet")
        return [i for i, t in enumerate(self.split) if t == tag]

    def per_class_counts(self, tag: str | None = None) -> list[int]:
        counts = [0] * len(self.class_names)
        for i, item in enumerate(self.items):
            if tag is None or (self.split is not None and self.split[i] == tag):
                counts[item.label] += 1
        return counts


@dataclass
class LoadReport:
    loaded: int = 0
    skipped_undecodable: int = 0
    filtered_low_confidence: int = 0
    ignored_folders: list[str] = field(default_factory=list)


def resize_bilinear(grid: np.ndarray, target: int) -> np.ndarray:
    """Resize [h, w] to [target, target] with edge-aligned bilinear sampling.

    Output pixel i samples source coordinate (i + 0.5) * h / target - 0.5,
    clamped to the valid range.
    """
    if target < 1:
        raise ContractError(f"resize target must be >= 1, got {target}")
    grid = np.asarray(grid, dtype=np.float32)
    if grid.ndim != 2:
        raise ContractError(f"resize expects a rank-2 grid, got shape {grid.shape}")
    h, w = grid.shape

    def coords(n_src: int) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        c = (np.arange(target, dtype=np.float32) + np.float32(0.5)) * np.float32(n_src / target)
        c = np.clip(c - np.float32(0.5), 0.0, n_src - 1.0)
        lo = np.floor(c).astype(np.int64)
        hi = np.minimum(lo + 1, n_src - 1)
        return lo, hi, (c - lo).astype(np.float32)

    r0, r1, fr = coords(h)
    c0, c1, fc = coords(w)
    top = grid[r0][:, c0] * (1 - fc) + grid[r0][:, c1] * fc
    bottom = grid[r1][:, c0] * (1 - fc) + grid[r1][:, c1] * fc
    return top * (1 - fr[:, None]) + bottom * fr[:, None]


def normalize(grid: np.ndarray) -> Tensor:
    """Map a [0, 1] grid to a [1, s, s] tensor in [-1, 1]."""
    grid = np.asarray(grid, dtype=np.float32)
    out = (grid - np.float32(0.5)) / np.float32(0.5)
    return Tensor(out.reshape((1,) + grid.shape))


def denormalize(pixels: Tensor | np.ndarray) -> np.ndarray:
    """Inverse of normalize: [-1, 1] back to a [0, 1] grid."""
    arr = pixels.data if isinstance(pixels, Tensor) else np.asarray(pixels, dtype=np.float32)
    out = arr * np.float32(0.5) + np.float32(0.5)
    return out.reshape(out.shape[-2:])


def _read_confidence_csv(path: Path) -> dict[str, float]:
    table: dict[str, float] = {}
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or [h.strip() for h in header] != ["filename", "confidence"]:
            raise ConfigurationError(
                f"metadata CSV must start with header 'filename,confidence', got {header}")
        for row in reader:
            if not row:
                continue
            if len(row) != 2:
                raise ConfigurationError(f"malformed metadata row {row}")
            table[row[0].strip()] = float(row[1])
    return table


def load_image_folder(root, taxonomy_level: int, image_size: int = 64,
                      min_confidence: float | None = None,
                      metadata=None) -> tuple[Dataset, LoadReport]:
    """Ingest a folder-per-class tree into an unsplit Dataset.

    Class subfolders must exist for every class name at the taxonomy level;
    extra folders are ignored with a warning. Files are ingested in
    lexicographic path order. Undecodable files are skipped and counted.
    """
    root = Path(root)
    if not root.is_dir():
        raise LayoutError(f"dataset root {root} is not a directory")
    names = class_names(taxonomy_level)
    present = {p.name for p in root.iterdir() if p.is_dir()}
    missing = [n for n in names if n not in present]
    if missing:
        raise LayoutError(f"missing class folders {missing}; expected exactly {list(names)}")

    if (min_confidence is None) != (metadata is None):
        raise ConfigurationError(
            "confidence filtering needs both min_confidence and metadata")
    confidence = _read_confidence_csv(Path(metadata)) if metadata is not None else {}

    report = LoadReport()
    for extra in sorted(present - set(names)):
        report.ignored_folders.append(extra)
        logger.warning("ignoring folder %r: not a class at level %d", extra, taxonomy_level)

    items: list[LabeledImage] = []
    for label, name in enumerate(names):
        files = sorted(p for p in (root / name).iterdir()
                       if p.is_file() and p.suffix.lower() in IMAGE_SUFFIXES)
        for path in files:
            if min_confidence is not None:
                conf = confidence.get(path.name)
                if conf is not None and conf < min_confidence:
                    report.filtered_low_confidence += 1
                    continue
            try:
                grid = decode_image(path.read_bytes())
            except DecodeError as exc:
                report.skipped_undecodable += 1
                logger.warning("skipping %s: %s", path, exc)
                continue
            grid = resize_bilinear(grid, image_size)
            items.append(LabeledImage(normalize(grid), label, str(path)))
            report.loaded += 1
    return Dataset(items, list(names)), report


def stratified_split(dataset: Dataset, train_fraction: float = 0.7,
                     seed: int = 0) -> Dataset:
    """Assign train/test tags per class: floor(train_fraction * n) train, rest test.

    Items are shuffled per class by a seeded permutation; identical seeds
    give identical assignments. Item order is left untouched.
    """
    if not 0.0 < train_fraction < 1.0:
        raise ContractError(f"train_fraction must be in (0, 1), got {train_fraction}")
    split = ["test"] * len(dataset.items)
    for label, name in enumerate(dataset.class_names):
        idx = [i for i, item in enumerate(dataset.items) if item.label == label]
        if len(idx) < 2:
            raise SplitError(f"class {name!r} has {len(idx)} items, need at least 2 to split")
        rng = child_rng(seed, STREAM_SPLIT, label)
        perm = rng.permutation(len(idx))
        n_train = int(math.floor(train_fraction * len(idx)))
        for j in perm[:n_train]:
            split[idx[j]] = "train"
    return Dataset(dataset.items, dataset.class_names, split)
