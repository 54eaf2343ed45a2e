"""Serialization of run results: confusion CSV, metrics JSON, heatmap PGM.

All emitters are byte-stable: sorted keys, fixed float formatting (6
decimal places), LF line endings. Wall-clock timing is kept on the
RunRecord for console reporting but never serialized, so identical runs
produce identical files.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Any

import numpy as np

from .errors import ContractError
from .pnm import encode_pgm
from .train import EpochStats, EvalReport

HEATMAP_CELL = 16


@dataclass
class RunRecord:
    command: str
    config: dict                       # every effective flag value, seeds included
    dataset_summary: dict              # class names and per-class train/test counts
    eval_report: EvalReport | None = None
    history: list[EpochStats] | None = None
    wall_seconds: float = 0.0          # reported on stdout only, not serialized


def confusion_to_csv(report: EvalReport, class_names) -> str:
    """CSV text: header ``true\\predicted,<names>``, one row of counts per true class."""
    names = list(class_names)
    n = report.confusion.shape[0]
    if len(names) != n:
        raise ContractError(f"{len(names)} class names for a {n}x{n} confusion matrix")
    lines = ["true\\predicted," + ",".join(names)]
    for i, name in enumerate(names):
        lines.append(name + "," + ",".join(str(int(v)) for v in report.confusion[i]))
    return "\n".join(lines) + "\n"


def _emit(value: Any) -> str:
    if isinstance(value, dict):
        inner = ",".join(f"{json.dumps(str(k))}:{_emit(value[k])}" for k in sorted(value))
        return "{" + inner + "}"
    if isinstance(value, (list, tuple)):
        return "[" + ",".join(_emit(v) for v in value) + "]"
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        return f"{float(value):.6f}"
    if value is None:
        return "null"
    if isinstance(value, str):
        return json.dumps(value)
    raise ContractError(f"cannot serialize {type(value).__name__} into metrics JSON")


def record_to_document(record: RunRecord) -> dict:
    doc: dict[str, Any] = {
        "command": record.command,
        "config": record.config,
        "dataset": record.dataset_summary,
    }
    if record.eval_report is not None:
        rep = record.eval_report
        doc["eval"] = {
            "accuracy": rep.accuracy,
            "per_class_accuracy": list(rep.per_class_accuracy),
            "confusion": [[int(v) for v in row] for row in rep.confusion],
            "n_test": rep.n_test,
        }
    else:
        doc["eval"] = None
    if record.history is not None:
        doc["history"] = {
            "train_loss": [e.loss for e in record.history],
            "train_accuracy": [e.accuracy for e in record.history],
        }
    return doc


def metrics_to_json(record: RunRecord) -> str:
    """Byte-stable JSON for a run: sorted keys, floats at 6 decimal places."""
    return _emit(record_to_document(record)) + "\n"


def _round_half_away(x: np.ndarray) -> np.ndarray:
    return np.floor(x + 0.5)


def confusion_heatmap_pgm(report: EvalReport) -> bytes:
    """P5 heatmap of the row-normalized confusion matrix.

    Each cell becomes a 16x16 block; intensity is round(255 * count /
    row_sum) with half rounded away from zero, and 0 for empty rows.
    """
    n = report.confusion.shape[0]
    if n < 2:
        raise ContractError("heatmap needs at least 2 classes")
    counts = report.confusion.astype(np.float64)
    row_sums = counts.sum(axis=1, keepdims=True)
    with np.errstate(invalid="ignore", divide="ignore"):
        fractions = np.where(row_sums > 0, counts / row_sums, 0.0)
    cells = _round_half_away(255.0 * fractions).astype(np.uint8)
    image = np.kron(cells, np.ones((HEATMAP_CELL, HEATMAP_CELL), dtype=np.uint8))
    return encode_pgm(image)
