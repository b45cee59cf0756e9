"""Delimited sequence files and image-to-sequence conversion."""

from __future__ import annotations

import csv
import math
from pathlib import Path

import numpy as np

from .datasets import Dataset

IMAGE_MODES = ("row_scan", "threshold_crossing")


def load_delimited_sequences(path, T: int, D: int, class_count: int | None = None) -> Dataset:
    """One sample per line: ``label, v_1, ..., v_{T*D}`` (comma-separated)."""
    labels, rows = [], []
    width = 1 + T * D
    with open(path, newline="") as f:
        for lineno, fields in enumerate(csv.reader(f), start=1):
            if not fields or all(not s.strip() for s in fields):
                continue
            if len(fields) != width:
                raise ValueError(f"{path}: line {lineno} has {len(fields)} fields, expected {width}")
            try:
                labels.append(int(fields[0]))
                rows.append([float(s) for s in fields[1:]])
            except ValueError as exc:
                raise ValueError(f"{path}: line {lineno}: {exc}") from None
    labels = np.asarray(labels, dtype=np.int64)
    inputs = np.asarray(rows, dtype=np.float64).reshape(len(rows), T, D)
    if class_count is None:
        class_count = int(labels.max()) + 1 if labels.size else 1
    return Dataset(inputs, labels, class_count)


def write_delimited_sequences(path, data: Dataset) -> None:
    with open(Path(path), "w", newline="") as f:
        w = csv.writer(f)
        for x, y in zip(data.inputs, data.labels):
            w.writerow([int(y)] + [repr(float(v)) for v in np.ravel(x)])


def image_to_sequence(images, mode: str = "row_scan", steps: int | None = None) -> np.ndarray:
    """Flat square images [N, P] to sequences.

    ``row_scan`` gives [N, side, side]: one row per time step.
    ``threshold_crossing`` gives [N, steps, P] with one spike per lit pixel at
    ``round((1 - intensity) * (steps - 1))``; brighter pixels fire earlier and
    black pixels never fire.
    """
    images = np.asarray(images, dtype=np.float64)
    if images.ndim == 1:
        images = images[None]
    n, p = images.shape
    side = math.isqrt(p)
    if side * side != p:
        raise ValueError(f"images have {p} pixels, which is not a square")
    if mode == "row_scan":
        return images.reshape(n, side, side).copy()
    if mode == "threshold_crossing":
        steps = side if steps is None else steps
        if steps < 1:
            raise ValueError(f"steps must be at least 1, got {steps}")
        out = np.zeros((n, steps, p))
        lit = images > 0
        t = np.rint((1.0 - np.clip(images, 0.0, 1.0)) * (steps - 1)).astype(np.int64)
        rows, cols = np.nonzero(lit)
        out[rows, t[rows, cols], cols] = 1.0
        return out
    raise ValueError(f"unknown mode {mode!r}; expected one of {list(IMAGE_MODES)}")
