from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class Dataset:
    """Inputs [N, T, D] (sequences) or [N, D] (flat) with integer labels."""

    inputs: np.ndarray
    labels: np.ndarray
    class_count: int

    def __post_init__(self):
        inputs = np.asarray(self.inputs, dtype=np.float64)
        labels = np.asarray(self.labels).astype(np.int64)
        if inputs.shape[0] != labels.shape[0]:
            raise ValueError(f"{inputs.shape[0]} inputs but {labels.shape[0]} labels")
        if labels.size and (labels.min() < 0 or labels.max() >= self.class_count):
            raise ValueError(f"labels must lie in [0, {self.class_count})")
        inputs.flags.writeable = False
        labels.flags.writeable = False
        object.__setattr__(self, "inputs", inputs)
        object.__setattr__(self, "labels", labels)

    def __len__(self):
        return self.labels.shape[0]

    def subset(self, index) -> "Dataset":
        return Dataset(self.inputs[index], self.labels[index], self.class_count)

    def split(self, fraction: float, seed: int) -> tuple["Dataset", "Dataset"]:
        """Shuffle with ``seed`` and cut into ``(first, rest)``."""
        order = np.random.default_rng(seed).permutation(len(self))
        cut = int(round(fraction * len(self)))
        return self.subset(order[:cut]), self.subset(order[cut:])


def batches(data: Dataset, batch_size: int, rng: np.random.Generator | None = None):
    """Yield ``(x, y)`` covering every sample exactly once; shuffled if ``rng`` given."""
    if batch_size < 1:
        raise ValueError(f"batch_size must be at least 1, got {batch_size}")
    n = len(data)
    order = rng.permutation(n) if rng is not None else np.arange(n)
    for start in range(0, n, batch_size):
        idx = order[start:start + batch_size]
        yield data.inputs[idx], data.labels[idx]
