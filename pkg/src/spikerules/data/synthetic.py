"""Small seeded tasks for desk-scale experiments."""

from __future__ import annotations

import numpy as np

from .datasets import Dataset

TASKS = ("two_sines", "pattern_detect", "gaussian_blobs")


def _balanced_labels(n, rng):
    labels = np.arange(n) % 2
    rng.shuffle(labels)
    return labels


def two_sines(seed: int, n: int = 200, steps: int = 50, noise: float = 0.3,
              cycles=(2.0, 4.0), amplitude: float = 1.0) -> Dataset:
    """Noisy sinusoid, one input channel; the label is which frequency was used."""
    rng = np.random.default_rng(seed)
    labels = _balanced_labels(n, rng)
    t = np.arange(steps) / steps
    phase = rng.uniform(0, 2 * np.pi, n)
    freq = np.asarray(cycles, dtype=np.float64)[labels]
    x = amplitude * np.sin(2 * np.pi * freq[:, None] * t[None, :] + phase[:, None])
    x = x + noise * rng.standard_normal(x.shape)
    return Dataset(x[:, :, None], labels, 2)


def pattern_detect(seed: int, n: int = 200, steps: int = 40, channels: int = 8,
                   rate: float = 0.05, pattern_len: int = 8, pattern_density: float = 0.5) -> Dataset:
    """Background Bernoulli spikes; class 1 carries a fixed planted pattern."""
    if not 1 <= pattern_len <= steps:
        raise ValueError(f"pattern_len must lie in [1, steps={steps}], got {pattern_len}")
    rng = np.random.default_rng(seed)
    labels = _balanced_labels(n, rng)
    pattern = (rng.random((pattern_len, channels)) < pattern_density).astype(np.float64)
    x = (rng.random((n, steps, channels)) < rate).astype(np.float64)
    starts = rng.integers(0, steps - pattern_len + 1, n)
    for i in np.nonzero(labels == 1)[0]:
        s = starts[i]
        x[i, s:s + pattern_len] = np.maximum(x[i, s:s + pattern_len], pattern)
    return Dataset(x, labels, 2)


def gaussian_blobs(seed: int, n: int = 400, dim: int = 2, separation: float = 2.0,
                   std: float = 1.0) -> Dataset:
    """Two isotropic Gaussian clouds at ``+/- separation / 2`` along every axis."""
    rng = np.random.default_rng(seed)
    labels = _balanced_labels(n, rng)
    centers = np.where(labels[:, None] == 1, 0.5, -0.5) * separation / np.sqrt(dim)
    x = centers + std * rng.standard_normal((n, dim))
    return Dataset(x, labels, 2)


def synthetic_tasks(name: str, seed: int, **sizes) -> Dataset:
    try:
        fn = {"two_sines": two_sines, "pattern_detect": pattern_detect,
              "gaussian_blobs": gaussian_blobs}[name]
    except KeyError:
        raise ValueError(f"unknown task {name!r}; valid names: {', '.join(TASKS)}") from None
    return fn(seed, **sizes)
