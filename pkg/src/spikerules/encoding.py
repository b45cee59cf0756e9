"""Signed spike encoders for real-valued sequences, with an SF decoder.

All encoders return trains with entries in {-1, 0, +1} and use strict
inequalities at the threshold.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .numerics import Tensor

KINDS = ("TC", "SF", "MW")


@dataclass(frozen=True)
class EncoderConfig:
    kind: str = "SF"
    factor: float = 1.0
    threshold: float = 0.1
    window: int = 3

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"kind must be one of {list(KINDS)}, got {self.kind!r}")
        if not self.factor > 0:
            raise ValueError(f"factor must be positive, got {self.factor}")
        if not self.threshold > 0:
            raise ValueError(f"threshold must be positive, got {self.threshold}")
        if int(self.window) != self.window or self.window < 1:
            raise ValueError(f"window must be an integer >= 1, got {self.window}")


@dataclass(frozen=True)
class SpikeTrain:
    values: np.ndarray
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        v = np.asarray(self.values, dtype=np.float64)
        if not np.isin(v, (-1.0, 0.0, 1.0)).all():
            raise ValueError("spike train entries must be -1, 0 or +1")
        v.flags.writeable = False
        object.__setattr__(self, "values", v)

    def __len__(self):
        return self.values.shape[0]


def _signal(signal) -> np.ndarray:
    s = signal.data if isinstance(signal, Tensor) else np.asarray(signal, dtype=np.float64)
    if s.ndim != 1:
        raise ValueError(f"expected a 1-D signal, got shape {s.shape}")
    if not np.isfinite(s).all():
        raise ValueError("signal contains non-finite values")
    return s


def _positive(name, value):
    if not value > 0:
        raise ValueError(f"{name} must be positive, got {value}")


def encode_tc(signal, factor: float) -> SpikeTrain:
    """Temporal contrast on forward differences (last difference repeated).

    ``thr = mean|d| + factor * std|d|``.
    """
    s = _signal(signal)
    if s.shape[0] < 2:
        raise ValueError("temporal contrast needs at least 2 samples")
    if factor < 0:
        raise ValueError(f"factor must be non-negative, got {factor}")
    d = np.diff(s)
    d = np.append(d, d[-1])
    mag = np.abs(d)
    thr = float(mag.mean() + factor * mag.std())
    out = np.where(d > thr, 1.0, np.where(d < -thr, -1.0, 0.0))
    return SpikeTrain(out, {"kind": "TC", "threshold": thr, "initial": float(s[0])})


def encode_sf(signal, threshold: float) -> SpikeTrain:
    """Step-forward: the baseline starts at ``s[0]`` and moves by ``threshold`` per spike."""
    s = _signal(signal)
    _positive("threshold", threshold)
    if s.shape[0] < 1:
        raise ValueError("signal is empty")
    out = kernels.step_forward(s, threshold).astype(np.float64)
    return SpikeTrain(out, {"kind": "SF", "threshold": float(threshold), "initial": float(s[0])})


def encode_mw(signal, threshold: float, window: int) -> SpikeTrain:
    """Moving window: the baseline is the mean of the previous ``window`` samples."""
    s = _signal(signal)
    _positive("threshold", threshold)
    if int(window) != window or window < 1:
        raise ValueError(f"window must be an integer >= 1, got {window}")
    out = kernels.moving_window(s, threshold, int(window)).astype(np.float64)
    return SpikeTrain(out, {"kind": "MW", "threshold": float(threshold), "window": int(window),
                            "initial": float(s[0]) if s.size else 0.0})


def decode_sf(train: SpikeTrain) -> np.ndarray:
    meta = train.meta or {}
    if meta.get("kind", "SF") != "SF" or "initial" not in meta or "threshold" not in meta:
        raise ValueError("decode_sf needs a train from encode_sf (initial value and threshold)")
    return meta["initial"] + meta["threshold"] * np.cumsum(train.values)


def sparsity(train) -> float:
    """Fraction of nonzero entries."""
    v = train.values if isinstance(train, SpikeTrain) else np.asarray(train)
    return float(np.count_nonzero(v) / v.size) if v.size else 0.0


def encode(signal, cfg: EncoderConfig) -> SpikeTrain:
    if cfg.kind == "TC":
        return encode_tc(signal, cfg.factor)
    if cfg.kind == "SF":
        return encode_sf(signal, cfg.threshold)
    return encode_mw(signal, cfg.threshold, cfg.window)


def encode_channels(signal, cfg: EncoderConfig) -> np.ndarray:
    """Encode each column of ``signal`` [T, D] independently; returns [T, D]."""
    s = signal.data if isinstance(signal, Tensor) else np.asarray(signal, dtype=np.float64)
    if s.ndim == 1:
        s = s[:, None]
    return np.stack([encode(s[:, j], cfg).values for j in range(s.shape[1])], axis=1)


def two_rail(values) -> np.ndarray:
    """Split signed spikes [..., D] into [..., 2D]: positive rail then negative rail."""
    v = np.asarray(values, dtype=np.float64)
    return np.concatenate([(v > 0).astype(np.float64), (v < 0).astype(np.float64)], axis=-1)


def encode_sequences(inputs, cfg: EncoderConfig, rails: bool = True) -> np.ndarray:
    """Batch version: [N, T, D] to [N, T, 2D] (``rails``) or signed [N, T, D]."""
    x = np.asarray(inputs, dtype=np.float64)
    out = np.stack([encode_channels(sample, cfg) for sample in x])
    return two_rail(out) if rails else out
