"""Spike step function with a registrable pseudo-derivative."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .tensor import Tensor, _emit, as_tensor

# kind -> f(x, gamma, v_th) returning the backward multiplier
_KINDS: dict[str, Callable[[np.ndarray, float, float], np.ndarray]] = {}


def register_pseudo(kind: str, fn: Callable[[np.ndarray, float, float], np.ndarray]) -> None:
    _KINDS[kind] = fn


def _triangular(x, gamma, v_th):
    return gamma * np.maximum(0.0, 1.0 - np.abs(x) / v_th)


register_pseudo("triangular", _triangular)


@dataclass(frozen=True)
class PseudoDerivative:
    """Surrogate for dH/dx used only on the backward pass.

    ``gamma`` is the dampening factor (peak value at threshold).
    """

    gamma: float = 0.3
    kind: str = "triangular"

    def __post_init__(self):
        if self.kind not in _KINDS:
            raise ValueError(f"unknown pseudo-derivative kind {self.kind!r}; "
                             f"registered: {sorted(_KINDS)}")
        if self.gamma < 0:
            raise ValueError(f"gamma must be non-negative, got {self.gamma}")

    def __call__(self, x, v_th: float) -> np.ndarray:
        if v_th <= 0:
            raise ValueError(f"v_th must be positive, got {v_th}")
        return _KINDS[self.kind](np.asarray(x, dtype=np.float64), self.gamma, v_th)


def heaviside_with_pseudo(v_minus_thresh, pd: PseudoDerivative, v_th: float) -> Tensor:
    """Exact step ``H(x >= 0)`` forward; ``pd(x, v_th)`` as the backward multiplier."""
    if v_th <= 0:
        raise ValueError(f"v_th must be positive, got {v_th}")
    x = as_tensor(v_minus_thresh)
    psi = pd(x.data, v_th)
    out = (x.data >= 0).astype(np.float64)
    return _emit(out, (x,), lambda g: (g * psi,), "heaviside")
