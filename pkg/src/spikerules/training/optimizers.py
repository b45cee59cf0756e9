"""SGD, Adam and the naive optimizer (raw gradients as weight deltas)."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping

import numpy as np

KINDS = ("sgd", "adam", "naive")


def _check(params, grads):
    for k, g in grads.items():
        if np.shape(params[k]) != np.shape(g):
            raise ValueError(f"{k}: gradient shape {np.shape(g)} != parameter shape "
                             f"{np.shape(params[k])}")


def apply_naive(params: Mapping[str, np.ndarray], grads: Mapping[str, np.ndarray]) -> dict:
    """``w <- w - g``, no learning rate."""
    _check(params, grads)
    return {k: params[k] - grads[k] if k in grads else params[k].copy() for k in params}


def sgd_step(params, grads, state=None, lr: float = 1e-3):
    _check(params, grads)
    return {k: params[k] - lr * grads[k] if k in grads else params[k].copy() for k in params}, state


def adam_step(params, grads, state=None, lr: float = 1e-3, beta1: float = 0.9,
              beta2: float = 0.999, eps: float = 1e-8):
    """Bias-corrected Adam. ``state`` is ``None`` or ``{"t", "m", "v"}``."""
    _check(params, grads)
    if state is None:
        state = {"t": 0, "m": {k: np.zeros_like(g) for k, g in grads.items()},
                 "v": {k: np.zeros_like(g) for k, g in grads.items()}}
    t = state["t"] + 1
    m, v = dict(state["m"]), dict(state["v"])
    out = {k: params[k].copy() for k in params}
    for k, g in grads.items():
        m[k] = beta1 * m[k] + (1 - beta1) * g
        v[k] = beta2 * v[k] + (1 - beta2) * g * g
        m_hat = m[k] / (1 - beta1 ** t)
        v_hat = v[k] / (1 - beta2 ** t)
        out[k] = params[k] - lr * m_hat / (np.sqrt(v_hat) + eps)
    return out, {"t": t, "m": m, "v": v}


@dataclass(frozen=True)
class OptimizerConfig:
    kind: str = "adam"
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown optimizer {self.kind!r}; expected one of {list(KINDS)}")
        if self.kind != "naive" and self.lr < 0:
            raise ValueError(f"lr must be non-negative, got {self.lr}")


class Optimizer:
    """Stateful wrapper turning gradients into weight deltas."""

    def __init__(self, cfg: OptimizerConfig | None = None):
        self.cfg = cfg or OptimizerConfig()
        self.state = None

    def deltas(self, params, grads) -> dict[str, np.ndarray]:
        c = self.cfg
        if c.kind == "naive":
            return {k: -np.asarray(g, dtype=np.float64) for k, g in grads.items()}
        if c.kind == "sgd":
            new, _ = sgd_step(params, grads, lr=c.lr)
        else:
            new, self.state = adam_step(params, grads, self.state, c.lr, c.beta1, c.beta2, c.eps)
        return {k: new[k] - params[k] for k in grads}

    def fresh(self) -> "Optimizer":
        return Optimizer(self.cfg)
