"""Manhattan rule: fixed-magnitude steps along the gradient sign."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping

import numpy as np

from .base import LearningRule
from .bptt import BPTT


@dataclass(frozen=True)
class ManhattanConfig:
    delta: float = 0.001
    g_min: float | None = None
    g_max: float | None = None

    def __post_init__(self):
        if self.delta <= 0:
            raise ValueError(f"delta must be positive, got {self.delta}")
        if (self.g_min is None) != (self.g_max is None):
            raise ValueError("g_min and g_max must be given together")
        if self.g_min is not None and not self.g_min < self.g_max:
            raise ValueError(f"need g_min < g_max, got [{self.g_min}, {self.g_max}]")

    @property
    def bounded(self) -> bool:
        return self.g_min is not None


def manhattan_update(grads: Mapping[str, np.ndarray], weights: Mapping[str, np.ndarray],
                     cfg: ManhattanConfig) -> dict[str, np.ndarray]:
    """``-delta * sign(grad)`` per weight; with bounds, ``w + dw`` is clipped into range."""
    deltas = {}
    for k, g in grads.items():
        d = -cfg.delta * np.sign(g)
        if cfg.bounded:
            w = weights[k]
            d = np.clip(w + d, cfg.g_min, cfg.g_max) - w
        deltas[k] = d
    return deltas


class Manhattan(LearningRule):
    """Sign updates driven by another rule's gradients (BPTT by default).

    With conductance bounds the parameters are clipped into range once, when
    the rule first sees a model, so every later step moves at most ``delta``.
    """

    def __init__(self, cfg: ManhattanConfig | None = None, source: LearningRule | None = None):
        super().__init__()
        self.cfg = cfg or ManhattanConfig()
        self.source = source or BPTT()
        self._clipped = set()

    @property
    def name(self):
        return "manhattan_constrained" if self.cfg.bounded else "manhattan"

    def supports(self, model) -> bool:
        return self.source.supports(model)

    def prepare(self, model) -> None:
        if self.cfg.bounded and id(model) not in self._clipped:
            model.set_params({k: np.clip(v, self.cfg.g_min, self.cfg.g_max)
                              for k, v in model.params.items()})
            self._clipped.add(id(model))

    def gradients(self, evaluator, batch):
        return self.source.gradients(evaluator, batch)

    def update(self, evaluator, batch, optimizer=None):
        self.calls += 1
        self.prepare(evaluator.model)
        grads = self.source.gradients(evaluator, batch)
        return manhattan_update(grads, evaluator.model.params, self.cfg)

    def for_clone(self):
        return Manhattan(self.cfg, self.source.for_clone())
