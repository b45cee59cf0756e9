from __future__ import annotations

import numpy as np

GradientSet = dict  # param id -> np.ndarray, same shape as the parameter


class IncompatibleModel(ValueError):
    """A learning rule cannot drive the given model."""


class LearningRule:
    """Turns (evaluator, batch) into weight deltas.

    Gradient-based rules implement :meth:`gradients`; the default
    :meth:`update` hands those to an optimizer. ``calls`` counts rule
    evaluations so callers can audit how much work was done.
    """

    name = "rule"

    def __init__(self):
        self.calls = 0

    def supports(self, model) -> bool:
        return True

    def check(self, model) -> None:
        if not self.supports(model):
            raise IncompatibleModel(f"{self.name} cannot train {model!r}")

    def gradients(self, evaluator, batch) -> GradientSet:
        raise NotImplementedError

    def update(self, evaluator, batch, optimizer) -> dict[str, np.ndarray]:
        self.calls += 1
        grads = self.gradients(evaluator, batch)
        return optimizer.deltas(evaluator.model.params, grads)

    def for_clone(self) -> "LearningRule":
        """A fresh instance with the same settings and its own state."""
        raise NotImplementedError


def check_finite(grads: GradientSet, source: str) -> GradientSet:
    for k, g in grads.items():
        if not np.isfinite(g).all():
            raise FloatingPointError(f"{source}: non-finite gradient for {k}")
    return grads
