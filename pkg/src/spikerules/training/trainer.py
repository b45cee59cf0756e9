"""Minibatch training loop, decoupled from the learning rule."""

from __future__ import annotations

import logging

import numpy as np

from ..data.datasets import Dataset, batches
from ..numerics import NonFiniteError
from .optimizers import Optimizer

log = logging.getLogger(__name__)


class TrainingDiverged(RuntimeError):
    def __init__(self, epoch: int, step: int, reason: str):
        super().__init__(f"training diverged at epoch {epoch}, step {step}: {reason}")
        self.epoch, self.step = epoch, step


def apply_deltas(model, deltas) -> None:
    model.set_params({k: model.params[k] + deltas[k] if k in deltas else model.params[k]
                      for k in model.params})


def evaluate_dataset(evaluator, data: Dataset, chunk: int = 512, w=None) -> tuple[float, dict]:
    """Loss and metrics over a whole dataset, chunked to bound memory."""
    n = len(data)
    total_loss, totals = 0.0, {}
    for start in range(0, n, chunk):
        x, y = data.inputs[start:start + chunk], data.labels[start:start + chunk]
        loss, metrics = evaluator.evaluate((x, y), w)
        total_loss += loss * len(y)
        for k, v in metrics.items():
            totals[k] = totals.get(k, 0.0) + v * len(y)
    return total_loss / n, {k: v / n for k, v in totals.items()}


def train(evaluator, rule, data: Dataset, epochs: int, optimizer: Optimizer | None = None, *,
          batch_size: int = 32, seed: int = 0, validation: Dataset | None = None,
          on_epoch=None) -> list[dict]:
    """Shuffled minibatch loop. Returns one history row per epoch.

    Every row is scored on the full training set after the epoch (and on
    ``validation`` when given), so it does not depend on batch order.
    """
    rule.check(evaluator.model)
    optimizer = optimizer or Optimizer()
    rng = np.random.default_rng(seed)
    history = []
    for epoch in range(1, epochs + 1):
        for step, batch in enumerate(batches(data, batch_size, rng)):
            try:
                deltas = rule.update(evaluator, batch, optimizer)
            except (NonFiniteError, FloatingPointError) as exc:
                raise TrainingDiverged(epoch, step, str(exc)) from exc
            if not all(np.isfinite(d).all() for d in deltas.values()):
                raise TrainingDiverged(epoch, step, "non-finite weight update")
            apply_deltas(evaluator.model, deltas)
        try:
            loss, metrics = evaluate_dataset(evaluator, data)
        except (NonFiniteError, FloatingPointError) as exc:
            raise TrainingDiverged(epoch, -1, str(exc)) from exc
        if not np.isfinite(loss):
            raise TrainingDiverged(epoch, -1, "non-finite loss")
        row = {"epoch": epoch, "loss": loss, **metrics}
        if validation is not None:
            vloss, vmetrics = evaluate_dataset(evaluator, validation)
            row["val_loss"] = vloss
            row.update({f"val_{k}": v for k, v in vmetrics.items()})
        log.info("epoch %d: %s", epoch, row)
        history.append(row)
        if on_epoch is not None:
            on_epoch(row)
    return history


class Trainer:
    """Holds a learning rule and optimizer; ``train(x, y, epochs)`` like a fit call."""

    def __init__(self, rule, optimizer: Optimizer | None = None, batch_size: int = 32,
                 seed: int = 0):
        self.rule = rule
        self.optimizer = optimizer or Optimizer()
        self.batch_size = batch_size
        self.seed = seed

    def train(self, evaluator, x, y=None, epochs: int = 1, validation=None):
        data = x if isinstance(x, Dataset) else Dataset(x, y, evaluator.model.n_out)
        return train(evaluator, self.rule, data, epochs, self.optimizer,
                     batch_size=self.batch_size, seed=self.seed, validation=validation)
