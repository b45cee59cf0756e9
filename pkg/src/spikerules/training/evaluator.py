"""Loss functions, metrics and the firing-rate regularizer bound to a model."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping

import numpy as np

from .. import numerics as nx
from ..kernels import LOSS_CE, LOSS_MSE
from ..neurons import firing_rate, mlp_forward, unroll
from ..numerics import Tensor

LOSSES = {"categorical_crossentropy": LOSS_CE, "mse": LOSS_MSE}
METRICS = ("accuracy", "firing_rate")
READOUTS = ("mean", "last")


@dataclass(frozen=True)
class RateRegularizer:
    """``coef * sum_j (rate_j - target_hz)**2`` with rates in Hz."""

    target_hz: float = 10.0
    coef: float = 1e-4
    dt: float = 1e-3

    def __post_init__(self):
        if self.dt <= 0:
            raise ValueError(f"dt must be positive, got {self.dt}")


def firing_rate_regularizer(spikes, target_hz: float, dt: float, coef: float):
    """Value and gradient w.r.t. ``spikes`` [batch, T, n_rec].

    The gradient is the same for every batch element and time step, so it is
    returned per neuron with shape [n_rec].
    """
    if dt <= 0:
        raise ValueError(f"dt must be positive, got {dt}")
    z = spikes.data if isinstance(spikes, Tensor) else np.asarray(spikes, dtype=np.float64)
    batch, steps, _ = z.shape
    rate = z.mean(axis=(0, 1)) / dt
    diff = rate - target_hz
    value = coef * float((diff * diff).sum())
    grad = coef * 2.0 * diff / (dt * batch * steps)
    return value, grad


def _rate_penalty_on_tape(spikes: Tensor, reg: RateRegularizer) -> Tensor:
    batch, steps, n = spikes.shape
    per_neuron = nx.reshape(spikes, (batch * steps, n)).mean(axis=0) * (1.0 / reg.dt)
    diff = per_neuron - Tensor(np.full(n, reg.target_hz))
    return nx.square(diff).sum() * reg.coef


class Evaluator:
    """Associates a model with a loss, metrics and an optional rate regularizer.

    For recurrent models ``readout="mean"`` scores every time step and
    averages; ``"last"`` scores only the final step. Class probabilities
    follow the same convention.
    """

    def __init__(self, model, loss: str = "categorical_crossentropy",
                 metrics=("accuracy",), readout: str = "mean",
                 regularizer: RateRegularizer | None = None):
        if loss not in LOSSES:
            raise ValueError(f"unknown loss {loss!r}; expected one of {sorted(LOSSES)}")
        bad = [m for m in metrics if m not in METRICS]
        if bad:
            raise ValueError(f"unknown metrics {bad}; expected a subset of {list(METRICS)}")
        if readout not in READOUTS:
            raise ValueError(f"unknown readout {readout!r}; expected one of {list(READOUTS)}")
        if model.kind != "recurrent" and ("firing_rate" in metrics or regularizer is not None):
            raise ValueError(f"firing rate is undefined for {model!r}")
        self.model = model
        self.loss = loss
        self.metrics = tuple(metrics)
        self.readout = readout
        self.regularizer = regularizer

    def with_model(self, model) -> "Evaluator":
        return Evaluator(model, self.loss, self.metrics, self.readout, self.regularizer)

    @property
    def recurrent(self) -> bool:
        return self.model.kind == "recurrent"

    def _check_labels(self, labels):
        labels = np.asarray(labels)
        n_out = self.model.n_out
        if labels.size and (labels.min() < 0 or labels.max() >= n_out):
            raise ValueError(f"labels must lie in [0, {n_out}), got range "
                             f"[{labels.min()}, {labels.max()}]")
        return labels.astype(np.int64)

    def onehot(self, labels) -> np.ndarray:
        labels = self._check_labels(labels)
        return np.eye(self.model.n_out)[labels]

    def step_weights(self, steps: int) -> np.ndarray:
        if self.readout == "mean":
            return np.full(steps, 1.0 / steps)
        w = np.zeros(steps)
        w[-1] = 1.0
        return w

    def sequence_targets(self, labels, steps: int) -> np.ndarray:
        oh = self.onehot(labels)
        return np.repeat(oh[:, None, :], steps, axis=1)

    # -- tape path ---------------------------------------------------------

    def _pointwise_loss(self, y: Tensor, onehot: np.ndarray) -> Tensor:
        """Sum over rows of the per-row loss. ``y``: [rows, C]."""
        if self.loss == "categorical_crossentropy":
            return -(nx.log_softmax(y) * Tensor(onehot)).sum()
        diff = y - Tensor(onehot)
        return nx.square(diff).sum() * (1.0 / y.shape[1])

    def loss_tensor(self, w: Mapping, x, labels) -> tuple[Tensor, "Tensor | None"]:
        """Mean loss over the batch (plus rate penalty) recorded on ``w``'s tape."""
        onehot = self.onehot(labels)
        batch = onehot.shape[0]
        if not self.recurrent:
            logits = mlp_forward(self.model.layers(w), x)
            return self._pointwise_loss(logits, onehot) * (1.0 / batch), None
        spikes, outputs, _ = unroll(self.model, x, w)
        steps = outputs.shape[1]
        if self.readout == "mean":
            flat = nx.reshape(outputs, (batch * steps, self.model.n_out))
            rows = np.repeat(onehot, steps, axis=0)
            loss = self._pointwise_loss(flat, rows) * (1.0 / (batch * steps))
        else:
            loss = self._pointwise_loss(outputs[:, steps - 1, :], onehot) * (1.0 / batch)
        if self.regularizer is not None:
            loss = loss + _rate_penalty_on_tape(spikes, self.regularizer)
        return loss, spikes

    # -- fast path ---------------------------------------------------------

    def forward(self, x, w: Mapping | None = None):
        """Returns ``(probs[B, C], spikes or None, raw outputs)``."""
        if not self.recurrent:
            logits = self.model.forward(x, w)
            return _softmax(logits), None, logits
        spikes, outputs = self.model.forward(x, w)
        if self.readout == "mean":
            probs = _softmax(outputs).mean(axis=1)
        else:
            probs = _softmax(outputs[:, -1])
        return probs, spikes, outputs

    def loss_value(self, outputs, spikes, labels) -> float:
        onehot = self.onehot(labels)
        if not self.recurrent:
            return _loss_rows(self.loss, outputs, onehot) / len(onehot)
        batch, steps, _ = outputs.shape
        if self.readout == "mean":
            rows = np.repeat(onehot, steps, axis=0)
            value = _loss_rows(self.loss, outputs.reshape(batch * steps, -1), rows) / (batch * steps)
        else:
            value = _loss_rows(self.loss, outputs[:, -1], onehot) / batch
        if self.regularizer is not None:
            r = self.regularizer
            value += firing_rate_regularizer(spikes, r.target_hz, r.dt, r.coef)[0]
        return value

    def evaluate(self, batch, w: Mapping | None = None) -> tuple[float, dict]:
        """Mean loss over ``batch = (x, labels)`` and the configured metrics."""
        x, labels = batch
        labels = self._check_labels(labels)
        probs, spikes, outputs = self.forward(x, w)
        loss = self.loss_value(outputs, spikes, labels)
        if not np.isfinite(loss):
            raise nx.NonFiniteError("loss is not finite")
        out = {}
        if "accuracy" in self.metrics:
            out["accuracy"] = float((probs.argmax(axis=1) == labels).mean())
        if "firing_rate" in self.metrics:
            out["firing_rate"] = firing_rate(spikes, self.model.dt)
        return float(loss), out


def _softmax(y):
    e = np.exp(y - y.max(axis=-1, keepdims=True))
    return e / e.sum(axis=-1, keepdims=True)


def _loss_rows(kind, y, onehot):
    if kind == "categorical_crossentropy":
        z = y - y.max(axis=1, keepdims=True)
        logp = z - np.log(np.exp(z).sum(axis=1, keepdims=True))
        return float(-(logp * onehot).sum())
    return float(((y - onehot) ** 2).sum() / y.shape[1])
