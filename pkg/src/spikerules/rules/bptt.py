"""Reference rule: exact reverse-mode gradients through the unrolled network."""

import numpy as np

from ..numerics import Tape
from .base import LearningRule, check_finite


def bptt_gradients(evaluator, batch) -> dict:
    """Gradients of the mean batch loss; spikes use the model's pseudo-derivative."""
    x, labels = batch
    model = evaluator.model
    tape = Tape()
    w = {k: tape.watch(model.params[k], k) for k in model.trainable}
    loss, _ = evaluator.loss_tensor(w, np.asarray(x, dtype=np.float64), labels)
    grads = tape.backward(loss)
    return check_finite(model.postprocess_grads(grads), "bptt")


def bptt_loss_and_gradients(evaluator, batch, params=None):
    """Like :func:`bptt_gradients` but also returns the loss, at ``params``."""
    x, labels = batch
    model = evaluator.model
    params = model.params if params is None else params
    tape = Tape()
    w = {k: tape.watch(params[k], k) for k in model.trainable}
    loss, _ = evaluator.loss_tensor(w, np.asarray(x, dtype=np.float64), labels)
    value = loss.item()
    grads = model.postprocess_grads(tape.backward(loss))
    return value, grads


class BPTT(LearningRule):
    name = "bptt"

    def gradients(self, evaluator, batch):
        return bptt_gradients(evaluator, batch)

    def for_clone(self):
        return BPTT()
