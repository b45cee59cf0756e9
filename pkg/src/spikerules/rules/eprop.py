"""E-prop: eligibility traces times a broadcast learning signal.

Eligibility recursions for the cells in :mod:`spikerules.neurons` (the reset
path is treated as constant, as in the original derivation)::

    eps_v[t] = alpha * eps_v[t-1] + pre[t]
    eps_a[t] = psi[t-1] * eps_v[t-1] + (rho - psi[t-1] * beta) * eps_a[t-1]
    e[t]     = psi[t] * (eps_v[t] - beta * eps_a[t])
    ebar[t]  = kappa * ebar[t-1] + e[t]

``pre`` is the input ``x[t]`` for ``w_in`` and the previous spikes ``z[t-1]``
for ``w_rec``. The gradient estimate is ``sum_t L[t] * ebar[t]`` with learning
signal ``L[t] = dLoss/dy[t] @ B``. Readout gradients are exact.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .. import kernels
from ..kernels import LOSS_CE
from ..neurons import CellState, RecurrentSNN
from ..training.evaluator import LOSSES, firing_rate_regularizer
from .base import IncompatibleModel, LearningRule, check_finite

MODES = ("symmetric", "random", "adaptive")


@dataclass
class TraceState:
    """Per-synapse traces for one weight matrix, batched: [batch, n_pre, n_post]."""

    eps_v: np.ndarray
    eps_a: np.ndarray
    filtered: np.ndarray
    psi_prev: np.ndarray      # [batch, n_post], pseudo-derivative of the previous step
    elig: np.ndarray          # e[t] of the latest step

    @classmethod
    def zeros(cls, batch: int, n_pre: int, n_post: int) -> "TraceState":
        full = np.zeros((batch, n_pre, n_post))
        return cls(full, full.copy(), full.copy(), np.zeros((batch, n_post)), full.copy())


def eprop_trace_step(cell, pre, trace: TraceState, pseudo, kappa: float) -> TraceState:
    """Advance one weight matrix's traces by one step.

    ``cell`` supplies ``alpha``, ``rho`` and ``beta`` (``beta = 0`` for LIF);
    ``pre`` is [batch, n_pre]; ``pseudo`` is this step's psi, [batch, n_post].
    """
    pre = np.asarray(pre, dtype=np.float64)
    pseudo = np.asarray(pseudo, dtype=np.float64)
    b, n_pre, n_post = trace.eps_v.shape
    if pre.shape != (b, n_pre) or pseudo.shape != (b, n_post):
        raise ValueError(f"trace has shape {trace.eps_v.shape}; got pre {pre.shape} "
                         f"and pseudo {pseudo.shape}")
    beta = cell.beta
    eps_v = cell.alpha * trace.eps_v + pre[:, :, None]
    if beta:
        psi_prev = trace.psi_prev[:, None, :]
        eps_a = psi_prev * trace.eps_v + (cell.rho - psi_prev * beta) * trace.eps_a
        elig = pseudo[:, None, :] * (eps_v - beta * eps_a)
    else:
        eps_a = trace.eps_a
        elig = pseudo[:, None, :] * eps_v
    filtered = kappa * trace.filtered + elig
    return TraceState(eps_v, eps_a, filtered, pseudo.copy(), elig)


@dataclass
class BroadcastMatrix:
    """Feedback weights ``B`` [n_out, n_rec] carrying output errors to neurons."""

    mode: str
    B: np.ndarray = field(default=None)

    def __post_init__(self):
        if self.mode not in MODES:
            raise ValueError(f"unknown e-prop mode {self.mode!r}; expected one of {list(MODES)}")

    @classmethod
    def create(cls, mode: str, model, seed: int = 0) -> "BroadcastMatrix":
        if mode == "symmetric":
            return cls(mode, None)
        rng = np.random.default_rng(seed)
        B = rng.normal(0.0, 1.0 / np.sqrt(model.n_rec), (model.n_out, model.n_rec))
        return cls(mode, B)

    def matrix(self, model) -> np.ndarray:
        if self.mode == "symmetric":
            return model.params["w_out"].T.copy()
        return self.B

    def observe_update(self, delta_w_out: np.ndarray) -> None:
        """Adaptive mode mirrors every increment applied to ``w_out``."""
        if self.mode == "adaptive":
            self.B = self.B + delta_w_out.T

    def copy(self) -> "BroadcastMatrix":
        return replace(self, B=None if self.B is None else self.B.copy())


def _require_recurrent(model):
    if not isinstance(model, RecurrentSNN):
        raise IncompatibleModel(f"e-prop needs a recurrent LIF/ALIF layer with leaky readout; "
                                f"got {model!r}")


def _add_rate_penalty(evaluator, grads, spikes, esum_in, esum_rec):
    reg = evaluator.regularizer
    value, per_neuron = firing_rate_regularizer(spikes, reg.target_hz, reg.dt, reg.coef)
    grads["w_in"] = grads["w_in"] + esum_in * per_neuron[None, :]
    grads["w_rec"] = grads["w_rec"] + esum_rec * per_neuron[None, :]
    return value


def eprop_reference(evaluator, batch, feedback: np.ndarray) -> dict:
    """E-prop through :func:`eprop_trace_step`, valid for any pseudo-derivative.

    Slow; the kernel path in :func:`eprop_gradients` is preferred when the
    pseudo-derivative is triangular.
    """
    model = evaluator.model
    x, labels = batch
    x = np.asarray(x, dtype=np.float64)
    batch_n, steps, n_in = x.shape
    cell = model.cell_params()
    targets = evaluator.sequence_targets(labels, steps)
    weights = evaluator.step_weights(steps)
    kind = LOSSES[evaluator.loss]
    n_rec, n_out = model.n_rec, model.n_out
    w_out, b_out = model.params["w_out"], model.params["b_out"]

    state = CellState.zeros(batch_n, n_rec)
    tr_in = TraceState.zeros(batch_n, n_in, n_rec)
    tr_rec = TraceState.zeros(batch_n, n_rec, n_rec)
    y = np.zeros((batch_n, n_out))
    zbar = np.zeros((batch_n, n_rec))
    bbar = 0.0
    grads = {k: np.zeros_like(v) for k, v in model.params.items()}
    esum_in = np.zeros((n_in, n_rec))
    esum_rec = np.zeros((n_rec, n_rec))
    spikes = np.empty((batch_n, steps, n_rec))
    loss = 0.0
    for t in range(steps):
        z_prev = state.z.data
        state = model.step(state, x[:, t])
        dist = state.v.data - (cell.v_th + cell.beta * state.a.data)
        psi = cell.pseudo(dist, cell.v_th)
        tr_in = eprop_trace_step(cell, x[:, t], tr_in, psi, model.kappa)
        tr_rec = eprop_trace_step(cell, z_prev, tr_rec, psi, model.kappa)
        esum_in += tr_in.elig.sum(axis=0)
        esum_rec += tr_rec.elig.sum(axis=0)

        z = state.z.data
        spikes[:, t] = z
        y = model.kappa * y + z @ w_out + b_out
        wt = weights[t] / batch_n
        if kind == LOSS_CE:
            shifted = y - y.max(axis=1, keepdims=True)
            logp = shifted - np.log(np.exp(shifted).sum(axis=1, keepdims=True))
            loss -= wt * float((targets[:, t] * logp).sum())
            dy = wt * (np.exp(logp) - targets[:, t])
        else:
            diff = y - targets[:, t]
            loss += wt * float((diff * diff).sum()) / n_out
            dy = wt * 2.0 * diff / n_out
        learn = dy @ feedback
        grads["w_in"] += np.einsum("bij,bj->ij", tr_in.filtered, learn)
        grads["w_rec"] += np.einsum("bij,bj->ij", tr_rec.filtered, learn)
        zbar = model.kappa * zbar + z
        bbar = model.kappa * bbar + 1.0
        grads["w_out"] += zbar.T @ dy
        grads["b_out"] += bbar * dy.sum(axis=0)
    if evaluator.regularizer is not None:
        loss += _add_rate_penalty(evaluator, grads, spikes, esum_in, esum_rec)
    grads = model.postprocess_grads(grads)
    return {"loss": loss, "grads": grads, "spikes": spikes}


def eprop_online(evaluator, batch, feedback: np.ndarray, impl=None) -> dict:
    """Kernel-backed e-prop. Returns loss, gradients and spikes."""
    model = evaluator.model
    x, labels = batch
    x = np.asarray(x, dtype=np.float64)
    steps = x.shape[1]
    p = model.params
    out = kernels.eprop_online(
        x, evaluator.sequence_targets(labels, steps), evaluator.step_weights(steps),
        LOSSES[evaluator.loss], p["w_in"], p["w_rec"], p["w_out"], p["b_out"], feedback,
        model.alpha, model.rho, model.beta, model.kappa, model.v_th, model.pseudo.gamma,
        impl=impl)
    grads = {k: out[k] for k in ("w_in", "w_rec", "w_out", "b_out")}
    loss = out["loss"]
    if evaluator.regularizer is not None:
        loss += _add_rate_penalty(evaluator, grads, out["spikes"], out["esum_in"], out["esum_rec"])
    return {"loss": loss, "grads": model.postprocess_grads(grads), "spikes": out["spikes"]}


def eprop_gradients(evaluator, batch, broadcast: BroadcastMatrix) -> dict:
    model = evaluator.model
    _require_recurrent(model)
    feedback = broadcast.matrix(model)
    if model.pseudo.kind == "triangular":
        result = eprop_online(evaluator, batch, feedback)
    else:
        result = eprop_reference(evaluator, batch, feedback)
    if not np.isfinite(result["loss"]):
        raise FloatingPointError("e-prop: loss is not finite")
    return check_finite(result["grads"], "eprop")


class Eprop(LearningRule):
    """E-prop with a symmetric, random or adaptive broadcast matrix."""

    def __init__(self, mode: str = "symmetric", seed: int = 0):
        super().__init__()
        if mode not in MODES:
            raise ValueError(f"unknown e-prop mode {mode!r}; expected one of {list(MODES)}")
        self.mode = mode
        self.seed = seed
        self.broadcast: BroadcastMatrix | None = None

    @property
    def name(self):
        return f"eprop_{self.mode}"

    def supports(self, model) -> bool:
        return isinstance(model, RecurrentSNN)

    def _broadcast(self, model) -> BroadcastMatrix:
        if self.broadcast is None:
            self.broadcast = BroadcastMatrix.create(self.mode, model, self.seed)
        return self.broadcast

    def gradients(self, evaluator, batch):
        self.check(evaluator.model)
        return eprop_gradients(evaluator, batch, self._broadcast(evaluator.model))

    def update(self, evaluator, batch, optimizer):
        deltas = super().update(evaluator, batch, optimizer)
        self._broadcast(evaluator.model).observe_update(deltas["w_out"])
        return deltas

    def for_clone(self):
        other = Eprop(self.mode, self.seed)
        other.broadcast = None if self.broadcast is None else self.broadcast.copy()
        return other
