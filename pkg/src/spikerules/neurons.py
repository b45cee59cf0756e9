"""Recurrent spiking cells (LIF, ALIF), leaky readout and a dense MLP.

Dynamics per step, with ``z`` the previous-step spikes (one-step synaptic
delay on the recurrent path) and soft reset::

    A   = v_th + beta * a
    v'  = alpha * v + x W_in + z W_rec - z * A
    a'  = rho * a + z
    z'  = H(v' - (v_th + beta * a'))        # inclusive threshold
    y'  = kappa * y + z' W_out + b_out

LIF is the ``beta = 0`` case. All step functions accept numpy arrays or
:class:`~spikerules.numerics.Tensor` weights, so the same code runs on a tape
for BPTT and as plain evaluation.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Mapping

import numpy as np

from . import kernels
from . import numerics as nx
from .numerics import PseudoDerivative, ShapeError, Tensor, heaviside_with_pseudo

DEFAULT_ALPHA = math.exp(-1 / 20)
DEFAULT_RHO = math.exp(-1 / 200)
DEFAULT_KAPPA = math.exp(-1 / 20)
DEFAULT_BETA = 0.07
DEFAULT_V_TH = 1.0


def _shape(w):
    return tuple(np.shape(w.data if isinstance(w, Tensor) else w))


@dataclass
class LifParams:
    w_in: object
    w_rec: object
    alpha: float = DEFAULT_ALPHA
    v_th: float = DEFAULT_V_TH
    pseudo: PseudoDerivative = field(default_factory=PseudoDerivative)

    def __post_init__(self):
        if not 0 < self.alpha < 1:
            raise ValueError(f"alpha must lie in (0, 1), got {self.alpha}")
        if self.v_th <= 0:
            raise ValueError(f"v_th must be positive, got {self.v_th}")
        n_in, n_rec = _shape(self.w_in)
        if _shape(self.w_rec) != (n_rec, n_rec):
            raise ShapeError(f"w_rec has shape {_shape(self.w_rec)}, expected {(n_rec, n_rec)}")

    @property
    def n_in(self) -> int:
        return _shape(self.w_in)[0]

    @property
    def n_rec(self) -> int:
        return _shape(self.w_in)[1]

    # LIF seen as an ALIF without adaptation
    rho = 0.0
    beta = 0.0


@dataclass
class AlifParams(LifParams):
    rho: float = DEFAULT_RHO
    beta: float = DEFAULT_BETA

    def __post_init__(self):
        super().__post_init__()
        if not 0 < self.rho < 1:
            raise ValueError(f"rho must lie in (0, 1), got {self.rho}")
        if self.beta < 0:
            raise ValueError(f"beta must be non-negative, got {self.beta}")


@dataclass
class CellState:
    v: Tensor
    a: Tensor
    z: Tensor

    @classmethod
    def zeros(cls, batch: int, n_rec: int) -> "CellState":
        zero = Tensor(np.zeros((batch, n_rec)))
        return cls(zero, zero, zero)


@dataclass
class ReadoutParams:
    w_out: object
    b_out: object
    kappa: float = DEFAULT_KAPPA

    def __post_init__(self):
        if not 0 <= self.kappa < 1:
            raise ValueError(f"kappa must lie in [0, 1), got {self.kappa}")
        n_rec, n_out = _shape(self.w_out)
        if _shape(self.b_out) != (n_out,):
            raise ShapeError(f"b_out has shape {_shape(self.b_out)}, expected {(n_out,)}")


def _check_state(params: LifParams, state: CellState, x_t):
    batch = state.v.shape[0]
    if _shape(x_t) != (batch, params.n_in):
        raise ShapeError(f"input has shape {_shape(x_t)}, expected {(batch, params.n_in)}")
    for name in ("v", "a", "z"):
        s = getattr(state, name).shape
        if s != (batch, params.n_rec):
            raise ShapeError(f"state.{name} has shape {s}, expected {(batch, params.n_rec)}")


def _cell_step(params: LifParams, state: CellState, x_t, rho: float, beta: float) -> CellState:
    _check_state(params, state, x_t)
    v, a, z = state.v, state.a, state.z
    thresh = params.v_th + a * beta if beta else params.v_th
    v_new = v * params.alpha + nx.matmul(x_t, params.w_in) + nx.matmul(z, params.w_rec) - z * thresh
    if beta:
        a_new = a * rho + z
        z_new = heaviside_with_pseudo(v_new - (a_new * beta + params.v_th), params.pseudo, params.v_th)
    else:
        a_new = a
        z_new = heaviside_with_pseudo(v_new - params.v_th, params.pseudo, params.v_th)
    return CellState(v_new, a_new, z_new)


def lif_step(params: LifParams, state: CellState, x_t) -> CellState:
    return _cell_step(params, state, x_t, 0.0, 0.0)


def alif_step(params: AlifParams, state: CellState, x_t) -> CellState:
    return _cell_step(params, state, x_t, params.rho, params.beta)


def readout_step(params: ReadoutParams, y_prev, z_t) -> Tensor:
    y_prev = nx.as_tensor(y_prev)
    n_out = _shape(params.b_out)[0]
    if y_prev.shape != (_shape(z_t)[0], n_out):
        raise ShapeError(f"y_prev has shape {y_prev.shape}, expected {(_shape(z_t)[0], n_out)}")
    drive = nx.matmul(z_t, params.w_out)
    return y_prev * params.kappa + drive + nx.expand(params.b_out, drive.shape)


def firing_rate(spikes, dt: float) -> float:
    """Mean spikes per neuron per second."""
    data = spikes.data if isinstance(spikes, Tensor) else np.asarray(spikes)
    return float(data.mean() / dt)


class RecurrentSNN:
    """Single recurrent layer of LIF or ALIF cells with a leaky readout."""

    kind = "recurrent"
    trainable = ("w_in", "w_rec", "w_out", "b_out")

    def __init__(self, n_in: int, n_rec: int, n_out: int, cell: str = "alif", *,
                 seed: int, alpha: float = DEFAULT_ALPHA, rho: float = DEFAULT_RHO,
                 beta: float = DEFAULT_BETA, kappa: float = DEFAULT_KAPPA,
                 v_th: float = DEFAULT_V_TH, pseudo: PseudoDerivative | None = None,
                 dt: float = 1e-3):
        if cell not in ("lif", "alif"):
            raise ValueError(f"unknown cell kind {cell!r}; expected 'lif' or 'alif'")
        self.n_in, self.n_rec, self.n_out = n_in, n_rec, n_out
        self.cell = cell
        self.alpha, self.rho, self.kappa, self.v_th, self.dt = alpha, rho, kappa, v_th, dt
        self.beta = beta if cell == "alif" else 0.0
        self.pseudo = pseudo or PseudoDerivative()
        self.seed = seed
        rng = np.random.default_rng(seed)
        w_rec = rng.normal(0.0, 1.0 / math.sqrt(n_rec), (n_rec, n_rec))
        np.fill_diagonal(w_rec, 0.0)
        self.params = {
            "w_in": rng.normal(0.0, 1.0 / math.sqrt(n_in), (n_in, n_rec)),
            "w_rec": w_rec,
            "w_out": rng.normal(0.0, 1.0 / math.sqrt(n_rec), (n_rec, n_out)),
            "b_out": np.zeros(n_out),
        }
        # validates the hyperparameters once
        self.cell_params()
        self.readout_params()

    def __repr__(self):
        return f"RecurrentSNN({self.cell}, {self.n_in}->{self.n_rec}->{self.n_out})"

    def cell_params(self, w: Mapping | None = None) -> LifParams:
        w = self.params if w is None else w
        if self.cell == "alif":
            return AlifParams(w["w_in"], w["w_rec"], self.alpha, self.v_th, self.pseudo,
                              self.rho, self.beta)
        return LifParams(w["w_in"], w["w_rec"], self.alpha, self.v_th, self.pseudo)

    def readout_params(self, w: Mapping | None = None) -> ReadoutParams:
        w = self.params if w is None else w
        return ReadoutParams(w["w_out"], w["b_out"], self.kappa)

    def step(self, state: CellState, x_t, w: Mapping | None = None) -> CellState:
        cp = self.cell_params(w)
        return alif_step(cp, state, x_t) if self.cell == "alif" else lif_step(cp, state, x_t)

    def set_params(self, params: Mapping[str, np.ndarray]) -> None:
        for k in self.trainable:
            if np.shape(params[k]) != self.params[k].shape:
                raise ShapeError(f"{k}: shape {np.shape(params[k])} != {self.params[k].shape}")
        self.params = {k: np.array(params[k], dtype=np.float64) for k in self.trainable}
        np.fill_diagonal(self.params["w_rec"], 0.0)

    def postprocess_grads(self, grads: dict) -> dict:
        """Self-loops are not parameters: their gradient is defined as zero."""
        g = grads["w_rec"].copy()
        np.fill_diagonal(g, 0.0)
        grads["w_rec"] = g
        return grads

    def clone(self) -> "RecurrentSNN":
        other = object.__new__(RecurrentSNN)
        other.__dict__.update(self.__dict__)
        other.params = {k: v.copy() for k, v in self.params.items()}
        return other

    def forward(self, x: np.ndarray, w: Mapping | None = None):
        """Fast evaluation without a tape. Returns ``(spikes, outputs)``."""
        w = self.params if w is None else w
        x = np.asarray(x, dtype=np.float64)
        if x.ndim != 3 or x.shape[2] != self.n_in:
            raise ShapeError(f"input has shape {x.shape}, expected (batch, T, {self.n_in})")
        if x.shape[1] == 0:
            raise ValueError("sequence length T must be at least 1")
        return kernels.snn_forward(x, w["w_in"], w["w_rec"], w["w_out"], w["b_out"],
                                   self.alpha, self.rho, self.beta, self.kappa, self.v_th)


def unroll(network: RecurrentSNN, x, w: Mapping | None = None):
    """Run cell then readout for t = 1..T from a zero state.

    ``w`` may hold tape tensors, in which case backward() through the result
    gives exact BPTT gradients with the pseudo-derivative.
    Returns ``(spikes[B,T,N], outputs[B,T,C], states)``.
    """
    x = nx.as_tensor(x)
    if x.ndim != 3:
        raise ShapeError(f"input has shape {x.shape}, expected (batch, T, features)")
    batch, steps, _ = x.shape
    if steps == 0:
        raise ValueError("sequence length T must be at least 1")
    w = network.params if w is None else w
    rp = network.readout_params(w)
    state = CellState.zeros(batch, network.n_rec)
    y = Tensor(np.zeros((batch, network.n_out)))
    states, zs, ys = [], [], []
    for t in range(steps):
        state = network.step(state, x[:, t, :], w)
        y = readout_step(rp, y, state.z)
        states.append(state)
        zs.append(state.z)
        ys.append(y)
    return nx.stack(zs, axis=1), nx.stack(ys, axis=1), states


_ACTIVATIONS = {
    "linear": lambda h: h,
    "relu": nx.relu,
    "sigmoid": nx.sigmoid,
    "tanh": nx.tanh,
    "softmax": nx.softmax,
}


def mlp_forward(layers, x) -> Tensor:
    """Compose ``act(h W + b)`` over ``layers`` = [(W, b, activation), ...]."""
    h = nx.as_tensor(x)
    for i, (W, b, act) in enumerate(layers):
        if act not in _ACTIVATIONS:
            raise ValueError(f"unknown activation {act!r}; expected one of {sorted(_ACTIVATIONS)}")
        try:
            h = nx.matmul(h, W)
        except ShapeError as exc:
            raise ShapeError(f"layer {i}: {exc}") from None
        h = _ACTIVATIONS[act](h + nx.expand(b, h.shape))
    return h


class MLP:
    """Dense feed-forward classifier; outputs logits (linear head)."""

    kind = "mlp"

    def __init__(self, sizes, *, seed: int, hidden_activation: str = "relu",
                 output_activation: str = "linear"):
        if len(sizes) < 2:
            raise ValueError("an MLP needs at least input and output sizes")
        self.sizes = tuple(int(s) for s in sizes)
        self.activations = [hidden_activation] * (len(sizes) - 2) + [output_activation]
        self.seed = seed
        rng = np.random.default_rng(seed)
        self.params = {}
        for i, (fan_in, fan_out) in enumerate(zip(sizes[:-1], sizes[1:])):
            self.params[f"w{i}"] = rng.normal(0.0, 1.0 / math.sqrt(fan_in), (fan_in, fan_out))
            self.params[f"b{i}"] = np.zeros(fan_out)
        self.trainable = tuple(self.params)
        self.n_in, self.n_out = self.sizes[0], self.sizes[-1]

    def __repr__(self):
        return "MLP(" + "->".join(map(str, self.sizes)) + ")"

    def layers(self, w: Mapping | None = None):
        w = self.params if w is None else w
        return [(w[f"w{i}"], w[f"b{i}"], act) for i, act in enumerate(self.activations)]

    def set_params(self, params: Mapping[str, np.ndarray]) -> None:
        for k in self.trainable:
            if np.shape(params[k]) != self.params[k].shape:
                raise ShapeError(f"{k}: shape {np.shape(params[k])} != {self.params[k].shape}")
        self.params = {k: np.array(params[k], dtype=np.float64) for k in self.trainable}

    def postprocess_grads(self, grads: dict) -> dict:
        return grads

    def clone(self) -> "MLP":
        other = object.__new__(MLP)
        other.__dict__.update(self.__dict__)
        other.params = {k: v.copy() for k, v in self.params.items()}
        return other

    def forward(self, x, w: Mapping | None = None) -> np.ndarray:
        return mlp_forward(self.layers(w), x).data
