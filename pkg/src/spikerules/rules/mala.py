"""Metropolis-adjusted Langevin sampling over network weights.

Proposal, with ``g`` the (surrogate) gradient of the negative log posterior::

    s      = sigma / max(1, |g|)
    theta' = theta - s**2 / 2 * g + s * xi,   xi ~ N(0, I)

accepted with the Metropolis-Hastings ratio including the asymmetric proposal
densities. ``sigma`` adapts on the log scale toward a target acceptance rate
with a vanishing gain ``adapt_rate / (t + 1) ** adapt_decay``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from ..numerics import NonFiniteError
from .bptt import bptt_loss_and_gradients


@dataclass(frozen=True)
class MalaConfig:
    sigma0: float = 0.01
    target_accept: float = 0.574
    adapt_rate: float = 0.5
    adapt_decay: float = 0.5
    prior_std: float = 1.0
    temperature: float = 1.0
    use_gradient: bool = True

    def __post_init__(self):
        if self.sigma0 <= 0:
            raise ValueError(f"sigma0 must be positive, got {self.sigma0}")
        if not 0 < self.target_accept < 1:
            raise ValueError(f"target_accept must lie in (0, 1), got {self.target_accept}")
        if self.prior_std <= 0:
            raise ValueError(f"prior_std must be positive, got {self.prior_std}")
        if self.adapt_rate < 0 or self.adapt_decay < 0:
            raise ValueError("adapt_rate and adapt_decay must be non-negative")


@dataclass
class WeightSample:
    params: object
    log_post: float
    accepted: bool


@dataclass
class MalaState:
    theta: np.ndarray
    sigma: float
    log_post: float
    grad: np.ndarray          # gradient of the negative log posterior at theta
    step: int = 0
    info: dict = field(default_factory=dict)


class GaussianTarget:
    """Analytic N(mean, cov) log density, mostly for calibration checks."""

    def __init__(self, mean, cov):
        self.mean = np.asarray(mean, dtype=np.float64)
        self.cov = np.atleast_2d(np.asarray(cov, dtype=np.float64))
        self.prec = np.linalg.inv(self.cov)
        self.mask = None

    def evaluate(self, theta):
        d = theta - self.mean
        return -0.5 * float(d @ self.prec @ d), self.prec @ d

    def unflatten(self, theta):
        return theta.copy()


class ModelPosterior:
    """log pi(theta) = -temperature * N * mean_loss - |theta|^2 / (2 prior_std^2).

    Gradients come from BPTT with the pseudo-derivative. Recurrent self-loop
    entries are held at zero through ``mask``.
    """

    def __init__(self, evaluator, data, cfg: MalaConfig):
        self.evaluator = evaluator
        self.x = np.asarray(data[0], dtype=np.float64)
        self.labels = np.asarray(data[1])
        self.n = len(self.labels)
        self.cfg = cfg
        model = evaluator.model
        self.keys = tuple(model.trainable)
        self.shapes = [model.params[k].shape for k in self.keys]
        self.sizes = [int(np.prod(s)) for s in self.shapes]
        masks = []
        for k, s in zip(self.keys, self.shapes):
            m = np.ones(s)
            if k == "w_rec":
                np.fill_diagonal(m, 0.0)
            masks.append(m.reshape(-1))
        self.mask = np.concatenate(masks)

    def flatten(self, params) -> np.ndarray:
        return np.concatenate([np.asarray(params[k], dtype=np.float64).reshape(-1)
                               for k in self.keys])

    def unflatten(self, theta) -> dict:
        out, start = {}, 0
        for k, s, n in zip(self.keys, self.shapes, self.sizes):
            out[k] = theta[start:start + n].reshape(s).copy()
            start += n
        return out

    def evaluate(self, theta):
        params = self.unflatten(theta)
        loss, grads = bptt_loss_and_gradients(self.evaluator, (self.x, self.labels), params)
        scale = self.cfg.temperature * self.n
        prior_var = self.cfg.prior_std ** 2
        log_post = -scale * loss - 0.5 * float(theta @ theta) / prior_var
        grad = (scale * self.flatten(grads) + theta / prior_var) * self.mask
        return log_post, grad


def _evaluate(target, theta):
    try:
        lp, g = target.evaluate(theta)
    except (NonFiniteError, FloatingPointError):
        return -math.inf, None
    if not np.isfinite(lp) or not np.isfinite(g).all():
        return -math.inf, None
    return float(lp), np.asarray(g, dtype=np.float64)


def _scale(sigma, grad):
    return sigma / max(1.0, float(np.linalg.norm(grad)))


def _log_q(to, frm, grad, s, dim):
    """log density (up to a shared constant) of proposing ``to`` from ``frm``."""
    d = to - (frm - 0.5 * s * s * grad)
    return -float(d @ d) / (2 * s * s) - dim * math.log(s)


def init_state(target, theta, cfg: MalaConfig) -> MalaState:
    theta = np.array(theta, dtype=np.float64)
    if getattr(target, "mask", None) is not None:
        theta = theta * target.mask
    lp, g = _evaluate(target, theta)
    if g is None:
        raise ValueError("log posterior is not finite at the initial parameters")
    if not cfg.use_gradient:
        g = np.zeros_like(g)
    return MalaState(theta, cfg.sigma0, lp, g)


def mala_step(target, state: MalaState, cfg: MalaConfig, rng: np.random.Generator):
    """One proposal + accept/reject. Returns ``(WeightSample, new_state)``."""
    mask = getattr(target, "mask", None)
    dim = state.theta.size if mask is None else int(mask.sum())
    g = state.grad
    s = _scale(state.sigma, g)
    xi = rng.standard_normal(state.theta.shape)
    if mask is not None:
        xi = xi * mask
    proposal = state.theta - 0.5 * s * s * g + s * xi
    lp_new, g_new = _evaluate(target, proposal)
    if g_new is None:
        log_alpha, correction = -math.inf, 0.0
    else:
        if not cfg.use_gradient:
            g_new = np.zeros_like(g_new)
        s_new = _scale(state.sigma, g_new)
        correction = (_log_q(state.theta, proposal, g_new, s_new, dim)
                      - _log_q(proposal, state.theta, g, s, dim))
        log_alpha = lp_new - state.log_post + correction
    accept_prob = 1.0 if log_alpha >= 0 else math.exp(log_alpha)
    accepted = bool(rng.random() < accept_prob)

    gain = cfg.adapt_rate / (state.step + 1) ** cfg.adapt_decay
    sigma = state.sigma * math.exp(gain * (accept_prob - cfg.target_accept))
    if accepted:
        new = MalaState(proposal, sigma, lp_new, g_new, state.step + 1)
    else:
        new = MalaState(state.theta, sigma, state.log_post, state.grad, state.step + 1)
    new.info = {"accept_prob": accept_prob, "correction": correction, "step_size": s}
    sample = WeightSample(target.unflatten(new.theta), new.log_post, accepted)
    return sample, new


def run_chain(target, theta0, steps: int, cfg: MalaConfig, rng: np.random.Generator,
              keep_every: int = 1, burn_in: int = 0):
    """Run ``steps`` MALA transitions.

    Returns ``(kept_samples, records, final_state)``; ``records`` holds
    ``(step, log_post, accepted, accept_prob, sigma)`` for every transition.
    """
    state = init_state(target, theta0, cfg)
    kept, records = [], []
    for t in range(steps):
        sample, state = mala_step(target, state, cfg, rng)
        records.append((t, sample.log_post, sample.accepted, state.info["accept_prob"], state.sigma))
        if t >= burn_in and (t - burn_in) % keep_every == 0:
            kept.append(sample)
    return kept, records, state


def _entropy(p):
    with np.errstate(divide="ignore", invalid="ignore"):
        terms = np.where(p > 0, p * np.log(p), 0.0)
    return -terms.sum(axis=-1)


def posterior_predict(samples, evaluator, inputs):
    """Monte-Carlo predictive: ``(mean_probs, per_class_std, entropy)``."""
    if not samples:
        raise ValueError("posterior_predict needs at least one sample (got an empty set)")
    if len(samples) < 2:
        raise ValueError("posterior_predict needs at least two samples")
    probs = np.stack([evaluator.forward(inputs, s.params)[0] for s in samples])
    mean = probs.mean(axis=0)
    # shifting by one sample leaves std unchanged and makes identical samples give exactly 0
    return mean, (probs - probs[0]).std(axis=0), _entropy(mean)
