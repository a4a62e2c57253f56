"""Adam, cosine annealing, the decay-matching loss and a generic training loop."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from . import autodiff as ad
from .families import Family

INV_SQRT_PI = 1.0 / math.sqrt(math.pi)


class TrainingError(RuntimeError):
    pass


@dataclass
class AdamState:
    t: int = 0
    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8


def adam_step(state: AdamState, params: dict, grads: dict, lr: float):
    """One bias-corrected Adam update; returns a new (state, params) pair."""
    if set(params) != set(grads):
        raise ValueError(f"parameter/gradient keys differ: {sorted(set(params) ^ set(grads))}")
    t = state.t + 1
    b1, b2 = state.beta1, state.beta2
    m_new, v_new, p_new = {}, {}, {}
    for k, p in params.items():
        g = np.asarray(grads[k], dtype=float)
        p = np.asarray(p, dtype=float)
        if g.shape != p.shape:
            raise ValueError(f"shape mismatch for {k!r}: params {p.shape}, grads {g.shape}")
        m = state.m.get(k, np.zeros_like(p))
        v = state.v.get(k, np.zeros_like(p))
        m = b1 * m + (1.0 - b1) * g
        v = b2 * v + (1.0 - b2) * g * g
        mhat = m / (1.0 - b1 ** t)
        vhat = v / (1.0 - b2 ** t)
        p_new[k] = p - lr * mhat / (np.sqrt(vhat) + state.eps)
        m_new[k] = m
        v_new[k] = v
    return AdamState(t, m_new, v_new, b1, b2, state.eps), p_new


def cosine_lr(lr0: float, t: int, T: int) -> float:
    if T <= 0:
        return lr0
    t = min(max(t, 0), T)
    return lr0 * 0.5 * (1.0 + math.cos(math.pi * t / T))


@dataclass(frozen=True)
class DecayMatchConfig:
    zeta: float
    x: np.ndarray
    w: np.ndarray
    p: np.ndarray
    guard: float = 1e-30

    def __post_init__(self):
        if not 0.0 <= self.zeta <= 1.0:
            raise ValueError("zeta must lie in [0, 1]")
        if np.any(self.w <= 0):
            raise ValueError("weights must be positive")
        if np.any(self.p < 0):
            raise ValueError("target samples must be nonnegative")


def _decay_terms(jet, cfg: DecayMatchConfig):
    g, g1 = jet[0], jet[1]
    dens = INV_SQRT_PI * ad.exp(-(g * g)) * g1
    r2 = ad.square(dens - cfg.p)
    L1 = ad.sqrt((r2 * cfg.w).sum())
    L2 = ad.sqrt((r2 * (cfg.w * (1.0 + cfg.x ** 2) / (cfg.p + cfg.guard))).sum())
    return L1, L2


def decay_match_loss(family: Family, params: dict, cfg: DecayMatchConfig, parts: bool = False):
    """zeta L1 + (1 - zeta) L2 and its gradient with respect to ``params``.

    L1 is the weighted L2 distance between the Gaussian pullback density
    k(g) g' and the target samples p; L2 reweights the same residual by
    (1 + x^2) / (p + guard) to emphasize the tails.
    """
    leaves = {k: ad.Var(np.array(v, dtype=float)) for k, v in params.items()}
    L1, L2 = _decay_terms(family.jet_var(leaves, cfg.x), cfg)
    loss = cfg.zeta * L1 + (1.0 - cfg.zeta) * L2
    ad.backward(loss)
    grads = {k: (v.grad if v.grad is not None else np.zeros_like(v.value)) for k, v in leaves.items()}
    if parts:
        return float(loss.value), grads, (float(L1.value), float(L2.value))
    return float(loss.value), grads


@dataclass
class TrainResult:
    params: dict
    losses: np.ndarray  # raw loss per step (evaluated before the update)
    lrs: np.ndarray

    @property
    def smoothed(self) -> np.ndarray:
        """Running minimum of the loss trace."""
        return np.minimum.accumulate(self.losses) if self.losses.size else self.losses


def train(family: Family, loss_fn: Callable, lr0: float, iters: int, params: dict | None = None,
          schedule: str = "cosine", callback: Callable | None = None) -> TrainResult:
    """Full-batch Adam on ``loss_fn(params) -> (loss, grads)``.

    Parameters are projected onto the family's admissible set before every
    evaluation and once more at the end.
    """
    params = family.init_params() if params is None else {k: np.array(v, dtype=float) for k, v in params.items()}
    if iters <= 0 or not params:
        return TrainResult(params, np.zeros(0), np.zeros(0))
    state = AdamState()
    losses = np.empty(iters)
    lrs = np.empty(iters)
    for t in range(iters):
        params = family.project(params)
        loss, grads = loss_fn(params)
        if not math.isfinite(loss) or not all(np.all(np.isfinite(g)) for g in grads.values()):
            raise TrainingError(f"non-finite loss or gradient at step {t}")
        lr = cosine_lr(lr0, t, iters) if schedule == "cosine" else lr0
        losses[t] = loss
        lrs[t] = lr
        state, params = adam_step(state, params, grads, lr)
        if callback is not None:
            callback(t, loss, params)
    params = family.project(params)
    return TrainResult(params, losses, lrs)
