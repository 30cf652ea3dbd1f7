"""Masked L1 loss and the Adam optimiser."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


def l1_loss(pred, gt, mask=None):
    """Mean absolute error over masked pixels and its gradient w.r.t. ``pred``.

    The gradient is ``sign(pred - gt) / n_valid`` (zero at exact ties).
    """
    if pred.shape != gt.shape:
        raise ValueError(f"shape mismatch: pred {pred.shape} vs gt {gt.shape}")
    mask = np.ones(pred.shape, dtype=bool) if mask is None else np.asarray(mask, dtype=bool)
    n = int(mask.sum())
    if n == 0:
        raise ValueError("l1_loss: mask selects no pixels")
    diff = (pred.astype(np.float64) - gt) * mask
    loss = float(np.abs(diff).sum() / n)
    grad = (np.sign(diff) / n).astype(pred.dtype)
    return loss, grad


@dataclass
class AdamState:
    lr: float = 5e-5
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    t: int = 0
    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)


def adam_step(state: AdamState, params: dict, grads: dict):
    """One bias-corrected Adam update, applied in place; returns ``(params, state)``.

    A parameter whose gradient is identically zero is left untouched,
    moments included, the same way frameworks skip parameters that received
    no gradient.
    """
    state.t += 1
    c1 = 1.0 - state.beta1 ** state.t
    c2 = 1.0 - state.beta2 ** state.t
    for name, g in grads.items():
        p = params[name]
        if g.shape != p.shape:
            raise ValueError(f"{name}: gradient shape {g.shape} != parameter shape {p.shape}")
        if not g.any():
            continue
        m = state.m.get(name)
        if m is None:
            m = state.m[name] = np.zeros_like(p)
            state.v[name] = np.zeros_like(p)
        v = state.v[name]
        m *= state.beta1
        m += (1.0 - state.beta1) * g
        v *= state.beta2
        v += (1.0 - state.beta2) * (g * g)
        p -= (state.lr * (m / c1) / (np.sqrt(v / c2) + state.eps)).astype(p.dtype)
    return params, state
