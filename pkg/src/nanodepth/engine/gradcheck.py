"""Central finite-difference checks for analytic backward passes."""
from __future__ import annotations

from typing import Callable, Sequence

import numpy as np


def numerical_gradient(f: Callable[[], float], x: np.ndarray, step: float = 1e-5,
                       indices=None) -> np.ndarray:
    """Central differences of the scalar ``f()`` w.r.t. ``x``, perturbed in place.

    When ``indices`` is given only those flat positions are evaluated; the
    rest of the returned array is NaN.
    """
    grad = np.full(x.shape, np.nan) if indices is not None else np.zeros(x.shape)
    flat = x.reshape(-1)
    gflat = grad.reshape(-1)
    positions = range(flat.size) if indices is None else indices
    for i in positions:
        orig = flat[i]
        flat[i] = orig + step
        fp = f()
        flat[i] = orig - step
        fm = f()
        flat[i] = orig
        gflat[i] = (fp - fm) / (2 * step)
    return grad


def relative_error(analytic: np.ndarray, numeric: np.ndarray) -> float:
    """Max absolute deviation scaled by the larger gradient magnitude.

    Normalising by the tensor's gradient scale (not element-wise) keeps
    entries that are legitimately zero, such as non-argmax max-pool
    inputs, from producing 0/0.
    """
    mask = ~np.isnan(numeric)
    a = np.asarray(analytic, dtype=np.float64)[mask]
    n = np.asarray(numeric, dtype=np.float64)[mask]
    if a.size == 0:
        return 0.0
    scale = max(np.abs(a).max(), np.abs(n).max(), 1e-12)
    return float(np.abs(a - n).max() / scale)


def grad_check(forward: Callable[..., np.ndarray], backward: Callable[..., Sequence],
               inputs: Sequence[np.ndarray], rng: np.random.Generator | None = None,
               step: float = 1e-5) -> float:
    """Compare ``backward`` against finite differences of ``forward``.

    ``forward(*inputs)`` returns a tensor; ``backward(dout, *inputs)`` returns
    one gradient per input (``None`` entries are skipped). The scalar probed is
    ``sum(forward(*inputs) * r)`` for a fixed random projection ``r``, so every
    output element contributes. Inputs must be float64. Returns the maximum
    relative error over all inputs.
    """
    rng = rng if rng is not None else np.random.default_rng(0)
    inputs = [np.array(v, dtype=np.float64) for v in inputs]
    out = forward(*inputs)
    proj = rng.standard_normal(out.shape)

    def loss():
        return float(np.sum(forward(*inputs) * proj))

    grads = backward(proj, *inputs)
    worst = 0.0
    for x, g in zip(inputs, grads):
        if g is None:
            continue
        num = numerical_gradient(loss, x, step)
        worst = max(worst, relative_error(g, num))
    return worst
