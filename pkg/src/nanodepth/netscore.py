"""NetScore: a decibel-style balance of accuracy against size and compute.

    score = 20 * log10(a**kappa / (p**beta * m**gamma))

with ``a`` in percent, ``p`` in millions of parameters and ``m`` in billions
of multiply-accumulates.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

KAPPA = 0.7
BETA = 0.15
GAMMA = 0.15


@dataclass(frozen=True)
class NetScoreInputs:
    a: float
    p: float
    m: float
    kappa: float = KAPPA
    beta: float = BETA
    gamma: float = GAMMA

    def __post_init__(self):
        for name in ("a", "p", "m", "kappa", "beta", "gamma"):
            v = getattr(self, name)
            if not (v > 0 and math.isfinite(v)):
                raise ValueError(f"netscore input {name} must be positive and finite, got {v}")


def composite_accuracy(delta1: float, abs_rel: float) -> float:
    """Accuracy in percent: ``100 * delta1 * (1 - abs_rel)``."""
    if not 0.0 <= delta1 <= 1.0:
        raise ValueError(f"delta1 must lie in [0, 1], got {delta1}")
    if not 0.0 <= abs_rel < 1.0:
        raise ValueError(f"abs_rel must lie in [0, 1), got {abs_rel}")
    return 100.0 * delta1 * (1.0 - abs_rel)


def netscore(inputs: NetScoreInputs) -> float:
    i = inputs
    return 20.0 * (i.kappa * math.log10(i.a) - i.beta * math.log10(i.p)
                   - i.gamma * math.log10(i.m))


def score_network(delta1: float, abs_rel: float, params: int, macs: int, **exponents) -> float:
    """NetScore from raw counts; ``-inf`` when the composite accuracy is zero."""
    a = composite_accuracy(delta1, abs_rel)
    if a <= 0:
        return -math.inf
    return netscore(NetScoreInputs(a, params / 1e6, macs / 1e9, **exponents))
