"""Discrete hyperparameter space over reduced network configurations."""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

import numpy as np

from ..arch.config import NetworkConfig, reduced_config

Genome = tuple[int, ...]  # one choice index per gene


@dataclass(frozen=True)
class SearchSpace:
    """Admissible values for every searched hyperparameter.

    ``module_counts`` holds one tuple of choices per dense block, so its
    length fixes the block count. A point of the space is a genome: one index
    into each gene's value tuple, in the order of :meth:`genes`.
    """
    input_hw: tuple[int, int] = (32, 32)
    stem_channels: tuple[int, ...] = (8,)
    module_counts: tuple[tuple[int, ...], ...] = ((1, 2), (1, 2))
    growth: tuple[int, ...] = (4, 8)
    expansion: tuple[int, ...] = (2, 4)
    transition_channels: tuple[int, ...] = (16,)
    decoder_kinds: tuple[str, ...] = ("ep", "conv")
    decoder_width: tuple[int, ...] = (8, 16)

    def __post_init__(self):
        for name, values in self.genes():
            if not values:
                raise ValueError(f"search space gene {name!r} has no values")
        for k in self.decoder_kinds:
            if k not in ("ep", "conv"):
                raise ValueError(f"unknown decoder kind {k!r}")
        div = 2 ** (len(self.module_counts) + 1)
        if self.input_hw[0] % div or self.input_hw[1] % div:
            raise ValueError(f"input {self.input_hw} not divisible by {div}")

    def genes(self) -> list[tuple[str, tuple]]:
        g = [("stem", self.stem_channels)]
        g += [(f"modules{i + 1}", c) for i, c in enumerate(self.module_counts)]
        g += [("growth", self.growth), ("expansion", self.expansion),
              ("transition", self.transition_channels), ("decoder_kind", self.decoder_kinds),
              ("decoder_width", self.decoder_width)]
        return g

    def radices(self) -> list[int]:
        return [len(v) for _, v in self.genes()]

    def size(self) -> int:
        return math.prod(self.radices())

    def enumerate(self):
        """All genomes in canonical (lexicographic) order."""
        return itertools.product(*(range(r) for r in self.radices()))

    def index(self, genome: Genome) -> int:
        """Position of ``genome`` in :meth:`enumerate` order."""
        idx = 0
        for g, r in zip(genome, self.radices()):
            idx = idx * r + g
        return idx

    def values(self, genome: Genome) -> dict:
        return {name: vals[i] for (name, vals), i in zip(self.genes(), genome)}

    def to_config(self, genome: Genome) -> NetworkConfig:
        v = self.values(genome)
        nb = len(self.module_counts)
        modules = tuple(v[f"modules{i + 1}"] for i in range(nb))
        cfg = reduced_config(
            input_hw=self.input_hw, stem_channels=v["stem"], modules=modules,
            growth=v["growth"], transitions=(v["transition"],) * (nb - 1),
            bottleneck=v["transition"], decoder_width=v["decoder_width"],
            decoder_stage=v["decoder_kind"], expand_mult=v["expansion"])
        cfg.name = "candidate-" + "-".join(str(i) for i in genome)
        return cfg


def sample(space: SearchSpace, rng: np.random.Generator) -> Genome:
    return tuple(int(rng.integers(r)) for r in space.radices())


def mutate(genome: Genome, space: SearchSpace, rng: np.random.Generator, rate: float) -> Genome:
    """Resample each gene with probability ``rate`` to a different admissible value."""
    if not 0.0 <= rate <= 1.0:
        raise ValueError(f"mutation rate must lie in [0, 1], got {rate}")
    out = list(genome)
    for i, r in enumerate(space.radices()):
        # draw unconditionally so the stream does not depend on which genes fire
        fire = rng.random() < rate
        shift = int(rng.integers(1, r)) if r > 1 else 0
        if fire and r > 1:
            out[i] = (out[i] + shift) % r
    return tuple(out)
