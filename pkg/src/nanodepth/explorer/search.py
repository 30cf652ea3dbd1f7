"""Constrained maximisation of NetScore over a :class:`SearchSpace`.

Candidates are ranked by one total order: feasible before infeasible, then
higher score, lower parameter count, lower MAC count, and finally the
genome's canonical index in the space. Search and the exhaustive oracle share
this order, so on an enumerable space their winners coincide exactly.
"""
from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

from ..arch import count_macs, count_params
from ..arch.config import ConvStage, NetworkConfig
from ..arch.graph import build_network
from ..engine import make_rng
from ..netscore import BETA, GAMMA, KAPPA, score_network
from .space import Genome, SearchSpace, mutate, sample


@dataclass(frozen=True)
class IndicatorConstraints:
    delta1_min: float = 0.89
    params_max: int = 2_000_000
    macs_max: int | None = None

    def __post_init__(self):
        if not 0.0 <= self.delta1_min <= 1.0:
            raise ValueError("delta1_min must lie in [0, 1]")
        if self.params_max < 1:
            raise ValueError("params_max must be >= 1")


KITTI_CONSTRAINTS = IndicatorConstraints(0.89, 2_000_000)
NYU_CONSTRAINTS = IndicatorConstraints(0.81, 5_000_000)
# binds on the default 64-point space: its unconstrained proxy winner is infeasible
TOY_CONSTRAINTS = IndicatorConstraints(0.78, 8_000)


def indicator(delta1: float, params: int, macs: int, constraints: IndicatorConstraints) -> int:
    ok = delta1 >= constraints.delta1_min and params <= constraints.params_max
    if constraints.macs_max is not None:
        ok = ok and macs <= constraints.macs_max
    return int(ok)


@dataclass(frozen=True)
class Evaluation:
    delta1: float
    abs_rel: float
    params: int
    macs: int


# -- evaluators -------------------------------------------------------------

PROXY_SCALE = 64.0


def proxy_capacity(config: NetworkConfig) -> float:
    """Width-weighted capacity: dense growth scaled by expansion, plus decoder widths."""
    cap = 0.0
    for block in config.blocks:
        for s in block:
            cap += s.growth_out * math.sqrt(s.expand_out / s.proj1_out)
    for d in config.decoder:
        for st in (d.stage_a, d.stage_b):
            cap += 0.25 * st.out * (1.0 if isinstance(st, ConvStage) else 1.25)
    return cap


def proxy_accuracy(config: NetworkConfig, scale: float = PROXY_SCALE) -> tuple[float, float]:
    """Deterministic stand-in for measured (delta1, abs_rel).

    delta1 saturates towards 1 with capacity; abs_rel is its complement.
    """
    miss = 0.5 * math.exp(-proxy_capacity(config) / scale)
    return 1.0 - miss, miss


def evaluate_candidate(config: NetworkConfig, mode: str = "proxy", budget: int = 200,
                       seed: int = 0, scenes=None, batch: int = 4) -> Evaluation:
    """Accuracy estimate plus exact counts for one configuration.

    ``mode="proxy"`` is a pure function of the config; ``mode="train"`` runs
    ``budget`` Adam steps on synthetic scenes and measures held-out metrics.
    """
    graph = build_network(config)
    p, m = count_params(graph), count_macs(graph)
    if mode == "proxy":
        d1, ar = proxy_accuracy(config)
    elif mode == "train":
        from ..trainer import SceneConfig, fit_output_range, train
        scenes = scenes or SceneConfig(resolution=tuple(config.input_hw), seed=seed)
        if tuple(scenes.resolution) != tuple(config.input_hw):
            raise ValueError("scene resolution must match the searched input resolution")
        graph = build_network(fit_output_range(config, scenes))
        res = train(graph, scenes, budget, batch=batch, seed=seed, holdout=16)
        d1, ar = res.final.metrics.delta1, res.final.metrics.abs_rel
    else:
        raise ValueError(f"unknown evaluation mode {mode!r}")
    return Evaluation(d1, ar, p, m)


# -- candidates and ordering -----------------------------------------------

@dataclass(frozen=True)
class Candidate:
    genome: Genome
    index: int
    config: NetworkConfig = field(compare=False, repr=False)
    delta1: float
    abs_rel: float
    params: int
    macs: int
    score: float
    feasible: bool

    def sort_key(self):
        return (not self.feasible, -self.score, self.params, self.macs, self.index)


def score(ev: Evaluation, kappa=KAPPA, beta=BETA, gamma=GAMMA) -> float:
    if ev.abs_rel >= 1.0 or ev.delta1 <= 0.0:
        return -math.inf
    return score_network(ev.delta1, ev.abs_rel, ev.params, ev.macs,
                         kappa=kappa, beta=beta, gamma=gamma)


@dataclass
class ExplorerConfig:
    population: int = 8
    generations: int = 10
    mutation_rate: float = 0.3
    seed: int = 0
    mode: str = "proxy"
    budget: int = 200
    workers: int = 1
    retries: int = 16


@dataclass
class SearchResult:
    best: Candidate | None
    ranked: list[Candidate]
    evaluations: int

    @property
    def status(self) -> str:
        return "ok" if self.best is not None else "infeasible"

    def table(self, limit: int | None = None) -> str:
        rows = ["rank index genome params macs delta1 abs_rel score feasible"]
        for r, c in enumerate(self.ranked[:limit], start=1):
            rows.append(f"{r} {c.index} {'-'.join(map(str, c.genome))} {c.params} {c.macs} "
                        f"{c.delta1:.6f} {c.abs_rel:.6f} {c.score:.6f} {int(c.feasible)}")
        return "\n".join(rows) + "\n"


class _Evaluator:
    def __init__(self, space, constraints, cfg: ExplorerConfig):
        self.space, self.constraints, self.cfg = space, constraints, cfg
        self.cache: dict[Genome, Candidate] = {}

    def one(self, genome: Genome) -> Candidate:
        config = self.space.to_config(genome)
        ev = evaluate_candidate(config, self.cfg.mode, self.cfg.budget, self.cfg.seed)
        return Candidate(genome, self.space.index(genome), config, ev.delta1, ev.abs_rel,
                         ev.params, ev.macs, score(ev),
                         bool(indicator(ev.delta1, ev.params, ev.macs, self.constraints)))

    def many(self, genomes) -> list[Candidate]:
        todo = [g for g in dict.fromkeys(genomes) if g not in self.cache]
        if self.cfg.workers > 1 and len(todo) > 1:
            with ThreadPoolExecutor(self.cfg.workers) as pool:
                done = list(pool.map(self.one, todo))
        else:
            done = [self.one(g) for g in todo]
        for c in done:
            self.cache[c.genome] = c
        return [self.cache[g] for g in genomes]


def _result(cands) -> SearchResult:
    ranked = sorted(cands, key=Candidate.sort_key)
    best = ranked[0] if ranked and ranked[0].feasible else None
    return SearchResult(best, ranked, len(ranked))


def search(space: SearchSpace, constraints: IndicatorConstraints,
           cfg: ExplorerConfig | None = None) -> SearchResult:
    """(mu + lambda) evolution with truncation selection on the candidate order.

    Returns the best feasible candidate seen; ``best`` is None when no
    feasible candidate was found within the budget.
    """
    cfg = cfg or ExplorerConfig()
    if cfg.population < 1 or cfg.generations < 0:
        raise ValueError("population must be >= 1 and generations >= 0")
    rng = make_rng(cfg.seed)
    ev = _Evaluator(space, constraints, cfg)

    def fresh(propose):
        g = propose()
        for _ in range(cfg.retries):
            if g not in ev.cache and g not in pending:
                break
            g = propose()
        return g

    pending: set = set()
    init = []
    for _ in range(cfg.population):
        g = fresh(lambda: sample(space, rng))
        pending.add(g)
        init.append(g)
    population = sorted(set(ev.many(init)), key=Candidate.sort_key)[:cfg.population]

    for _ in range(cfg.generations):
        parents = population[:max(1, len(population) // 2)]
        pending = set()
        kids = []
        for i in range(cfg.population):
            parent = parents[i % len(parents)].genome
            g = fresh(lambda: mutate(parent, space, rng, cfg.mutation_rate))
            pending.add(g)
            kids.append(g)
        merged = {c.genome: c for c in population + ev.many(kids)}
        population = sorted(merged.values(), key=Candidate.sort_key)[:cfg.population]
    return _result(ev.cache.values())


class SpaceTooLarge(ValueError):
    pass


def brute_force_oracle(space: SearchSpace, constraints: IndicatorConstraints,
                       cfg: ExplorerConfig | None = None, limit: int = 10_000) -> SearchResult:
    """Exhaustive enumeration with the same scoring and ordering as :func:`search`."""
    if space.size() > limit:
        raise SpaceTooLarge(f"space has {space.size()} points (limit {limit})")
    cfg = cfg or ExplorerConfig()
    ev = _Evaluator(space, constraints, cfg)
    return _result(ev.many(list(space.enumerate())))
