import math

import numpy as np
import pytest

from nanodepth.arch import build_network, count_macs, count_params
from nanodepth.arch.serialize import FormatError
from nanodepth.explorer import (
    TOY_CONSTRAINTS,
    ExplorerConfig,
    IndicatorConstraints,
    SearchSpace,
    SpaceTooLarge,
    brute_force_oracle,
    dump_space,
    evaluate_candidate,
    indicator,
    mutate,
    parse_space,
    sample,
    search,
    write_results,
)

KITTI = IndicatorConstraints(0.89, 2_000_000)


# --- indicator -------------------------------------------------------------

def test_indicator_examples():
    assert indicator(0.90, 1_800_000, 0, KITTI) == 1
    assert indicator(0.88, 1_800_000, 0, KITTI) == 0
    assert indicator(0.89, 1_800_000, 0, KITTI) == 1
    assert indicator(0.95, 2_000_000, 0, KITTI) == 1
    assert indicator(0.95, 2_000_001, 0, KITTI) == 0


def test_indicator_macs_budget():
    c = IndicatorConstraints(0.5, 10, macs_max=100)
    assert indicator(0.6, 5, 100, c) == 1
    assert indicator(0.6, 5, 101, c) == 0


# --- space operators -------------------------------------------------------

def test_default_space_has_64_points():
    space = SearchSpace()
    assert space.size() == 64
    idx = [space.index(g) for g in space.enumerate()]
    assert idx == list(range(64))


def test_mutate_rate_zero_is_identity():
    space, rng = SearchSpace(), np.random.default_rng(0)
    for _ in range(50):
        g = sample(space, rng)
        assert mutate(g, space, rng, 0.0) == g


def test_mutate_rate_one_changes_every_multi_valued_gene():
    space, rng = SearchSpace(), np.random.default_rng(1)
    g = sample(space, rng)
    m = mutate(g, space, rng, 1.0)
    for a, b, r in zip(g, m, space.radices()):
        assert (a != b) == (r > 1)


def test_sampling_deterministic_and_covering():
    space = SearchSpace()
    assert sample(space, np.random.default_rng(5)) == sample(space, np.random.default_rng(5))
    rng = np.random.default_rng(0)
    seen = {sample(space, rng)[space.radices().index(2)] for _ in range(1000)}
    assert seen == {0, 1}


def test_every_genome_builds():
    space = SearchSpace()
    for g in space.enumerate():
        build_network(space.to_config(g))


# --- evaluation --------------------------------------------------------------

def test_proxy_is_pure_and_counts_exact():
    cfg = SearchSpace().to_config((0, 1, 1, 0, 1, 0, 0, 1))
    a, b = evaluate_candidate(cfg), evaluate_candidate(cfg)
    assert a == b
    g = build_network(cfg)
    assert (a.params, a.macs) == (count_params(g), count_macs(g))


def test_train_mode_deterministic():
    cfg = SearchSpace().to_config((0, 0, 0, 0, 0, 0, 0, 0))
    a = evaluate_candidate(cfg, "train", budget=3, seed=1)
    b = evaluate_candidate(cfg, "train", budget=3, seed=1)
    assert a == b


def test_unknown_mode_rejected():
    with pytest.raises(ValueError):
        evaluate_candidate(SearchSpace().to_config((0,) * 8), "magic")


# --- search vs oracle --------------------------------------------------------

def test_toy_constraints_bind():
    space = SearchSpace()
    free = brute_force_oracle(space, IndicatorConstraints(0.0, 10 ** 9))
    bound = brute_force_oracle(space, TOY_CONSTRAINTS)
    assert free.best.index != bound.best.index
    assert (free.best.index, bound.best.index) == (60, 44)


@pytest.mark.parametrize("seed", range(10))
def test_search_matches_oracle(seed):
    space = SearchSpace()
    oracle = brute_force_oracle(space, TOY_CONSTRAINTS)
    res = search(space, TOY_CONSTRAINTS, ExplorerConfig(seed=seed))
    assert res.best.genome == oracle.best.genome
    assert indicator(res.best.delta1, res.best.params, res.best.macs, TOY_CONSTRAINTS) == 1


def test_search_deterministic():
    cfg = ExplorerConfig(seed=3, generations=3)
    a = search(SearchSpace(), TOY_CONSTRAINTS, cfg)
    b = search(SearchSpace(), TOY_CONSTRAINTS, cfg)
    assert a.table() == b.table()


def test_one_point_space():
    space = SearchSpace(module_counts=((1,), (1,)), growth=(4,), expansion=(2,),
                        decoder_kinds=("ep",), decoder_width=(8,))
    res = search(space, IndicatorConstraints(0.0, 10 ** 9), ExplorerConfig(population=3))
    assert res.best.genome == (0,) * 8


def test_impossible_constraints_infeasible():
    res = search(SearchSpace(), IndicatorConstraints(0.0, 1), ExplorerConfig(generations=2))
    assert res.best is None and res.status == "infeasible"
    assert brute_force_oracle(SearchSpace(), IndicatorConstraints(0.0, 1)).best is None


def test_four_point_space_hand_scored():
    space = SearchSpace(module_counts=((1,), (1,)), expansion=(2,), decoder_kinds=("conv",))
    assert space.size() == 4
    best, best_score = None, -math.inf
    for g in space.enumerate():
        ev = evaluate_candidate(space.to_config(g))
        a = 100 * ev.delta1 * (1 - ev.abs_rel)
        s = 20 * (0.7 * math.log10(a) - 0.15 * math.log10(ev.params / 1e6)
                  - 0.15 * math.log10(ev.macs / 1e9))
        if s > best_score:
            best, best_score = g, s
    res = brute_force_oracle(space, IndicatorConstraints(0.0, 10 ** 9))
    assert res.best.genome == best
    assert res.best.score == pytest.approx(best_score, abs=1e-9)


def test_ties_break_towards_lower_index():
    # duplicated values give identical candidates at different indices
    space = SearchSpace(module_counts=((1,), (1,)), growth=(4,), expansion=(2,),
                        transition_channels=(16, 16), decoder_kinds=("ep",), decoder_width=(8,))
    res = brute_force_oracle(space, IndicatorConstraints(0.0, 10 ** 9))
    assert res.ranked[0].score == res.ranked[1].score
    assert res.best.index == 0
    found = search(space, IndicatorConstraints(0.0, 10 ** 9), ExplorerConfig(population=2))
    assert found.best.index == 0


def test_oracle_refuses_huge_space():
    space = SearchSpace(growth=tuple(range(1, 200)), expansion=tuple(range(1, 60)))
    with pytest.raises(SpaceTooLarge):
        brute_force_oracle(space, TOY_CONSTRAINTS)


def test_best_score_monotone_in_params_budget():
    space = SearchSpace()
    prev = -math.inf
    for budget in (5000, 6000, 7000, 8000, 9000, 12000, 20000):
        res = brute_force_oracle(space, IndicatorConstraints(0.0, budget))
        score = res.best.score if res.best else -math.inf
        assert score >= prev
        prev = score


# --- files -------------------------------------------------------------------

def test_space_file_round_trip():
    space = SearchSpace(stem_channels=(4, 8), module_counts=((1, 2, 3), (2,)))
    text = dump_space(space, TOY_CONSTRAINTS)
    assert parse_space(text) == (space, TOY_CONSTRAINTS)
    assert dump_space(*parse_space(text)) == text


def test_space_file_ranges():
    text = ("nanodepth-space v1\n[space]\ninput h=32 w=32\nstem values=8\n"
            "block index=1 modules=1..3\nblock index=2 modules=1\n")
    space, constraints = parse_space(text)
    assert space.module_counts == ((1, 2, 3), (1,))
    assert constraints is None


@pytest.mark.parametrize("text", [
    "nanodepth-space v2\n",
    "nanodepth-space v1\n[space]\ninput h=30 w=32\n",
    "nanodepth-space v1\n[space]\ngrowth values=\n",
    "nanodepth-space v1\n[space]\nwidth values=3\n",
    "nanodepth-space v1\n[constraints]\nindicator delta1_min=2 params_max=5 macs_max=none\n",
])
def test_malformed_space_rejected(text):
    with pytest.raises(FormatError):
        parse_space(text)


def test_write_results(tmp_path):
    res = search(SearchSpace(), TOY_CONSTRAINTS, ExplorerConfig(generations=1))
    write_results(res, tmp_path / "r.txt", tmp_path / "best.txt")
    head = (tmp_path / "r.txt").read_text().splitlines()
    assert head[0].startswith("status=ok")
    assert (tmp_path / "best.txt").read_text().startswith("nanodepth-config v1")
