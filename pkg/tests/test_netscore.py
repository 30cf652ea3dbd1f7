import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from nanodepth.netscore import NetScoreInputs, composite_accuracy, netscore, score_network


def longhand(a, p, m, kappa=0.7, beta=0.15, gamma=0.15):
    # separate path: ratio first, then a natural log converted to base 10
    return 20 * math.log(a ** kappa / (p ** beta * m ** gamma)) / math.log(10)


def test_unit_inputs_score_zero():
    assert netscore(NetScoreInputs(1.0, 1.0, 1.0)) == 0.0


def test_table2_example():
    v = netscore(NetScoreInputs(80.1918, 1.75, 4.66))
    assert v == pytest.approx(23.92, abs=5e-3)
    assert abs(v - longhand(80.1918, 1.75, 4.66)) < 1e-9


def test_ten_times_params_costs_three():
    a = netscore(NetScoreInputs(50.0, 2.0, 3.0))
    b = netscore(NetScoreInputs(50.0, 20.0, 3.0))
    assert a - b == pytest.approx(3.0, abs=1e-12)


def test_composite_examples():
    assert composite_accuracy(1.0, 0.0) == 100.0
    assert composite_accuracy(0.894, 0.103) == pytest.approx(80.1918, abs=1e-9)
    assert composite_accuracy(0.816, 0.139) == pytest.approx(70.2576, abs=1e-9)


def test_composite_rejects_abs_rel_one():
    with pytest.raises(ValueError):
        composite_accuracy(0.9, 1.0)


@pytest.mark.parametrize("bad", [(0, 1, 1), (1, -1, 1), (1, 1, 0), (1, 1, math.inf)])
def test_non_positive_inputs_rejected(bad):
    with pytest.raises(ValueError):
        NetScoreInputs(*bad)


def test_score_network_units():
    assert score_network(0.894, 0.103, 1_750_000, 4_660_000_000) == pytest.approx(
        netscore(NetScoreInputs(80.1918, 1.75, 4.66)), abs=1e-9)
    assert score_network(0.0, 0.5, 10, 10) == -math.inf


@settings(max_examples=200, deadline=None)
@given(st.floats(0.01, 100), st.floats(1e-3, 1e3), st.floats(1e-3, 1e3))
def test_matches_longhand(a, p, m):
    assert netscore(NetScoreInputs(a, p, m)) == pytest.approx(longhand(a, p, m), abs=1e-9)


@settings(max_examples=100, deadline=None)
@given(st.floats(0.01, 100), st.floats(1e-3, 1e3), st.floats(1e-3, 1e3), st.floats(1.01, 10))
def test_monotone(a, p, m, f):
    base = netscore(NetScoreInputs(a, p, m))
    assert netscore(NetScoreInputs(a * f, p, m)) > base
    assert netscore(NetScoreInputs(a, p * f, m)) < base
    assert netscore(NetScoreInputs(a, p, m * f)) < base


def test_ranking_invariant_under_unit_rescaling():
    rng = np.random.default_rng(0)
    for _ in range(100):
        n = int(rng.integers(2, 12))
        cands = [(rng.uniform(10, 100), rng.uniform(0.1, 10), rng.uniform(0.1, 10)) for _ in range(n)]
        cp, cm = rng.uniform(1e-3, 1e3, size=2)
        base = [netscore(NetScoreInputs(a, p, m)) for a, p, m in cands]
        scaled = [netscore(NetScoreInputs(a, p * cp, m * cm)) for a, p, m in cands]
        assert np.argsort(base, kind="stable").tolist() == np.argsort(scaled, kind="stable").tolist()
        shift = np.array(scaled) - np.array(base)
        assert np.ptp(shift) < 1e-9
