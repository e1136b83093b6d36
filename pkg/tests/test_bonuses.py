from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import two_layer
from mtrl.bonuses import BonusConfig, Dims, agg_bonus, b_prob, b_rw, b_str, ind_bonus, log_term, total_bonus
from mtrl.estimators import ModelEstimates

CFG = BonusConfig.practical(0.1)
DIMS = Dims(2, 6, 3, 3)


def test_log_term_zero_count_is_one():
    assert log_term(0, 2, 6, 3, 0.1) == pytest.approx(math.log(36 / 0.1))
    assert log_term(1, 1, 1, 1, 1 / math.e) == pytest.approx(1.0)
    assert log_term(1, 1, 1, 1, 0.9) == 1.0


def test_reward_bonus_caps_and_limit():
    assert b_rw(0, 0.0, CFG, DIMS) == 1.0
    assert b_rw(10, 1.0, CFG, DIMS) == 1.0
    assert b_rw(10, 2.5, CFG, DIMS) == 1.0
    n = 1e12
    val = b_rw(n, 0.0, CFG, DIMS)
    assert 0 < val < 1e-4
    assert val == pytest.approx(math.sqrt(log_term(n, 2, 6, 3, 0.1) / n))


def test_prob_bonus_constant_values():
    q = np.array([0.5, 0.5])
    v = np.array([1.3, 1.3])
    n = 50
    L = float(log_term(n, 2, 6, 3, 0.1))
    assert b_prob(q, n, v, v, 0.01, CFG, DIMS) == pytest.approx(min(3, 0.02 + 3 * L / n))
    assert b_prob(q, 0, v, v, 0.0, CFG, DIMS) == 3.0


def test_prob_bonus_formula():
    q = np.array([0.2, 0.8])
    vu, vl = np.array([2.0, 1.0]), np.array([1.0, 0.5])
    n = 400
    L = float(log_term(n, 2, 6, 3, 0.1))
    var = 0.2 * 0.8 * 1.0
    w2 = 0.2 * 1.0 + 0.8 * 0.25
    expected = math.sqrt(var * L / n) + math.sqrt(w2 * L / n) + 3 * L / n
    assert b_prob(q, n, vu, vl, 0.0, CFG, DIMS) == pytest.approx(expected)


def test_str_bonus():
    q = np.array([1.0])
    v = np.array([0.4])
    n = 1000
    L = float(log_term(n, 2, 6, 3, 0.1))
    assert b_str(q, n, v, v, 0.05, CFG, DIMS) == pytest.approx(min(3, 0.05 + 3 * 6 * L / n))
    assert b_str(q, 0, v, v, 0.0, CFG, DIMS) == 3.0
    assert 0 < b_str(q, 1e15, v, v, 0.0, CFG, DIMS) < 1e-6


def test_q_must_be_distribution():
    with pytest.raises(ValueError):
        b_prob(np.array([0.5, 0.6]), 3, np.zeros(2), np.zeros(2), 0.0, CFG, DIMS)
    with pytest.raises(ValueError):
        b_str(np.array([1.5, -0.5]), 3, np.zeros(2), np.zeros(2), 0.0, CFG, DIMS)


def test_crossed_bounds_contribute_no_width():
    q = np.array([0.5, 0.5])
    a = b_str(q, 10, np.array([1.0, 1.0]), np.array([2.0, 2.0]), 0.0, CFG, DIMS)
    b = b_str(q, 10, np.array([1.0, 1.0]), np.array([1.0, 1.0]), 0.0, CFG, DIMS)
    assert a == b


def test_zero_data_bonus_is_all_caps():
    m = two_layer()
    est = ModelEstimates(m, 2)
    dims = Dims(2, 3, 2, 2)
    vu, vl = np.ones(2), np.zeros(2)
    assert ind_bonus(0, 0, 0, est, vu, vl, CFG, dims) == 1 + 2 + 2
    assert agg_bonus(0, 0, 0, est, vu, vl, CFG, dims, 0.3) == 1 + 2 + 2


def test_single_player_zero_eps_ind_equals_agg():
    m = two_layer()
    est = ModelEstimates(m, 1)
    est.ingest_batch(0, np.array([[0, 1]]), np.array([[0, 0]]), np.array([[1.0, 0.0]]))
    est.ingest_batch(1, np.array([[0, 2]]), np.array([[0, 1]]), np.array([[0.0, 1.0]]))
    dims = Dims(1, 3, 2, 2)
    vu, vl = np.array([1.0, 0.7]), np.array([0.2, 0.1])
    assert ind_bonus(0, 0, 0, est, vu, vl, CFG, dims) == agg_bonus(0, 0, 0, est, vu, vl, CFG, dims, 0.0)


def test_presets():
    t = BonusConfig.theory(0.05)
    assert (t.c_rw, t.c_var, t.c_str, t.c_lot, t.delta) == (4, 4, 4, 2, 0.05)
    assert BonusConfig.from_preset("practical") == BonusConfig.practical()
    with pytest.raises(ValueError):
        BonusConfig.from_preset("loose")
    with pytest.raises(ValueError):
        BonusConfig(delta=1.5)


@settings(max_examples=60, deadline=None)
@given(
    st.integers(0, 10**6),
    st.floats(0, 2),
    st.lists(st.floats(0.01, 1), min_size=1, max_size=5),
    st.integers(0, 2**31),
)
def test_bonus_monotone_and_bounded(n, kappa, weights, seed):
    q = np.array(weights) / np.sum(weights)
    rng = np.random.default_rng(seed)
    vl = rng.uniform(0, 1, q.size)
    vu = vl + rng.uniform(0, 2, q.size)
    total = total_bonus(q, n, vu, vl, kappa, CFG, DIMS)
    assert 0 <= total <= 1 + 2 * DIMS.horizon
    more = total_bonus(q, n + 1000, vu, vl, kappa, CFG, DIMS)
    assert more <= total + 1e-12
