from __future__ import annotations

import csv
import io

import numpy as np
import pytest

from mtrl.bonuses import BonusConfig
from mtrl.estimators import ModelEstimates
from mtrl.instances import RandomInstanceConfig, gen_random
from mtrl.learner import (
    INDIVIDUAL,
    MULTITASK,
    LearnerConfig,
    StaleEstimatesError,
    ValueBounds,
    clip,
    evaluate_policies,
    optimistic_value_iteration,
    run,
    surplus,
    value_iteration,
)
from mtrl.mdp import DETERMINISTIC, LayeredMDP, evaluate_policy, greedy_policy, optimal_values


def small_instance(M=3, eps=0.1, seed=0):
    return gen_random(RandomInstanceConfig(3, 2, 2, M, eps, seed=seed))


def test_zero_data_bounds_are_caps():
    inst = gen_random(RandomInstanceConfig(2, 3, 2, 2, 0.1, seed=1))
    est = ModelEstimates(inst.base, 2)
    b = value_iteration(est, LearnerConfig(0.1))
    H = inst.horizon
    for s in range(inst.num_states):
        h = inst.base.layer_of(s)
        assert np.all(b.q_upper[:, s] == H - h)
        assert np.all(b.q_lower[:, s] == 0)
    assert np.all(b.policy == 0)


def test_single_player_modes_coincide():
    inst = gen_random(RandomInstanceConfig(3, 3, 3, 1, 0.0, seed=2))
    logs = [run(inst, LearnerConfig(0.0, BonusConfig.practical(), mode, 3), 300) for mode in (MULTITASK, INDIVIDUAL)]
    np.testing.assert_array_equal(logs[0].policies, logs[1].policies)
    np.testing.assert_array_equal(logs[0].increments, logs[1].increments)


def test_bounds_identical_in_single_player_zero_eps():
    inst = gen_random(RandomInstanceConfig(2, 2, 2, 1, 0.0, seed=4))
    est = ModelEstimates(inst.base, 1)
    rng = np.random.default_rng(0)
    for k in range(40):
        states = np.array([[rng.integers(0, 2), rng.integers(2, 4)]])
        est.ingest_batch(k, states, rng.integers(0, 2, (1, 2)), rng.random((1, 2)).round())
    a = value_iteration(est, LearnerConfig(0.0, mode=MULTITASK))
    b = value_iteration(est, LearnerConfig(0.0, mode=INDIVIDUAL))
    np.testing.assert_array_equal(a.q_upper, b.q_upper)
    np.testing.assert_array_equal(a.q_lower, b.q_lower)


def test_converges_on_deterministic_mdp():
    P = np.zeros((3, 2, 4))
    P[0, 0, 1] = P[0, 1, 2] = 1.0
    P[1:, :, 3] = 1.0
    R = np.array([[0.1, 0.3], [0.4, 0.6], [0.2, 0.5]])
    m = LayeredMDP((1, 2), 2, np.array([1.0, 0, 0]), P, R, DETERMINISTIC)
    est = ModelEstimates(m, 1)
    q_star = optimal_values(m).q
    widths = []
    for k in range(20000):
        s1 = 1 + (k % 2)
        a1, a2 = k % 2, (k // 2) % 2
        est.ingest_batch(k, np.array([[0, s1]]), np.array([[a1, a2]]), np.array([[R[0, a1], R[s1, a2]]]))
        if k + 1 in (2000, 20000):
            b = value_iteration(est, LearnerConfig(0.0))
            widths.append((b.q_upper - b.q_lower).max())
            assert np.all(b.q_upper[0] >= q_star - 1e-12)
            assert np.all(b.q_lower[0] <= q_star + 1e-12)
    # widths shrink roughly like 1/sqrt(n): tenfold data, well over halved
    assert widths[1] < 0.5 * widths[0]
    np.testing.assert_array_equal(b.policy[0], greedy_policy(q_star).action)


def test_stale_estimates_rejected():
    inst = small_instance()
    est = ModelEstimates(inst.base, inst.num_players)
    with pytest.raises(StaleEstimatesError):
        value_iteration(est, LearnerConfig(0.1), episode=3)
    bounds, pi = optimistic_value_iteration(1, est, LearnerConfig(0.1), episode=0)
    assert bounds.q_upper.shape[0] == 1 and len(pi.action) == inst.num_states
    with pytest.raises(StaleEstimatesError):
        surplus(0, 0, 0, bounds, inst, k=5)


def test_zero_data_surplus_last_layer():
    inst = small_instance()
    est = ModelEstimates(inst.base, inst.num_players)
    b = value_iteration(est, LearnerConfig(0.1))
    last = inst.base.layer_slice(inst.horizon - 1)
    for p in range(inst.num_players):
        for s in range(last.start, last.stop):
            for a in range(inst.num_actions):
                assert surplus(p, s, a, b, inst) == pytest.approx(1 - inst.tasks[p].mean_reward[s, a])


def test_exact_bounds_have_zero_surplus():
    inst = small_instance(M=1, eps=0.0)
    vt = optimal_values(inst.base)
    pi = greedy_policy(vt.q).action
    b = ValueBounds(vt.q[None], vt.q[None], vt.v[None], vt.v[None], pi[None], 0)
    for s in range(inst.num_states):
        for a in range(inst.num_actions):
            assert abs(surplus(0, s, a, b, inst)) <= 1e-12


def test_clip():
    assert clip(0.5, 0.6) == 0
    assert clip(0.5, 0.5) == 0.5
    assert clip(0.3, 0.0) == 0.3


def test_evaluate_policies_matches_mdp_core():
    inst = small_instance(M=3, eps=0.2, seed=5)
    pol = np.random.default_rng(0).integers(0, inst.num_actions, (3, inst.num_states))
    v = evaluate_policies(inst.transitions, inst.rewards, pol, inst.base.offsets)
    for p in range(3):
        np.testing.assert_allclose(v[p], evaluate_policy(inst.tasks[p], pol[p]).v, atol=1e-14)


def test_empty_run():
    log = run(small_instance(), LearnerConfig(0.1), 0)
    assert log.num_episodes == 0 and log.total_regret == 0.0
    assert log.to_csv().count("\n") == 1


def test_run_is_deterministic():
    inst = small_instance()
    cfg = LearnerConfig(0.1, seed=9)
    a, b = run(inst, cfg, 150), run(inst, cfg, 150)
    assert a.to_csv() == b.to_csv()
    np.testing.assert_array_equal(a.policies, b.policies)
    c = run(inst, LearnerConfig(0.1, seed=10), 150)
    assert c.to_csv() != a.to_csv() or np.array_equal(c.policies, a.policies)


def test_regret_is_nonnegative_and_csv_consistent():
    inst = small_instance(seed=6)
    log = run(inst, LearnerConfig(0.1, seed=1), 200)
    assert np.all(log.increments >= -1e-12)
    rows = list(csv.DictReader(io.StringIO(log.to_csv())))
    assert len(rows) == 200 * inst.num_players
    assert list(rows[0]) == ["episode", "player", "regret_increment", "cum_collective_regret", "violations", "min_surplus"]
    assert float(rows[-1]["cum_collective_regret"]) == log.cumulative[-1]
    assert log.regret_at(200) == pytest.approx(log.total_regret)
    assert log.visit_counts.sum() == 200 * inst.num_players * inst.horizon


def test_config_validation():
    with pytest.raises(ValueError):
        LearnerConfig(mode="greedy")
    with pytest.raises(ValueError):
        LearnerConfig(-0.1)
    assert LearnerConfig(delta=0.05).bonus.delta == 0.05


def test_optimism_with_theory_preset_short_run():
    inst = small_instance(seed=7)
    log = run(inst, LearnerConfig(inst.declared_epsilon, BonusConfig.theory(), MULTITASK, 0), 300)
    clean = ~log.violations
    assert log.min_surplus[clean].min() >= -1e-9
