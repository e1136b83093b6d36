from __future__ import annotations

import numpy as np
import pytest

from conftest import two_layer
from mtrl.bonuses import BonusConfig
from mtrl.instances import HardInstanceParams, RandomInstanceConfig, gen_gap_dependent_hard, gen_random
from mtrl.learner import INDIVIDUAL, LearnerConfig, run
from mtrl.mdp import Policy, evaluate_policy, expected_return, optimal_values
from mtrl.oracle import (
    BudgetExceeded,
    OracleBudget,
    brute_force_optimal,
    check_regret_decomposition,
    layerwise_optimal,
    mc_value,
)
from mtrl.verify import decomposition_instance, oracle_mdp


def test_small_mdp_brute_force(small_mdp):
    ov, bf = optimal_values(small_mdp), brute_force_optimal(small_mdp)
    assert np.abs(ov.v - bf.v).max() <= 1e-12


def test_single_action_mdp():
    m = gen_random(RandomInstanceConfig(2, 3, 1, 1, seed=1)).base
    bf = brute_force_optimal(m)
    np.testing.assert_allclose(bf.v, evaluate_policy(m, Policy(np.zeros(m.num_states, int))).v, atol=1e-14)


@pytest.mark.parametrize("seed", range(20))
def test_layerwise_agrees(seed):
    m = oracle_mdp(seed)
    assert np.abs(layerwise_optimal(m).v - optimal_values(m).v).max() <= 1e-12


def test_budget():
    m = gen_random(RandomInstanceConfig(4, 3, 3, 1, seed=1)).base
    with pytest.raises(BudgetExceeded):
        brute_force_optimal(m, OracleBudget(max_policies=100))
    with pytest.raises(ValueError):
        OracleBudget(max_policies=0)


def test_mc_deterministic_mdp_is_exact():
    m = two_layer(probs=((1.0, 0.0), (1.0, 0.0)))
    pi = Policy([1, 0, 0])
    mean, se = mc_value(m, pi, 1000, np.random.default_rng(0))
    assert se == 0.0 and mean == pytest.approx(expected_return(m, pi), abs=1e-12)


def test_mc_zero_reward():
    m = two_layer(rewards=((0, 0), (0, 0)))
    assert mc_value(m, Policy([0, 0, 0]), 500, np.random.default_rng(0)) == (0.0, 0.0)


def test_mc_within_three_stderr():
    m = gen_random(RandomInstanceConfig(3, 3, 2, 1, seed=3)).base
    pi = Policy(np.random.default_rng(4).integers(0, 2, m.num_states))
    mean, se = mc_value(m, pi, 100_000, np.random.default_rng(20))
    assert abs(mean - expected_return(m, pi)) <= 3 * se


def test_decomposition_all_gaps_zero():
    inst = gen_gap_dependent_hard(
        HardInstanceParams("gap_dependent", A=2, H=3, M=2, delta_table=np.zeros((2, 2, 2)), epsilon=0.0)
    )
    log = run(inst, LearnerConfig(0.0), 50)
    rep = check_regret_decomposition(inst, log)
    assert rep["total_regret"] == 0 and rep["expected_count_lower_bound"] == 0 and rep["ok"]


def test_decomposition_identity_on_gap_dependent_instance():
    inst = decomposition_instance(1)
    log = run(inst, LearnerConfig(inst.declared_epsilon, BonusConfig.practical(), INDIVIDUAL, 2), 200)
    rep = check_regret_decomposition(inst, log)
    assert rep["layer1_only_gaps"] and rep["identity_ok"] and rep["identity_max_error"] <= 1e-12


def test_decomposition_inequality_on_random_instance():
    inst = gen_random(RandomInstanceConfig(3, 3, 2, 2, 0.1, seed=8))
    log = run(inst, LearnerConfig(0.1), 200)
    rep = check_regret_decomposition(inst, log)
    assert rep["inequality_ok"]
