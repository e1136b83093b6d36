from __future__ import annotations

import json

import numpy as np
import pytest

from conftest import two_layer
from mtrl.estimators import IngestError, ModelEstimates
from mtrl.instances import RandomInstanceConfig, gen_random
from mtrl.mdp import BERNOULLI, Policy, Trajectory, sample_episode


def traj(states, actions, rewards, episode=0, player=0):
    return Trajectory(np.array(states), np.array(actions), np.array(rewards, dtype=float), episode, player)


def test_one_trajectory_adds_h_counts(small_mdp):
    est = ModelEstimates(small_mdp, 2)
    est.ingest(traj([0, 2], [1, 0], [1.0, 0.0]))
    assert est.n_p.sum() == small_mdp.horizon
    assert est.n_p[0, 0, 1] == 1 and est.n_p[0, 2, 0] == 1
    assert est.t_count_p[0, 0, 1, 2] == 1 and est.t_count_p[0, 2, 0, 3] == 1


def test_aggregate_is_sum_of_players(small_mdp):
    est = ModelEstimates(small_mdp, 3)
    rng = np.random.default_rng(0)
    for k in range(20):
        states = np.stack([[0, rng.integers(1, 3)] for _ in range(3)])
        actions = rng.integers(0, 2, (3, 2))
        est.ingest_batch(k, states, actions, rng.random((3, 2)))
    np.testing.assert_array_equal(est.n, est.n_p.sum(0))
    np.testing.assert_allclose(est.r_sum, est.r_sum_p.sum(0))
    np.testing.assert_array_equal(est.t_count, est.t_count_p.sum(0))


def test_double_ingest_rejected(small_mdp):
    est = ModelEstimates(small_mdp, 1)
    est.ingest(traj([0, 1], [0, 0], [0, 0], episode=0))
    with pytest.raises(IngestError):
        est.ingest(traj([0, 1], [0, 0], [0, 0], episode=0))
    with pytest.raises(IngestError):
        est.ingest_batch(0, np.array([[0, 1]]), np.array([[0, 0]]), np.zeros((1, 2)))


def test_reward_estimates():
    est = ModelEstimates(two_layer(), 2)
    assert est.reward_estimates(0, 0, 0) == (0.0, 0.0)
    est.n_p[0, 0, 0], est.r_sum_p[0, 0, 0] = 4, 3
    est.n_p[1, 0, 0], est.r_sum_p[1, 0, 0] = 30, 24
    est.n[0, 0], est.r_sum[0, 0] = 34, 27
    assert est.reward_estimates(0, 0, 0)[0] == 0.75
    est.n_p[0, 0, 0], est.r_sum_p[0, 0, 0] = 10, 2
    est.n[0, 0], est.r_sum[0, 0] = 40, 26
    assert est.reward_estimates(0, 0, 0) == (0.2, pytest.approx(0.65))


def test_transition_estimates_default_and_counts():
    m = gen_random(RandomInstanceConfig(1, 2, 2, 1, layer_sizes=(1, 4))).base
    est = ModelEstimates(m, 1)
    ind, agg = est.transition_estimates(0, 0, 0)
    np.testing.assert_array_equal(ind, [0.25] * 4)
    np.testing.assert_array_equal(agg, [0.25] * 4)
    m2 = two_layer()
    est2 = ModelEstimates(m2, 1)
    for k, nxt in enumerate([1, 1, 2, 2, 2, 2, 2, 2]):
        est2.ingest(traj([0, nxt], [0, 0], [0, 0], episode=k))
    ind, _ = est2.transition_estimates(0, 0, 0)
    np.testing.assert_array_equal(ind, [0.25, 0.75])


def test_dense_views_agree_with_point_queries():
    inst = gen_random(RandomInstanceConfig(2, 3, 2, 2, 0.1, seed=3))
    est = ModelEstimates(inst.base, 2)
    rng = np.random.default_rng(1)
    for k in range(30):
        for p in range(2):
            pi = Policy(rng.integers(0, 2, inst.num_states))
            est.ingest(sample_episode(inst.tasks[p], pi, rng, episode=k, player=p))
    R, P = est.individual_model()
    Ra, Pa = est.aggregate_model()
    for p in range(2):
        for s in range(inst.num_states):
            for a in range(2):
                r_ind, r_agg = est.reward_estimates(p, s, a)
                q_ind, q_agg = est.transition_estimates(p, s, a)
                sl = est.next_slice(s)
                assert R[p, s, a] == r_ind and Ra[s, a] == r_agg
                np.testing.assert_array_equal(P[p, s, a, sl], q_ind)
                np.testing.assert_array_equal(Pa[s, a, sl], q_agg)


def test_reward_estimate_converges():
    m = two_layer(kind=BERNOULLI)
    est = ModelEstimates(m, 1)
    rng = np.random.default_rng(2)
    n = 100_000
    states = np.zeros((1, 2), dtype=int)
    for k in range(n):
        u = rng.random(2)
        states[0, 1] = 1 if u[0] < m.transition[0, 1, 1] else 2
        rewards = np.array([[float(u[1] < m.mean_reward[0, 1]), 0.0]])
        est.ingest_batch(k, states.copy(), np.array([[1, 0]]), rewards)
    r, _ = est.reward_estimates(0, 0, 1)
    p = m.mean_reward[0, 1]
    assert abs(r - p) <= 3 * np.sqrt(p * (1 - p) / n)


def test_checkpoint_round_trip(small_mdp):
    est = ModelEstimates(small_mdp, 2)
    est.ingest_batch(0, np.array([[0, 1], [0, 2]]), np.array([[0, 1], [1, 1]]), np.array([[1.0, 0.0], [0.0, 1.0]]))
    back = ModelEstimates.from_json(json.loads(json.dumps(est.to_json())), small_mdp)
    for name in ("n_p", "r_sum_p", "t_count_p", "n", "r_sum", "t_count", "watermark"):
        np.testing.assert_array_equal(getattr(back, name), getattr(est, name))
    assert back.episodes_ingested == 1
