"""Independent reference computations used to check the exact DP and the learner.

Nothing here reuses the backward-induction code paths of :mod:`mtrl.mdp`:
policy values come from solving the linear Bellman system directly, and
Monte-Carlo returns from an independent rollout loop.
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np

from .learner import RegretLog
from .mdp import BERNOULLI, LayeredMDP, ValueTables, require_valid
from .multitask import MultiTaskInstance


class BudgetExceeded(RuntimeError):
    pass


@dataclass(frozen=True)
class OracleBudget:
    max_policies: int = 200_000
    mc_rollouts: int = 100_000
    tolerance: float = 1e-12

    def __post_init__(self):
        if self.max_policies <= 0 or self.mc_rollouts <= 0 or self.tolerance <= 0:
            raise ValueError("oracle budget fields must be positive")


def linear_policy_values(mdp: LayeredMDP, policies: np.ndarray) -> np.ndarray:
    """Solve ``(I - P_pi) v = r_pi`` for a batch of policies, shape ``(N, S)``."""
    S = mdp.num_states
    idx = np.arange(S)
    P = mdp.transition[idx[None, :], policies][..., :S]  # terminal column drops out
    r = mdp.mean_reward[idx[None, :], policies]
    system = np.eye(S)[None] - P
    return np.linalg.solve(system, r[..., None])[..., 0]


def brute_force_optimal(mdp: LayeredMDP, budget: OracleBudget = OracleBudget(), *, chunk: int = 4096) -> ValueTables:
    """Pointwise maximum of ``V^pi`` over every deterministic policy."""
    require_valid(mdp)
    S, A = mdp.num_states, mdp.num_actions
    if A**S > budget.max_policies:
        raise BudgetExceeded(f"{A}^{S} policies exceed the budget of {budget.max_policies}")
    best = np.full(S, -np.inf)
    it = itertools.product(range(A), repeat=S)
    while True:
        block = np.array(list(itertools.islice(it, chunk)), dtype=np.int64)
        if block.size == 0:
            break
        best = np.maximum(best, linear_policy_values(mdp, block).max(axis=0))
    v = np.append(best, 0.0)
    q = mdp.mean_reward + mdp.transition @ v
    return ValueTables(v, q)


def layerwise_optimal(mdp: LayeredMDP) -> ValueTables:
    """Enumerate joint action choices one layer at a time.

    Valid because each state belongs to a single layer; cost is
    ``sum_h A^{|S_h|}`` instead of ``A^S``.
    """
    require_valid(mdp)
    S, A = mdp.num_states, mdp.num_actions
    v = np.zeros(S + 1)
    for h in reversed(range(mdp.horizon)):
        sl = mdp.layer_slice(h)
        idx = np.arange(sl.start, sl.stop)
        best = np.full(idx.size, -np.inf)
        for choice in itertools.product(range(A), repeat=idx.size):
            c = np.array(choice)
            vals = mdp.mean_reward[idx, c] + np.einsum("nm,m->n", mdp.transition[idx, c], v)
            best = np.maximum(best, vals)
        v[sl] = best
    return ValueTables(v, mdp.mean_reward + mdp.transition @ v)


def mc_value(mdp: LayeredMDP, policy, rollouts: int, rng: np.random.Generator) -> tuple[float, float]:
    """Mean and standard error of the episode return over ``rollouts`` episodes."""
    if rollouts < 1:
        raise ValueError("rollouts must be >= 1")
    require_valid(mdp)
    act = np.asarray(getattr(policy, "action", policy), dtype=np.int64)
    S = mdp.num_states
    s = rng.choice(S, size=rollouts, p=mdp.init_dist)
    total = np.zeros(rollouts)
    for _ in range(mdp.horizon):
        a = act[s]
        mean = mdp.mean_reward[s, a]
        if mdp.reward_kind == BERNOULLI:
            total += rng.random(rollouts) < mean
        else:
            total += mean
        rows = mdp.transition[s, a]
        u = rng.random(rollouts)[:, None]
        support_end = S - np.argmax(rows[:, ::-1] > 0, axis=1)
        s = np.minimum((np.cumsum(rows, axis=1) <= u).sum(axis=1), support_end)
    if rollouts == 1 or np.all(total == total[0]):
        # constant returns: avoid rounding noise from the two-pass variance
        return float(total[0]), 0.0
    return float(total.mean()), float(total.std(ddof=1) / np.sqrt(rollouts))


def check_regret_decomposition(instance: MultiTaskInstance, log: RegretLog, *, tol: float = 1e-12) -> dict:
    """Compare logged regret with first-layer gap accounting.

    The per-episode inequality ``increment >= sum_s p0(s) gap(s, pi(s))``
    holds deterministically; summed over episodes it is the decomposition
    bound with expected first-layer counts. The same bound with realized
    counts holds only in expectation and is reported, not enforced. When all
    positive gaps sit in the first layer, the inequality is an identity.
    """
    M = instance.num_players
    g = instance.gap_table  # (M, S, A)
    p0 = instance.init_dist
    first = instance.base.layer_slice(0)
    K = log.num_episodes
    pol = log.policies.astype(np.int64)  # (K, M, S)
    idx = np.arange(first.start, first.stop)
    players = np.arange(M)
    layer1_gap = g[players[None, :, None], idx[None, None, :], pol[:, :, idx]]  # (K, M, S1)
    predicted = layer1_gap @ p0[idx]  # (K, M)
    slack = log.increments - predicted
    layer1_only = bool(np.all(np.delete(g, idx, axis=1) == 0))
    realized_lower = float((log.visit_counts[:, idx, :] * g[:, idx, :]).sum())
    report = {
        "episodes": K,
        "total_regret": log.total_regret,
        "expected_count_lower_bound": float(predicted.sum()),
        "realized_count_lower_bound": realized_lower,
        "realized_bound_holds": bool(log.total_regret >= realized_lower - tol),
        "min_episode_slack": float(slack.min()) if slack.size else 0.0,
        "inequality_ok": bool(slack.size == 0 or slack.min() >= -tol),
        "layer1_only_gaps": layer1_only,
    }
    if layer1_only:
        err = float(np.abs(slack).max()) if slack.size else 0.0
        report["identity_max_error"] = err
        report["identity_ok"] = err <= tol
    report["ok"] = report["inequality_ok"] and report.get("identity_ok", True)
    return report
