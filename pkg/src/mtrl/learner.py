"""Multi-task optimistic value iteration with individual and aggregate models,
and the individual-only baseline obtained by dropping the aggregate candidates."""
from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field, replace

import numpy as np

from .bonuses import BonusConfig, Dims, log_term
from .estimators import ModelEstimates
from .mdp import BERNOULLI, Policy, _cdf_tables, inverse_cdf
from .multitask import MultiTaskInstance

MULTITASK = "multitask"
INDIVIDUAL = "individual_baseline"
MODES = (MULTITASK, INDIVIDUAL)

VIOLATION_TOL = 1e-9


class StaleEstimatesError(RuntimeError):
    pass


@dataclass(frozen=True)
class LearnerConfig:
    epsilon_input: float = 0.0
    bonus: BonusConfig = field(default_factory=BonusConfig.practical)
    mode: str = MULTITASK
    seed: int = 0
    delta: float | None = None

    def __post_init__(self):
        if self.mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}, got {self.mode!r}")
        if self.epsilon_input < 0:
            raise ValueError("epsilon_input must be nonnegative")
        if self.delta is None:
            object.__setattr__(self, "delta", self.bonus.delta)
        elif self.delta != self.bonus.delta:
            object.__setattr__(self, "bonus", replace(self.bonus, delta=self.delta))

    def to_json(self) -> dict:
        return {
            "epsilon_input": self.epsilon_input,
            "mode": self.mode,
            "seed": self.seed,
            "delta": self.delta,
            "bonus": {k: getattr(self.bonus, k) for k in ("preset", "c_rw", "c_var", "c_str", "c_lot")},
        }


@dataclass(frozen=True, eq=False)
class ValueBounds:
    """Upper/lower action-value and value bounds with the greedy policy.

    Arrays carry a leading player axis: ``q_*`` is ``(M, S, A)``, ``v_*`` is
    ``(M, S + 1)`` (terminal last) and ``policy`` is ``(M, S)``.
    """

    q_upper: np.ndarray
    q_lower: np.ndarray
    v_upper: np.ndarray
    v_lower: np.ndarray
    policy: np.ndarray
    episode: int

    def for_player(self, p: int) -> "ValueBounds":
        return ValueBounds(
            self.q_upper[p : p + 1],
            self.q_lower[p : p + 1],
            self.v_upper[p : p + 1],
            self.v_lower[p : p + 1],
            self.policy[p : p + 1],
            self.episode,
        )


def _layer_slices(offsets, S):
    H = len(offsets) - 1
    out = []
    for h in range(H):
        nxt = slice(offsets[h + 1], offsets[h + 2]) if h + 1 < H else slice(S, S + 1)
        out.append((slice(offsets[h], offsets[h + 1]), nxt, H - h))
    return out


def _bonus(q, n, vu, vl, kappa, cfg: BonusConfig, dims: Dims):
    """Vectorized sum of the three bonus parts (same formulas as ``bonuses``)."""
    H, S = dims.horizon, dims.num_states
    L = log_term(n, dims.num_players, S, dims.num_actions, cfg.delta)
    nn = np.maximum(n, 1.0)
    mean = np.einsum("...m,...m->...", q, vu)[..., None]
    var = np.einsum("...m,...m->...", q, (vu - mean) ** 2)
    width = np.maximum(vu - vl, 0.0)
    width2 = np.einsum("...m,...m->...", q, width * width)
    ratio = L / nn
    rw = np.minimum(1.0, kappa + cfg.c_rw * np.sqrt(ratio))
    prob = np.minimum(H, 2 * kappa + cfg.c_var * (np.sqrt(var * ratio) + np.sqrt(width2 * ratio)) + cfg.c_lot * H * ratio)
    strong = np.minimum(H, kappa + cfg.c_str * np.sqrt(S * width2 * ratio) + cfg.c_lot * H * S * ratio)
    unseen = n <= 0
    return np.where(unseen, 1.0 + 2.0 * H, rw + prob + strong)


def value_iteration(
    est: ModelEstimates, cfg: LearnerConfig, *, episode: int | None = None
) -> ValueBounds:
    """Backward optimistic value iteration for every player at once."""
    if episode is not None and est.episodes_ingested != episode:
        raise StaleEstimatesError(
            f"estimates cover {est.episodes_ingested} episodes, value iteration requested for episode {episode}"
        )
    M, S, A = est.num_players, est.num_states, est.num_actions
    dims = Dims(M, S, A, est.horizon)
    multitask = cfg.mode == MULTITASK
    R_ind, P_ind = est.individual_model()
    if multitask:
        R_agg, P_agg = est.aggregate_model()
    qu = np.zeros((M, S, A))
    ql = np.zeros((M, S, A))
    vu = np.zeros((M, S + 1))
    vl = np.zeros((M, S + 1))
    pi = np.zeros((M, S), dtype=np.int64)
    for sl, nsl, cap in reversed(_layer_slices(est.offsets, S)):
        Vu = vu[:, None, None, nsl]
        Vl = vl[:, None, None, nsl]
        q = P_ind[:, sl, :, nsl]
        b = _bonus(q, est.n_p[:, sl], Vu, Vl, 0.0, cfg.bonus, dims)
        base_u = R_ind[:, sl] + np.einsum("psam,psam->psa", q, np.broadcast_to(Vu, q.shape))
        base_l = R_ind[:, sl] + np.einsum("psam,psam->psa", q, np.broadcast_to(Vl, q.shape))
        upper = np.minimum(float(cap), base_u + b)
        lower = np.maximum(0.0, base_l - b)
        if multitask:
            qa = np.broadcast_to(P_agg[sl, :, nsl], q.shape)
            ba = _bonus(qa, est.n[sl], Vu, Vl, cfg.epsilon_input, cfg.bonus, dims)
            agg_u = R_agg[sl] + np.einsum("psam,psam->psa", qa, np.broadcast_to(Vu, q.shape)) + ba
            agg_l = R_agg[sl] + np.einsum("psam,psam->psa", qa, np.broadcast_to(Vl, q.shape)) - ba
            upper = np.minimum(upper, agg_u)
            lower = np.maximum(lower, agg_l)
        qu[:, sl] = upper
        ql[:, sl] = lower
        act = np.argmax(upper, axis=-1)
        pi[:, sl] = act
        vu[:, sl] = np.take_along_axis(upper, act[..., None], axis=-1)[..., 0]
        vl[:, sl] = np.take_along_axis(lower, act[..., None], axis=-1)[..., 0]
    return ValueBounds(qu, ql, vu, vl, pi, est.episodes_ingested)


def optimistic_value_iteration(player: int, est: ModelEstimates, cfg: LearnerConfig, *, episode: int | None = None):
    """Bounds and greedy policy for one player."""
    bounds = value_iteration(est, cfg, episode=episode)
    return bounds.for_player(player), Policy(bounds.policy[player])


def evaluate_policies(P: np.ndarray, R: np.ndarray, policy: np.ndarray, offsets) -> np.ndarray:
    """Exact values of per-player policies, shape ``(M, S + 1)``."""
    M, S, A, _ = P.shape
    v = np.zeros((M, S + 1))
    players = np.arange(M)[:, None]
    for sl, _nsl, _cap in reversed(_layer_slices(offsets, S)):
        idx = np.arange(sl.start, sl.stop)[None, :]
        act = policy[:, sl]
        rows = P[players, idx, act]
        v[:, sl] = R[players, idx, act] + np.einsum("pnm,pm->pn", rows, v)
    return v


def surplus(player: int, s: int, a: int, bounds: ValueBounds, instance: MultiTaskInstance, k: int | None = None) -> float:
    """Bellman error of the upper bound under the true model of ``player``.

    ``bounds`` may be the full multi-player table or a single-player slice.
    """
    if k is not None and bounds.episode != k:
        raise StaleEstimatesError(f"bounds are from episode {bounds.episode}, not {k}")
    idx = 0 if bounds.q_upper.shape[0] == 1 else player
    task = instance.tasks[player]
    return float(
        bounds.q_upper[idx, s, a] - task.mean_reward[s, a] - task.transition[s, a] @ bounds.v_upper[idx]
    )


def clip(alpha: float, threshold: float) -> float:
    return alpha if alpha >= threshold else 0.0


@dataclass(eq=False)
class RegretLog:
    """Per-episode, per-player record of a run (episodes are 0-based rows)."""

    increments: np.ndarray  # (K, M) exact expected regret
    realized_returns: np.ndarray  # (K, M)
    policies: np.ndarray  # (K, M, S)
    violations: np.ndarray  # (K, M) bool
    min_surplus: np.ndarray  # (K, M)
    crossings: np.ndarray  # (K, M) number of (s, a) with lower > upper
    visit_counts: np.ndarray  # (M, S, A) after the last episode
    config: dict = field(default_factory=dict)

    @property
    def num_episodes(self) -> int:
        return self.increments.shape[0]

    @property
    def cumulative(self) -> np.ndarray:
        """Cumulative collective regret after each episode, shape ``(K,)``."""
        return np.cumsum(self.increments.sum(axis=1))

    @property
    def total_regret(self) -> float:
        return float(self.increments.sum())

    def regret_at(self, k: int) -> float:
        """Collective regret after the first ``k`` episodes."""
        return float(self.increments[:k].sum())

    @property
    def any_violation(self) -> bool:
        return bool(self.violations.any())

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["episode", "player", "regret_increment", "cum_collective_regret", "violations", "min_surplus"])
        cum = self.cumulative
        K, M = self.increments.shape
        for k in range(K):
            for p in range(M):
                w.writerow([k + 1, p, repr(float(self.increments[k, p])), repr(float(cum[k])),
                            int(self.violations[k, p]), repr(float(self.min_surplus[k, p]))])
        return buf.getvalue()

    def summary(self) -> dict:
        return {
            "episodes": self.num_episodes,
            "players": int(self.increments.shape[1]) if self.increments.ndim == 2 else 0,
            "total_regret": self.total_regret,
            "violation_episodes": int(self.violations.any(axis=1).sum()) if self.num_episodes else 0,
            "min_surplus": float(self.min_surplus.min()) if self.min_surplus.size else None,
            "crossings": int(self.crossings.sum()),
            "config": self.config,
        }


def run(instance: MultiTaskInstance, cfg: LearnerConfig, K: int) -> RegretLog:
    """Play ``K`` episodes with all players and log exact expected regret.

    Randomness comes from one Philox stream keyed by ``cfg.seed``; episode
    ``k`` consumes a fixed ``(M, 2H + 1)`` block whose row ``p`` drives player
    ``p``'s rollout, so draws are addressed by (episode, player) alone.
    """
    if K < 0:
        raise ValueError("K must be nonnegative")
    base = instance.base
    M, S, A, H = instance.num_players, instance.num_states, instance.num_actions, instance.horizon
    P, R = instance.transitions, instance.rewards
    p0 = instance.init_dist
    v_star, _ = instance.optimal
    v0_star = v_star[:, :S] @ p0
    cdf, last = _cdf_tables(P)
    p0_cdf, p0_last = _cdf_tables(p0)
    bernoulli = np.array([t.reward_kind == BERNOULLI for t in instance.tasks])
    players = np.arange(M)
    est = ModelEstimates(base, M)
    rng = np.random.Generator(np.random.Philox(key=cfg.seed))

    increments = np.zeros((K, M))
    realized = np.zeros((K, M))
    policies = np.zeros((K, M, S), dtype=np.int16 if A > 127 else np.int8)
    violations = np.zeros((K, M), dtype=bool)
    min_surplus = np.zeros((K, M))
    crossings = np.zeros((K, M), dtype=np.int32)

    for k in range(K):
        bounds = value_iteration(est, cfg, episode=k)
        pi = bounds.policy
        v_pi = evaluate_policies(P, R, pi, base.offsets)
        increments[k] = v0_star - v_pi[:, :S] @ p0
        policies[k] = pi
        violations[k] = (
            (bounds.v_lower[:, :S] > v_pi[:, :S] + VIOLATION_TOL)
            | (v_pi[:, :S] > v_star[:, :S] + VIOLATION_TOL)
            | (v_star[:, :S] > bounds.v_upper[:, :S] + VIOLATION_TOL)
        ).any(axis=1)
        backup = R + np.einsum("psam,pm->psa", P, bounds.v_upper)
        min_surplus[k] = (bounds.q_upper - backup).reshape(M, -1).min(axis=1)
        crossings[k] = (bounds.q_lower > bounds.q_upper).reshape(M, -1).sum(axis=1)

        u = rng.random((M, 2 * H + 1))
        s = inverse_cdf(p0_cdf, p0_last, u[:, 0])
        states = np.empty((M, H), dtype=np.int64)
        actions = np.empty((M, H), dtype=np.int64)
        rewards = np.empty((M, H))
        for h in range(H):
            a = pi[players, s]
            states[:, h], actions[:, h] = s, a
            mean = R[players, s, a]
            rewards[:, h] = np.where(bernoulli, (u[:, 2 * h + 1] < mean).astype(float), mean)
            s = inverse_cdf(cdf[players, s, a], last[players, s, a], u[:, 2 * h + 2])
        realized[k] = rewards.sum(axis=1)
        est.ingest_batch(k, states, actions, rewards)

    cfg_json = cfg.to_json()
    cfg_json["K"] = K
    return RegretLog(increments, realized, policies, violations, min_surplus, crossings, est.n_p.copy(), cfg_json)
