"""Individual and aggregate empirical models maintained from trajectories."""
from __future__ import annotations

import numpy as np

from .mdp import LayeredMDP, Trajectory


class IngestError(RuntimeError):
    pass


class ModelEstimates:
    """Counts, reward sums and next-state counts per player, plus their sums.

    The aggregate tensors are kept incrementally alongside the per-player
    ones so that ``n == n_p.sum(0)`` holds after every ingest.
    """

    def __init__(self, shape: LayeredMDP, num_players: int):
        self.layer_sizes = shape.layer_sizes
        self.offsets = shape.offsets
        self.num_states = S = shape.num_states
        self.num_actions = A = shape.num_actions
        self.horizon = shape.horizon
        self.num_players = M = num_players
        self.n_p = np.zeros((M, S, A))
        self.r_sum_p = np.zeros((M, S, A))
        self.t_count_p = np.zeros((M, S, A, S + 1))
        self.n = np.zeros((S, A))
        self.r_sum = np.zeros((S, A))
        self.t_count = np.zeros((S, A, S + 1))
        self.watermark = np.full(M, -1, dtype=np.int64)
        # uniform default over the next layer, per state
        self._default_next = np.zeros((S, S + 1))
        for h in range(self.horizon):
            lo, hi = (self.offsets[h + 1], self.offsets[h + 2]) if h + 1 < self.horizon else (S, S + 1)
            self._default_next[self.offsets[h] : self.offsets[h + 1], lo:hi] = 1.0 / (hi - lo)

    @property
    def episodes_ingested(self) -> int:
        return int(self.watermark.max()) + 1

    def next_slice(self, s: int) -> slice:
        h = int(np.searchsorted(self.offsets, s, side="right") - 1)
        if h + 1 == self.horizon:
            return slice(self.num_states, self.num_states + 1)
        return slice(self.offsets[h + 1], self.offsets[h + 2])

    def ingest(self, traj: Trajectory) -> None:
        """Add one player's episode. Each (player, episode) may be ingested once."""
        p, k = traj.player, traj.episode
        if not 0 <= p < self.num_players:
            raise IngestError(f"unknown player {p}")
        if k <= self.watermark[p]:
            raise IngestError(f"episode {k} of player {p} already ingested (watermark {self.watermark[p]})")
        nxt = np.append(traj.states[1:], self.num_states)
        self._add(np.full(len(traj), p), traj.states, traj.actions, traj.rewards, nxt)
        self.watermark[p] = k

    def ingest_batch(self, episode: int, states: np.ndarray, actions: np.ndarray, rewards: np.ndarray) -> None:
        """Add every player's episode at once; arrays have shape ``(M, H)``."""
        if np.any(episode <= self.watermark):
            raise IngestError(f"episode {episode} already ingested for some player")
        M, H = states.shape
        nxt = np.concatenate([states[:, 1:], np.full((M, 1), self.num_states)], axis=1)
        players = np.repeat(np.arange(M), H)
        self._add(players, states.ravel(), actions.ravel(), rewards.ravel(), nxt.ravel())
        self.watermark[:] = episode

    def _add(self, players, states, actions, rewards, nxt) -> None:
        # within one episode a player visits each layer once, so (p, s, a) keys are unique
        np.add.at(self.n_p, (players, states, actions), 1.0)
        np.add.at(self.r_sum_p, (players, states, actions), rewards)
        np.add.at(self.t_count_p, (players, states, actions, nxt), 1.0)
        np.add.at(self.n, (states, actions), 1.0)
        np.add.at(self.r_sum, (states, actions), rewards)
        np.add.at(self.t_count, (states, actions, nxt), 1.0)

    # -- point queries -------------------------------------------------------

    def reward_estimates(self, player: int, s: int, a: int) -> tuple[float, float]:
        n_p, n = self.n_p[player, s, a], self.n[s, a]
        r_ind = self.r_sum_p[player, s, a] / n_p if n_p > 0 else 0.0
        r_agg = self.r_sum[s, a] / n if n > 0 else 0.0
        return float(r_ind), float(r_agg)

    def transition_estimates(self, player: int, s: int, a: int) -> tuple[np.ndarray, np.ndarray]:
        """Empirical next-state distributions over the next layer only."""
        sl = self.next_slice(s)
        n_p, n = self.n_p[player, s, a], self.n[s, a]
        default = self._default_next[s, sl]
        p_ind = self.t_count_p[player, s, a, sl] / n_p if n_p > 0 else default.copy()
        p_agg = self.t_count[s, a, sl] / n if n > 0 else default.copy()
        return p_ind, p_agg

    # -- dense views used by value iteration ---------------------------------

    def individual_model(self) -> tuple[np.ndarray, np.ndarray]:
        """``(R_hat_p, P_hat_p)`` with shapes ``(M, S, A)`` and ``(M, S, A, S + 1)``."""
        return self._model(self.n_p, self.r_sum_p, self.t_count_p)

    def aggregate_model(self) -> tuple[np.ndarray, np.ndarray]:
        return self._model(self.n, self.r_sum, self.t_count)

    def _model(self, n, r_sum, t_count):
        seen = n > 0
        safe = np.where(seen, n, 1.0)
        R = np.where(seen, r_sum / safe, 0.0)
        P = np.where(seen[..., None], t_count / safe[..., None], self._default_next[:, None, :])
        return R, P

    # -- checkpointing -------------------------------------------------------

    def to_json(self) -> dict:
        return {
            "layer_sizes": list(self.layer_sizes),
            "num_actions": self.num_actions,
            "num_players": self.num_players,
            "watermark": self.watermark.tolist(),
            "n_p": self.n_p.tolist(),
            "r_sum_p": self.r_sum_p.tolist(),
            "t_count_p": self.t_count_p.tolist(),
        }

    @classmethod
    def from_json(cls, obj: dict, shape: LayeredMDP) -> "ModelEstimates":
        est = cls(shape, int(obj["num_players"]))
        est.n_p[:] = obj["n_p"]
        est.r_sum_p[:] = obj["r_sum_p"]
        est.t_count_p[:] = obj["t_count_p"]
        est.n[:] = est.n_p.sum(axis=0)
        est.r_sum[:] = est.r_sum_p.sum(axis=0)
        est.t_count[:] = est.t_count_p.sum(axis=0)
        est.watermark[:] = obj["watermark"]
        return est
