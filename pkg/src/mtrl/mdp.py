"""Layered episodic MDPs: representation, exact dynamic programming and sampling.

States are dense integers ``0..S-1`` grouped into consecutive layers. The
terminal state is implicit and lives at index ``S``; transition tensors carry
an extra column for it and every value vector has length ``S + 1`` with the
terminal entry pinned to zero.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

PROB_TOL = 1e-12

BERNOULLI = "bernoulli"
DETERMINISTIC = "deterministic"
REWARD_KINDS = (BERNOULLI, DETERMINISTIC)


class InvalidMDPError(ValueError):
    """Raised when an operation needs a well-formed MDP and did not get one."""


def _frozen(a, dtype=float) -> np.ndarray:
    arr = np.array(a, dtype=dtype)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class LayeredMDP:
    """One episodic task over a layered state space.

    ``transition`` has shape ``(S, A, S + 1)``; the last column is the
    terminal state. ``mean_reward`` has shape ``(S, A)``. Construction does
    not validate; call :func:`validate` (or any DP routine) for that.
    """

    layer_sizes: tuple[int, ...]
    num_actions: int
    init_dist: np.ndarray
    transition: np.ndarray
    mean_reward: np.ndarray
    reward_kind: str = BERNOULLI
    offsets: tuple[int, ...] = field(init=False, repr=False)

    def __post_init__(self):
        sizes = tuple(int(n) for n in self.layer_sizes)
        object.__setattr__(self, "layer_sizes", sizes)
        object.__setattr__(self, "num_actions", int(self.num_actions))
        object.__setattr__(self, "offsets", tuple(np.concatenate([[0], np.cumsum(sizes)]).astype(int).tolist()))
        object.__setattr__(self, "init_dist", _frozen(self.init_dist))
        object.__setattr__(self, "transition", _frozen(self.transition))
        object.__setattr__(self, "mean_reward", _frozen(self.mean_reward))
        S, A = self.num_states, self.num_actions
        if self.transition.shape != (S, A, S + 1):
            raise InvalidMDPError(f"transition has shape {self.transition.shape}, expected {(S, A, S + 1)}")
        if self.mean_reward.shape != (S, A):
            raise InvalidMDPError(f"mean_reward has shape {self.mean_reward.shape}, expected {(S, A)}")
        if self.init_dist.shape != (S,):
            raise InvalidMDPError(f"init_dist has shape {self.init_dist.shape}, expected {(S,)}")
        if self.reward_kind not in REWARD_KINDS:
            raise InvalidMDPError(f"unknown reward_kind {self.reward_kind!r}")

    @property
    def horizon(self) -> int:
        return len(self.layer_sizes)

    @property
    def num_states(self) -> int:
        return self.offsets[-1]

    @property
    def terminal(self) -> int:
        return self.num_states

    def layer_slice(self, h: int) -> slice:
        """States of layer ``h`` (0-based); ``h == H`` is the terminal layer."""
        if h == self.horizon:
            return slice(self.num_states, self.num_states + 1)
        return slice(self.offsets[h], self.offsets[h + 1])

    def layer_of(self, s: int) -> int:
        if s == self.terminal:
            return self.horizon
        return int(np.searchsorted(self.offsets, s, side="right") - 1)

    @property
    def state_layer(self) -> np.ndarray:
        return np.repeat(np.arange(self.horizon), self.layer_sizes)

    # -- construction helpers ------------------------------------------------

    @classmethod
    def from_layers(
        cls,
        layer_sizes: Sequence[int],
        num_actions: int,
        init_dist: Sequence[float],
        transition: Sequence,
        mean_reward: Sequence,
        reward_kind: str = BERNOULLI,
    ) -> "LayeredMDP":
        """Build from the nested layered encoding used in the JSON format.

        ``transition[h][i][a]`` is a distribution over layer ``h + 1``
        (the terminal state for the last layer, where it may be omitted);
        ``mean_reward`` may be flat ``(S, A)`` or nested per layer.
        ``init_dist`` covers the first layer only.
        """
        sizes = [int(n) for n in layer_sizes]
        S, A, H = sum(sizes), int(num_actions), len(sizes)
        offsets = np.concatenate([[0], np.cumsum(sizes)]).astype(int)
        P = np.zeros((S, A, S + 1))
        for h in range(H):
            lo, hi = (offsets[h + 1], offsets[h + 2]) if h + 1 < H else (S, S + 1)
            block = transition[h] if h < len(transition) else None
            for i in range(sizes[h]):
                for a in range(A):
                    if h == H - 1 and (block is None or len(block) == 0):
                        P[offsets[h] + i, a, S] = 1.0
                    else:
                        P[offsets[h] + i, a, lo:hi] = block[i][a]
        # per-layer nesting has 2-d elements; the flat form has 1-d rows
        if len(mean_reward) == H and np.ndim(mean_reward[0]) == 2:
            R = np.concatenate([np.asarray(layer, dtype=float).reshape(-1, A) for layer in mean_reward])
        else:
            R = np.asarray(mean_reward, dtype=float).reshape(S, A)
        p0 = np.zeros(S)
        init = np.asarray(init_dist, dtype=float)
        p0[: init.size] = init
        return cls(tuple(sizes), A, p0, P, R, reward_kind)

    def to_json(self) -> dict:
        H = self.horizon
        transition = []
        for h in range(H):
            nxt = self.layer_slice(h + 1)
            transition.append(self.transition[self.layer_slice(h), :, nxt].tolist())
        return {
            "horizon": H,
            "layer_sizes": list(self.layer_sizes),
            "num_actions": self.num_actions,
            "init_dist": self.init_dist[: self.layer_sizes[0]].tolist(),
            "transition": transition,
            "mean_reward": [self.mean_reward[self.layer_slice(h)].tolist() for h in range(H)],
            "reward_kind": self.reward_kind,
        }

    @classmethod
    def from_json(cls, obj: dict) -> "LayeredMDP":
        if "horizon" in obj and int(obj["horizon"]) != len(obj["layer_sizes"]):
            raise InvalidMDPError("horizon does not match number of layers")
        return cls.from_layers(
            obj["layer_sizes"],
            obj["num_actions"],
            obj["init_dist"],
            obj["transition"],
            obj["mean_reward"],
            obj.get("reward_kind", BERNOULLI),
        )


@dataclass(frozen=True, eq=False)
class Policy:
    """Deterministic history-independent policy: one action per state."""

    action: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "action", _frozen(self.action, dtype=np.int64))

    def __getitem__(self, s: int) -> int:
        return int(self.action[s])


@dataclass(frozen=True, eq=False)
class ValueTables:
    """Collated value functions: ``v`` has length ``S + 1`` (terminal last)."""

    v: np.ndarray
    q: np.ndarray


@dataclass(frozen=True, eq=False)
class Trajectory:
    states: np.ndarray
    actions: np.ndarray
    rewards: np.ndarray
    episode: int = 0
    player: int = 0

    @property
    def steps(self) -> list[tuple[int, int, float]]:
        return [(int(s), int(a), float(r)) for s, a, r in zip(self.states, self.actions, self.rewards)]

    def __len__(self) -> int:
        return len(self.states)


def validate(mdp: LayeredMDP) -> list[str]:
    """Return a list of human-readable invariant violations (empty if valid)."""
    problems = []
    A = mdp.num_actions
    if mdp.horizon < 1:
        problems.append("horizon must be positive")
    if A < 1:
        problems.append("num_actions must be positive")
    for h, n in enumerate(mdp.layer_sizes):
        if n < 1:
            problems.append(f"layer {h} is empty")
    if problems:
        return problems

    p0 = mdp.init_dist
    if np.any(p0 < 0):
        problems.append("init_dist has negative entries")
    first = mdp.layer_slice(0)
    off_first = np.delete(p0, np.arange(first.start, first.stop))
    if np.any(off_first != 0):
        problems.append("init_dist has mass outside the first layer")
    if abs(p0.sum() - 1.0) > PROB_TOL:
        problems.append(f"init_dist sums to {float(p0.sum()):.17g} (deficit {1.0 - float(p0.sum()):.6g})")

    for h in range(mdp.horizon):
        nxt = mdp.layer_slice(h + 1)
        for s in range(mdp.offsets[h], mdp.offsets[h + 1]):
            for a in range(A):
                row = mdp.transition[s, a]
                if np.any(row < 0):
                    problems.append(f"negative transition probability at (s={s}, a={a})")
                outside = row.copy()
                outside[nxt] = 0.0
                if np.any(outside != 0):
                    problems.append(f"cross-layer violation at (s={s}, a={a})")
                total = row.sum()
                if abs(total - 1.0) > PROB_TOL:
                    problems.append(
                        f"transition row at (s={s}, a={a}) sums to {float(total):.17g} (deficit {1.0 - float(total):.6g})"
                    )
    R = mdp.mean_reward
    bad = np.argwhere((R < 0) | (R > 1) | ~np.isfinite(R))
    for s, a in bad:
        problems.append(f"mean reward {R[s, a]!r} at (s={s}, a={a}) outside [0, 1]")
    return problems


def require_valid(mdp: LayeredMDP) -> None:
    problems = validate(mdp)
    if problems:
        raise InvalidMDPError("; ".join(problems[:5]) + (" ..." if len(problems) > 5 else ""))


def _policy_array(mdp: LayeredMDP, policy) -> np.ndarray:
    act = policy.action if isinstance(policy, Policy) else np.asarray(policy, dtype=np.int64)
    if act.shape != (mdp.num_states,):
        raise InvalidMDPError(f"policy must assign an action to each of {mdp.num_states} states")
    if np.any(act < 0) or np.any(act >= mdp.num_actions):
        raise InvalidMDPError("policy uses an action id outside [0, A)")
    return act


def optimal_values(mdp: LayeredMDP) -> ValueTables:
    """Backward induction of the Bellman optimality equation.

    Ties in ``max_a`` are irrelevant for values; greedy extraction elsewhere
    uses ``np.argmax`` (smallest index wins).
    """
    require_valid(mdp)
    S = mdp.num_states
    v = np.zeros(S + 1)
    q = np.zeros((S, mdp.num_actions))
    for h in reversed(range(mdp.horizon)):
        sl = mdp.layer_slice(h)
        q[sl] = mdp.mean_reward[sl] + mdp.transition[sl] @ v
        v[sl] = q[sl].max(axis=1)
    return ValueTables(v, q)


def greedy_policy(q: np.ndarray) -> Policy:
    return Policy(np.argmax(q, axis=1))


def evaluate_policy(mdp: LayeredMDP, policy) -> ValueTables:
    require_valid(mdp)
    act = _policy_array(mdp, policy)
    S = mdp.num_states
    v = np.zeros(S + 1)
    q = np.zeros((S, mdp.num_actions))
    for h in reversed(range(mdp.horizon)):
        sl = mdp.layer_slice(h)
        q[sl] = mdp.mean_reward[sl] + mdp.transition[sl] @ v
        idx = np.arange(sl.start, sl.stop)
        v[sl] = q[idx, act[sl]]
    return ValueTables(v, q)


def expected_return(mdp: LayeredMDP, policy) -> float:
    values = evaluate_policy(mdp, policy)
    return float(mdp.init_dist @ values.v[: mdp.num_states])


def optimal_return(mdp: LayeredMDP) -> float:
    return float(mdp.init_dist @ optimal_values(mdp).v[: mdp.num_states])


def gaps(mdp: LayeredMDP) -> tuple[np.ndarray, float | None]:
    """Suboptimality gaps ``V*(s) - Q*(s, a)`` and the smallest positive gap."""
    vt = optimal_values(mdp)
    g = vt.v[: mdp.num_states, None] - vt.q
    positive = g[g > 0]
    return g, (float(positive.min()) if positive.size else None)


# -- sampling ----------------------------------------------------------------


def _cdf_tables(transition: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Cumulative rows plus the last index carrying positive mass."""
    cdf = np.cumsum(transition, axis=-1)
    positive = transition > 0
    last = transition.shape[-1] - 1 - np.argmax(positive[..., ::-1], axis=-1)
    return cdf, last


def inverse_cdf(cdf_rows: np.ndarray, last: np.ndarray, u: np.ndarray) -> np.ndarray:
    """Vectorized categorical draw; rounding excess in the cdf falls to the last support point."""
    idx = (cdf_rows <= u[..., None]).sum(axis=-1)
    return np.minimum(idx, last)


def sample_episode(mdp: LayeredMDP, policy, rng: np.random.Generator, *, episode: int = 0, player: int = 0) -> Trajectory:
    """Roll out one episode. Uses exactly ``2H + 1`` uniforms from ``rng``."""
    require_valid(mdp)
    act = _policy_array(mdp, policy)
    H = mdp.horizon
    u = rng.random(2 * H + 1)
    cdf, last = _cdf_tables(mdp.transition)
    p0_cdf, p0_last = _cdf_tables(mdp.init_dist)
    s = int(inverse_cdf(p0_cdf, np.asarray(p0_last), np.asarray(u[0])))
    states = np.empty(H, dtype=np.int64)
    actions = np.empty(H, dtype=np.int64)
    rewards = np.empty(H)
    for h in range(H):
        a = int(act[s])
        states[h], actions[h] = s, a
        mean = mdp.mean_reward[s, a]
        rewards[h] = float(u[2 * h + 1] < mean) if mdp.reward_kind == BERNOULLI else mean
        s = int(inverse_cdf(cdf[s, a], np.asarray(last[s, a]), np.asarray(u[2 * h + 2])))
    return Trajectory(states, actions, rewards, episode, player)
