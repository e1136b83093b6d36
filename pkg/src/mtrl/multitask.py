"""Multi-task instances: M layered MDPs over a shared shape, with dissimilarity
and gap analysis."""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property
from typing import NamedTuple, Sequence

import numpy as np

from .mdp import InvalidMDPError, LayeredMDP, optimal_values, require_valid

# slack on floating comparisons of analytic bounds (not on the bounds themselves)
BOUND_TOL = 1e-12


class ShapeMismatchError(ValueError):
    pass


class DissimilarityError(ValueError):
    pass


class Dissimilarity(NamedTuple):
    eps_reward: float
    eps_transition: float
    eps_min: float


def _check_shapes(tasks: Sequence[LayeredMDP]) -> None:
    if not tasks:
        raise ShapeMismatchError("instance needs at least one task")
    base = tasks[0]
    for i, t in enumerate(tasks[1:], start=1):
        if t.layer_sizes != base.layer_sizes:
            raise ShapeMismatchError(f"task {i} has layers {t.layer_sizes}, task 0 has {base.layer_sizes}")
        if t.num_actions != base.num_actions:
            raise ShapeMismatchError(f"task {i} has {t.num_actions} actions, task 0 has {base.num_actions}")
        if not np.array_equal(t.init_dist, base.init_dist):
            raise ShapeMismatchError(f"task {i} has a different initial distribution")


def measure_dissimilarity(tasks: Sequence[LayeredMDP] | "MultiTaskInstance") -> Dissimilarity:
    """Smallest eps for which the tasks are eps-dissimilar, split by component."""
    if isinstance(tasks, MultiTaskInstance):
        tasks = tasks.tasks
    _check_shapes(tasks)
    R = np.stack([t.mean_reward for t in tasks])
    P = np.stack([t.transition for t in tasks])
    eps_r = float((R.max(axis=0) - R.min(axis=0)).max())
    l1 = 0.0
    for p in range(len(tasks)):
        diff = np.abs(P[p + 1 :] - P[p]).sum(axis=-1)
        if diff.size:
            l1 = max(l1, float(diff.max()))
    eps_p = tasks[0].horizon * l1
    return Dissimilarity(eps_r, eps_p, max(eps_r, eps_p))


@dataclass(frozen=True, eq=False)
class MultiTaskInstance:
    """M tasks sharing layers, action count and initial distribution.

    ``declared_epsilon`` is what the instance claims (and what learners are
    normally told); construction checks it against the measured value.
    """

    tasks: tuple[LayeredMDP, ...]
    declared_epsilon: float = 0.0
    metadata: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "tasks", tuple(self.tasks))
        _check_shapes(self.tasks)
        for t in self.tasks:
            require_valid(t)
        if self.declared_epsilon < 0:
            raise DissimilarityError("declared_epsilon must be nonnegative")
        measured = measure_dissimilarity(self.tasks).eps_min
        if measured > self.declared_epsilon + BOUND_TOL * max(1.0, self.declared_epsilon):
            raise DissimilarityError(
                f"tasks are {measured!r}-dissimilar, more than the declared {self.declared_epsilon!r}"
            )

    @property
    def num_players(self) -> int:
        return len(self.tasks)

    @property
    def base(self) -> LayeredMDP:
        return self.tasks[0]

    @property
    def horizon(self) -> int:
        return self.base.horizon

    @property
    def num_states(self) -> int:
        return self.base.num_states

    @property
    def num_actions(self) -> int:
        return self.base.num_actions

    @property
    def init_dist(self) -> np.ndarray:
        return self.base.init_dist

    @cached_property
    def transitions(self) -> np.ndarray:
        """Stacked kernels, shape ``(M, S, A, S + 1)``."""
        return np.stack([t.transition for t in self.tasks])

    @cached_property
    def rewards(self) -> np.ndarray:
        return np.stack([t.mean_reward for t in self.tasks])

    @cached_property
    def optimal(self) -> tuple[np.ndarray, np.ndarray]:
        """``(V*, Q*)`` stacked over players: shapes ``(M, S+1)`` and ``(M, S, A)``."""
        vts = [optimal_values(t) for t in self.tasks]
        return np.stack([vt.v for vt in vts]), np.stack([vt.q for vt in vts])

    @cached_property
    def gap_table(self) -> np.ndarray:
        v, q = self.optimal
        return v[:, : self.num_states, None] - q

    def to_json(self) -> dict:
        out = {"declared_epsilon": self.declared_epsilon, "tasks": [t.to_json() for t in self.tasks]}
        if self.metadata:
            out["metadata"] = self.metadata
        return out

    @classmethod
    def from_json(cls, obj: dict) -> "MultiTaskInstance":
        try:
            tasks = [LayeredMDP.from_json(t) for t in obj["tasks"]]
        except KeyError as exc:
            raise InvalidMDPError(f"missing field {exc}") from None
        return cls(tuple(tasks), float(obj.get("declared_epsilon", 0.0)), dict(obj.get("metadata", {})))


@dataclass(frozen=True, eq=False)
class GapAnalysis:
    gaps: np.ndarray  # (M, S, A)
    gap_min: float | None
    gap_min_per_player: tuple[float | None, ...]
    optimal_pairs: np.ndarray  # (M, S, A) bool, Z_{p,opt}

    def subpar_mask(self, eps: float, horizon: int) -> np.ndarray:
        return (self.gaps > 96 * horizon * eps).any(axis=0)


def analyze_gaps(instance: MultiTaskInstance) -> GapAnalysis:
    g = instance.gap_table
    per_player = []
    for gp in g:
        pos = gp[gp > 0]
        per_player.append(float(pos.min()) if pos.size else None)
    present = [x for x in per_player if x is not None]
    return GapAnalysis(g, min(present) if present else None, tuple(per_player), g == 0)


def subpar_set(instance: MultiTaskInstance, eps: float) -> set[tuple[int, int]]:
    """Pairs whose gap strictly exceeds ``96 H eps`` for at least one player."""
    mask = (instance.gap_table > 96 * instance.horizon * eps).any(axis=0)
    return {(int(s), int(a)) for s, a in np.argwhere(mask)}


def _require_dissimilar(instance: MultiTaskInstance, eps: float) -> None:
    measured = measure_dissimilarity(instance).eps_min
    if measured > eps + BOUND_TOL * max(1.0, eps):
        raise DissimilarityError(f"instance is {measured!r}-dissimilar, not {eps!r}-dissimilar")


def verify_lemma1(instance: MultiTaskInstance, eps: float) -> dict:
    """Check that optimal action values and gaps differ by at most 2H eps and 4H eps."""
    _require_dissimilar(instance, eps)
    H = instance.horizon
    _, q = instance.optimal
    g = instance.gap_table
    q_spread = q.max(axis=0) - q.min(axis=0)
    g_spread = g.max(axis=0) - g.min(axis=0)
    q_at = np.unravel_index(np.argmax(q_spread), q_spread.shape)
    g_at = np.unravel_index(np.argmax(g_spread), g_spread.shape)
    q_max, g_max = float(q_spread[q_at]), float(g_spread[g_at])
    q_ok = q_max <= 2 * H * eps + BOUND_TOL
    g_ok = g_max <= 4 * H * eps + BOUND_TOL
    return {
        "eps": eps,
        "q_max_diff": q_max,
        "q_bound": 2 * H * eps,
        "q_witness": [int(x) for x in q_at],
        "gap_max_diff": g_max,
        "gap_bound": 4 * H * eps,
        "gap_witness": [int(x) for x in g_at],
        "ok": bool(q_ok and g_ok),
    }


def verify_lemma2(instance: MultiTaskInstance, eps: float) -> dict:
    """Subpar pairs are suboptimal for every player, with gaps within a factor of two."""
    _require_dissimilar(instance, eps)
    g = instance.gap_table
    pairs = sorted(subpar_set(instance, eps))
    min_gap, worst_ratio = None, None
    violations = []
    for s, a in pairs:
        col = g[:, s, a]
        lo, hi = float(col.min()), float(col.max())
        if min_gap is None or lo < min_gap:
            min_gap = lo
        ratio = lo / hi
        if worst_ratio is None or ratio < worst_ratio:
            worst_ratio = ratio
        if lo <= 0:
            violations.append({"pair": [s, a], "kind": "optimal for some player", "min_gap": lo})
        elif lo < 0.5 * hi - BOUND_TOL:
            violations.append({"pair": [s, a], "kind": "ratio below 1/2", "ratio": ratio})
    return {
        "eps": eps,
        "subpar_count": len(pairs),
        "min_gap": min_gap,
        "worst_ratio": worst_ratio,
        "violations": violations,
        "ok": not violations,
    }
