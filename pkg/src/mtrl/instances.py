"""Instance generators: random eps-dissimilar families and the lower-bound
hard instances (gap-independent cases 1/2 and the gap-dependent family)."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .mdp import BERNOULLI, LayeredMDP
from .multitask import BOUND_TOL, MultiTaskInstance, measure_dissimilarity

GAP_INDEPENDENT_CASE1 = "gap_independent_case1"
GAP_INDEPENDENT_CASE2 = "gap_independent_case2"
GAP_DEPENDENT = "gap_dependent"
VARIANTS = (GAP_INDEPENDENT_CASE1, GAP_INDEPENDENT_CASE2, GAP_DEPENDENT)

MAX_ATTEMPTS = 1000


class InfeasibleConfigError(ValueError):
    pass


class ConstraintViolation(ValueError):
    """A hard-instance parameter violates one of the construction's inequalities."""


@dataclass(frozen=True)
class RandomInstanceConfig:
    s1: int
    horizon: int
    num_actions: int
    num_players: int
    epsilon: float = 0.0
    reward_scale: float = 1.0
    seed: int = 0
    layer_sizes: tuple[int, ...] | None = None
    reward_kind: str = BERNOULLI

    def sizes(self) -> tuple[int, ...]:
        if self.layer_sizes is not None:
            sizes = tuple(int(n) for n in self.layer_sizes)
            if len(sizes) != self.horizon or sizes[0] != self.s1:
                raise InfeasibleConfigError("layer_sizes must have length H and start with s1")
            return sizes
        return (self.s1,) * self.horizon

    def check(self) -> None:
        if self.s1 < 1 or self.horizon < 1 or self.num_actions < 1 or self.num_players < 1:
            raise InfeasibleConfigError("s1, horizon, num_actions and num_players must be positive")
        if self.epsilon < 0:
            raise InfeasibleConfigError("epsilon must be nonnegative")
        if not 0 <= self.reward_scale <= 1:
            raise InfeasibleConfigError("reward_scale must lie in [0, 1]")
        if min(self.sizes()) < 1:
            raise InfeasibleConfigError("every layer needs at least one state")


def _random_base(sizes: Sequence[int], A: int, reward_scale: float, rng: np.random.Generator):
    S, H = sum(sizes), len(sizes)
    offsets = np.concatenate([[0], np.cumsum(sizes)]).astype(int)
    P = np.zeros((S, A, S + 1))
    for h in range(H):
        lo, hi = (offsets[h + 1], offsets[h + 2]) if h + 1 < H else (S, S + 1)
        n_next = hi - lo
        block = rng.dirichlet(np.ones(n_next), size=(sizes[h], A)) if n_next > 1 else np.ones((sizes[h], A, 1))
        P[offsets[h] : offsets[h + 1], :, lo:hi] = block
    R = np.clip(reward_scale * rng.random((S, A)), 0.0, 1.0)
    p0 = np.zeros(S)
    p0[: sizes[0]] = 1.0 / sizes[0]
    return P, R, p0, offsets


def _perturb(P, R, offsets, sizes, eps, rng):
    """Reward shift within eps/2 and an L1 move of at most eps/(2H) per row.

    Pairwise distances between two perturbed copies are then within eps and
    eps/H respectively.
    """
    S, A, _ = P.shape
    H = len(sizes)
    Rp = np.clip(R + eps * (rng.random(R.shape) - 0.5), 0.0, 1.0)
    Pp = P.copy()
    budget = eps / (4 * H)  # mass moved; L1 change is twice this
    for h in range(H):
        lo, hi = (offsets[h + 1], offsets[h + 2]) if h + 1 < H else (S, S + 1)
        n_next = hi - lo
        for s in range(offsets[h], offsets[h + 1]):
            for a in range(A):
                u = rng.random()
                if n_next < 2:
                    continue
                i, j = lo + rng.choice(n_next, size=2, replace=False)
                m = min(Pp[s, a, i], budget * u)
                Pp[s, a, i] -= m
                Pp[s, a, j] += m
    return Pp, Rp


def gen_random(config: RandomInstanceConfig, rng: np.random.Generator | None = None) -> MultiTaskInstance:
    """Base task plus M bounded perturbations; a pure function of (config, rng)."""
    config.check()
    if rng is None:
        rng = np.random.default_rng(config.seed)
    sizes = config.sizes()
    A, M, eps = config.num_actions, config.num_players, float(config.epsilon)
    for _ in range(MAX_ATTEMPTS):
        P, R, p0, offsets = _random_base(sizes, A, config.reward_scale, rng)
        tasks = []
        for _p in range(M):
            Pp, Rp = _perturb(P, R, offsets, sizes, eps, rng)
            tasks.append(LayeredMDP(sizes, A, p0, Pp, Rp, config.reward_kind))
        if measure_dissimilarity(tasks).eps_min <= eps + BOUND_TOL * max(1.0, eps):
            return MultiTaskInstance(
                tuple(tasks),
                eps,
                {"generator": "random", "seed": config.seed, "layer_sizes": list(sizes)},
            )
    raise InfeasibleConfigError(f"no {eps}-dissimilar draw after {MAX_ATTEMPTS} attempts")


# -- hard instances ----------------------------------------------------------


@dataclass(frozen=True)
class HardInstanceParams:
    variant: str
    S: int | None = None
    A: int = 2
    H: int = 2
    M: int = 1
    K: int | None = None
    l: int | None = None
    delta_table: np.ndarray | None = field(default=None, compare=False)
    epsilon: float | None = None
    optimal_actions: np.ndarray | None = field(default=None, compare=False)
    seed: int = 0
    reward_kind: str = BERNOULLI

    @property
    def l_complement(self) -> int:
        return self.S * self.A - self.l


def chain_states(s1: int, H: int) -> tuple[list[int], list[int]]:
    """Ids of the reward-1 and reward-0 chain states for layers 2..H."""
    good = [s1 + 2 * (h - 2) for h in range(2, H + 1)]
    return good, [g + 1 for g in good]


def chain_instance(
    p_good: np.ndarray, H: int, epsilon: float, reward_kind: str = BERNOULLI, metadata: dict | None = None
) -> MultiTaskInstance:
    """Tasks whose first layer leads to a reward-1 or a reward-0 two-state chain.

    ``p_good[p, s, a]`` is the probability that first-layer pair ``(s, a)``
    enters the reward-1 chain for player ``p``. Each chain is absorbing, so a
    first-layer pair is worth ``(H - 1) * p_good``.
    """
    M, s1, A = p_good.shape
    S = s1 + 2 * (H - 1)
    sizes = (s1,) + (2,) * (H - 1)
    good, bad = chain_states(s1, H)
    p0 = np.zeros(S)
    p0[:s1] = 1.0 / s1
    tasks = []
    for p in range(M):
        P = np.zeros((S, A, S + 1))
        R = np.zeros((S, A))
        P[:s1, :, good[0]] = p_good[p]
        P[:s1, :, bad[0]] = 1.0 - p_good[p]
        for i in range(H - 1):
            nxt_good = good[i + 1] if i + 1 < H - 1 else S
            nxt_bad = bad[i + 1] if i + 1 < H - 1 else S
            P[good[i], :, nxt_good] = 1.0
            P[bad[i], :, nxt_bad] = 1.0
            R[good[i], :] = 1.0
        tasks.append(LayeredMDP(sizes, A, p0, P, R, reward_kind))
    return MultiTaskInstance(tuple(tasks), float(epsilon), metadata or {})


def _gap_independent_checks(params: HardInstanceParams) -> None:
    S, A, H, M, K, l = params.S, params.A, params.H, params.M, params.K, params.l
    if S is None or K is None or l is None:
        raise ConstraintViolation("gap-independent instances need S, K and l")
    checks = [
        (A >= 2, f"A >= 2 (A = {A})"),
        (H >= 2, f"H >= 2 (H = {H})"),
        (S >= 4 * H, f"S >= 4H ({S} < {4 * H})"),
        (K >= S * A, f"K >= SA ({K} < {S * A})"),
        (M >= 1, f"M >= 1 (M = {M})"),
        (0 <= l <= S * A, f"l + l^C = SA with l, l^C >= 0 (l = {l}, SA = {S * A})"),
        (l <= S * A - 4 * (S + H * A), f"l <= SA - 4(S + HA) ({l} > {S * A - 4 * (S + H * A)})"),
    ]
    for ok, msg in checks:
        if not ok:
            raise ConstraintViolation(f"violated constraint: {msg}")
    lc = S * A - l
    if params.variant == GAP_INDEPENDENT_CASE1 and not l > M * lc:
        raise ConstraintViolation(f"violated constraint: case 1 needs l > M l^C ({l} <= {M * lc})")
    if params.variant == GAP_INDEPENDENT_CASE2 and not M * lc >= l:
        raise ConstraintViolation(f"violated constraint: case 2 needs M l^C >= l ({M * lc} < {l})")


def gap_independent_case(l: int, l_complement: int, M: int) -> str:
    return GAP_INDEPENDENT_CASE1 if l > M * l_complement else GAP_INDEPENDENT_CASE2


def gen_gap_independent_hard(params: HardInstanceParams) -> tuple[MultiTaskInstance, int]:
    """Materialize the gap-independent construction.

    Returns the instance and ``l``, the guaranteed lower bound on the number
    of pairs subpar at level ``eps / (192 H)``.
    """
    if params.variant not in (GAP_INDEPENDENT_CASE1, GAP_INDEPENDENT_CASE2):
        raise ConstraintViolation(f"variant {params.variant!r} is not a gap-independent case")
    _gap_independent_checks(params)
    S, A, H, M, K, l = params.S, params.A, params.H, params.M, params.K, params.l
    s1 = S - 2 * (H - 1)
    rng = np.random.default_rng(params.seed)
    meta = {"generator": params.variant, "S": S, "A": A, "H": H, "M": M, "K": K, "l": l}

    if params.variant == GAP_INDEPENDENT_CASE1:
        b = math.ceil(l / s1)
        if b + 1 > A:
            raise ConstraintViolation(f"violated constraint: ceil(l / S1) + 1 <= A ({b + 1} > {A})")
        delta = math.sqrt((l + 1) / (384 * M * K))
        eps = 0.5 * H * delta
        if params.optimal_actions is not None:
            a_s = np.asarray(params.optimal_actions, dtype=int).reshape(s1)
        else:
            a_s = rng.integers(0, b + 1, size=s1)
        if np.any((a_s < 0) | (a_s > b)):
            raise ConstraintViolation(f"optimal actions must lie in [0, {b}]")
        row = np.where(np.arange(A) <= b, 0.5, 0.0)
        p_good = np.tile(row, (s1, 1))
        p_good[np.arange(s1), a_s] = 0.5 + delta
        p_good = np.broadcast_to(p_good, (M, s1, A)).copy()
        meta.update({"delta": delta, "epsilon": eps, "b": b, "optimal_actions": a_s.tolist()})
    else:
        u = math.ceil(l / s1)
        v = A - u
        if v < 2:
            raise ConstraintViolation(f"violated constraint: v = A - ceil(l / S1) >= 2 (v = {v})")
        delta = math.sqrt(v * s1 / (384 * K))
        eps = 2 * H * delta
        if params.optimal_actions is not None:
            a_sp = np.asarray(params.optimal_actions, dtype=int).reshape(s1, M)
        else:
            a_sp = rng.integers(0, v, size=(s1, M))
        if np.any((a_sp < 0) | (a_sp >= v)):
            raise ConstraintViolation(f"optimal actions must lie in [0, {v - 1}]")
        row = np.where(np.arange(A) < v, 0.5, 0.0)
        p_good = np.tile(row, (M, s1, 1))
        for p in range(M):
            p_good[p, np.arange(s1), a_sp[:, p]] = 0.5 + delta
        meta.update({"delta": delta, "epsilon": eps, "v": v, "optimal_actions": a_sp.tolist()})
    return chain_instance(p_good, H, eps, params.reward_kind, meta), l


def gap_independent_closed_form(instance: MultiTaskInstance) -> np.ndarray:
    """Closed-form gaps ``(M, S, A)`` of a gap-independent hard instance."""
    meta = instance.metadata
    M, S, A, H = instance.num_players, instance.num_states, instance.num_actions, instance.horizon
    s1 = instance.base.layer_sizes[0]
    delta = meta["delta"]
    out = np.zeros((M, S, A))
    for p in range(M):
        for s in range(s1):
            if meta["generator"] == GAP_INDEPENDENT_CASE1:
                best, width = meta["optimal_actions"][s], meta["b"] + 1
            else:
                best, width = meta["optimal_actions"][s][p], meta["v"]
            for a in range(A):
                if a == best:
                    continue
                out[p, s, a] = (H - 1) * delta if a < width else (H - 1) * (0.5 + delta)
    return out


def check_delta_table(table: np.ndarray, H: int, epsilon: float) -> None:
    table = np.asarray(table, dtype=float)
    if table.ndim != 3:
        raise ConstraintViolation("delta table must have shape (S1, A, M)")
    s1, A, M = table.shape
    cap = H / (48 * math.sqrt(M))
    if H < 2:
        raise ConstraintViolation(f"violated constraint: H >= 2 (H = {H})")
    if A < 2:
        raise ConstraintViolation(f"violated constraint: A >= 2 (A = {A})")
    if epsilon < 0:
        raise ConstraintViolation("violated constraint: epsilon >= 0")
    if np.any(table < 0) or np.any(table > cap):
        raise ConstraintViolation(f"violated constraint: each Delta in [0, H/(48 sqrt M)] = [0, {cap!r}]")
    if not np.all((table == 0).any(axis=1)):
        raise ConstraintViolation("violated constraint: every (s, p) needs an action with Delta = 0")
    spread = table.max(axis=2) - table.min(axis=2)
    if np.any(spread > epsilon / 4 + BOUND_TOL):
        raise ConstraintViolation(
            f"violated constraint: |Delta_p - Delta_q| <= eps/4 (max spread {spread.max()!r} > {epsilon / 4!r})"
        )


def gen_gap_dependent_hard(params: HardInstanceParams) -> MultiTaskInstance:
    """Instance whose first-layer gaps equal a prescribed table ``Delta[s, a, p]``."""
    if params.delta_table is None or params.epsilon is None:
        raise ConstraintViolation("gap-dependent instances need a delta table and epsilon")
    table = np.asarray(params.delta_table, dtype=float)
    H = params.H
    check_delta_table(table, H, params.epsilon)
    s1, A, M = table.shape
    if params.S is not None and params.S != s1 + 2 * (H - 1):
        raise ConstraintViolation(f"violated constraint: S1 = S - 2(H - 1) ({s1} != {params.S - 2 * (H - 1)})")
    p_good = 0.5 - np.transpose(table, (2, 0, 1)) / (H - 1)
    meta = {"generator": GAP_DEPENDENT, "H": H, "M": M, "epsilon": params.epsilon, "delta_table": table.tolist()}
    return chain_instance(p_good, H, params.epsilon, params.reward_kind, meta)


def random_delta_table(
    s1: int, A: int, M: int, H: int, epsilon: float, rng: np.random.Generator, scale: float = 1.0
) -> np.ndarray:
    """A table meeting all gap-dependent constraints: per-state common optimal
    action, per-player jitter within eps/8."""
    cap = H / (48 * math.sqrt(M)) * scale
    base = rng.uniform(0.0, cap, size=(s1, A))
    jitter = rng.uniform(-epsilon / 8, epsilon / 8, size=(s1, A, M))
    table = np.clip(base[:, :, None] + jitter, 0.0, H / (48 * math.sqrt(M)))
    best = rng.integers(0, A, size=s1)
    table[np.arange(s1), best, :] = 0.0
    return table
