"""Exploration bonuses: reward, next-state-value and strong-optimism terms.

All functions accept scalars or broadcastable numpy arrays. A count of zero
always yields the cap of the corresponding term.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

THEORY = "theory"
PRACTICAL = "practical"


class Dims(NamedTuple):
    num_players: int
    num_states: int
    num_actions: int
    horizon: int


@dataclass(frozen=True)
class BonusConfig:
    delta: float = 0.1
    c_rw: float = 1.0
    c_var: float = 1.0
    c_str: float = 1.0
    c_lot: float = 1.0
    preset: str = PRACTICAL

    def __post_init__(self):
        if not 0 < self.delta < 1:
            raise ValueError(f"delta must lie in (0, 1), got {self.delta}")
        if min(self.c_rw, self.c_var, self.c_str, self.c_lot) <= 0:
            raise ValueError("bonus multipliers must be positive")

    @classmethod
    def theory(cls, delta: float = 0.1) -> "BonusConfig":
        # 4 on square-root terms, 2 on lower-order terms, as in the clean-event bounds
        return cls(delta, 4.0, 4.0, 4.0, 2.0, THEORY)

    @classmethod
    def practical(cls, delta: float = 0.1) -> "BonusConfig":
        return cls(delta, 1.0, 1.0, 1.0, 1.0, PRACTICAL)

    @classmethod
    def from_preset(cls, preset: str, delta: float = 0.1) -> "BonusConfig":
        if preset == THEORY:
            return cls.theory(delta)
        if preset == PRACTICAL:
            return cls.practical(delta)
        raise ValueError(f"unknown bonus preset {preset!r}")


def log_term(n, M: int, S: int, A: int, delta: float):
    """``max(1, ln(M S A max(n, 1) / delta))``."""
    n = np.maximum(n, 1)
    return np.maximum(1.0, np.log(M * S * A * n / delta))


def _L(n, cfg: BonusConfig, dims: Dims):
    return log_term(n, dims.num_players, dims.num_states, dims.num_actions, cfg.delta)


def b_rw(n, kappa, cfg: BonusConfig, dims: Dims):
    n = np.asarray(n, dtype=float)
    val = np.minimum(1.0, kappa + cfg.c_rw * np.sqrt(_L(n, cfg, dims) / np.maximum(n, 1)))
    return np.where(n > 0, val, 1.0)


def _moments(q, v_upper, v_lower):
    """Variance of ``v_upper`` under ``q`` and ``E_q[(v_upper - v_lower)^2]``.

    A crossed pair (lower above upper) contributes zero width.
    """
    q = np.asarray(q, dtype=float)
    mean = np.sum(q * v_upper, axis=-1, keepdims=True)
    var = np.sum(q * (v_upper - mean) ** 2, axis=-1)
    width = np.maximum(v_upper - v_lower, 0.0)
    return var, np.sum(q * width**2, axis=-1)


def _check_q(q):
    q = np.asarray(q, dtype=float)
    if np.any(q < 0) or np.any(np.abs(q.sum(axis=-1) - 1.0) > 1e-9):
        raise ValueError("q must be a probability vector")
    return q


def b_prob(q, n, v_upper, v_lower, kappa, cfg: BonusConfig, dims: Dims, *, _checked: bool = False):
    if not _checked:
        q = _check_q(q)
    n = np.asarray(n, dtype=float)
    H = dims.horizon
    var, width2 = _moments(q, v_upper, v_lower)
    L = _L(n, cfg, dims)
    nn = np.maximum(n, 1)
    val = 2 * kappa + cfg.c_var * (np.sqrt(var * L / nn) + np.sqrt(width2 * L / nn)) + cfg.c_lot * H * L / nn
    return np.where(n > 0, np.minimum(H, val), float(H))


def b_str(q, n, v_upper, v_lower, kappa, cfg: BonusConfig, dims: Dims, *, _checked: bool = False):
    if not _checked:
        q = _check_q(q)
    n = np.asarray(n, dtype=float)
    H, S = dims.horizon, dims.num_states
    _, width2 = _moments(q, v_upper, v_lower)
    L = _L(n, cfg, dims)
    nn = np.maximum(n, 1)
    val = kappa + cfg.c_str * np.sqrt(S * width2 * L / nn) + cfg.c_lot * H * S * L / nn
    return np.where(n > 0, np.minimum(H, val), float(H))


def total_bonus(q, n, v_upper, v_lower, kappa, cfg: BonusConfig, dims: Dims):
    """Sum of the three parts with a shared confidence level."""
    q = np.asarray(q, dtype=float)
    return (
        b_rw(n, kappa, cfg, dims)
        + b_prob(q, n, v_upper, v_lower, kappa, cfg, dims, _checked=True)
        + b_str(q, n, v_upper, v_lower, kappa, cfg, dims, _checked=True)
    )


def ind_bonus(player, s, a, est, v_upper, v_lower, cfg: BonusConfig, dims: Dims) -> float:
    """Bonus built from the player's own data; ``v_*`` cover the next layer."""
    q, _ = est.transition_estimates(player, s, a)
    return float(total_bonus(q, est.n_p[player, s, a], v_upper, v_lower, 0.0, cfg, dims))


def agg_bonus(player, s, a, est, v_upper, v_lower, cfg: BonusConfig, dims: Dims, epsilon: float) -> float:
    """Bonus built from pooled data, widened by the dissimilarity ``epsilon``."""
    _, q = est.transition_estimates(player, s, a)
    return float(total_bonus(q, est.n[s, a], v_upper, v_lower, epsilon, cfg, dims))
