from __future__ import annotations

import numpy as np
import pytest

from mtrl.mdp import DETERMINISTIC, LayeredMDP


def two_layer(rewards=((0.2, 0.7), (0.5, 0.1)), probs=((0.3, 0.6), (1.0, 0.0)), kind=DETERMINISTIC):
    """Layer 1 = {0}, layer 2 = {1, 2}; action a in state 0 reaches state 1 w.p. probs[0][a]."""
    P = np.zeros((3, 2, 4))
    for a in range(2):
        P[0, a, 1] = probs[0][a]
        P[0, a, 2] = 1 - probs[0][a]
    P[1:, :, 3] = 1.0
    R = np.array([rewards[0], rewards[1], rewards[1]], dtype=float)
    return LayeredMDP((1, 2), 2, np.array([1.0, 0, 0]), P, R, kind)


@pytest.fixture
def small_mdp():
    return two_layer()


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


ACCEPTANCE_LINES: list[str] = []


def record_criterion(name: str, ok: bool, detail: str) -> None:
    line = f"{name} {'PASS' if ok else 'FAIL'}: {detail}"
    ACCEPTANCE_LINES.append(line)
    print(line)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
