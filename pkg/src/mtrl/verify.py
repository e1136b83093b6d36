"""Property suites run by ``mtrl verify`` and by the acceptance tests.

Each suite returns a JSON-serializable dict with an ``ok`` flag.
"""
from __future__ import annotations

import math
import time

import numpy as np

from .bonuses import BonusConfig
from .instances import (
    GAP_INDEPENDENT_CASE1,
    GAP_INDEPENDENT_CASE2,
    HardInstanceParams,
    RandomInstanceConfig,
    gap_independent_closed_form,
    gen_gap_dependent_hard,
    gen_gap_independent_hard,
    gen_random,
    random_delta_table,
)
from .learner import INDIVIDUAL, MULTITASK, LearnerConfig, run
from .mdp import optimal_values
from .multitask import measure_dissimilarity, subpar_set, verify_lemma1, verify_lemma2
from .oracle import brute_force_optimal, check_regret_decomposition

LEMMA_EPSILONS = (0.0, 0.05, 0.2)


def _random_sizes(rng: np.random.Generator, max_states: int, max_h: int) -> tuple[int, ...]:
    H = int(rng.integers(1, max_h + 1))
    sizes = [1] * H
    for _ in range(int(rng.integers(0, max_states - H + 1))):
        sizes[int(rng.integers(H))] += 1
    return tuple(sizes)


def oracle_mdp(seed: int):
    """Random single task with S <= 6, A <= 3, H <= 3."""
    rng = np.random.default_rng([7, seed])
    sizes = _random_sizes(rng, 6, 3)
    A = int(rng.integers(1, 4))
    cfg = RandomInstanceConfig(sizes[0], len(sizes), A, 1, seed=seed, layer_sizes=sizes)
    return gen_random(cfg, rng).base


def lemma_instance(seed: int):
    """Member of the lemma corpus: eps cycles through 0, 0.05, 0.2; M <= 5; S <= 12."""
    rng = np.random.default_rng([11, seed])
    eps = LEMMA_EPSILONS[seed % len(LEMMA_EPSILONS)]
    sizes = _random_sizes(rng, 12, 3)
    M = int(rng.integers(1, 6))
    A = int(rng.integers(2, 4))
    cfg = RandomInstanceConfig(sizes[0], len(sizes), A, M, eps, seed=seed, layer_sizes=sizes)
    return gen_random(cfg, rng), eps


def validity_instance():
    """S1 = 4, A = 3, H = 2, M = 3 random 0.1-dissimilar instance."""
    return gen_random(RandomInstanceConfig(4, 2, 3, 3, 0.1, seed=2024, layer_sizes=(4, 3)))


def trend_instance():
    """S1 = 6, A = 4, H = 2, M = 10 random 0-dissimilar instance."""
    return gen_random(RandomInstanceConfig(6, 2, 4, 10, 0.0, seed=2024, layer_sizes=(6, 3)))


def decomposition_instance(seed: int = 0):
    rng = np.random.default_rng([13, seed])
    H, M, eps = 3, 3, 0.2
    table = random_delta_table(4, 3, M, H, eps, rng)
    return gen_gap_dependent_hard(HardInstanceParams("gap_dependent", A=3, H=H, M=M, delta_table=table, epsilon=eps))


# Gap-independent parameter sets satisfying every constraint of the construction.
CASE1_PARAMS = dict(S=20, A=41, H=2, M=1, K=1000, l=412)
CASE2_PARAMS = dict(S=9, A=40, H=2, M=3, K=500, l=4)


def suite_oracle(seeds: int = 100, tol: float = 1e-12) -> dict:
    t0 = time.perf_counter()
    worst = 0.0
    for i in range(seeds):
        mdp = oracle_mdp(i)
        ov, bf = optimal_values(mdp), brute_force_optimal(mdp)
        worst = max(worst, float(np.abs(ov.v - bf.v).max()), float(np.abs(ov.q - bf.q).max()))
    return {"suite": "oracle", "instances": seeds, "max_deviation": worst, "tolerance": tol,
            "seconds": time.perf_counter() - t0, "ok": worst <= tol}


def suite_lemmas(seeds: int = 200) -> dict:
    t0 = time.perf_counter()
    l1_fail, l2_fail, nonempty = [], [], 0
    worst_q_ratio = worst_gap_ratio = 0.0
    worst_l2_ratio = None
    for i in range(seeds):
        inst, eps = lemma_instance(i)
        r1 = verify_lemma1(inst, eps)
        r2 = verify_lemma2(inst, eps)
        if eps > 0:
            worst_q_ratio = max(worst_q_ratio, r1["q_max_diff"] / r1["q_bound"])
            worst_gap_ratio = max(worst_gap_ratio, r1["gap_max_diff"] / r1["gap_bound"])
        if not r1["ok"]:
            l1_fail.append({"seed": i, **r1})
        if not r2["ok"]:
            l2_fail.append({"seed": i, **r2})
        if r2["subpar_count"]:
            nonempty += 1
            if worst_l2_ratio is None or r2["worst_ratio"] < worst_l2_ratio:
                worst_l2_ratio = r2["worst_ratio"]
    return {
        "suite": "lemmas",
        "instances": seeds,
        "lemma1_failures": l1_fail,
        "lemma2_failures": l2_fail,
        "lemma1_worst_fraction_of_q_bound": worst_q_ratio,
        "lemma1_worst_fraction_of_gap_bound": worst_gap_ratio,
        "lemma2_nonempty_instances": nonempty,
        "lemma2_worst_ratio": worst_l2_ratio,
        "seconds": time.perf_counter() - t0,
        "ok": not l1_fail and not l2_fail,
    }


def suite_constructions(seeds: int = 50, tol: float = 1e-12) -> dict:
    t0 = time.perf_counter()
    dep_err, dep_fail = 0.0, []
    for i in range(seeds):
        rng = np.random.default_rng([17, i])
        H = int(rng.integers(2, 5))
        M = int(rng.integers(1, 5))
        A = int(rng.integers(2, 5))
        s1 = int(rng.integers(1, 6))
        eps = float(rng.choice([0.0, 0.01, 0.1, 0.5]))
        table = random_delta_table(s1, A, M, H, eps, rng)
        inst = gen_gap_dependent_hard(HardInstanceParams("gap_dependent", A=A, H=H, M=M, delta_table=table, epsilon=eps))
        err = float(np.abs(inst.gap_table[:, :s1, :] - np.transpose(table, (2, 0, 1))).max())
        dep_err = max(dep_err, err)
        deeper = float(np.abs(inst.gap_table[:, s1:, :]).max()) if inst.num_states > s1 else 0.0
        measured = measure_dissimilarity(inst).eps_min
        if err > tol or deeper > tol or measured > eps + 1e-12 * max(1.0, eps):
            dep_fail.append({"seed": i, "gap_error": err, "deeper_gap": deeper, "measured_eps": measured, "eps": eps})

    indep = []
    for variant, params in ((GAP_INDEPENDENT_CASE1, CASE1_PARAMS), (GAP_INDEPENDENT_CASE2, CASE2_PARAMS)):
        for seed in range(3):
            inst, l = gen_gap_independent_hard(HardInstanceParams(variant, seed=seed, **params))
            closed = gap_independent_closed_form(inst)
            err = float(np.abs(inst.gap_table - closed).max())
            eps = inst.metadata["epsilon"]
            size = len(subpar_set(inst, eps / (192 * inst.horizon)))
            indep.append({"variant": variant, "seed": seed, "gap_error": err, "subpar_size": size, "l": l,
                          "ok": err <= tol and size >= l})
    return {
        "suite": "constructions",
        "gap_dependent_tables": seeds,
        "gap_dependent_max_error": dep_err,
        "gap_dependent_failures": dep_fail,
        "gap_independent": indep,
        "seconds": time.perf_counter() - t0,
        "ok": not dep_fail and all(r["ok"] for r in indep),
    }


def bound_runs(seeds: int = 50, K: int = 2000, delta: float = 0.1) -> list[dict]:
    inst = validity_instance()
    out = []
    for seed in range(seeds):
        cfg = LearnerConfig(inst.declared_epsilon, BonusConfig.theory(delta), MULTITASK, seed)
        log = run(inst, cfg, K)
        out.append({"seed": seed, "violation": log.any_violation, "min_surplus": float(log.min_surplus.min()),
                    "crossings": int(log.crossings.sum())})
    return out


def suite_validity(seeds: int = 50, K: int = 2000, delta: float = 0.1, runs: list[dict] | None = None) -> dict:
    t0 = time.perf_counter()
    runs = runs if runs is not None else bound_runs(seeds, K, delta)
    failing = sum(r["violation"] for r in runs)
    allowed = math.floor(delta * len(runs))
    return {"suite": "validity", "runs": len(runs), "K": K, "violating_runs": failing, "allowed": allowed,
            "seconds": time.perf_counter() - t0, "ok": failing <= allowed}


def suite_optimism(seeds: int = 50, K: int = 2000, delta: float = 0.1, runs: list[dict] | None = None,
                   tol: float = 1e-9) -> dict:
    t0 = time.perf_counter()
    runs = runs if runs is not None else bound_runs(seeds, K, delta)
    clean = [r for r in runs if not r["violation"]]
    worst = min((r["min_surplus"] for r in clean), default=None)
    return {"suite": "optimism", "clean_runs": len(clean), "min_surplus": worst, "tolerance": tol,
            "seconds": time.perf_counter() - t0, "ok": worst is None or worst >= -tol}


def suite_decomposition(seeds: int = 3, K: int = 300, tol: float = 1e-12) -> dict:
    t0 = time.perf_counter()
    reports = []
    for seed in range(seeds):
        inst = decomposition_instance(seed)
        for mode in (MULTITASK, INDIVIDUAL):
            log = run(inst, LearnerConfig(inst.declared_epsilon, BonusConfig.practical(), mode, seed), K)
            rep = check_regret_decomposition(inst, log, tol=tol)
            reports.append({"seed": seed, "mode": mode, **rep})
    return {"suite": "decomposition", "reports": reports, "seconds": time.perf_counter() - t0,
            "ok": all(r["ok"] and r["layer1_only_gaps"] for r in reports)}


def suite_degeneracy(seeds: int = 5, K: int = 500) -> dict:
    t0 = time.perf_counter()
    mismatches = []
    for seed in range(seeds):
        inst = gen_random(RandomInstanceConfig(3, 3, 3, 1, 0.0, seed=seed, layer_sizes=(3, 2, 2)))
        logs = [run(inst, LearnerConfig(0.0, BonusConfig.practical(), mode, seed), K) for mode in (MULTITASK, INDIVIDUAL)]
        if not np.array_equal(logs[0].policies, logs[1].policies):
            mismatches.append(seed)
    return {"suite": "degeneracy", "seeds": seeds, "K": K, "mismatched_seeds": mismatches,
            "seconds": time.perf_counter() - t0, "ok": not mismatches}


SUITES = ("oracle", "lemmas", "constructions", "validity", "optimism", "decomposition", "degeneracy")


def run_suites(names, seeds: int | None = None) -> list[dict]:
    results = []
    runs = None
    for name in names:
        kw = {} if seeds is None else {"seeds": seeds}
        if name in ("validity", "optimism"):
            if runs is None:
                runs = bound_runs(**kw)
            results.append((suite_validity if name == "validity" else suite_optimism)(runs=runs, **kw))
        elif name == "oracle":
            results.append(suite_oracle(**kw))
        elif name == "lemmas":
            results.append(suite_lemmas(**kw))
        elif name == "constructions":
            results.append(suite_constructions(**kw))
        elif name == "decomposition":
            results.append(suite_decomposition(**kw))
        elif name == "degeneracy":
            results.append(suite_degeneracy(**kw))
        else:
            raise KeyError(name)
    return results
