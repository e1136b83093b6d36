"""Command line front end: ``mtrl generate | run | verify``.

Exit codes: 0 ok, 1 validation error, 2 verification failure, 3 I/O error.
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .bonuses import BonusConfig
from .instances import (
    GAP_DEPENDENT,
    GAP_INDEPENDENT_CASE1,
    GAP_INDEPENDENT_CASE2,
    ConstraintViolation,
    HardInstanceParams,
    InfeasibleConfigError,
    RandomInstanceConfig,
    gen_gap_dependent_hard,
    gen_gap_independent_hard,
    gen_random,
)
from .learner import INDIVIDUAL, MODES, MULTITASK, LearnerConfig, run
from .mdp import InvalidMDPError
from .multitask import DissimilarityError, MultiTaskInstance, ShapeMismatchError, measure_dissimilarity, subpar_set
from .verify import SUITES, run_suites

log = logging.getLogger("mtrl")

EXIT_OK, EXIT_VALIDATION, EXIT_VERIFY, EXIT_IO = 0, 1, 2, 3
VALIDATION_ERRORS = (
    ConstraintViolation,
    InfeasibleConfigError,
    InvalidMDPError,
    DissimilarityError,
    ShapeMismatchError,
    ValueError,
    KeyError,
    TypeError,
)


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


def _dump(obj) -> str:
    return json.dumps(obj, indent=1, sort_keys=False) + "\n"


def _write(path: Path, text: str, force: bool = True) -> None:
    if path.exists() and not force:
        raise FileExistsError(f"{path} exists; pass --force to overwrite")
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="\n") as fh:
        fh.write(text)


# -- generate ----------------------------------------------------------------

VARIANT_FLAGS = {
    "random": "random",
    "gap-independent-case1": GAP_INDEPENDENT_CASE1,
    "gap-independent-case2": GAP_INDEPENDENT_CASE2,
    "gap-dependent": GAP_DEPENDENT,
}


def build_instance(params: dict) -> tuple[MultiTaskInstance, int | None]:
    """Dispatch a generator description to the matching constructor.

    Returns the instance and, for gap-independent variants, the promised
    lower bound on the number of subpar pairs.
    """
    p = dict(params)
    variant = VARIANT_FLAGS.get(p.pop("variant", p.pop("generator", "random")), None)
    if variant is None:
        raise ValueError(f"unknown variant {params.get('variant', params.get('generator'))!r}")
    if variant == "random":
        sizes = p.get("layer_sizes")
        H = int(p.get("H", len(sizes) if sizes else 2))
        s1 = int(p.get("s1", sizes[0] if sizes else 2))
        cfg = RandomInstanceConfig(
            s1, H, int(p.get("A", 2)), int(p.get("M", 1)), float(p.get("epsilon", 0.0)),
            float(p.get("reward_scale", 1.0)), int(p.get("seed", 0)), tuple(sizes) if sizes else None,
        )
        return gen_random(cfg), None
    if variant == GAP_DEPENDENT:
        table = p.get("delta_table")
        if table is None:
            raise ValueError("gap-dependent variant needs a delta table")
        hp = HardInstanceParams(variant, S=p.get("S"), A=np.asarray(table).shape[1], H=int(p.get("H", 2)),
                                M=np.asarray(table).shape[2], delta_table=np.asarray(table, dtype=float),
                                epsilon=float(p.get("epsilon", 0.0)))
        return gen_gap_dependent_hard(hp), None
    hp = HardInstanceParams(variant, S=p.get("S"), A=int(p.get("A", 2)), H=int(p.get("H", 2)), M=int(p.get("M", 1)),
                            K=p.get("K"), l=p.get("l"), optimal_actions=p.get("optimal_actions"),
                            seed=int(p.get("seed", 0)))
    return gen_gap_independent_hard(hp)


def gap_report(instance: MultiTaskInstance) -> dict:
    H = instance.horizon
    eps = instance.declared_epsilon
    d = measure_dissimilarity(instance)
    grid = sorted({0.0, eps / (768 * H), eps / (192 * H), eps / H, eps})
    return {
        "declared_epsilon": eps,
        "measured": d._asdict(),
        "subpar_sizes": [{"eps": e, "size": len(subpar_set(instance, e))} for e in grid],
    }


def cmd_generate(args) -> int:
    params = {}
    if args.params:
        params.update(json.loads(Path(args.params).read_text()))
    params["variant"] = args.variant or params.get("variant", "random")
    for key in ("S", "A", "H", "M", "K", "l", "s1", "epsilon", "seed", "reward_scale"):
        val = getattr(args, key)
        if val is not None:
            params[key] = val
    if args.layer_sizes:
        params["layer_sizes"] = [int(x) for x in args.layer_sizes.split(",")]
    if args.delta_table:
        obj = json.loads(Path(args.delta_table).read_text())
        params["delta_table"] = obj["delta_table"] if isinstance(obj, dict) else obj
    out = Path(args.out) if args.out else None
    if out is not None and out.exists() and not args.force:
        raise FileExistsError(f"{out} exists; pass --force to overwrite")

    instance, promised = build_instance(params)
    report = gap_report(instance)
    status = EXIT_OK
    if promised is not None:
        H = instance.horizon
        size = len(subpar_set(instance, instance.declared_epsilon / (192 * H)))
        report["promised_subpar_lower_bound"] = promised
        report["subpar_at_eps_over_192H"] = size
        if size < promised:
            status = EXIT_VERIFY
    text = _dump(instance.to_json())
    if out is None:
        sys.stdout.write(text)
    else:
        _write(out, text, force=True)
    sys.stderr.write(_format_gap_report(report))
    return status


def _format_gap_report(report: dict) -> str:
    m = report["measured"]
    lines = [
        f"declared epsilon   {report['declared_epsilon']:.6g}",
        f"measured epsilon   reward {m['eps_reward']:.6g}  transition {m['eps_transition']:.6g}  min {m['eps_min']:.6g}",
        "eps          |I_eps|",
    ]
    lines += [f"{row['eps']:<12.6g} {row['size']}" for row in report["subpar_sizes"]]
    if "promised_subpar_lower_bound" in report:
        lines.append(f"|I_(eps/192H)| = {report['subpar_at_eps_over_192H']} (promised >= {report['promised_subpar_lower_bound']})")
    return "\n".join(lines) + "\n"


# -- run ---------------------------------------------------------------------


@dataclass
class ExperimentSpec:
    instance: dict | str
    configs: list[dict]
    K: int
    seeds: list[int]
    output_dir: str = "results"
    emit: dict = field(default_factory=lambda: {"regret_csv": True, "summary_json": True, "plotdata": True})
    base_dir: Path = field(default_factory=Path.cwd)

    def check(self) -> None:
        if not self.seeds:
            raise ValueError("experiment needs at least one seed")
        if self.K < 0:
            raise ValueError("K must be nonnegative")
        if not self.configs:
            raise ValueError("experiment needs at least one learner config")
        names = [c.get("name", c.get("mode", MULTITASK)) for c in self.configs]
        if len(set(names)) != len(names):
            raise ValueError("learner config names must be unique")

    @classmethod
    def from_json(cls, obj: dict, base_dir: Path | None = None) -> "ExperimentSpec":
        return cls(obj["instance"], list(obj["configs"]), int(obj["K"]), [int(s) for s in obj["seeds"]],
                   obj.get("output_dir", "results"),
                   {"regret_csv": True, "summary_json": True, "plotdata": True, **obj.get("emit", {})},
                   base_dir or Path.cwd())

    def load_instance(self) -> MultiTaskInstance:
        if isinstance(self.instance, str):
            path = Path(self.instance)
            if not path.is_absolute():
                path = self.base_dir / path
            return MultiTaskInstance.from_json(json.loads(path.read_text()))
        return build_instance(self.instance)[0]


def learner_config(entry: dict, instance: MultiTaskInstance, seed: int) -> LearnerConfig:
    mode = entry.get("mode", MULTITASK)
    if mode not in MODES:
        raise ValueError(f"unknown mode {mode!r}")
    bonus = BonusConfig.from_preset(entry.get("preset", "practical"), float(entry.get("delta", 0.1)))
    eps = entry.get("epsilon_input")
    return LearnerConfig(instance.declared_epsilon if eps is None else float(eps), bonus, mode, seed)


def _one_run(job):
    instance, entry, seed, K = job
    log_ = run(instance, learner_config(entry, instance, seed), K)
    return entry.get("name", entry.get("mode", MULTITASK)), seed, log_.to_csv(), log_.cumulative, log_.summary()


def _workers() -> int:
    try:
        return max(1, int(os.environ.get("MTRL_THREADS", "1")))
    except ValueError:
        return 1


def execute(spec: ExperimentSpec, threads: int | None = None) -> dict:
    """Run every (config, seed) pair and write the requested artifacts."""
    spec.check()
    instance = spec.load_instance()
    out = Path(spec.output_dir)
    if not out.is_absolute():
        out = spec.base_dir / out
    jobs = [(instance, c, s, spec.K) for c in spec.configs for s in spec.seeds]
    threads = threads or _workers()
    if threads > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(_one_run, jobs))
    else:
        results = [_one_run(j) for j in jobs]

    names = [c.get("name", c.get("mode", MULTITASK)) for c in spec.configs]
    curves = {n: np.stack([r[3] for r in results if r[0] == n]) for n in names}
    if spec.emit.get("regret_csv", True):
        for name, seed, text, _, _ in results:
            _write(out / "runs" / f"{name}_seed{seed}.csv", text)

    K = spec.K
    checkpoints = sorted({max(1, K // 10), max(1, K // 2), K}) if K > 0 else []
    summary = {"K": K, "seeds": spec.seeds, "checkpoints": checkpoints, "configs": {}}
    for entry, name in zip(spec.configs, names):
        c = curves[name]
        summary["configs"][name] = {
            "mode": entry.get("mode", MULTITASK),
            "final_mean": float(c[:, -1].mean()) if K else 0.0,
            "final_std": float(c[:, -1].std()) if K else 0.0,
            "checkpoints": [{"K": k, "mean": float(c[:, k - 1].mean()), "std": float(c[:, k - 1].std())}
                            for k in checkpoints],
            "violating_runs": sum(int(r[4]["violation_episodes"] > 0) for r in results if r[0] == name),
        }
    modes = {entry.get("mode", MULTITASK): name for entry, name in reversed(list(zip(spec.configs, names)))}
    if MULTITASK in modes and INDIVIDUAL in modes and K:
        mt, ind = curves[modes[MULTITASK]], curves[modes[INDIVIDUAL]]
        summary["ratio_multitask_over_individual"] = [
            {"K": k, "ratio": float(mt[:, k - 1].mean() / ind[:, k - 1].mean()) if ind[:, k - 1].mean() > 0 else None}
            for k in checkpoints
        ]
    if spec.emit.get("summary_json", True):
        _write(out / "summary.json", _dump(summary))
    if spec.emit.get("plotdata", True):
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["episode"] + [f"{n}_{stat}" for n in names for stat in ("mean", "std")])
        for k in range(K):
            row = [k + 1]
            for n in names:
                row += [repr(float(curves[n][:, k].mean())), repr(float(curves[n][:, k].std()))]
            w.writerow(row)
        _write(out / "plotdata.csv", buf.getvalue())
    return summary


def cmd_run(args) -> int:
    spec_path = Path(args.spec)
    spec = ExperimentSpec.from_json(json.loads(spec_path.read_text()), spec_path.parent.resolve())
    if args.K is not None:
        spec.K = args.K
    if args.seeds:
        spec.seeds = [int(s) for s in args.seeds.split(",")]
    if args.out:
        spec.output_dir = str(Path(args.out).resolve())
    summary = execute(spec, args.threads)
    for name, stats in summary["configs"].items():
        sys.stderr.write(f"{name:<24} regret after K={spec.K}: {stats['final_mean']:.4g} +/- {stats['final_std']:.3g}\n")
    return EXIT_OK


# -- verify ------------------------------------------------------------------


def cmd_verify(args) -> int:
    names = args.suite or list(SUITES)
    results = run_suites(names, args.seeds)
    failed = [r["suite"] for r in results if not r["ok"]]
    for r in results:
        sys.stderr.write(f"{r['suite']:<14} {'PASS' if r['ok'] else 'FAIL'}\n")
    if args.report:
        _write(Path(args.report), _dump({"suites": results, "failed": failed}))
    if failed:
        sys.stderr.write(_dump({"failed": [r for r in results if not r["ok"]]}))
        return EXIT_VERIFY
    return EXIT_OK


def make_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="mtrl", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    g = sub.add_parser("generate", help="write an instance JSON and print its gap report")
    g.add_argument("--variant", choices=sorted(VARIANT_FLAGS))
    g.add_argument("--params", help="JSON file with generator parameters (flags override)")
    for key, typ in (("S", int), ("A", int), ("H", int), ("M", int), ("K", int), ("l", int), ("s1", int),
                     ("epsilon", float), ("seed", int), ("reward_scale", float)):
        g.add_argument(f"--{key.replace('_', '-')}", dest=key, type=typ)
    g.add_argument("--layer-sizes", help="comma-separated layer sizes (random variant)")
    g.add_argument("--delta-table", help="JSON file with a (S1, A, M) gap table")
    g.add_argument("--out", help="output path (stdout if omitted)")
    g.add_argument("--force", action="store_true", help="overwrite an existing output file")
    g.set_defaults(func=cmd_generate)

    r = sub.add_parser("run", help="execute an experiment spec")
    r.add_argument("spec", help="experiment spec JSON")
    r.add_argument("--K", type=int)
    r.add_argument("--seeds", help="comma-separated seeds")
    r.add_argument("--out", help="output directory")
    r.add_argument("--threads", type=int, help="worker processes (default: MTRL_THREADS or 1)")
    r.set_defaults(func=cmd_run)

    v = sub.add_parser("verify", help="run property suites")
    v.add_argument("--suite", action="append", choices=SUITES)
    v.add_argument("--seeds", type=int, help="override the per-suite instance/seed count")
    v.add_argument("--report", help="write a JSON report here")
    v.set_defaults(func=cmd_verify)
    return parser


def main(argv=None) -> int:
    parser = make_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as exc:
        sys.stderr.write(f"{parser.format_usage()}{exc}\n")
        return EXIT_VALIDATION
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING, format="%(message)s")
    try:
        return args.func(args)
    except OSError as exc:
        sys.stderr.write(f"error: {exc}\n")
        return EXIT_IO
    except VALIDATION_ERRORS as exc:
        sys.stderr.write(f"error: {exc}\n")
        return EXIT_VALIDATION


if __name__ == "__main__":
    sys.exit(main())
