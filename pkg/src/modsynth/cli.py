"""Command-line driver.

Subcommands: optimize (lexicographic GA), baseline (two-level GA),
gen-tasks (synthetic task files), evaluate (single assembly fitness),
report (aggregate run artifacts). Exit codes: 0 success, 1 input error,
2 ran but found no feasible solution.

All randomness flows from --seed through named sub-streams; with
--parallelism 1 every artifact is byte-reproducible. Wall-clock timings
live in history.json only, keeping history.csv deterministic.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from . import baseline as baseline_mod
from . import evolve, fitness, kinematics, planner, tasks
from .modlib import ModuleLibrary, assemble
from .seeding import derive_seed

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_ERROR = 1
EXIT_NO_SOLUTION = 2


@dataclass
class RunConfig:
    modules: str = ""
    task: str = ""
    out: str = "out"
    seed: int = 0
    generations: int = 200
    population: int = 25
    n_c: int = 12
    p_m: float = 0.1
    p_j: float = 0.9
    parent_fraction: float = 0.4
    parallelism: int = 1
    timeout_s: float = 3.0
    ik_restarts: int = 20
    ik_iters: int = 150
    iterations_per_s: float = 400.0
    dt: float = 0.01
    w_s: float = 1.0
    w_p: float = 1.0
    c_J: float = 1.0
    c_M: float = 0.2
    c_t: float = 1.0
    baseline_k: list[float] = field(
        default_factory=lambda: [0.0, 1.0, 1.0, 0.1, 0.1, 0.5, 0.1, 1.0]
    )


def _load_config(args) -> RunConfig:
    cfg = RunConfig()
    if getattr(args, "config", None):
        file_values = json.loads(Path(args.config).read_text())
        for key, value in file_values.items():
            if not hasattr(cfg, key):
                raise ValueError(f"unknown config key {key!r}")
            setattr(cfg, key, value)
    for key in vars(cfg):
        flag = getattr(args, key, None)
        if flag is not None:
            setattr(cfg, key, flag)
    return cfg


def _ga_config(cfg: RunConfig) -> evolve.GaConfig:
    return evolve.GaConfig(
        n_c=cfg.n_c,
        population=cfg.population,
        generations=cfg.generations,
        p_m=cfg.p_m,
        p_j=cfg.p_j,
        parent_fraction=cfg.parent_fraction,
        seed=cfg.seed,
    )


def _weights(cfg: RunConfig) -> fitness.CostWeights:
    return fitness.CostWeights(w_s=cfg.w_s, w_p=cfg.w_p, c_J=cfg.c_J, c_M=cfg.c_M, c_t=cfg.c_t)


def _eval_opts(cfg: RunConfig) -> fitness.EvalOptions:
    ik = kinematics.IkOptions(max_restarts=cfg.ik_restarts, max_iters=cfg.ik_iters)
    plan = planner.PlanOptions(
        timeout_s=cfg.timeout_s, iterations_per_s=cfg.iterations_per_s, dt=cfg.dt
    )
    return fitness.EvalOptions(ik=ik, plan=plan)


def _fitness_dict(fv: fitness.FitnessVector) -> dict:
    return {
        "f1": fv.f1,
        "f2": fv.f2,
        "f3": fv.f3,
        "f4": None if fv.f4 is None or not np.isfinite(fv.f4) else fv.f4,
        "f4_is_neg_inf": fv.f4 is not None and not np.isfinite(fv.f4),
        "depth": fv.evaluated_depth,
    }


def _write_json(path: Path, payload: dict) -> None:
    path.write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n")


def _solution_payload(cfg, genes, fv, assembly, trajectory, cost) -> dict:
    return {
        "task": cfg.task,
        "modules": cfg.modules,
        "seed": cfg.seed,
        "genes": list(genes),
        "module_ids": list(assembly.module_ids) if assembly else [],
        "fitness": _fitness_dict(fv),
        "achieved": trajectory is not None,
        "cost": cost,
        "n_joints": assembly.n_joints if assembly else None,
        "n_modules": assembly.n_modules if assembly else None,
        "t_max": trajectory.t_max if trajectory is not None else None,
        "weights": {"w_s": cfg.w_s, "w_p": cfg.w_p, "c_J": cfg.c_J,
                    "c_M": cfg.c_M, "c_t": cfg.c_t},
    }


def cmd_optimize(args) -> int:
    try:
        cfg = _load_config(args)
        library = ModuleLibrary.load(cfg.modules)
        task = tasks.Task.load(cfg.task)
    except Exception as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    _write_json(out / "config_resolved.json", asdict(cfg))

    result = evolve.run(
        library, task, config=_ga_config(cfg), weights=_weights(cfg),
        eval_opts=_eval_opts(cfg), parallelism=cfg.parallelism,
    )
    achieved = result.best_trajectory is not None
    cost = None
    if achieved:
        cost = _weights(cfg).cost(
            result.best_assembly.n_joints,
            result.best_assembly.n_modules,
            result.best_trajectory.t_max,
        )
        (out / "trajectory.json").write_text(
            json.dumps(result.best_trajectory.to_json_dict()) + "\n"
        )
    _write_json(
        out / "solution.json",
        _solution_payload(cfg, result.best_genes, result.best_fitness,
                          result.best_assembly, result.best_trajectory, cost),
    )
    (out / "history.csv").write_text(result.history.to_csv())
    _write_json(out / "history.json", result.history.to_json_dict())
    return EXIT_OK if achieved else EXIT_NO_SOLUTION


def cmd_baseline(args) -> int:
    try:
        cfg = _load_config(args)
        library = ModuleLibrary.load(cfg.modules)
        task = tasks.Task.load(cfg.task)
        bweights = baseline_mod.BaselineWeights(*cfg.baseline_k)
    except Exception as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    _write_json(out / "config_resolved.json", asdict(cfg))

    result = baseline_mod.run_baseline(
        library, task, config=_ga_config(cfg), weights=_weights(cfg),
        bweights=bweights, eval_opts=_eval_opts(cfg),
    )
    achieved = result.best_trajectory is not None
    if achieved:
        (out / "trajectory.json").write_text(
            json.dumps(result.best_trajectory.to_json_dict()) + "\n"
        )
        payload = _solution_payload(
            cfg, result.best_genes, fitness.FitnessVector(f1=1),
            result.best_assembly, result.best_trajectory, result.best_cost,
        )
    else:
        payload = {
            "task": cfg.task, "modules": cfg.modules, "seed": cfg.seed,
            "achieved": False, "cost": None, "genes": [], "module_ids": [],
            "n_joints": None, "n_modules": None, "t_max": None,
            "weights": {"w_s": cfg.w_s, "w_p": cfg.w_p, "c_J": cfg.c_J,
                        "c_M": cfg.c_M, "c_t": cfg.c_t},
        }
    _write_json(out / "solution.json", payload)
    (out / "history.csv").write_text(result.history.to_csv())
    _write_json(out / "history.json", result.history.to_json_dict())
    rows = ["module_ids,f_b,solved,cost,n_joints,t_max"]
    for entry in result.stage2:
        ids = "|".join(str(i) for i in entry.module_ids)
        rows.append(
            f"{ids},{entry.f_b!r},{int(entry.solved)},"
            f"{'' if entry.cost is None else repr(entry.cost)},"
            f"{entry.n_joints},{'' if entry.t_max is None else repr(entry.t_max)}"
        )
    (out / "stage2.csv").write_text("\n".join(rows) + "\n")
    return EXIT_OK if achieved else EXIT_NO_SOLUTION


def cmd_gen_tasks(args) -> int:
    generators = {
        "synthetic1": tasks.generate_synthetic1,
        "synthetic2": tasks.generate_synthetic2,
    }
    try:
        generator = generators[args.setting]
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
    except KeyError:
        print(f"error: unknown setting {args.setting!r}", file=sys.stderr)
        return EXIT_ERROR
    for index in range(args.count):
        emitted = False
        for attempt in range(100):
            task = generator(args.d, derive_seed(args.seed, "task", index, attempt))
            if tasks.plausibly_solvable(task, reach_estimate=args.reach):
                task.save(out / f"task_{args.setting}_d{args.d}_{index:03d}.json")
                emitted = True
                break
        if not emitted:
            print(f"error: no plausibly solvable task after 100 attempts (index {index})",
                  file=sys.stderr)
            return EXIT_ERROR
    return EXIT_OK


def cmd_evaluate(args) -> int:
    try:
        library = ModuleLibrary.load(args.modules)
        task = tasks.Task.load(args.task)
        ids = [int(token) for token in args.ids.split(",") if token.strip()]
        assembly = assemble(library, ids)
    except Exception as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR
    weights = fitness.CostWeights()
    opts = fitness.EvalOptions()
    fv = fitness.evaluate(assembly, task, weights=weights, opts=opts, seed=args.seed)
    payload = {
        "module_ids": list(assembly.module_ids),
        "fitness": _fitness_dict(fv),
        "stage_times_s": list(fv.stage_times),
    }
    if fv.feasible:
        trajectory = fitness.resolve_trajectory(assembly, task, opts=opts, seed=args.seed)
        if trajectory is not None:
            payload["cost_breakdown"] = {
                "C_T": -fv.f4,
                "n_joints": assembly.n_joints,
                "n_modules": assembly.n_modules,
                "t_max": trajectory.t_max,
            }
    print(json.dumps(payload, indent=2, sort_keys=True))
    return EXIT_OK


def _bootstrap_ci(values, rng, resamples=1000):
    values = np.asarray(values, dtype=float)
    if len(values) == 0:
        return None, None, None
    means = [
        float(np.mean(values[rng.integers(0, len(values), size=len(values))]))
        for _ in range(resamples)
    ]
    return float(np.mean(values)), float(np.percentile(means, 2.5)), float(
        np.percentile(means, 97.5)
    )


def cmd_report(args) -> int:
    try:
        payloads = [json.loads(Path(p).read_text()) for p in args.solutions]
        if not payloads:
            raise ValueError("no solution files given")
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
    except Exception as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR

    rows = ["file,achieved,cost,n_joints,t_max"]
    for path, data in zip(args.solutions, payloads):
        rows.append(
            f"{path},{int(bool(data.get('achieved')))},"
            f"{'' if data.get('cost') is None else data['cost']},"
            f"{'' if data.get('n_joints') is None else data['n_joints']},"
            f"{'' if data.get('t_max') is None else data['t_max']}"
        )
    (out / "summary.csv").write_text("\n".join(rows) + "\n")

    groups: dict[float, list[dict]] = {}
    for data in payloads:
        w = data.get("weights", {})
        groups.setdefault(float(w.get("c_J", 1.0)), []).append(data)
    rng = np.random.default_rng(0)
    series = ["w_J,n_solved,mean_cost,cost_lo,cost_hi,mean_n_joints,nj_lo,nj_hi,"
              "mean_t_max,tmax_lo,tmax_hi"]
    for w_j in sorted(groups):
        achieved = [d for d in groups[w_j] if d.get("achieved")]
        cost = _bootstrap_ci([d["cost"] for d in achieved], rng)
        n_j = _bootstrap_ci([d["n_joints"] for d in achieved], rng)
        t_max = _bootstrap_ci([d["t_max"] for d in achieved], rng)

        def fmt(triple):
            return ",".join("" if v is None else f"{v:.6g}" for v in triple)

        series.append(f"{w_j:.6g},{len(achieved)},{fmt(cost)},{fmt(n_j)},{fmt(t_max)}")
    (out / "sweep.csv").write_text("\n".join(series) + "\n")
    return EXIT_OK


def _add_run_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--modules", required=True, help="module-library JSON file")
    parser.add_argument("--task", required=True, help="task JSON file")
    parser.add_argument("--config", help="JSON file with RunConfig overrides")
    parser.add_argument("--out", default=None, help="output directory")
    parser.add_argument("--seed", type=int, default=None)
    parser.add_argument("--generations", type=int, default=None)
    parser.add_argument("--population", type=int, default=None)
    parser.add_argument("--parallelism", type=int, default=None)
    parser.add_argument("--timeout-s", dest="timeout_s", type=float, default=None)
    parser.add_argument("--n-c", dest="n_c", type=int, default=None)
    parser.add_argument("--p-m", dest="p_m", type=float, default=None)
    parser.add_argument("--p-j", dest="p_j", type=float, default=None)
    parser.add_argument("--parent-fraction", dest="parent_fraction", type=float, default=None)
    parser.add_argument("--ik-restarts", dest="ik_restarts", type=int, default=None)
    parser.add_argument("--c-J", dest="c_J", type=float, default=None)
    parser.add_argument("--c-M", dest="c_M", type=float, default=None)
    parser.add_argument("--c-t", dest="c_t", type=float, default=None)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="modsynth",
        description="Synthesize task-optimal modular manipulator compositions.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_opt = sub.add_parser("optimize", help="run the lexicographic GA")
    _add_run_flags(p_opt)
    p_opt.set_defaults(func=cmd_optimize)

    p_base = sub.add_parser("baseline", help="run the hierarchical-elimination baseline")
    _add_run_flags(p_base)
    p_base.set_defaults(func=cmd_baseline)

    p_gen = sub.add_parser("gen-tasks", help="generate synthetic task files")
    p_gen.add_argument("--setting", choices=["synthetic1", "synthetic2"], required=True)
    p_gen.add_argument("--d", type=int, required=True, help="difficulty (goal/obstacle count)")
    p_gen.add_argument("--count", type=int, default=20)
    p_gen.add_argument("--seed", type=int, default=0)
    p_gen.add_argument("--out", required=True)
    p_gen.add_argument("--reach", type=float, default=1.5,
                       help="reach estimate for the solvability pre-filter")
    p_gen.set_defaults(func=cmd_gen_tasks)

    p_eval = sub.add_parser("evaluate", help="evaluate one assembly on a task")
    p_eval.add_argument("--modules", required=True)
    p_eval.add_argument("--task", required=True)
    p_eval.add_argument("--ids", required=True, help="comma-separated module ids")
    p_eval.add_argument("--seed", type=int, default=0)
    p_eval.set_defaults(func=cmd_evaluate)

    p_rep = sub.add_parser("report", help="aggregate solution.json files")
    p_rep.add_argument("solutions", nargs="+", help="solution.json paths")
    p_rep.add_argument("--out", required=True)
    p_rep.set_defaults(func=cmd_report)
    return parser


def main(argv=None) -> int:
    level = os.environ.get("MODSYNTH_LOG", "WARNING").upper()
    logging.basicConfig(level=getattr(logging, level, logging.WARNING))
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
