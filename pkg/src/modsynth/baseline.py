"""Two-level GA baseline with a scalar exponential fitness.

Stage one runs the same genetic operators as the main optimizer but ranks
individuals by f_B = exp(-(k1*R + k2*L + k3*A + k4*D + k5*n_M + k6*n_J
+ k7*V)) + k8*P after an elimination pre-filter on the first and last
goal. Stage two plans full trajectories for the best 25 distinct
assemblies and keeps the cheapest one.

The criteria are reconstructions around IK witnesses per goal: L and A are
summed residual position/angle errors, D sums capped inverse
manipulability, V sums L1 distances between consecutive witnesses, and P
is the fraction of reachable goals. The reliability term R defaults to a
pluggable zero.
"""

from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field
from math import ceil, exp, inf

import numpy as np

from . import fitness, geometry, kinematics, planner, tasks
from .evolve import (
    GaConfig,
    Genes,
    RunHistory,
    GenerationRecord,
    crossover,
    decode,
    init_population,
    mutate,
)
from .modlib import Assembly, ModuleLibrary
from .seeding import derive_seed

logger = logging.getLogger(__name__)

_MANIP_FLOOR = 1e-9
_DEXTERITY_CAP = 1e3
STAGE2_CANDIDATES = 25


@dataclass(frozen=True)
class BaselineWeights:
    k1: float = 0.0
    k2: float = 1.0
    k3: float = 1.0
    k4: float = 0.1
    k5: float = 0.1
    k6: float = 0.5
    k7: float = 0.1
    k8: float = 1.0

    def __post_init__(self):
        values = (self.k1, self.k2, self.k3, self.k4, self.k5, self.k6, self.k7, self.k8)
        if any(v < 0 for v in values):
            raise ValueError("baseline weights must be nonnegative")
        if all(v == 0 for v in values):
            raise ValueError("baseline weights must not all be zero")


def eliminate(
    assembly: Assembly, task: tasks.Task, seed: int = 0,
    opts: kinematics.IkOptions | None = None,
) -> bool:
    """Keep only assemblies that reach the first and last goal collision-free."""

    def colliding(q):
        return geometry.in_collision(
            assembly, q, task.scene, self_check=False, base_pose=task.base_pose
        )

    for gi in {0, task.n_goals - 1}:
        witness = kinematics.ik(
            assembly, task.goals[gi].pose, task.tol_for(gi), opts=opts,
            rng_seed=derive_seed(seed, "ik", gi), reject=colliding,
            base_pose=task.base_pose,
        )
        if witness is None:
            return False
    return True


def baseline_fitness(
    assembly: Assembly,
    task: tasks.Task,
    weights: BaselineWeights | None = None,
    seed: int = 0,
    opts: kinematics.IkOptions | None = None,
    reliability=None,
) -> float:
    """Scalar fitness over kinematic criteria at per-goal IK witnesses."""
    weights = weights or BaselineWeights()
    results = [
        kinematics.ik_detailed(
            assembly, goal.pose, task.tol_for(gi), opts=opts,
            rng_seed=derive_seed(seed, "ik", gi), base_pose=task.base_pose,
        )
        for gi, goal in enumerate(task.goals)
    ]
    linear = sum(r.pos_err for r in results)
    angular = sum(r.ang_err for r in results)
    dexterity = sum(
        min(1.0 / max(kinematics.manipulability(assembly, r.q, task.base_pose), _MANIP_FLOOR),
            _DEXTERITY_CAP)
        for r in results
    )
    joint_travel = sum(
        float(np.sum(np.abs(results[i + 1].q - results[i].q)))
        for i in range(len(results) - 1)
    )
    reachable_fraction = sum(r.success for r in results) / task.n_goals
    r_term = reliability(assembly, task) if reliability is not None else 0.0
    exponent = (
        weights.k1 * r_term
        + weights.k2 * linear
        + weights.k3 * angular
        + weights.k4 * dexterity
        + weights.k5 * assembly.n_modules
        + weights.k6 * assembly.n_joints
        + weights.k7 * joint_travel
    )
    return exp(-exponent) + weights.k8 * reachable_fraction


@dataclass
class Stage2Entry:
    module_ids: tuple[int, ...]
    f_b: float
    solved: bool
    cost: float | None
    n_joints: int
    t_max: float | None


@dataclass
class BaselineResult:
    best_genes: Genes | None
    best_assembly: Assembly | None
    best_trajectory: planner.Trajectory | None
    best_cost: float | None
    history: RunHistory
    stage2: list[Stage2Entry]


def run_baseline(
    library: ModuleLibrary,
    task: tasks.Task,
    config: GaConfig | None = None,
    weights: fitness.CostWeights | None = None,
    bweights: BaselineWeights | None = None,
    eval_opts: fitness.EvalOptions | None = None,
) -> BaselineResult:
    """Stage-one scalar GA, then trajectory planning for the 25 finalists."""
    config = config or GaConfig()
    weights = weights or fitness.CostWeights()
    bweights = bweights or BaselineWeights()
    eval_opts = eval_opts or fitness.EvalOptions()

    rng_ops = np.random.default_rng(derive_seed(config.seed, "operators"))
    population = init_population(library, config)
    history = RunHistory()
    archive: dict[tuple[int, ...], tuple[float, Genes]] = {}

    def rank_key(i, score):
        assembly = decode(library, population[i])
        return (-score, assembly.n_joints, assembly.n_modules, i)

    for gen in range(config.generations):
        start = time.perf_counter()
        scores = []
        for i, genes in enumerate(population):
            assembly = decode(library, genes)
            seed_i = derive_seed(config.seed, "eval", gen, i)
            if not eliminate(assembly, task, seed=seed_i, opts=eval_opts.ik):
                scores.append(-inf)
                continue
            score = baseline_fitness(
                assembly, task, weights=bweights, seed=seed_i, opts=eval_opts.ik
            )
            scores.append(score)
            key = assembly.module_ids
            if key not in archive or archive[key][0] < score:
                archive[key] = (score, genes)

        order = sorted(range(len(population)), key=lambda i: rank_key(i, scores[i]))
        best_idx = order[0]
        depth_hist = {1: sum(1 for s in scores if s == -inf),
                      2: sum(1 for s in scores if s > -inf)}
        history.records.append(
            GenerationRecord(
                generation=gen,
                best_fitness=fitness.FitnessVector(
                    f1=1 if scores[best_idx] > -inf else 0, evaluated_depth=1
                ),
                best_genes=population[best_idx],
                depth_histogram=depth_hist,
                n_feasible=depth_hist[2],
                wall_ms=(time.perf_counter() - start) * 1e3,
            )
        )

        if gen == config.generations - 1:
            break
        n_keep = ceil(config.parent_fraction * len(population))
        parents = [population[i] for i in order[:n_keep]]
        next_pop = list(parents)
        while len(next_pop) < config.population:
            if len(parents) == 1:
                child = parents[0]
            else:
                i = int(rng_ops.integers(len(parents)))
                j = int(rng_ops.integers(len(parents) - 1))
                if j >= i:
                    j += 1
                child = crossover(parents[i], parents[j], rng_ops, library)
            next_pop.append(mutate(child, library, config.p_m, rng_ops))
        population = next_pop

    finalists = sorted(archive.items(), key=lambda kv: -kv[1][0])[:STAGE2_CANDIDATES]
    stage2: list[Stage2Entry] = []
    best: tuple[float, Genes, Assembly, planner.Trajectory] | None = None
    for rank, (ids, (score, genes)) in enumerate(finalists):
        assembly = decode(library, genes)
        trajectory = planner.solve_task(
            assembly, task, eval_opts.plan, seed=derive_seed(config.seed, "stage2", rank)
        )
        if trajectory is None:
            stage2.append(Stage2Entry(ids, score, False, None, assembly.n_joints, None))
            continue
        cost = weights.cost(assembly.n_joints, assembly.n_modules, trajectory.t_max)
        stage2.append(Stage2Entry(ids, score, True, cost, assembly.n_joints, trajectory.t_max))
        if best is None or cost < best[0]:
            best = (cost, genes, assembly, trajectory)

    if best is None:
        return BaselineResult(None, None, None, None, history, stage2)
    return BaselineResult(
        best_genes=best[1],
        best_assembly=best[2],
        best_trajectory=best[3],
        best_cost=best[0],
        history=history,
        stage2=stage2,
    )
