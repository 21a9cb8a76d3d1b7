"""Lexicographic fitness with staged early-stop evaluation.

Stages, in order of increasing cost: reach upper bound (f1), goals
reachable by IK ignoring collisions (f2), goals reachable collision-free
(f3), and the negative task cost after full motion planning (f4).
Evaluation stops at the first stage that misses its maximum, so unfit
candidates never pay for motion planning. f2 and f3 share per-goal IK
seeds, which guarantees f3 <= f2.
"""

from __future__ import annotations

import time
from collections import OrderedDict
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

from . import geometry, kinematics, planner, se3, tasks
from .modlib import Assembly, ModuleLibrary, Module, assemble
from .seeding import derive_seed

LESS, EQUAL, GREATER = -1, 0, 1

_NEG_INF = float("-inf")


@dataclass(frozen=True, eq=False)
class FitnessVector:
    """Objective tuple (f1, f2, f3, f4); fields beyond evaluated_depth are None."""

    f1: int
    f2: int | None = None
    f3: int | None = None
    f4: float | None = None
    evaluated_depth: int = 1
    stage_times: tuple[float, ...] = ()

    def key(self) -> tuple:
        """Total-order key: unset stages compare as the minimum of their range."""
        return (
            self.f1,
            self.f2 if self.f2 is not None else _NEG_INF,
            self.f3 if self.f3 is not None else _NEG_INF,
            self.f4 if self.f4 is not None else _NEG_INF,
        )

    @property
    def feasible(self) -> bool:
        return self.evaluated_depth == 4 and self.f4 is not None and np.isfinite(self.f4)


def lex_compare(a: FitnessVector, b: FitnessVector) -> int:
    """-1, 0, or +1 for a <, =, > b in the lexicographic order."""
    ka, kb = a.key(), b.key()
    if ka < kb:
        return LESS
    if ka > kb:
        return GREATER
    return EQUAL


@dataclass(frozen=True)
class CostWeights:
    """Task cost C_T = w_s*(c_J*n_J + c_M*n_M) + w_p*(c_t*t_max)."""

    w_s: float = 1.0
    w_p: float = 1.0
    c_J: float = 1.0
    c_M: float = 0.2
    c_t: float = 1.0

    def __post_init__(self):
        if min(self.w_s, self.w_p, self.c_J, self.c_M, self.c_t) < 0:
            raise ValueError("cost weights must be nonnegative")
        if max(self.w_s, self.w_p) <= 0:
            raise ValueError("at least one of w_s, w_p must be positive")

    def cost(self, n_joints: int, n_modules: int, t_max: float) -> float:
        return self.w_s * (self.c_J * n_joints + self.c_M * n_modules) + self.w_p * (
            self.c_t * t_max
        )


@dataclass
class EvalOptions:
    ik: kinematics.IkOptions = field(default_factory=kinematics.IkOptions)
    plan: planner.PlanOptions = field(default_factory=planner.PlanOptions)

    def __post_init__(self):
        # one IK budget shared by the goal stages and the planner witnesses
        self.plan.ik = self.ik


# --- module reach ------------------------------------------------------------


@lru_cache(maxsize=4096)
def module_reach(module: Module, samples: int = 100) -> float:
    """Max distance between proximal and distal connector over the joint range."""
    from_proximal = se3.invert(module.proximal.frame)

    def span_at(qs) -> float:
        current = from_proximal
        for spec, qv in zip(module.joints, qs):
            motion = se3.joint_motion(spec.kind, spec.axis, qv)
            current = current @ spec.parent_frame @ motion @ se3.invert(spec.child_frame)
        current = current @ module.distal.frame
        return float(np.linalg.norm(current[:3, 3]))

    n_joints = module.n_joints
    if n_joints == 0:
        return span_at(())
    per_axis = samples + 1 if n_joints == 1 else max(3, int(round(samples ** (1.0 / n_joints))))
    grids = [
        np.linspace(spec.q_limits[0], spec.q_limits[1], per_axis) for spec in module.joints
    ]
    best = 0.0
    for qs in np.stack(np.meshgrid(*grids, indexing="ij"), axis=-1).reshape(-1, n_joints):
        best = max(best, span_at(qs))
    return best


def assembly_reach(assembly: Assembly) -> float:
    return sum(module_reach(m) for m in assembly.modules)


# --- stages ------------------------------------------------------------------


def f1_reach_upper_bound(assembly: Assembly, task: tasks.Task) -> int:
    """1 iff the summed module spans cover the farthest goal from the base."""
    base_point = task.base_pose[:3, 3]
    farthest = max(np.linalg.norm(g.pose.p - base_point) for g in task.goals)
    return 1 if assembly_reach(assembly) >= farthest else 0


def _goal_seed(seed: int, goal_index: int) -> int:
    # shared between f2 and f3 so that identical searches keep f3 <= f2
    return derive_seed(seed, "ik", goal_index)


def f2_reachable_goals(
    assembly: Assembly, task: tasks.Task, seed: int = 0,
    opts: kinematics.IkOptions | None = None,
) -> int:
    """Number of goals with an in-limits IK witness, collisions ignored."""
    count = 0
    for gi, goal in enumerate(task.goals):
        q = kinematics.ik(
            assembly, goal.pose, task.tol_for(gi), opts=opts,
            rng_seed=_goal_seed(seed, gi), base_pose=task.base_pose,
        )
        if q is not None:
            count += 1
    return count


def f3_collision_free_goals(
    assembly: Assembly, task: tasks.Task, seed: int = 0,
    opts: kinematics.IkOptions | None = None,
) -> int:
    """Number of goals with an IK witness clear of the obstacle scene."""

    def colliding(q):
        return geometry.in_collision(
            assembly, q, task.scene, self_check=False, base_pose=task.base_pose
        )

    count = 0
    for gi, goal in enumerate(task.goals):
        q = kinematics.ik(
            assembly, goal.pose, task.tol_for(gi), opts=opts,
            rng_seed=_goal_seed(seed, gi), reject=colliding, base_pose=task.base_pose,
        )
        if q is not None:
            count += 1
    return count


def f4_cost(
    assembly: Assembly,
    task: tasks.Task,
    weights: CostWeights | None = None,
    opts: planner.PlanOptions | None = None,
    seed: int = 0,
) -> float:
    """-C_T of a fully planned solution, or -inf when none is found."""
    weights = weights or CostWeights()
    trajectory = planner.solve_task(assembly, task, opts, seed=seed)
    if trajectory is None:
        return _NEG_INF
    return -weights.cost(assembly.n_joints, assembly.n_modules, trajectory.t_max)


def resolve_trajectory(
    assembly: Assembly, task: tasks.Task, opts: EvalOptions | None = None, seed: int = 0
):
    """Re-run the f4 planning stage of evaluate() for the same seed."""
    opts = opts or EvalOptions()
    return planner.solve_task(assembly, task, opts.plan, seed=derive_seed(seed, "f4"))


def evaluate(
    assembly: Assembly,
    task: tasks.Task,
    weights: CostWeights | None = None,
    opts: EvalOptions | None = None,
    seed: int = 0,
) -> FitnessVector:
    """Staged lexicographic evaluation with early stop below stage maxima."""
    weights = weights or CostWeights()
    opts = opts or EvalOptions()
    n_goals = task.n_goals
    times = []

    start = time.perf_counter()
    f1 = f1_reach_upper_bound(assembly, task)
    times.append(time.perf_counter() - start)
    if f1 < 1:
        return FitnessVector(f1=f1, evaluated_depth=1, stage_times=tuple(times))

    goal_seed = derive_seed(seed, "goals")
    start = time.perf_counter()
    f2 = f2_reachable_goals(assembly, task, seed=goal_seed, opts=opts.ik)
    times.append(time.perf_counter() - start)
    if f2 < n_goals:
        return FitnessVector(f1=f1, f2=f2, evaluated_depth=2, stage_times=tuple(times))

    start = time.perf_counter()
    f3 = f3_collision_free_goals(assembly, task, seed=goal_seed, opts=opts.ik)
    times.append(time.perf_counter() - start)
    if f3 < n_goals:
        return FitnessVector(f1=f1, f2=f2, f3=f3, evaluated_depth=3, stage_times=tuple(times))

    start = time.perf_counter()
    f4 = f4_cost(assembly, task, weights, opts.plan, seed=derive_seed(seed, "f4"))
    times.append(time.perf_counter() - start)
    return FitnessVector(
        f1=f1, f2=f2, f3=f3, f4=f4, evaluated_depth=4, stage_times=tuple(times)
    )


# --- derived-model cache -------------------------------------------------------


class ModelCache:
    """LRU cache of assembled chains keyed by the module-id sequence.

    Only the derived model is cached; fitness itself is recomputed on
    every call because planning is stochastic.
    """

    def __init__(self, capacity: int = 1000):
        if capacity < 0:
            raise ValueError("capacity must be >= 0")
        self.capacity = capacity
        self._entries: OrderedDict[tuple[int, ...], Assembly] = OrderedDict()
        self.hits = 0
        self.misses = 0

    def __len__(self):
        return len(self._entries)

    def get_or_build(self, library: ModuleLibrary, ids) -> Assembly:
        key = tuple(ids)
        if key in self._entries:
            self.hits += 1
            self._entries.move_to_end(key)
            return self._entries[key]
        self.misses += 1
        assembly = assemble(library, key)
        if self.capacity > 0:
            self._entries[key] = assembly
            if len(self._entries) > self.capacity:
                self._entries.popitem(last=False)
        return assembly


def cached_evaluate(
    cache: ModelCache,
    library: ModuleLibrary,
    ids,
    task: tasks.Task,
    weights: CostWeights | None = None,
    opts: EvalOptions | None = None,
    seed: int = 0,
) -> FitnessVector:
    """evaluate() on a cache-backed assembly; identical results either way."""
    assembly = cache.get_or_build(library, ids)
    return evaluate(assembly, task, weights=weights, opts=opts, seed=seed)
