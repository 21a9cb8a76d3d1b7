"""Task model: goals, tolerances, obstacle scenes, and synthetic generators.

A goal is reached when the TCP position lies within the t_p ball and the
axis-angle of the relative rotation satisfies theta*|e| <= phi*t_axis
element-wise. Trajectories must visit all goals in order, ending on the
last goal.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import geometry, kinematics, se3
from .errors import Unsatisfiable

DEFAULT_POSITION_TOL = 1e-3


@dataclass(frozen=True, eq=False)
class Tolerances:
    phi: float
    t_axis: np.ndarray = field(default_factory=lambda: np.ones(3))
    t_p: float = DEFAULT_POSITION_TOL

    def __post_init__(self):
        object.__setattr__(self, "t_axis", np.asarray(self.t_axis, dtype=float))
        if self.t_p <= 0:
            raise ValueError("t_p must be positive")
        if not (0.0 < self.phi <= np.pi):
            raise ValueError("phi must lie in (0, pi]")
        if np.any(self.t_axis < 0) or np.max(self.t_axis) > 1.0 + 1e-12:
            raise ValueError("t_axis components must lie in [0, 1]")


_PRESETS = {
    "sphere_like": lambda: Tolerances(phi=np.pi / 2, t_axis=np.ones(3)),
    "partially_symmetric": lambda: Tolerances(
        phi=np.pi, t_axis=np.array([1.0 / 360.0, 1.0 / 360.0, 1.0])
    ),
    "arbitrary": lambda: Tolerances(phi=np.pi / 360, t_axis=np.ones(3)),
}


def tolerance_preset(name: str) -> Tolerances:
    """Workpiece-geometry presets: sphere_like, partially_symmetric, arbitrary."""
    try:
        return _PRESETS[name]()
    except KeyError:
        raise ValueError(f"unknown tolerance preset {name!r}") from None


@dataclass(frozen=True, eq=False)
class Goal:
    pose: kinematics.Pose
    id: str = ""
    tol: Tolerances | None = None  # optional per-goal override


@dataclass(frozen=True, eq=False)
class Task:
    goals: tuple[Goal, ...]
    tol: Tolerances
    scene: geometry.Scene = field(default_factory=geometry.Scene)
    base_pose: np.ndarray = field(default_factory=lambda: np.eye(4))

    def __post_init__(self):
        object.__setattr__(self, "goals", tuple(self.goals))
        object.__setattr__(self, "base_pose", np.asarray(self.base_pose, dtype=float))
        if not self.goals:
            raise ValueError("a task needs at least one goal")

    @property
    def n_goals(self) -> int:
        return len(self.goals)

    def tol_for(self, index: int) -> Tolerances:
        override = self.goals[index].tol
        return override if override is not None else self.tol

    # --- serialization ------------------------------------------------

    def to_json_dict(self) -> dict:
        def tol_dict(tol: Tolerances) -> dict:
            return {"t_p": tol.t_p, "t_axis": tol.t_axis.tolist(), "phi": tol.phi}

        goals = []
        for g in self.goals:
            entry = {"id": g.id, "pose": g.pose.matrix().tolist()}
            if g.tol is not None:
                entry["tolerances"] = tol_dict(g.tol)
            goals.append(entry)
        return {
            "goals": goals,
            "tolerances": tol_dict(self.tol),
            "obstacles": [geometry.primitive_to_dict(o) for o in self.scene.obstacles],
            "base_pose": self.base_pose.tolist(),
        }

    @classmethod
    def from_json_dict(cls, data: dict) -> "Task":
        def tol_from(d: dict) -> Tolerances:
            return Tolerances(
                phi=d["phi"], t_axis=np.asarray(d["t_axis"], dtype=float), t_p=d["t_p"]
            )

        goals = tuple(
            Goal(
                pose=kinematics.Pose.from_matrix(np.asarray(g["pose"], dtype=float)),
                id=g.get("id", ""),
                tol=tol_from(g["tolerances"]) if "tolerances" in g else None,
            )
            for g in data["goals"]
        )
        return cls(
            goals=goals,
            tol=tol_from(data["tolerances"]),
            scene=geometry.Scene(
                tuple(geometry.primitive_from_dict(o) for o in data.get("obstacles", []))
            ),
            base_pose=np.asarray(data.get("base_pose", np.eye(4).tolist()), dtype=float),
        )

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_json_dict(), indent=2, sort_keys=True))

    @classmethod
    def load(cls, path) -> "Task":
        return cls.from_json_dict(json.loads(Path(path).read_text()))


# --- reach predicates --------------------------------------------------------


def reached(assembly, q, goal: Goal, tol: Tolerances, base_pose=None) -> bool:
    """Goal predicate: position within t_p, per-axis angle within phi*t_axis."""
    frames = kinematics.fk_frames(assembly, q, base_pose)
    return kinematics.pose_within_tolerance(frames.tcp, goal.pose, tol)


def all_goals_reached(assembly, trajectory, task: Task) -> bool:
    """True when the trajectory visits every goal in order, ending on the last.

    Greedy earliest-match over the sample grid; consecutive goals may share
    a sample time.
    """
    n_samples = len(trajectory.t)
    if n_samples == 0:
        return False
    sample_idx = 0
    for gi in range(task.n_goals - 1):
        goal = task.goals[gi]
        tol = task.tol_for(gi)
        while sample_idx < n_samples and not reached(
            assembly, trajectory.q[sample_idx], goal, tol, task.base_pose
        ):
            sample_idx += 1
        if sample_idx == n_samples:
            return False
    last = task.goals[-1]
    return reached(
        assembly, trajectory.q[-1], last, task.tol_for(task.n_goals - 1), task.base_pose
    )


# --- synthetic task generators -----------------------------------------------

_VOXEL_EDGE = 0.25
_GRID_N = 5
_GRID_CENTER = np.array([0.0, 0.0, 0.625])
_HALF_BALL_RADIUS = 1.2


def _voxel_center(index: int) -> np.ndarray:
    i, rem = divmod(index, _GRID_N * _GRID_N)
    j, k = divmod(rem, _GRID_N)
    offset = (np.array([i, j, k], dtype=float) - (_GRID_N - 1) / 2.0) * _VOXEL_EDGE
    return _GRID_CENTER + offset


def generate_synthetic1(d: int, seed: int) -> Task:
    """Voxel-grid setting: d box obstacles and d goals on a 5x5x5 grid."""
    if d < 1:
        raise ValueError("d must be >= 1")
    total = _GRID_N**3
    if 2 * d > total:
        raise Unsatisfiable(f"cannot place {2 * d} disjoint voxels in {total}")
    rng = np.random.default_rng(seed)
    chosen = rng.choice(total, size=2 * d, replace=False)
    half = _VOXEL_EDGE / 2.0
    obstacles = tuple(
        geometry.CollisionPrimitive(
            kind="box",
            pose=se3.transform(translation=_voxel_center(idx)),
            dims=(half, half, half),
        )
        for idx in chosen[:d]
    )
    goals = tuple(
        Goal(
            pose=kinematics.Pose(p=_voxel_center(idx), n=se3.random_quat(rng)),
            id=f"g{gi + 1}",
        )
        for gi, idx in enumerate(chosen[d:])
    )
    return Task(goals=goals, tol=tolerance_preset("arbitrary"),
                scene=geometry.Scene(obstacles))


def _half_ball_point(rng: np.random.Generator) -> np.ndarray:
    direction = rng.normal(size=3)
    norm = np.linalg.norm(direction)
    while norm < 1e-12:
        direction = rng.normal(size=3)
        norm = np.linalg.norm(direction)
    direction /= norm
    radius = _HALF_BALL_RADIUS * rng.uniform() ** (1.0 / 3.0)
    point = direction * radius
    point[2] = abs(point[2])
    return point


def generate_synthetic2(d: int, seed: int) -> Task:
    """Half-ball setting: d random primitive obstacles and d goals, z >= 0."""
    if d < 1:
        raise ValueError("d must be >= 1")
    rng = np.random.default_rng(seed)
    kinds = ("sphere", "box", "cylinder")
    obstacles = []
    for _ in range(d):
        kind = kinds[rng.integers(len(kinds))]
        pose = se3.transform(
            rotation=se3.matrix_from_quat(se3.random_quat(rng)),
            translation=_half_ball_point(rng),
        )
        if kind == "sphere":
            dims = (rng.uniform(0.05, 0.3),)
        elif kind == "box":
            dims = tuple(rng.uniform(0.05, 0.3, size=3))
        else:
            dims = tuple(rng.uniform(0.05, 0.3, size=2))
        obstacles.append(geometry.CollisionPrimitive(kind=kind, pose=pose, dims=dims))
    goals = tuple(
        Goal(
            pose=kinematics.Pose(p=_half_ball_point(rng), n=se3.random_quat(rng)),
            id=f"g{gi + 1}",
        )
        for gi in range(d)
    )
    return Task(goals=goals, tol=tolerance_preset("arbitrary"),
                scene=geometry.Scene(tuple(obstacles)))


def plausibly_solvable(task: Task, reach_estimate: float) -> bool:
    """Cheap pre-filter: goals and base clear of obstacles and within reach.

    A True result does not imply the task is solvable.
    """
    if reach_estimate <= 0:
        raise ValueError("reach_estimate must be positive")
    base_point = task.base_pose[:3, 3]
    margin = task.tol.t_p
    for obs in task.scene.obstacles:
        if geometry.point_distance(obs, obs.pose, base_point) <= margin:
            return False
    for gi, goal in enumerate(task.goals):
        p = goal.pose.p
        if np.linalg.norm(p - base_point) > reach_estimate:
            return False
        inflate = task.tol_for(gi).t_p
        for obs in task.scene.obstacles:
            if geometry.point_distance(obs, obs.pose, p) <= inflate:
                return False
    return True
