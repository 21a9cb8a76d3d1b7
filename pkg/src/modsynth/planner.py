"""Collision-free planning and trajectory construction.

plan_path runs a native RRT-Connect over the joint box with straight-line
edges validated by dense sampling, followed by greedy shortcutting.
time_parameterize lays per-segment trapezoidal velocity profiles with rest
at every waypoint, which keeps velocity and acceleration limits satisfied
by construction (conservative: never faster than a path-following optimum).
The wall-clock planner timeout maps to a deterministic iteration budget so
that identical seeds reproduce identical paths.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path as FsPath

import numpy as np

from . import dynamics, geometry, kinematics, tasks
from .errors import EmptyPath, InvalidEndpoint
from .modlib import Assembly
from .seeding import derive_seed

_LIMIT_EPS = 1e-9


@dataclass(frozen=True, eq=False)
class Path:
    waypoints: tuple[np.ndarray, ...]

    def __post_init__(self):
        object.__setattr__(
            self, "waypoints", tuple(np.asarray(w, dtype=float) for w in self.waypoints)
        )

    def __len__(self):
        return len(self.waypoints)


@dataclass(eq=False)
class Trajectory:
    """Densely sampled joint trajectory with per-goal visit times."""

    t: np.ndarray
    q: np.ndarray
    qd: np.ndarray
    qdd: np.ndarray
    goal_times: tuple[float, ...] = ()
    waypoint_times: tuple[float, ...] = ()

    def __post_init__(self):
        self.t = np.asarray(self.t, dtype=float)
        self.q = np.asarray(self.q, dtype=float)
        self.qd = np.asarray(self.qd, dtype=float)
        self.qdd = np.asarray(self.qdd, dtype=float)
        self.goal_times = tuple(float(v) for v in self.goal_times)
        self.waypoint_times = tuple(float(v) for v in self.waypoint_times)
        if np.any(np.diff(self.t) <= 0):
            raise ValueError("sample times must be strictly increasing")

    @property
    def t_max(self) -> float:
        return float(self.t[-1])

    def at(self, time: float):
        """(q, qd, qdd) at a time, linear in q/qd, piecewise-constant qdd."""
        time = float(np.clip(time, self.t[0], self.t[-1]))
        idx = int(np.searchsorted(self.t, time, side="right")) - 1
        if idx >= len(self.t) - 1:
            return self.q[-1], self.qd[-1], self.qdd[-1]
        t0, t1 = self.t[idx], self.t[idx + 1]
        u = (time - t0) / (t1 - t0)
        return (
            (1 - u) * self.q[idx] + u * self.q[idx + 1],
            (1 - u) * self.qd[idx] + u * self.qd[idx + 1],
            self.qdd[idx],
        )

    def to_json_dict(self) -> dict:
        return {
            "t": self.t.tolist(),
            "q": self.q.tolist(),
            "qd": self.qd.tolist(),
            "qdd": self.qdd.tolist(),
            "goal_times": list(self.goal_times),
        }

    @classmethod
    def from_json_dict(cls, data: dict) -> "Trajectory":
        return cls(
            t=np.asarray(data["t"], dtype=float),
            q=np.asarray(data["q"], dtype=float),
            qd=np.asarray(data["qd"], dtype=float),
            qdd=np.asarray(data["qdd"], dtype=float),
            goal_times=tuple(data.get("goal_times", [])),
        )

    def save(self, path) -> None:
        FsPath(path).write_text(json.dumps(self.to_json_dict()))


@dataclass
class PlanOptions:
    timeout_s: float = 3.0
    iterations_per_s: float = 400.0  # deterministic stand-in for wall-clock budget
    extend_step: float = 0.1  # max per-joint move of one extend, rad or m
    edge_resolution: float = 0.01  # collision-check spacing along edges
    shortcut_iters: int = 200
    dt: float = 0.01  # trajectory sample spacing, s
    dt_check: float = 0.01  # torque/collision verification grid, s
    gravity: tuple[float, float, float] = dynamics.DEFAULT_GRAVITY
    ik: kinematics.IkOptions = field(default_factory=kinematics.IkOptions)


# --- RRT-Connect ---------------------------------------------------------


class _Tree:
    def __init__(self, root: np.ndarray):
        self.nodes = [np.asarray(root, dtype=float)]
        self.parents = [-1]

    def nearest(self, q: np.ndarray) -> int:
        stack = np.stack(self.nodes)
        return int(np.argmin(np.max(np.abs(stack - q), axis=1)))

    def add(self, q: np.ndarray, parent: int) -> int:
        self.nodes.append(q)
        self.parents.append(parent)
        return len(self.nodes) - 1

    def path_to_root(self, index: int) -> list[np.ndarray]:
        out = []
        while index != -1:
            out.append(self.nodes[index])
            index = self.parents[index]
        return out


def _segment_valid(assembly, qa, qb, scene, resolution, base_pose) -> bool:
    span = float(np.max(np.abs(qb - qa)))
    steps = max(1, int(np.ceil(span / resolution)))
    configs = qa[None, :] + np.linspace(0.0, 1.0, steps + 1)[:, None] * (qb - qa)[None, :]
    return not geometry.any_collision_batch(
        assembly, configs, scene, self_check=True, base_pose=base_pose
    )


_TRAPPED, _ADVANCED, _REACHED = 0, 1, 2


def _extend(assembly, tree, target, scene, opts, base_pose):
    near_idx = tree.nearest(target)
    q_near = tree.nodes[near_idx]
    delta = target - q_near
    span = float(np.max(np.abs(delta)))
    if span <= opts.extend_step:
        q_new, status = target, _REACHED
    else:
        q_new = q_near + delta * (opts.extend_step / span)
        status = _ADVANCED
    if not _segment_valid(assembly, q_near, q_new, scene, opts.edge_resolution, base_pose):
        return _TRAPPED, -1
    return status, tree.add(q_new, near_idx)


def _connect(assembly, tree, target, scene, opts, base_pose):
    while True:
        status, idx = _extend(assembly, tree, target, scene, opts, base_pose)
        if status != _ADVANCED:
            return status, idx


def plan_path(
    assembly: Assembly,
    q_start,
    q_goal,
    scene: geometry.Scene,
    timeout: float | None = None,
    seed: int = 0,
    base_pose=None,
    opts: PlanOptions | None = None,
):
    """RRT-Connect between two valid configurations; None when the budget runs out."""
    opts = opts or PlanOptions()
    if timeout is None:
        timeout = opts.timeout_s
    q_start = np.asarray(q_start, dtype=float)
    q_goal = np.asarray(q_goal, dtype=float)
    for name, q in (("start", q_start), ("goal", q_goal)):
        if np.any(q < assembly.q_lo - _LIMIT_EPS) or np.any(q > assembly.q_hi + _LIMIT_EPS):
            raise InvalidEndpoint(f"{name} configuration violates joint limits")
        if geometry.in_collision(assembly, q, scene, self_check=True, base_pose=base_pose):
            raise InvalidEndpoint(f"{name} configuration is in collision")

    if q_start.size == 0 or np.max(np.abs(q_goal - q_start)) < 1e-12:
        return Path((q_start,))
    if _segment_valid(assembly, q_start, q_goal, scene, opts.edge_resolution, base_pose):
        return Path((q_start, q_goal))

    rng = np.random.default_rng(seed)
    budget = max(1, int(timeout * opts.iterations_per_s))
    tree_a, tree_b = _Tree(q_start), _Tree(q_goal)
    a_is_start = True
    for _ in range(budget):
        q_rand = rng.uniform(assembly.q_lo, assembly.q_hi)
        status, new_idx = _extend(assembly, tree_a, q_rand, scene, opts, base_pose)
        if status != _TRAPPED:
            q_new = tree_a.nodes[new_idx]
            status_b, idx_b = _connect(assembly, tree_b, q_new, scene, opts, base_pose)
            if status_b == _REACHED:
                part_a = tree_a.path_to_root(new_idx)[::-1]  # root_a .. q_new
                part_b = tree_b.path_to_root(idx_b)  # q_new .. root_b
                waypoints = part_a + part_b[1:]
                if not a_is_start:
                    waypoints = waypoints[::-1]
                return _shortcut(assembly, waypoints, scene, opts, rng, base_pose)
        tree_a, tree_b = tree_b, tree_a
        a_is_start = not a_is_start
    return None


def _shortcut(assembly, waypoints, scene, opts, rng, base_pose) -> Path:
    pts = [np.asarray(w, dtype=float) for w in waypoints]
    for _ in range(opts.shortcut_iters):
        if len(pts) <= 2:
            break
        i = int(rng.integers(0, len(pts) - 2))
        j = int(rng.integers(i + 2, len(pts)))
        if _segment_valid(assembly, pts[i], pts[j], scene, opts.edge_resolution, base_pose):
            pts = pts[: i + 1] + pts[j:]
    return Path(tuple(pts))


# --- time parameterization -------------------------------------------------


def _segment_profile(delta: np.ndarray, v_cap: np.ndarray, a_cap: np.ndarray):
    """Normalized trapezoid for s in [0, 1]: (duration, v_peak, a, t_acc)."""
    moving = np.abs(delta) > 1e-15
    v = float(np.min(v_cap[moving] / np.abs(delta[moving])))
    a = float(np.min(a_cap[moving] / np.abs(delta[moving])))
    if v * v / a >= 1.0:  # triangular: never reaches v
        t_acc = np.sqrt(1.0 / a)
        return 2.0 * t_acc, a * t_acc, a, t_acc
    t_acc = v / a
    t_flat = (1.0 - v * v / a) / v
    return 2.0 * t_acc + t_flat, v, a, t_acc


def _profile_eval(tau: float, duration: float, v_peak: float, accel: float, t_acc: float):
    """(s, s_dot, s_ddot) of the trapezoid at local time tau."""
    if tau <= t_acc:
        return 0.5 * accel * tau * tau, accel * tau, accel
    if tau >= duration - t_acc:
        rem = duration - tau
        return 1.0 - 0.5 * accel * rem * rem, accel * rem, -accel
    s_acc = 0.5 * accel * t_acc * t_acc
    return s_acc + v_peak * (tau - t_acc), v_peak, 0.0


def time_parameterize(assembly: Assembly, path: Path, dt: float = 0.01) -> Trajectory:
    """Rest-to-rest trapezoidal profiles along each straight path segment."""
    if len(path) == 0:
        raise EmptyPath("path has no waypoints")
    n = assembly.n_joints
    v_cap = np.minimum(-assembly.qd_lo, assembly.qd_hi)
    a_cap = np.minimum(-assembly.qdd_lo, assembly.qdd_hi)

    segments = []  # (q_from, delta, duration, v_peak, a, t_acc)
    waypoint_times = [0.0]
    t_cursor = 0.0
    for k in range(len(path) - 1):
        q_from = path.waypoints[k]
        delta = path.waypoints[k + 1] - q_from
        if delta.size == 0 or np.max(np.abs(delta)) <= 1e-15:
            waypoint_times.append(t_cursor)
            continue
        duration, v_peak, accel, t_acc = _segment_profile(delta, v_cap, a_cap)
        segments.append((t_cursor, q_from, delta, duration, v_peak, accel, t_acc))
        t_cursor += duration
        waypoint_times.append(t_cursor)

    if not segments:
        q0 = np.asarray(path.waypoints[0], dtype=float).reshape(1, n)
        zeros = np.zeros((1, n))
        return Trajectory(
            t=np.zeros(1), q=q0, qd=zeros, qdd=zeros,
            waypoint_times=tuple(waypoint_times),
        )

    t_total = t_cursor
    grid = set(np.round(np.arange(0.0, t_total, dt), 12).tolist())
    grid.update(np.round([seg[0] for seg in segments], 12).tolist())
    grid.update(np.round([seg[0] + seg[3] for seg in segments], 12).tolist())
    times = np.array(sorted(grid))
    times = times[times <= t_total + 1e-12]
    if abs(times[-1] - t_total) > 1e-12:
        times = np.append(times, t_total)
    else:
        times[-1] = t_total

    starts = np.array([seg[0] for seg in segments])
    qs = np.zeros((len(times), n))
    qds = np.zeros((len(times), n))
    qdds = np.zeros((len(times), n))
    for i, t in enumerate(times):
        si = int(np.searchsorted(starts, t, side="right")) - 1
        si = max(0, min(si, len(segments) - 1))
        t0, q_from, delta, duration, v_peak, accel, t_acc = segments[si]
        tau = float(np.clip(t - t0, 0.0, duration))
        s, sd, sdd = _profile_eval(tau, duration, v_peak, accel, t_acc)
        qs[i] = q_from + s * delta
        qds[i] = sd * delta
        qdds[i] = sdd * delta
    return Trajectory(t=times, q=qs, qd=qds, qdd=qdds, waypoint_times=tuple(waypoint_times))


# --- full task pipeline ------------------------------------------------------


def solve_task(
    assembly: Assembly, task: tasks.Task, opts: PlanOptions | None = None, seed: int = 0
):
    """IK witnesses, inter-goal planning, parameterization, and validation.

    Returns a verified trajectory visiting all goals in order from the home
    configuration, or None when any stage fails within its budget.
    """
    opts = opts or PlanOptions()
    base_pose = task.base_pose
    home = assembly.home_config()
    if geometry.in_collision(assembly, home, task.scene, self_check=True, base_pose=base_pose):
        return None

    def colliding(q):
        return geometry.in_collision(assembly, q, task.scene, self_check=True,
                                     base_pose=base_pose)

    waypoints = [home]
    goal_wp_index = []
    q_prev = home
    for gi, goal in enumerate(task.goals):
        witness = kinematics.ik(
            assembly,
            goal.pose,
            task.tol_for(gi),
            opts=opts.ik,
            rng_seed=derive_seed(seed, "witness", gi),
            reject=colliding,
            base_pose=base_pose,
        )
        if witness is None:
            return None
        segment = plan_path(
            assembly,
            q_prev,
            witness,
            task.scene,
            timeout=opts.timeout_s,
            seed=derive_seed(seed, "plan", gi),
            base_pose=base_pose,
            opts=opts,
        )
        if segment is None:
            return None
        waypoints.extend(segment.waypoints[1:])
        goal_wp_index.append(len(waypoints) - 1)
        q_prev = witness

    trajectory = time_parameterize(assembly, Path(tuple(waypoints)), dt=opts.dt)
    trajectory.goal_times = tuple(trajectory.waypoint_times[i] for i in goal_wp_index)
    if not verify_trajectory(assembly, task, trajectory, opts):
        return None
    return trajectory


def verify_trajectory(
    assembly: Assembly, task: tasks.Task, trajectory: Trajectory,
    opts: PlanOptions | None = None,
) -> bool:
    """Full feasibility check: limits, collisions, torques, ordered goals."""
    opts = opts or PlanOptions()
    q, qd, qdd = trajectory.q, trajectory.qd, trajectory.qdd
    if np.any(q < assembly.q_lo - _LIMIT_EPS) or np.any(q > assembly.q_hi + _LIMIT_EPS):
        return False
    if np.any(qd < assembly.qd_lo - _LIMIT_EPS) or np.any(qd > assembly.qd_hi + _LIMIT_EPS):
        return False
    if np.any(qdd < assembly.qdd_lo - _LIMIT_EPS) or np.any(qdd > assembly.qdd_hi + _LIMIT_EPS):
        return False
    if geometry.any_collision_batch(assembly, q, task.scene, self_check=True,
                                    base_pose=task.base_pose):
        return False
    if not dynamics.torque_feasible(
        assembly, trajectory, dt_check=opts.dt_check,
        gravity=opts.gravity, base_pose=task.base_pose,
    ):
        return False
    return tasks.all_goals_reached(assembly, trajectory, task)
