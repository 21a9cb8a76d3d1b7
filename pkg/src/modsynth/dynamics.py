"""Inverse dynamics along the assembled chain via recursive Newton-Euler.

The chain is expanded into elementary steps (fixed offsets and pure
single-DoF joint motions with coincident origins) so that actuator
torques are projected about points on the joint axes regardless of how
connector and body frames are placed. Empty bodies contribute nothing.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import se3
from .errors import DimensionMismatch
from .modlib import Assembly

DEFAULT_GRAVITY = (0.0, 0.0, -9.81)


@dataclass
class DynState:
    q: np.ndarray
    qd: np.ndarray
    qdd: np.ndarray
    gravity: np.ndarray = field(default_factory=lambda: np.array(DEFAULT_GRAVITY))

    def __post_init__(self):
        self.q = np.asarray(self.q, dtype=float)
        self.qd = np.asarray(self.qd, dtype=float)
        self.qdd = np.asarray(self.qdd, dtype=float)
        self.gravity = np.asarray(self.gravity, dtype=float)


def _expanded_steps(assembly: Assembly, q: np.ndarray):
    """Elementary steps: (kind, R, p, axis, joint_index, body or None)."""
    steps = []
    for element in assembly.elements:
        if element.joint is None:
            steps.append(("fixed", element.pre[:3, :3], element.pre[:3, 3], None, -1, element.body))
            continue
        spec = element.joint
        qi = q[element.joint_index]
        steps.append(("fixed", element.pre[:3, :3], element.pre[:3, 3], None, -1, None))
        if spec.kind == "revolute":
            rot = se3.axis_rotation(spec.axis, qi)
            steps.append(("revolute", rot, np.zeros(3), spec.axis, element.joint_index, None))
        else:
            steps.append(
                ("prismatic", np.eye(3), spec.axis * qi, spec.axis, element.joint_index, None)
            )
        steps.append(
            ("fixed", element.post[:3, :3], element.post[:3, 3], None, -1, element.body)
        )
    return steps


def inverse_dynamics(assembly: Assembly, state: DynState, base_pose=None) -> np.ndarray:
    """Joint torques/forces balancing the given motion, gravity included."""
    n = assembly.n_joints
    for name in ("q", "qd", "qdd"):
        if getattr(state, name).shape != (n,):
            raise DimensionMismatch(f"{name} must have shape ({n},)")

    steps = _expanded_steps(assembly, state.q)
    m = len(steps)

    if base_pose is None:
        g_root = state.gravity
    else:
        g_root = np.asarray(base_pose, dtype=float)[:3, :3].T @ state.gravity

    omega = np.zeros((m, 3))
    omega_d = np.zeros((m, 3))
    acc = np.zeros((m, 3))
    com_force = np.zeros((m, 3))
    com_moment = np.zeros((m, 3))
    coms = np.zeros((m, 3))

    w = np.zeros(3)
    wd = np.zeros(3)
    a = -g_root
    for i, (kind, rot, p, axis, jidx, body) in enumerate(steps):
        rt = rot.T
        if kind == "fixed":
            w_new = rt @ w
            wd_new = rt @ wd
            a_new = rt @ (a + np.cross(wd, p) + np.cross(w, np.cross(w, p)))
        elif kind == "revolute":
            qd_a = state.qd[jidx] * axis
            w_new = rt @ w + qd_a
            wd_new = rt @ wd + np.cross(rt @ w, qd_a) + state.qdd[jidx] * axis
            a_new = rt @ a  # coincident origins
        else:  # prismatic
            qd_a = state.qd[jidx] * axis
            w_new = rt @ w
            wd_new = rt @ wd
            a_new = (
                rt @ (a + np.cross(wd, p) + np.cross(w, np.cross(w, p)))
                + 2.0 * np.cross(w_new, qd_a)
                + state.qdd[jidx] * axis
            )
        w, wd, a = w_new, wd_new, a_new
        omega[i] = w
        omega_d[i] = wd
        acc[i] = a
        if body is not None and body.mass > 0:
            c = body.com
            a_c = a + np.cross(wd, c) + np.cross(w, np.cross(w, c))
            com_force[i] = body.mass * a_c
            com_moment[i] = body.inertia @ wd + np.cross(w, body.inertia @ w)
            coms[i] = c

    tau = np.zeros(n)
    f_next = np.zeros(3)
    n_next = np.zeros(3)
    rot_next = np.eye(3)
    p_next = np.zeros(3)
    for i in range(m - 1, -1, -1):
        kind, rot, p, axis, jidx, body = steps[i]
        f_down = rot_next @ f_next
        f_here = f_down + com_force[i]
        n_here = (
            com_moment[i]
            + rot_next @ n_next
            + np.cross(coms[i], com_force[i])
            + np.cross(p_next, f_down)
        )
        if kind == "revolute":
            tau[jidx] = axis @ n_here
        elif kind == "prismatic":
            tau[jidx] = axis @ f_here
        f_next, n_next = f_here, n_here
        rot_next, p_next = rot, p
    return tau


def _apply_rt(rot, vec):
    """Batched R^T @ v for rot of shape (3,3) or (N,3,3), vec (N,3)."""
    if rot.ndim == 2:
        return vec @ rot
    return np.einsum("nji,nj->ni", rot, vec)


def _apply(rot, vec):
    if rot.ndim == 2:
        return vec @ rot.T
    return np.einsum("nij,nj->ni", rot, vec)


def inverse_dynamics_batch(
    assembly: Assembly, q: np.ndarray, qd: np.ndarray, qdd: np.ndarray,
    gravity=DEFAULT_GRAVITY, base_pose=None,
) -> np.ndarray:
    """inverse_dynamics over N states at once; returns (N, n_J) torques."""
    q = np.atleast_2d(np.asarray(q, dtype=float))
    qd = np.atleast_2d(np.asarray(qd, dtype=float))
    qdd = np.atleast_2d(np.asarray(qdd, dtype=float))
    count = q.shape[0]
    if q.shape[1] != assembly.n_joints:
        raise DimensionMismatch(f"expected {assembly.n_joints} joint columns")

    gravity = np.asarray(gravity, dtype=float)
    if base_pose is None:
        g_root = gravity
    else:
        g_root = np.asarray(base_pose, dtype=float)[:3, :3].T @ gravity

    # assemble elementary steps with batched rotations where q-dependent
    steps = []
    eye3 = np.eye(3)
    for element in assembly.elements:
        if element.joint is None:
            steps.append(("fixed", element.pre[:3, :3], element.pre[:3, 3], None, -1,
                          element.body))
            continue
        spec = element.joint
        jidx = element.joint_index
        steps.append(("fixed", element.pre[:3, :3], element.pre[:3, 3], None, -1, None))
        if spec.kind == "revolute":
            qi = q[:, jidx]
            rot = (
                eye3[None, :, :]
                + np.sin(qi)[:, None, None] * element.skew[None, :, :]
                + (1.0 - np.cos(qi))[:, None, None] * element.skew2[None, :, :]
            )
            steps.append(("revolute", rot, np.zeros(3), spec.axis, jidx, None))
        else:
            p = q[:, jidx][:, None] * spec.axis[None, :]
            steps.append(("prismatic", eye3, p, spec.axis, jidx, None))
        steps.append(("fixed", element.post[:3, :3], element.post[:3, 3], None, -1,
                      element.body))

    m = len(steps)
    com_force = [None] * m
    com_moment = [None] * m
    coms = [None] * m

    w = np.zeros((count, 3))
    wd = np.zeros((count, 3))
    a = np.broadcast_to(-g_root, (count, 3)).copy()
    for i, (kind, rot, p, axis, jidx, body) in enumerate(steps):
        if kind == "fixed":
            carried = a + np.cross(wd, p) + np.cross(w, np.cross(w, p))
            w, wd, a = _apply_rt(rot, w), _apply_rt(rot, wd), _apply_rt(rot, carried)
        elif kind == "revolute":
            qd_a = qd[:, jidx][:, None] * axis[None, :]
            w_rot = _apply_rt(rot, w)
            wd = _apply_rt(rot, wd) + np.cross(w_rot, qd_a) + qdd[:, jidx][:, None] * axis
            w = w_rot + qd_a
            a = _apply_rt(rot, a)
        else:  # prismatic, identity rotation
            qd_a = qd[:, jidx][:, None] * axis[None, :]
            a = (
                a + np.cross(wd, p) + np.cross(w, np.cross(w, p))
                + 2.0 * np.cross(w, qd_a) + qdd[:, jidx][:, None] * axis
            )
        if body is not None and body.mass > 0:
            c = body.com
            a_c = a + np.cross(wd, c) + np.cross(w, np.cross(w, c))
            com_force[i] = body.mass * a_c
            com_moment[i] = wd @ body.inertia.T + np.cross(w, w @ body.inertia.T)
            coms[i] = c

    tau = np.zeros((count, assembly.n_joints))
    f_next = np.zeros((count, 3))
    n_next = np.zeros((count, 3))
    rot_next = eye3
    p_next = np.zeros(3)
    for i in range(m - 1, -1, -1):
        kind, rot, p, axis, jidx, body = steps[i]
        f_down = _apply(rot_next, f_next)
        if p_next.ndim == 1:
            lever = np.cross(np.broadcast_to(p_next, f_down.shape), f_down)
        else:
            lever = np.cross(p_next, f_down)
        if com_force[i] is None:
            f_here = f_down
            n_here = _apply(rot_next, n_next) + lever
        else:
            f_here = f_down + com_force[i]
            n_here = (
                com_moment[i]
                + _apply(rot_next, n_next)
                + np.cross(np.broadcast_to(coms[i], f_here.shape), com_force[i])
                + lever
            )
        if kind == "revolute":
            tau[:, jidx] = n_here @ axis
        elif kind == "prismatic":
            tau[:, jidx] = f_here @ axis
        f_next, n_next = f_here, n_here
        rot_next, p_next = rot, p
    return tau


def torque_feasible(
    assembly: Assembly,
    trajectory,
    dt_check: float = 0.01,
    gravity=DEFAULT_GRAVITY,
    base_pose=None,
) -> bool:
    """Check |tau| <= tau_max on the grid t = 0, dt_check, ..., t_max."""
    if dt_check <= 0:
        raise ValueError("dt_check must be positive")
    t_max = trajectory.t_max
    times = np.append(np.arange(0.0, t_max, dt_check), t_max)
    states = np.array([np.concatenate(trajectory.at(t)) for t in times])
    n = assembly.n_joints
    tau = inverse_dynamics_batch(
        assembly, states[:, :n], states[:, n:2 * n], states[:, 2 * n:],
        gravity=gravity, base_pose=base_pose,
    )
    return not np.any(np.abs(tau) > assembly.tau_max)
