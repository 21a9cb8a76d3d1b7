"""Forward kinematics, Jacobians, rotation differences, and numeric IK.

All poses are expressed in the world frame; the robot is attached at
``base_pose`` (identity unless stated otherwise). Orientation goals are
checked against an axis-weighted tolerance region, and the IK error is
the distance to that region rather than to the exact goal pose, so broad
tolerances let low-DoF arms succeed.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import se3
from .errors import DimensionMismatch
from .modlib import Assembly


@dataclass(frozen=True, eq=False)
class Pose:
    """Position plus orientation (unit quaternion, w-first)."""

    p: np.ndarray
    n: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "p", np.asarray(self.p, dtype=float))
        object.__setattr__(self, "n", np.asarray(self.n, dtype=float))
        if abs(np.linalg.norm(self.n) - 1.0) > 1e-9:
            raise ValueError("quaternion must have unit norm")

    @classmethod
    def from_matrix(cls, t: np.ndarray) -> "Pose":
        t = np.asarray(t, dtype=float)
        return cls(p=t[:3, 3].copy(), n=se3.quat_from_matrix(t[:3, :3]))

    def matrix(self) -> np.ndarray:
        return se3.transform(rotation=se3.matrix_from_quat(self.n), translation=self.p)


@dataclass(frozen=True, eq=False)
class AxisAngle:
    e: np.ndarray
    theta: float

    def __post_init__(self):
        object.__setattr__(self, "e", np.asarray(self.e, dtype=float))
        if abs(np.linalg.norm(self.e) - 1.0) > 1e-9:
            raise ValueError("axis must have unit norm")
        if not (0.0 <= self.theta <= np.pi + 1e-12):
            raise ValueError("angle must lie in [0, pi]")


@dataclass(frozen=True, eq=False)
class FrameData:
    """World frames of every chain body, joint, and the TCP."""

    body_frames: tuple[np.ndarray, ...]
    joint_origins: np.ndarray  # (n_J, 3)
    joint_axes: np.ndarray  # (n_J, 3) world direction of each joint axis
    joint_kinds: tuple[str, ...]
    tcp: np.ndarray


def _check_q(assembly: Assembly, q) -> np.ndarray:
    q = np.asarray(q, dtype=float)
    if q.shape != (assembly.n_joints,):
        raise DimensionMismatch(
            f"expected {assembly.n_joints} joint values, got shape {q.shape}"
        )
    return q


def fk_frames(assembly: Assembly, q, base_pose=None) -> FrameData:
    q = _check_q(assembly, q)
    current = np.eye(4) if base_pose is None else np.asarray(base_pose, dtype=float)
    body_frames = []
    origins = np.zeros((assembly.n_joints, 3))
    axes = np.zeros((assembly.n_joints, 3))
    kinds = []
    eye3 = np.eye(3)
    for element in assembly.elements:
        if element.joint is None:
            current = current @ element.pre
        else:
            spec = element.joint
            joint_frame = current @ element.pre
            qi = q[element.joint_index]
            origins[element.joint_index] = joint_frame[:3, 3]
            axes[element.joint_index] = joint_frame[:3, :3] @ spec.axis
            kinds.append(spec.kind)
            motion = np.eye(4)
            if spec.kind == "revolute":
                motion[:3, :3] = eye3 + np.sin(qi) * element.skew + (
                    1.0 - np.cos(qi)
                ) * element.skew2
            else:
                motion[:3, 3] = spec.axis * qi
            current = joint_frame @ motion @ element.post
        body_frames.append(current)
    return FrameData(
        body_frames=tuple(body_frames),
        joint_origins=origins,
        joint_axes=axes,
        joint_kinds=tuple(kinds),
        tcp=current @ assembly.tcp_offset,
    )


def fk(assembly: Assembly, q, base_pose=None) -> Pose:
    """TCP pose for joint configuration q."""
    return Pose.from_matrix(fk_frames(assembly, q, base_pose).tcp)


def body_frames_batch(assembly: Assembly, q_batch: np.ndarray, base_pose=None) -> np.ndarray:
    """World frames of every chain body for N configurations at once.

    Returns (N, n_elements, 4, 4); used by batched collision checking.
    """
    q_batch = np.atleast_2d(np.asarray(q_batch, dtype=float))
    count = q_batch.shape[0]
    if q_batch.shape[1] != assembly.n_joints:
        raise DimensionMismatch(f"expected {assembly.n_joints} joint columns")
    start = np.eye(4) if base_pose is None else np.asarray(base_pose, dtype=float)
    current = np.broadcast_to(start, (count, 4, 4)).copy()
    out = np.empty((count, len(assembly.elements), 4, 4))
    eye3 = np.eye(3)
    for idx, element in enumerate(assembly.elements):
        if element.joint is None:
            current = current @ element.pre
        else:
            spec = element.joint
            qi = q_batch[:, element.joint_index]
            motion = np.broadcast_to(np.eye(4), (count, 4, 4)).copy()
            if spec.kind == "revolute":
                motion[:, :3, :3] = (
                    eye3
                    + np.sin(qi)[:, None, None] * element.skew
                    + (1.0 - np.cos(qi))[:, None, None] * element.skew2
                )
            else:
                motion[:, :3, 3] = qi[:, None] * spec.axis
            current = current @ element.pre @ motion @ element.post
        out[:, idx] = current
    return out


def rot(n1: np.ndarray, n2: np.ndarray) -> AxisAngle:
    """Axis-angle of the relative rotation from n1 to n2 (angle in [0, pi]).

    The axis is expressed in the n1 frame; at zero angle it defaults
    to (1, 0, 0) for determinism.
    """
    q_rel = se3.quat_mul(se3.quat_conj(np.asarray(n1, float)), np.asarray(n2, float))
    q_rel = se3.quat_normalize(q_rel)
    if q_rel[0] < 0.0:
        q_rel = -q_rel
    vec = q_rel[1:]
    s = np.linalg.norm(vec)
    theta = 2.0 * np.arctan2(s, q_rel[0])
    if theta < 1e-12:
        return AxisAngle(e=np.array([1.0, 0.0, 0.0]), theta=0.0)
    return AxisAngle(e=vec / s, theta=min(theta, np.pi))


def jacobian(assembly: Assembly, q, base_pose=None) -> np.ndarray:
    """Geometric Jacobian (6 x n_J) at the TCP, world frame."""
    frames = fk_frames(assembly, q, base_pose)
    return _jacobian_from_frames(assembly, frames)


def _jacobian_from_frames(assembly: Assembly, frames: FrameData) -> np.ndarray:
    n = assembly.n_joints
    jac = np.zeros((6, n))
    p_tcp = frames.tcp[:3, 3]
    for j in range(n):
        axis = frames.joint_axes[j]
        if frames.joint_kinds[j] == "revolute":
            jac[:3, j] = np.cross(axis, p_tcp - frames.joint_origins[j])
            jac[3:, j] = axis
        else:
            jac[:3, j] = axis
    return jac


# --- tolerance-region error -------------------------------------------------


def pose_region_error(tcp: np.ndarray, goal: Pose, tol, shrink: float = 1.0) -> np.ndarray:
    """6-vector distance from the TCP pose to the goal tolerance region.

    Zero exactly when the goal is reached: position within the t_p ball
    and the per-axis angular excess theta*|e| <= phi*t_axis. The angular
    part is mapped back to world coordinates for use with the geometric
    Jacobian.

    shrink < 1 re-targets components that violate their true bound to a
    proportionally smaller one, so IK iterates cross into the region
    instead of stalling on its boundary; components already inside keep
    zero error.
    """
    err = np.zeros(6)
    dp = goal.p - tcp[:3, 3]
    dist = np.linalg.norm(dp)
    if dist > tol.t_p:
        err[:3] = dp * (1.0 - shrink * tol.t_p / dist)
    n_tcp = se3.quat_from_matrix(tcp[:3, :3])
    aa = rot(goal.n, n_tcp)
    v = aa.theta * aa.e  # rotation from goal to tcp, in the goal frame
    bound = tol.phi * np.asarray(tol.t_axis, dtype=float)
    violated = np.abs(v) > bound
    if np.any(violated):
        excess = np.where(
            violated, np.sign(v) * (np.abs(v) - shrink * bound), 0.0
        )
        err[3:] = -se3.matrix_from_quat(goal.n) @ excess
    return err


def pose_within_tolerance(tcp: np.ndarray, goal: Pose, tol) -> bool:
    dp = goal.p - tcp[:3, 3]
    if np.linalg.norm(dp) > tol.t_p:
        return False
    n_tcp = se3.quat_from_matrix(tcp[:3, :3])
    aa = rot(goal.n, n_tcp)
    return bool(np.all(aa.theta * np.abs(aa.e) <= tol.phi * np.asarray(tol.t_axis) + 1e-15))


def _violated_constraints(frames: FrameData, goal: Pose, tol):
    """Mask of (position, axis-x, axis-y, axis-z) constraints outside tolerance."""
    mask = np.zeros(4, dtype=bool)
    dp = goal.p - frames.tcp[:3, 3]
    mask[0] = np.linalg.norm(dp) > tol.t_p
    aa = rot(goal.n, se3.quat_from_matrix(frames.tcp[:3, :3]))
    v = aa.theta * aa.e
    bound = tol.phi * np.asarray(tol.t_axis, dtype=float)
    mask[1:] = np.abs(v) > bound
    return mask


def _region_system(frames: FrameData, goal: Pose, tol, jac: np.ndarray,
                   shrink: float, mask: np.ndarray):
    """Error vector and Jacobian rows for the constraints flagged in mask.

    Components never flagged are dropped entirely: a direction inside its
    tolerance stays unconstrained rather than being held in place, which
    would stop low-DoF arms from trading free orientation for position
    progress. Flagged components aim at a region shrunk by `shrink` so
    iterates cross the true boundary instead of stalling on it.
    """
    rows = []
    errs = []
    tcp = frames.tcp
    want_rows = jac is not None
    if mask[0]:
        dp = goal.p - tcp[:3, 3]
        dist = np.linalg.norm(dp)
        scale = max(0.0, 1.0 - shrink * tol.t_p / dist) if dist > 0 else 0.0
        errs.extend(dp * scale)
        if want_rows:
            rows.extend(jac[:3])
    if mask[1:].any():
        n_tcp = se3.quat_from_matrix(tcp[:3, :3])
        aa = rot(goal.n, n_tcp)
        v = aa.theta * aa.e  # rotation from goal to tcp, goal frame
        bound = tol.phi * np.asarray(tol.t_axis, dtype=float)
        goal_axes = se3.matrix_from_quat(goal.n)
        for i in range(3):
            if mask[1 + i]:
                errs.append(-np.sign(v[i]) * max(0.0, abs(v[i]) - shrink * bound[i]))
                if want_rows:
                    rows.append(goal_axes[:, i] @ jac[3:])
    if not errs:
        return np.zeros(0), None if not want_rows else np.zeros((0, jac.shape[1]))
    return np.asarray(errs), (np.asarray(rows) if want_rows else None)


# --- damped least-squares IK -------------------------------------------------


@dataclass
class IkOptions:
    max_restarts: int = 20
    max_iters: int = 150
    lambda0: float = 1e-2
    max_step: float = 0.5  # per-iteration cap on the largest joint move, rad


@dataclass(frozen=True, eq=False)
class IkResult:
    q: np.ndarray
    success: bool
    pos_err: float
    ang_err: float


def ik(
    assembly: Assembly,
    goal: Pose,
    tol,
    opts: IkOptions | None = None,
    rng_seed: int = 0,
    reject=None,
    base_pose=None,
    q_init=None,
):
    """Find q inside the joint limits whose TCP reaches the goal region.

    Damped least squares on the region error with adaptive damping and
    uniform-random restarts inside the limits. Returns None when no
    accepted configuration is found within the restart budget; a found
    configuration always re-checks the reach predicate and the optional
    reject filter before being returned. Deterministic per rng_seed.
    """
    result = ik_detailed(assembly, goal, tol, opts, rng_seed, reject, base_pose, q_init)
    return result.q if result.success else None


def ik_detailed(
    assembly: Assembly,
    goal: Pose,
    tol,
    opts: IkOptions | None = None,
    rng_seed: int = 0,
    reject=None,
    base_pose=None,
    q_init=None,
) -> IkResult:
    """Like ik() but always reports the best configuration encountered."""
    opts = opts or IkOptions()
    rng = np.random.default_rng(rng_seed)
    lo, hi = assembly.q_lo, assembly.q_hi

    best_q = assembly.home_config()
    best_norm = np.inf

    def result_at(q, success):
        frames = fk_frames(assembly, q, base_pose)
        pos_err = float(np.linalg.norm(goal.p - frames.tcp[:3, 3]))
        ang_err = rot(goal.n, se3.quat_from_matrix(frames.tcp[:3, :3])).theta
        return IkResult(q=q, success=success, pos_err=pos_err, ang_err=ang_err)

    if assembly.n_joints == 0:
        # rigid structure: the single configuration either reaches or not
        frames = fk_frames(assembly, best_q, base_pose)
        hit = pose_within_tolerance(frames.tcp, goal, tol)
        if hit and reject is not None and reject(best_q):
            hit = False
        return result_at(best_q, hit)

    # Constraints activate on their first violation and stay active for the
    # rest of the restart: never-violated directions remain free (broad
    # tolerances), while the sticky set avoids activation flicker near
    # tight bounds.
    shrink = 0.5
    for restart in range(max(1, opts.max_restarts)):
        if restart == 0:
            q = assembly.home_config() if q_init is None else assembly.clamp(q_init)
        else:
            q = rng.uniform(lo, hi)
        lam = opts.lambda0
        frames = fk_frames(assembly, q, base_pose)
        mask = _violated_constraints(frames, goal, tol)
        for _ in range(opts.max_iters):
            if pose_within_tolerance(frames.tcp, goal, tol):
                if reject is None or not reject(q):
                    return result_at(q, True)
                break  # witness rejected: try a fresh restart
            full_norm = float(np.linalg.norm(pose_region_error(frames.tcp, goal, tol)))
            if full_norm < best_norm:
                best_norm = full_norm
                best_q = q.copy()
            mask |= _violated_constraints(frames, goal, tol)
            jac = _jacobian_from_frames(assembly, frames)
            err, rows = _region_system(frames, goal, tol, jac, shrink, mask)
            err_norm = float(np.linalg.norm(err))
            try:
                gram = rows @ rows.T + lam * lam * np.eye(len(err))
                dq = rows.T @ np.linalg.solve(gram, err)
            except np.linalg.LinAlgError:
                break
            step = np.max(np.abs(dq)) if dq.size else 0.0
            if step > opts.max_step:
                dq *= opts.max_step / step
            elif step < 1e-14:
                break
            q_new = np.clip(q + dq, lo, hi)
            frames_new = fk_frames(assembly, q_new, base_pose)
            err_new, _ = _region_system(frames_new, goal, tol, None, shrink, mask)
            if float(np.linalg.norm(err_new)) < err_norm:
                q, frames = q_new, frames_new
                # floor keeps the damped system well conditioned near
                # singular configurations
                lam = max(lam * 0.5, 1e-4)
            else:
                lam *= 2.0
                if lam > 1e8:
                    break
    return result_at(best_q, False)


def manipulability(assembly: Assembly, q, base_pose=None) -> float:
    """sqrt(det(J J^T)); zero at singular configurations."""
    jac = jacobian(assembly, q, base_pose)
    det = np.linalg.det(jac @ jac.T)
    return float(np.sqrt(max(det, 0.0)))
