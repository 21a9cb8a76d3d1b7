import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from modsynth import fixtures, se3, tasks
from modsynth.errors import DimensionMismatch
from modsynth.kinematics import (
    AxisAngle,
    IkOptions,
    Pose,
    fk,
    fk_frames,
    ik,
    ik_detailed,
    jacobian,
    pose_within_tolerance,
    rot,
)
from modsynth.modlib import Body, ConnectorType, Connector, JointSpec, Module, ModuleLibrary, assemble


def _stub_module(mid, kind, ct, joints=(), n_bodies=1, distal_frame=None):
    bodies = tuple(
        Body(mass=0.0, com=np.zeros(3), inertia=np.zeros((3, 3))) for _ in range(n_bodies)
    )
    return Module(
        id=mid, name=f"stub{mid}", kind=kind, bodies=bodies, joints=tuple(joints),
        proximal=Connector(ct, "proximal", se3.FLIP_X),
        distal=Connector(ct, "distal", se3.EYE4 if distal_frame is None else distal_frame),
    )


def _single_revolute_arm(length=0.4, axis=(0, 0, 1)):
    """Base at origin, one revolute joint at the base top, distal offset (L,0,0)."""
    ct = ConnectorType("t")
    joint = JointSpec(
        kind="revolute", axis=np.asarray(axis, dtype=float),
        parent_frame=se3.EYE4.copy(), child_frame=se3.EYE4.copy(),
        q_limits=(-np.pi, np.pi), qd_limits=(-1, 1), qdd_limits=(-1, 1), tau_max=10.0,
    )
    base = _stub_module(1, "base", ct)
    swing = _stub_module(2, "regular", ct, joints=(joint,), n_bodies=2,
                         distal_frame=se3.translation(length, 0, 0))
    eef = _stub_module(3, "end_effector", ct)
    lib = ModuleLibrary([base, swing, eef])
    return assemble(lib, [1, 2, 3]), length


class TestFk:
    def test_single_revolute_quarter_turn(self):
        asm, length = _single_revolute_arm()
        pose = fk(asm, np.array([np.pi / 2]))
        assert np.allclose(pose.p, [0.0, length, 0.0], atol=1e-12)

    def test_home_pose_is_static_stack(self, arm6):
        pose = fk(arm6, np.zeros(arm6.n_joints))
        # base 0.15 + six joint modules 0.22 + two links 0.3 + eef 0.1
        assert np.allclose(pose.p, [0.0, 0.0, 2.17], atol=1e-12)
        assert np.allclose(pose.n, [1.0, 0.0, 0.0, 0.0], atol=1e-12)

    def test_dimension_mismatch(self, arm6):
        with pytest.raises(DimensionMismatch):
            fk(arm6, np.zeros(3))

    def test_matches_independent_matrix_oracle(self, small_lib, arm6, rng):
        """Recompute FK from the serialized module data, step by step."""
        doc = small_lib.to_json_dict()
        modules = {m["id"]: m for m in doc["modules"]}
        flip = np.diag([1.0, -1.0, -1.0, 1.0])

        def oracle(ids, q):
            def rodrigues(axis, angle):
                axis = np.asarray(axis, dtype=float)
                k = np.array([
                    [0, -axis[2], axis[1]],
                    [axis[2], 0, -axis[0]],
                    [-axis[1], axis[0], 0],
                ])
                r = np.eye(3) + np.sin(angle) * k + (1 - np.cos(angle)) * (k @ k)
                out = np.eye(4)
                out[:3, :3] = r
                return out

            current = np.eye(4)
            qi = 0
            for rank, mid in enumerate(ids):
                m = modules[mid]
                prox = np.asarray(m["proximal"]["frame"])
                # mate: previous attach frame, x-flip, then into the body frame
                current = current @ flip @ np.linalg.inv(prox)
                for joint in m["joints"]:
                    parent = np.asarray(joint["parent_frame"])
                    child = np.asarray(joint["child_frame"])
                    if joint["kind"] == "revolute":
                        motion = rodrigues(joint["axis"], q[qi])
                    else:
                        motion = np.eye(4)
                        motion[:3, 3] = np.asarray(joint["axis"]) * q[qi]
                    current = current @ parent @ motion @ np.linalg.inv(child)
                    qi += 1
                if rank < len(ids) - 1:
                    current = current @ np.asarray(m["distal"]["frame"])
            return current @ np.asarray(modules[ids[-1]]["distal"]["frame"])

        for _ in range(25):
            q = rng.uniform(arm6.q_lo, arm6.q_hi)
            expected = oracle(list(arm6.module_ids), q)
            got = fk(arm6, q)
            assert np.allclose(got.p, expected[:3, 3], atol=1e-10)
            assert np.allclose(se3.matrix_from_quat(got.n), expected[:3, :3], atol=1e-10)

    def test_base_pose_shifts_world(self, arm6, rng):
        q = rng.uniform(arm6.q_lo, arm6.q_hi)
        base = se3.transform(rotation=se3.rot_z(0.7), translation=(0.3, -0.2, 0.1))
        moved = fk(arm6, q, base_pose=base)
        local = fk(arm6, q)
        expected = base @ local.matrix()
        assert np.allclose(moved.matrix(), expected, atol=1e-12)


class TestRot:
    def test_same_rotation_gives_zero(self):
        n = se3.quat_from_axis_angle((0, 1, 0), 0.3)
        aa = rot(n, n)
        assert aa.theta == 0.0
        assert np.allclose(aa.e, [1.0, 0.0, 0.0])

    def test_quarter_turn_about_z(self):
        identity = np.array([1.0, 0, 0, 0])
        aa = rot(identity, se3.quat_from_axis_angle((0, 0, 1), np.pi / 2))
        assert np.allclose(aa.e, [0, 0, 1], atol=1e-12)
        assert np.isclose(aa.theta, np.pi / 2)

    def test_three_quarter_turn_normalizes_to_quarter(self):
        # 3pi/2 about +z equals pi/2 about -z after double-cover normalization
        identity = np.array([1.0, 0, 0, 0])
        aa = rot(identity, se3.quat_from_axis_angle((0, 0, 1), 3 * np.pi / 2))
        assert np.allclose(aa.e, [0, 0, -1], atol=1e-12)
        assert np.isclose(aa.theta, np.pi / 2)

    @given(st.integers(0, 2**32 - 1))
    @settings(max_examples=60, deadline=None)
    def test_invariants_and_symmetry(self, seed):
        rng = np.random.default_rng(seed)
        n1 = se3.random_quat(rng)
        n2 = se3.random_quat(rng)
        aa = rot(n1, n2)
        assert 0.0 <= aa.theta <= np.pi
        assert np.isclose(np.linalg.norm(aa.e), 1.0, atol=1e-9)
        assert np.isclose(rot(n2, n1).theta, aa.theta, atol=1e-9)

    def test_axis_angle_validation(self):
        with pytest.raises(ValueError):
            AxisAngle(e=np.array([1.0, 1.0, 0.0]), theta=0.1)
        with pytest.raises(ValueError):
            AxisAngle(e=np.array([1.0, 0.0, 0.0]), theta=4.0)


class TestJacobian:
    def test_planar_one_joint(self):
        asm, length = _single_revolute_arm()
        jac = jacobian(asm, np.zeros(1))
        assert np.allclose(jac[:3, 0], [0.0, length, 0.0], atol=1e-12)
        assert np.allclose(jac[3:, 0], [0.0, 0.0, 1.0], atol=1e-12)

    def test_prismatic_column(self, mixed_lib):
        asm = assemble(mixed_lib, [1, 6, 9, 10])  # base, adapter, slider, eef
        jac = jacobian(asm, np.zeros(1))
        assert np.allclose(jac[:, 0], [0, 0, 1, 0, 0, 0], atol=1e-12)

    def test_matches_finite_differences(self, arm6, rng):
        step = 1e-6
        for _ in range(10):
            q = rng.uniform(-np.pi, np.pi, size=arm6.n_joints)
            q = arm6.clamp(q)
            jac = jacobian(arm6, q)
            fd = np.zeros_like(jac)
            for j in range(arm6.n_joints):
                dq = np.zeros(arm6.n_joints)
                dq[j] = step
                plus = fk_frames(arm6, q + dq).tcp
                minus = fk_frames(arm6, q - dq).tcp
                fd[:3, j] = (plus[:3, 3] - minus[:3, 3]) / (2 * step)
                rel = plus[:3, :3] @ minus[:3, :3].T
                angle_vec = np.array([
                    rel[2, 1] - rel[1, 2], rel[0, 2] - rel[2, 0], rel[1, 0] - rel[0, 1]
                ]) / 2.0
                fd[3:, j] = angle_vec / (2 * step)
            assert np.max(np.abs(jac - fd)) <= 1e-5


class TestIk:
    def test_round_trip_on_fk_goals(self, arm6, rng):
        tol = tasks.tolerance_preset("arbitrary")
        successes = 0
        for i in range(30):
            q_star = rng.uniform(arm6.q_lo, arm6.q_hi)
            goal = fk(arm6, q_star)
            q = ik(arm6, goal, tol, rng_seed=i)
            if q is None:
                continue
            successes += 1
            assert np.all(q >= arm6.q_lo) and np.all(q <= arm6.q_hi)
            # re-check the predicate, not the solver's word
            assert tasks.reached(arm6, q, tasks.Goal(goal), tol)
        assert successes >= 27

    def test_unreachable_goal_returns_none(self, arm6):
        tol = tasks.tolerance_preset("sphere_like")
        goal = Pose(p=np.array([5.0, 0.0, 0.0]), n=np.array([1.0, 0, 0, 0]))
        assert ik(arm6, goal, tol, rng_seed=0) is None

    def test_reject_filter_blocks_success(self, arm6):
        tol = tasks.tolerance_preset("sphere_like")
        goal = fk(arm6, arm6.clamp(np.full(arm6.n_joints, 0.4)))
        assert ik(arm6, goal, tol, rng_seed=0) is not None
        opts = IkOptions(max_restarts=3)
        assert ik(arm6, goal, tol, opts=opts, rng_seed=0, reject=lambda q: True) is None

    def test_deterministic_given_seed(self, arm6):
        tol = tasks.tolerance_preset("arbitrary")
        goal = fk(arm6, arm6.clamp(np.full(arm6.n_joints, 0.6)))
        a = ik(arm6, goal, tol, rng_seed=7)
        b = ik(arm6, goal, tol, rng_seed=7)
        assert a is not None and np.array_equal(a, b)

    def test_detailed_reports_best_effort(self, arm6):
        tol = tasks.tolerance_preset("arbitrary")
        goal = Pose(p=np.array([4.0, 0.0, 0.5]), n=np.array([1.0, 0, 0, 0]))
        res = ik_detailed(arm6, goal, tol, rng_seed=0,
                          opts=IkOptions(max_restarts=2, max_iters=40))
        assert not res.success
        assert res.pos_err > 1.0  # roughly reach deficit
        assert res.q.shape == (arm6.n_joints,)

    def test_broad_tolerance_lets_low_dof_succeed(self, planar2):
        # a 2-DoF arm cannot hit an exact 6-DoF pose, but full orientation
        # freedom reduces the problem to planar positioning
        tol = tasks.Tolerances(phi=np.pi, t_axis=(1, 1, 1), t_p=1e-3)
        goal_q = np.array([0.8, -0.9])
        goal = fk(planar2, goal_q)
        got = ik(planar2, goal, tol, rng_seed=3)
        assert got is not None
        assert pose_within_tolerance(fk_frames(planar2, got).tcp, goal, tol)


def test_fk_continuity_in_q(arm6, rng):
    """FK is continuous: small joint perturbations move the TCP O(h)."""
    for _ in range(10):
        q = rng.uniform(arm6.q_lo, arm6.q_hi)
        base = fk_frames(arm6, q).tcp
        h = 1e-7
        dq = rng.normal(size=arm6.n_joints)
        dq /= np.linalg.norm(dq)
        moved = fk_frames(arm6, q + h * dq).tcp
        assert np.linalg.norm(moved[:3, 3] - base[:3, 3]) < 10 * h
        assert np.max(np.abs(moved[:3, :3] - base[:3, :3])) < 10 * h
