"""Shipped synthetic module libraries and benchmark tasks.

These stand in for proprietary vendor module data: a small single-size
library rich enough to build 6-DoF arms, a mixed-size library exercising
connector constraints, and two machine-tending tasks with pick / machine /
place goals.

Module geometry convention: every proximal connector frame is a 180-degree
x-flip at the body origin, so each body frame coincides with the frame it
plugs onto and bodies extend along their local +z. Capsule collision
geometry is inset by its radius so a body occupies exactly its nominal
z-extent and stacked modules do not touch at rest.
"""

from __future__ import annotations

from importlib import resources
from pathlib import Path

import numpy as np

from . import se3, tasks
from .geometry import CollisionPrimitive, Scene
from .kinematics import Pose
from .modlib import Body, Connector, ConnectorType, JointSpec, Module, ModuleLibrary

STD = ConnectorType("std", "medium")
WORLD = ConnectorType("world", "mount")
LRG = ConnectorType("LRG", "large")
SML = ConnectorType("SML", "small")
TOOL = ConnectorType("tool", "small")

# canonical assemblies over the small library
ARM6_IDS = (1, 2, 3, 4, 3, 4, 2, 3, 2, 6)  # 6 joints: roll pitch pitch | roll pitch roll
PLANAR2_IDS = (1, 3, 4, 3, 6)  # two pitch joints, motion in the x-z plane


def _cylinder_inertia(mass: float, radius: float, height: float) -> np.ndarray:
    ixx = mass * (3 * radius**2 + height**2) / 12.0
    izz = mass * radius**2 / 2.0
    return np.diag([ixx, ixx, izz])


def _capsule_body(mass: float, length: float, radius: float) -> Body:
    """Body extending z in [0, length], capsule surface flush with that span."""
    seg_half = max((length - 2 * radius) / 2.0, 0.01)
    return Body(
        mass=mass,
        com=(0.0, 0.0, length / 2.0),
        inertia=_cylinder_inertia(mass, radius, length),
        geometry=(
            CollisionPrimitive(
                kind="capsule",
                pose=se3.translation(0.0, 0.0, length / 2.0),
                dims=(radius, seg_half),
            ),
        ),
    )


def _proximal(ctype: ConnectorType) -> Connector:
    return Connector(ctype, "proximal", se3.FLIP_X)


def _distal(ctype: ConnectorType, length: float, rotation=None) -> Connector:
    return Connector(ctype, "distal", se3.transform(rotation=rotation, translation=(0, 0, length)))


def _link(mid: int, name: str, ctype_in, ctype_out, length: float, mass: float,
          radius: float = 0.04, bend=None) -> Module:
    return Module(
        id=mid,
        name=name,
        kind="regular",
        bodies=(_capsule_body(mass, length, radius),),
        joints=(),
        proximal=_proximal(ctype_in),
        distal=_distal(ctype_out, length, rotation=bend),
    )


def _joint_module(
    mid: int, name: str, ctype: ConnectorType, axis, q_range: tuple[float, float],
    h_housing: float = 0.12, h_output: float = 0.10, radius: float = 0.045,
    kind: str = "revolute", qd: float = 2.0, qdd: float = 5.0, tau: float = 400.0,
) -> Module:
    return Module(
        id=mid,
        name=name,
        kind="regular",
        bodies=(
            _capsule_body(1.5, h_housing, radius),
            _capsule_body(1.0, h_output, radius),
        ),
        joints=(
            JointSpec(
                kind=kind,
                axis=np.asarray(axis, dtype=float),
                parent_frame=se3.translation(0, 0, h_housing),
                child_frame=se3.EYE4.copy(),
                q_limits=q_range,
                qd_limits=(-qd, qd),
                qdd_limits=(-qdd, qdd),
                tau_max=tau,
            ),
        ),
        proximal=_proximal(ctype),
        distal=_distal(ctype, h_output),
    )


def _base(mid: int, name: str, ctype_out: ConnectorType, height: float = 0.15,
          radius: float = 0.06, prox: ConnectorType = WORLD) -> Module:
    body = Body(
        mass=4.0,
        com=(0.0, 0.0, height / 2.0),
        inertia=_cylinder_inertia(4.0, radius, height),
        geometry=(
            CollisionPrimitive(
                kind="cylinder",
                pose=se3.translation(0, 0, height / 2.0),
                dims=(radius, height / 2.0),
            ),
        ),
    )
    return Module(
        id=mid, name=name, kind="base", bodies=(body,), joints=(),
        proximal=_proximal(prox), distal=_distal(ctype_out, height),
    )


def _eef(mid: int, name: str, ctype_in: ConnectorType, length: float = 0.1) -> Module:
    return Module(
        id=mid,
        name=name,
        kind="end_effector",
        bodies=(_capsule_body(0.3, length, 0.03),),
        joints=(),
        proximal=_proximal(ctype_in),
        distal=_distal(TOOL, length),
    )


def small_library() -> ModuleLibrary:
    """Six modules, one connector size: 1 base, 2 joints, 2 links, 1 end effector."""
    modules = [
        _base(1, "base", STD),
        _joint_module(2, "joint_roll", STD, (0, 0, 1), (-np.pi, np.pi)),
        _joint_module(3, "joint_pitch", STD, (0, 1, 0), (-2.4, 2.4)),
        _link(4, "link_straight", STD, STD, 0.3, 0.8),
        _link(5, "link_elbow", STD, STD, 0.25, 0.7, bend=se3.rot_y(np.pi / 2)),
        _eef(6, "gripper", STD),
    ]
    return ModuleLibrary(modules, connector_types=[STD, WORLD, TOOL])


def mixed_library() -> ModuleLibrary:
    """Two connector sizes joined by an adapter link, plus a prismatic module."""
    modules = [
        _base(1, "base_large_a", LRG, height=0.18, radius=0.08),
        _base(2, "base_large_b", LRG, height=0.15, radius=0.07),
        _joint_module(3, "joint_large", LRG, (0, 1, 0), (-2.2, 2.2),
                      h_housing=0.14, h_output=0.12, radius=0.055, tau=200.0),
        _link(4, "link_large_straight", LRG, LRG, 0.3, 1.2, radius=0.05),
        _link(5, "link_large_elbow", LRG, LRG, 0.25, 1.0, radius=0.05,
              bend=se3.rot_y(np.pi / 2)),
        _link(6, "adapter_large_small", LRG, SML, 0.15, 0.6, radius=0.045),
        _joint_module(7, "joint_small", SML, (0, 1, 0), (-2.4, 2.4),
                      h_housing=0.10, h_output=0.08, radius=0.04, tau=80.0),
        _link(8, "link_small_straight", SML, SML, 0.2, 0.5, radius=0.035),
        _joint_module(9, "slider_small", SML, (0, 0, 1), (0.0, 0.25),
                      h_housing=0.15, h_output=0.10, radius=0.04,
                      kind="prismatic", qd=0.5, qdd=1.0, tau=400.0),
        _eef(10, "gripper_small", SML, length=0.1),
        _eef(11, "camera_small", SML, length=0.08),
    ]
    return ModuleLibrary(modules, connector_types=[LRG, SML, WORLD, TOOL])


def _pose(p, rotation=None) -> Pose:
    return Pose.from_matrix(se3.transform(rotation=rotation, translation=p))


def manufacturing_task_1(preset: str = "arbitrary") -> tasks.Task:
    """Machine tending: pick from a conveyor, reach into a mill, place on a pallet."""
    tol = tasks.tolerance_preset(preset)
    obstacles = (
        # conveyor belt along y
        CollisionPrimitive("box", se3.translation(0.65, 0.0, 0.15), (0.10, 0.60, 0.15)),
        # milling machine body with the work point in front of it
        CollisionPrimitive("box", se3.translation(-0.75, 0.35, 0.35), (0.15, 0.25, 0.35)),
        # pallet
        CollisionPrimitive("box", se3.translation(0.05, -0.70, 0.05), (0.20, 0.20, 0.05)),
    )
    down = se3.rot_y(np.pi)  # tool z pointing down
    goals = (
        tasks.Goal(_pose((0.62, 0.25, 0.42), down), id="pick"),
        tasks.Goal(_pose((-0.52, 0.35, 0.55), se3.rot_y(np.pi / 2)), id="machine"),
        tasks.Goal(_pose((0.05, -0.68, 0.22), down), id="place"),
    )
    return tasks.Task(goals=goals, tol=tol, scene=Scene(obstacles))


def manufacturing_task_2(preset: str = "arbitrary") -> tasks.Task:
    """Compact cell: goals closer together around a central fixture."""
    tol = tasks.tolerance_preset(preset)
    obstacles = (
        CollisionPrimitive("cylinder", se3.translation(0.0, 0.55, 0.25), (0.12, 0.25)),
        CollisionPrimitive("box", se3.translation(-0.55, -0.25, 0.25), (0.12, 0.12, 0.25)),
    )
    down = se3.rot_y(np.pi)
    goals = (
        tasks.Goal(_pose((0.30, 0.52, 0.62), down), id="pick"),
        tasks.Goal(_pose((-0.55, -0.25, 0.62), down), id="machine"),
        tasks.Goal(_pose((0.45, -0.35, 0.30), down), id="place"),
    )
    return tasks.Task(goals=goals, tol=tol, scene=Scene(obstacles))


_DATA_FILES = {
    "fixture_small.json": lambda: small_library(),
    "fixture_mixed.json": lambda: mixed_library(),
    "manufacturing_1.json": lambda: manufacturing_task_1(),
    "manufacturing_2.json": lambda: manufacturing_task_2(),
}


def data_path(name: str) -> Path:
    return Path(resources.files("modsynth").joinpath("data", name))


def write_data_files(directory) -> None:
    """Regenerate the shipped JSON fixtures (used once at packaging time)."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    for name, build in _DATA_FILES.items():
        build().save(directory / name)
