"""Robot modules, connectors, libraries, and serial-chain assembly.

A module owns an ordered list of bodies joined by internal single-DoF
joints, plus one proximal and one distal connector. Two modules mate when
the distal connector type of the first equals the proximal connector type
of the second. Mating aligns the connector frames so their z-axes are
anti-parallel and their x-axes coincide; the base module's proximal
connector plugs into the world-side socket given by the task's base pose
using the same alignment.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import geometry, se3
from .errors import ConnectorMismatch, InvalidStructure

MODULE_KINDS = ("base", "regular", "end_effector")
JOINT_KINDS = ("revolute", "prismatic")


@dataclass(frozen=True, eq=False)
class ConnectorType:
    """Connector family; two connectors mate iff their type ids are equal."""

    id: str
    size_class: str = ""

    def __eq__(self, other):
        if not isinstance(other, ConnectorType):
            return NotImplemented
        return self.id == other.id

    def __hash__(self):
        return hash(self.id)


@dataclass(frozen=True, eq=False)
class Connector:
    ctype: ConnectorType
    gender: str  # "proximal" | "distal"
    frame: np.ndarray  # 4x4 transform relative to the owning body

    def __post_init__(self):
        if self.gender not in ("proximal", "distal"):
            raise ValueError(f"bad connector gender {self.gender!r}")
        object.__setattr__(self, "frame", np.asarray(self.frame, dtype=float))


@dataclass(frozen=True, eq=False)
class Body:
    mass: float
    com: np.ndarray
    inertia: np.ndarray  # 3x3, about com, symmetric PSD
    geometry: tuple[geometry.CollisionPrimitive, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "com", np.asarray(self.com, dtype=float))
        object.__setattr__(self, "inertia", np.asarray(self.inertia, dtype=float))
        object.__setattr__(self, "geometry", tuple(self.geometry))
        if self.mass < 0:
            raise ValueError("body mass must be >= 0")
        if self.inertia.shape != (3, 3):
            raise ValueError("inertia must be 3x3")
        if not np.allclose(self.inertia, self.inertia.T, atol=1e-9):
            raise ValueError("inertia must be symmetric")
        if np.min(np.linalg.eigvalsh(self.inertia)) < -1e-9:
            raise ValueError("inertia must be positive semi-definite")

    @property
    def is_empty(self) -> bool:
        return self.mass == 0.0 and not self.geometry


@dataclass(frozen=True, eq=False)
class JointSpec:
    kind: str
    axis: np.ndarray  # unit vector in the joint frame
    parent_frame: np.ndarray  # joint frame in parent-body coordinates
    child_frame: np.ndarray  # joint frame in child-body coordinates
    q_limits: tuple[float, float]
    qd_limits: tuple[float, float]
    qdd_limits: tuple[float, float]
    tau_max: float

    def __post_init__(self):
        if self.kind not in JOINT_KINDS:
            raise ValueError(f"bad joint kind {self.kind!r}")
        object.__setattr__(self, "axis", np.asarray(self.axis, dtype=float))
        object.__setattr__(self, "parent_frame", np.asarray(self.parent_frame, dtype=float))
        object.__setattr__(self, "child_frame", np.asarray(self.child_frame, dtype=float))
        object.__setattr__(self, "q_limits", tuple(float(v) for v in self.q_limits))
        object.__setattr__(self, "qd_limits", tuple(float(v) for v in self.qd_limits))
        object.__setattr__(self, "qdd_limits", tuple(float(v) for v in self.qdd_limits))
        if abs(np.linalg.norm(self.axis) - 1.0) > 1e-9:
            raise ValueError("joint axis must be a unit vector")
        lo, hi = self.q_limits
        if lo > hi:
            raise ValueError("q_limits must satisfy lo <= hi")
        if not (self.qd_limits[0] < 0 < self.qd_limits[1]):
            raise ValueError("qd_limits must straddle zero")
        if not (self.qdd_limits[0] < 0 < self.qdd_limits[1]):
            raise ValueError("qdd_limits must straddle zero")
        if self.tau_max <= 0:
            raise ValueError("tau_max must be positive")


@dataclass(frozen=True, eq=False)
class Module:
    id: int
    name: str
    kind: str
    bodies: tuple[Body, ...]
    joints: tuple[JointSpec, ...]
    proximal: Connector
    distal: Connector

    def __post_init__(self):
        object.__setattr__(self, "bodies", tuple(self.bodies))
        object.__setattr__(self, "joints", tuple(self.joints))
        if self.id <= 0:
            raise ValueError("module id must be a positive integer")
        if self.kind not in MODULE_KINDS:
            raise ValueError(f"bad module kind {self.kind!r}")
        if len(self.bodies) < 1:
            raise ValueError("module needs at least one body")
        if len(self.joints) != len(self.bodies) - 1:
            raise ValueError("module needs exactly len(bodies)-1 joints")

    @property
    def n_joints(self) -> int:
        return len(self.joints)

    @property
    def has_joint(self) -> bool:
        return bool(self.joints)

    @property
    def connector_pair(self) -> tuple[str, str]:
        return (self.proximal.ctype.id, self.distal.ctype.id)


class ModuleLibrary:
    """Immutable catalog of modules with a gene-value indexing.

    Gene value 0 always encodes the empty slot; values 1..len(modules)
    map to module ids in ascending id order.
    """

    def __init__(self, modules, connector_types=None):
        mods = sorted(modules, key=lambda m: m.id)
        ids = [m.id for m in mods]
        if len(set(ids)) != len(ids):
            raise ValueError("module ids must be unique")
        self._modules = {m.id: m for m in mods}
        self._gene_to_id = {g: mid for g, mid in enumerate(ids, start=1)}
        self._id_to_gene = {mid: g for g, mid in self._gene_to_id.items()}
        if connector_types is None:
            seen = {}
            for m in mods:
                for conn in (m.proximal, m.distal):
                    seen.setdefault(conn.ctype.id, conn.ctype)
            connector_types = list(seen.values())
        self._connector_types = {ct.id: ct for ct in connector_types}

    def __len__(self):
        return len(self._modules)

    def __iter__(self):
        return iter(self._modules.values())

    @property
    def modules(self) -> tuple[Module, ...]:
        return tuple(self._modules.values())

    @property
    def connector_types(self) -> tuple[ConnectorType, ...]:
        return tuple(self._connector_types.values())

    def module(self, module_id: int) -> Module:
        return self._modules[module_id]

    def gene_for_id(self, module_id: int) -> int:
        return self._id_to_gene[module_id]

    def id_for_gene(self, gene: int) -> int:
        return self._gene_to_id[gene]

    def module_for_gene(self, gene: int) -> Module | None:
        if gene == 0:
            return None
        return self._modules[self._gene_to_id[gene]]

    def by_kind(self, kind: str) -> tuple[Module, ...]:
        return tuple(m for m in self._modules.values() if m.kind == kind)

    @property
    def bases(self) -> tuple[Module, ...]:
        return self.by_kind("base")

    @property
    def end_effectors(self) -> tuple[Module, ...]:
        return self.by_kind("end_effector")

    @property
    def regulars(self) -> tuple[Module, ...]:
        return self.by_kind("regular")

    # --- serialization ----------------------------------------------------

    def to_json_dict(self) -> dict:
        return {
            "modules": [_module_to_dict(m) for m in self._modules.values()],
            "connector_types": [
                {"id": ct.id, "size_class": ct.size_class}
                for ct in self._connector_types.values()
            ],
        }

    @classmethod
    def from_json_dict(cls, data: dict) -> "ModuleLibrary":
        ctypes = {
            entry["id"]: ConnectorType(entry["id"], entry.get("size_class", ""))
            for entry in data.get("connector_types", [])
        }
        modules = [_module_from_dict(m, ctypes) for m in data["modules"]]
        return cls(modules, connector_types=list(ctypes.values()) or None)

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_json_dict(), indent=2, sort_keys=True))

    @classmethod
    def load(cls, path) -> "ModuleLibrary":
        return cls.from_json_dict(json.loads(Path(path).read_text()))


def _tf_to_list(t: np.ndarray) -> list:
    return np.asarray(t, dtype=float).tolist()


def _module_to_dict(m: Module) -> dict:
    return {
        "id": m.id,
        "name": m.name,
        "kind": m.kind,
        "bodies": [
            {
                "mass": b.mass,
                "com": b.com.tolist(),
                "inertia": b.inertia.tolist(),
                "geometry": [geometry.primitive_to_dict(p) for p in b.geometry],
            }
            for b in m.bodies
        ],
        "joints": [
            {
                "kind": j.kind,
                "axis": j.axis.tolist(),
                "parent_frame": _tf_to_list(j.parent_frame),
                "child_frame": _tf_to_list(j.child_frame),
                "q_limits": list(j.q_limits),
                "qd_limits": list(j.qd_limits),
                "qdd_limits": list(j.qdd_limits),
                "tau_max": j.tau_max,
            }
            for j in m.joints
        ],
        "proximal": {"type": m.proximal.ctype.id, "frame": _tf_to_list(m.proximal.frame)},
        "distal": {"type": m.distal.ctype.id, "frame": _tf_to_list(m.distal.frame)},
    }


def _module_from_dict(data: dict, ctypes: dict) -> Module:
    def ctype(name: str) -> ConnectorType:
        return ctypes.setdefault(name, ConnectorType(name))

    bodies = tuple(
        Body(
            mass=b["mass"],
            com=np.asarray(b["com"], dtype=float),
            inertia=np.asarray(b["inertia"], dtype=float),
            geometry=tuple(geometry.primitive_from_dict(p) for p in b.get("geometry", [])),
        )
        for b in data["bodies"]
    )
    joints = tuple(
        JointSpec(
            kind=j["kind"],
            axis=np.asarray(j["axis"], dtype=float),
            parent_frame=np.asarray(j["parent_frame"], dtype=float),
            child_frame=np.asarray(j["child_frame"], dtype=float),
            q_limits=tuple(j["q_limits"]),
            qd_limits=tuple(j["qd_limits"]),
            qdd_limits=tuple(j["qdd_limits"]),
            tau_max=j["tau_max"],
        )
        for j in data.get("joints", [])
    )
    return Module(
        id=data["id"],
        name=data["name"],
        kind=data["kind"],
        bodies=bodies,
        joints=joints,
        proximal=Connector(ctype(data["proximal"]["type"]), "proximal",
                           np.asarray(data["proximal"]["frame"], dtype=float)),
        distal=Connector(ctype(data["distal"]["type"]), "distal",
                         np.asarray(data["distal"]["frame"], dtype=float)),
    )


# --- assembly ---------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class ChainElement:
    """One body of the flattened chain and how it attaches to the previous one.

    Jointed elements compose pre @ joint_motion(q) @ post; fixed elements
    use pre alone (post folded in). skew/skew2 cache the Rodrigues terms of
    revolute axes.
    """

    body: Body
    module_index: int
    pre: np.ndarray
    joint: JointSpec | None = None
    post: np.ndarray | None = None
    joint_index: int = -1
    skew: np.ndarray | None = None
    skew2: np.ndarray | None = None


@dataclass(frozen=True, eq=False)
class Assembly:
    """Validated base-to-end-effector module sequence with its derived chain.

    geometry_elements/geometry_radii/self_pairs precompute the collision
    structure: posed primitives per element, their bounding radii, and the
    index pairs subject to self-collision checks (bodies that are adjacent
    in the geometry-bearing order are exempt; they touch at connectors).
    """

    modules: tuple[Module, ...]
    elements: tuple[ChainElement, ...]
    tcp_offset: np.ndarray
    q_lo: np.ndarray
    q_hi: np.ndarray
    qd_lo: np.ndarray
    qd_hi: np.ndarray
    qdd_lo: np.ndarray
    qdd_hi: np.ndarray
    tau_max: np.ndarray
    geometry_elements: tuple = ()
    geometry_radii: np.ndarray = field(default_factory=lambda: np.zeros(0))
    self_pairs: np.ndarray = field(default_factory=lambda: np.zeros((0, 2), dtype=int))

    @property
    def module_ids(self) -> tuple[int, ...]:
        return tuple(m.id for m in self.modules)

    @property
    def n_modules(self) -> int:
        return len(self.modules)

    @property
    def n_joints(self) -> int:
        return len(self.q_lo)

    @property
    def joint_specs(self) -> tuple[JointSpec, ...]:
        return tuple(e.joint for e in self.elements if e.joint is not None)

    def clamp(self, q: np.ndarray) -> np.ndarray:
        return np.clip(np.asarray(q, dtype=float), self.q_lo, self.q_hi)

    def home_config(self) -> np.ndarray:
        return self.clamp(np.zeros(self.n_joints))


def can_connect(a: Module, b: Module) -> bool:
    """True when a's distal connector mates b's proximal one.

    End effectors terminate a chain, so nothing can follow them.
    """
    if a.kind == "end_effector":
        return False
    return a.distal.ctype == b.proximal.ctype


def assemble(library: ModuleLibrary, ids) -> Assembly:
    """Build and validate the serial chain for an ordered id sequence."""
    ids = list(ids)
    if not ids:
        raise InvalidStructure("empty module sequence")
    modules = [library.module(i) for i in ids]
    if modules[0].kind != "base":
        raise InvalidStructure(f"first module {ids[0]} is not a base")
    if modules[-1].kind != "end_effector":
        raise InvalidStructure(f"last module {ids[-1]} is not an end effector")
    for m in modules[1:-1]:
        if m.kind != "regular":
            raise InvalidStructure(f"interior module {m.id} has kind {m.kind}")
    for i in range(len(modules) - 1):
        if modules[i].distal.ctype != modules[i + 1].proximal.ctype:
            raise ConnectorMismatch(i)

    elements = []
    joint_specs = []
    for k, m in enumerate(modules):
        if k == 0:
            attach = se3.FLIP_X @ se3.invert(m.proximal.frame)
        else:
            attach = modules[k - 1].distal.frame @ se3.FLIP_X @ se3.invert(m.proximal.frame)
        elements.append(ChainElement(body=m.bodies[0], module_index=k, pre=attach))
        for j, spec in enumerate(m.joints):
            skew = skew2 = None
            if spec.kind == "revolute":
                x, y, z = spec.axis
                skew = np.array([[0.0, -z, y], [z, 0.0, -x], [-y, x, 0.0]])
                skew2 = skew @ skew
            elements.append(
                ChainElement(
                    body=m.bodies[j + 1],
                    module_index=k,
                    pre=spec.parent_frame,
                    joint=spec,
                    post=se3.invert(spec.child_frame),
                    joint_index=len(joint_specs),
                    skew=skew,
                    skew2=skew2,
                )
            )
            joint_specs.append(spec)

    geometry_elements = []
    for idx, element in enumerate(elements):
        for prim in element.body.geometry:
            geometry_elements.append((idx, prim))
    radii = np.array([prim.bounding_radius for _, prim in geometry_elements])
    occupied = sorted({idx for idx, _ in geometry_elements})
    rank = {idx: r for r, idx in enumerate(occupied)}
    pairs = [
        (i, j)
        for i in range(len(geometry_elements))
        for j in range(i + 1, len(geometry_elements))
        if geometry_elements[i][0] != geometry_elements[j][0]
        and abs(rank[geometry_elements[i][0]] - rank[geometry_elements[j][0]]) > 1
    ]

    def limit(attr, idx):
        return np.array([getattr(j, attr)[idx] for j in joint_specs], dtype=float)

    return Assembly(
        modules=tuple(modules),
        elements=tuple(elements),
        tcp_offset=np.asarray(modules[-1].distal.frame, dtype=float),
        q_lo=limit("q_limits", 0),
        q_hi=limit("q_limits", 1),
        qd_lo=limit("qd_limits", 0),
        qd_hi=limit("qd_limits", 1),
        qdd_lo=limit("qdd_limits", 0),
        qdd_hi=limit("qdd_limits", 1),
        tau_max=np.array([j.tau_max for j in joint_specs], dtype=float),
        geometry_elements=tuple(geometry_elements),
        geometry_radii=radii,
        self_pairs=np.array(pairs, dtype=int).reshape(-1, 2),
    )


def count_compositions(
    library: ModuleLibrary, max_len: int, constrained: bool, min_len: int = 1
) -> int:
    """Number of module sequences up to max_len.

    Unconstrained counts every id sequence of length min_len..max_len.
    Constrained counts only connector-valid base->end-effector chains,
    via dynamic programming over open distal connector types.
    """
    if max_len < 1:
        raise ValueError("max_len must be >= 1")
    if constrained:
        state: dict[str, int] = {}
        for base in library.bases:
            t = base.distal.ctype.id
            state[t] = state.get(t, 0) + 1
        eef_by_prox: dict[str, int] = {}
        for eef in library.end_effectors:
            t = eef.proximal.ctype.id
            eef_by_prox[t] = eef_by_prox.get(t, 0) + 1
        total = 0
        for length in range(2, max_len + 1):
            if length >= max(2, min_len):
                total += sum(state.get(t, 0) * n for t, n in eef_by_prox.items())
            nxt: dict[str, int] = {}
            for t, count in state.items():
                for reg in library.regulars:
                    if reg.proximal.ctype.id == t:
                        dt = reg.distal.ctype.id
                        nxt[dt] = nxt.get(dt, 0) + count
            state = nxt
        return total
    m = len(library)
    return sum(m**n for n in range(min_len, max_len + 1))


def _nearest_nonzero(genes, position: int, step: int) -> Module | None:
    i = position + step
    while 0 <= i < len(genes):
        if genes[i] != 0:
            return i
        i += step
    return None


def mutation_candidates(library: ModuleLibrary, genes, position: int) -> set[int]:
    """Gene values admissible as a replacement at `position`.

    Non-empty genes may swap to any same-kind module with an identical
    (proximal, distal) connector-type pair. Interior positions gain the
    empty gene 0 whenever the nearest non-empty neighbors mate directly;
    an empty gene may fill with any module that bridges those neighbors.
    """
    genes = list(genes)
    n = len(genes)
    if not (0 <= position < n):
        raise IndexError(f"position {position} out of range for {n} genes")
    if position == 0:
        cur = library.module_for_gene(genes[0])
        return {
            library.gene_for_id(m.id)
            for m in library.bases
            if m.connector_pair == cur.connector_pair
        }
    if position == n - 1:
        cur = library.module_for_gene(genes[-1])
        return {
            library.gene_for_id(m.id)
            for m in library.end_effectors
            if m.connector_pair == cur.connector_pair
        }
    left_idx = _nearest_nonzero(genes, position, -1)
    right_idx = _nearest_nonzero(genes, position, +1)
    left = library.module_for_gene(genes[left_idx])
    right = library.module_for_gene(genes[right_idx])
    cur = library.module_for_gene(genes[position])
    if cur is None:
        candidates = {
            library.gene_for_id(m.id)
            for m in library.regulars
            if m.proximal.ctype == left.distal.ctype
            and m.distal.ctype == right.proximal.ctype
        }
        candidates.add(0)
        return candidates
    candidates = {
        library.gene_for_id(m.id)
        for m in library.regulars
        if m.connector_pair == cur.connector_pair
    }
    if left.distal.ctype == right.proximal.ctype:
        candidates.add(0)
    return candidates
