"""Collision primitives, robot occupied space, and intersection tests.

Sphere and capsule pairs use exact closed-form distances; any pair
involving a box or cylinder falls back to GJK on the convex cores
(capsules and spheres are handled as inflated segments/points).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import se3
from .errors import DimensionMismatch

_DIM_COUNT = {"sphere": 1, "box": 3, "cylinder": 2, "capsule": 2}

GJK_TOL = 1e-6
_GJK_MAX_ITER = 128


@dataclass(frozen=True, eq=False)
class CollisionPrimitive:
    """Convex collision shape with a pose relative to its owner.

    dims per kind: sphere [r]; box [hx, hy, hz] (half extents);
    cylinder and capsule [r, hl] (axis along local z, half length hl).
    """

    kind: str
    pose: np.ndarray
    dims: tuple[float, ...]

    def __post_init__(self):
        if self.kind not in _DIM_COUNT:
            raise ValueError(f"unknown primitive kind {self.kind!r}")
        if len(self.dims) != _DIM_COUNT[self.kind]:
            raise ValueError(
                f"{self.kind} expects {_DIM_COUNT[self.kind]} dims, got {len(self.dims)}"
            )
        if any(d <= 0 for d in self.dims):
            raise ValueError("primitive dimensions must be positive")
        object.__setattr__(self, "pose", np.asarray(self.pose, dtype=float))
        object.__setattr__(self, "dims", tuple(float(d) for d in self.dims))

    @property
    def bounding_radius(self) -> float:
        """Radius of a sphere at the pose origin containing the shape."""
        if self.kind == "sphere":
            return self.dims[0]
        if self.kind == "box":
            return float(np.linalg.norm(self.dims))
        r, hl = self.dims
        if self.kind == "capsule":
            return hl + r
        return float(np.hypot(r, hl))


@dataclass(frozen=True)
class Scene:
    """Static obstacles in the world frame."""

    obstacles: tuple[CollisionPrimitive, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "obstacles", tuple(self.obstacles))


def primitive_to_dict(prim: CollisionPrimitive) -> dict:
    return {
        "kind": prim.kind,
        "pose": np.asarray(prim.pose).tolist(),
        "dims": list(prim.dims),
    }


def primitive_from_dict(data: dict) -> CollisionPrimitive:
    return CollisionPrimitive(
        kind=data["kind"],
        pose=np.asarray(data["pose"], dtype=float),
        dims=tuple(data["dims"]),
    )


# --- support functions and GJK -------------------------------------------


def _core_support(prim: CollisionPrimitive, world: np.ndarray):
    """Support function of the primitive's convex core and its radius.

    Cores: sphere -> point, capsule -> segment, box/cylinder -> themselves.
    Directions and points are plain float triples for speed in the GJK loop.
    """
    px, py, pz = (float(v) for v in world[:3, 3])
    cx = tuple(float(v) for v in world[:3, 0])
    cy = tuple(float(v) for v in world[:3, 1])
    cz = tuple(float(v) for v in world[:3, 2])
    kind = prim.kind
    if kind == "sphere":
        point = (px, py, pz)
        return (lambda d: point), prim.dims[0]
    if kind == "capsule":
        r, hl = prim.dims
        ax, ay, az = cz[0] * hl, cz[1] * hl, cz[2] * hl
        top = (px + ax, py + ay, pz + az)
        bottom = (px - ax, py - ay, pz - az)

        def support(d):
            return top if d[0] * ax + d[1] * ay + d[2] * az >= 0.0 else bottom

        return support, r
    if kind == "box":
        hx, hy, hz = prim.dims

        def support(d):
            sx = hx if d[0] * cx[0] + d[1] * cx[1] + d[2] * cx[2] >= 0.0 else -hx
            sy = hy if d[0] * cy[0] + d[1] * cy[1] + d[2] * cy[2] >= 0.0 else -hy
            sz = hz if d[0] * cz[0] + d[1] * cz[1] + d[2] * cz[2] >= 0.0 else -hz
            return (
                px + sx * cx[0] + sy * cy[0] + sz * cz[0],
                py + sx * cx[1] + sy * cy[1] + sz * cz[1],
                pz + sx * cx[2] + sy * cy[2] + sz * cz[2],
            )

        return support, 0.0
    # cylinder
    r, hl = prim.dims

    def support(d):
        dx = d[0] * cx[0] + d[1] * cx[1] + d[2] * cx[2]
        dy = d[0] * cy[0] + d[1] * cy[1] + d[2] * cy[2]
        dz = d[0] * cz[0] + d[1] * cz[1] + d[2] * cz[2]
        nxy = (dx * dx + dy * dy) ** 0.5
        if nxy > 1e-12:
            sx, sy = r * dx / nxy, r * dy / nxy
        else:
            sx = sy = 0.0
        sz = hl if dz >= 0.0 else -hl
        return (
            px + sx * cx[0] + sy * cy[0] + sz * cz[0],
            py + sx * cx[1] + sy * cy[1] + sz * cz[1],
            pz + sx * cx[2] + sy * cy[2] + sz * cz[2],
        )

    return support, 0.0


# The GJK inner loop runs on plain float triples: numpy call overhead
# dominates at this size.


def _dot(a, b):
    return a[0] * b[0] + a[1] * b[1] + a[2] * b[2]


def _sub(a, b):
    return (a[0] - b[0], a[1] - b[1], a[2] - b[2])


def _closest_on_segment(a, b):
    ab = _sub(b, a)
    denom = _dot(ab, ab)
    if denom < 1e-18:
        return a, [a]
    t = -_dot(a, ab) / denom
    if t <= 0.0:
        return a, [a]
    if t >= 1.0:
        return b, [b]
    return (a[0] + t * ab[0], a[1] + t * ab[1], a[2] + t * ab[2]), [a, b]


def _closest_on_triangle(a, b, c):
    # Ericson-style closest point on triangle to the origin.
    ab = _sub(b, a)
    ac = _sub(c, a)
    d1 = -_dot(ab, a)
    d2 = -_dot(ac, a)
    if d1 <= 0.0 and d2 <= 0.0:
        return a, [a]
    d3 = -_dot(ab, b)
    d4 = -_dot(ac, b)
    if d3 >= 0.0 and d4 <= d3:
        return b, [b]
    vc = d1 * d4 - d3 * d2
    if vc <= 0.0 and d1 >= 0.0 and d3 <= 0.0:
        v = d1 / (d1 - d3)
        return (a[0] + v * ab[0], a[1] + v * ab[1], a[2] + v * ab[2]), [a, b]
    d5 = -_dot(ab, c)
    d6 = -_dot(ac, c)
    if d6 >= 0.0 and d5 <= d6:
        return c, [c]
    vb = d5 * d2 - d1 * d6
    if vb <= 0.0 and d2 >= 0.0 and d6 <= 0.0:
        w = d2 / (d2 - d6)
        return (a[0] + w * ac[0], a[1] + w * ac[1], a[2] + w * ac[2]), [a, c]
    va = d3 * d6 - d5 * d4
    if va <= 0.0 and (d4 - d3) >= 0.0 and (d5 - d6) >= 0.0:
        w = (d4 - d3) / ((d4 - d3) + (d5 - d6))
        bc = _sub(c, b)
        return (b[0] + w * bc[0], b[1] + w * bc[1], b[2] + w * bc[2]), [b, c]
    denom = 1.0 / (va + vb + vc)
    v = vb * denom
    w = vc * denom
    return (
        a[0] + ab[0] * v + ac[0] * w,
        a[1] + ab[1] * v + ac[1] * w,
        a[2] + ab[2] * v + ac[2] * w,
    ), [a, b, c]


def _closest_on_simplex(simplex):
    n = len(simplex)
    if n == 1:
        return simplex[0], simplex
    if n == 2:
        return _closest_on_segment(simplex[0], simplex[1])
    if n == 3:
        return _closest_on_triangle(simplex[0], simplex[1], simplex[2])
    # tetrahedron: test the origin against each face
    a, b, c, d = simplex
    best_dist = None
    best = None
    inside = True
    for fa, fb, fc, opposite in ((a, b, c, d), (a, b, d, c), (a, c, d, b), (b, c, d, a)):
        e1 = _sub(fb, fa)
        e2 = _sub(fc, fa)
        nx = e1[1] * e2[2] - e1[2] * e2[1]
        ny = e1[2] * e2[0] - e1[0] * e2[2]
        nz = e1[0] * e2[1] - e1[1] * e2[0]
        normal = (nx, ny, nz)
        if _dot(normal, _sub(opposite, fa)) > 0.0:
            normal = (-nx, -ny, -nz)
        if -_dot(normal, fa) > 1e-15:
            inside = False
            p, sub = _closest_on_triangle(fa, fb, fc)
            dist = _dot(p, p)
            if best_dist is None or dist < best_dist:
                best_dist = dist
                best = (p, sub)
    if inside:
        return (0.0, 0.0, 0.0), list(simplex)
    return best


def gjk_distance(support_a, support_b, tol: float = GJK_TOL) -> float:
    """Distance between two convex sets given by support functions.

    Returns 0.0 when the sets intersect or touch (within tol).
    """
    d = (1.0, 0.0, 0.0)
    s = support_a(d)
    t = support_b((-1.0, 0.0, 0.0))
    simplex = [(s[0] - t[0], s[1] - t[1], s[2] - t[2])]
    dist = np.sqrt(_dot(simplex[0], simplex[0]))
    for _ in range(_GJK_MAX_ITER):
        p, simplex = _closest_on_simplex(simplex)
        dist = np.sqrt(_dot(p, p))
        if dist < 1e-10:
            return 0.0
        d = (-p[0] / dist, -p[1] / dist, -p[2] / dist)
        sa = support_a(d)
        sb = support_b((-d[0], -d[1], -d[2]))
        w = (sa[0] - sb[0], sa[1] - sb[1], sa[2] - sb[2])
        # duality gap: |p| is an upper bound, -d.w a lower bound
        if dist + _dot(d, w) <= tol:
            return float(dist)
        # repeated support point: no further progress possible
        for v in simplex:
            dv = _sub(w, v)
            if _dot(dv, dv) <= 1e-24:
                return float(dist)
        simplex.append(w)
    return float(dist)


# --- analytic point/segment distances -------------------------------------


def _point_segment_distance(p, a, b) -> float:
    ab = b - a
    denom = ab @ ab
    if denom < 1e-18:
        return float(np.linalg.norm(p - a))
    t = np.clip((p - a) @ ab / denom, 0.0, 1.0)
    return float(np.linalg.norm(p - (a + t * ab)))


def _segment_segment_distance(p1, q1, p2, q2) -> float:
    d1 = q1 - p1
    d2 = q2 - p2
    r = p1 - p2
    a = d1 @ d1
    e = d2 @ d2
    f = d2 @ r
    if a < 1e-18 and e < 1e-18:
        return float(np.linalg.norm(r))
    if a < 1e-18:
        s = 0.0
        t = np.clip(f / e, 0.0, 1.0)
    else:
        c = d1 @ r
        if e < 1e-18:
            t = 0.0
            s = np.clip(-c / a, 0.0, 1.0)
        else:
            b = d1 @ d2
            denom = a * e - b * b
            s = np.clip((b * f - c * e) / denom, 0.0, 1.0) if denom > 1e-18 else 0.0
            t = (b * s + f) / e
            if t < 0.0:
                t = 0.0
                s = np.clip(-c / a, 0.0, 1.0)
            elif t > 1.0:
                t = 1.0
                s = np.clip((b - c) / a, 0.0, 1.0)
    c1 = p1 + s * d1
    c2 = p2 + t * d2
    return float(np.linalg.norm(c1 - c2))


def _capsule_segment(prim: CollisionPrimitive, world: np.ndarray):
    axis = world[:3, 2] * prim.dims[1]
    pos = world[:3, 3]
    return pos - axis, pos + axis


def point_distance(prim: CollisionPrimitive, world: np.ndarray, point) -> float:
    """Exact distance from a world point to the primitive surface (0 inside)."""
    point = np.asarray(point, dtype=float)
    local = world[:3, :3].T @ (point - world[:3, 3])
    if prim.kind == "sphere":
        return max(0.0, float(np.linalg.norm(local)) - prim.dims[0])
    if prim.kind == "box":
        h = np.asarray(prim.dims)
        excess = np.maximum(np.abs(local) - h, 0.0)
        return float(np.linalg.norm(excess))
    r, hl = prim.dims
    if prim.kind == "capsule":
        dz = max(abs(local[2]) - hl, 0.0)
        radial = np.hypot(local[0], local[1])
        return max(0.0, float(np.hypot(radial, dz)) - r) if dz > 0 else max(
            0.0, float(radial) - r
        )
    # cylinder
    dr = max(float(np.hypot(local[0], local[1])) - r, 0.0)
    dz = max(abs(local[2]) - hl, 0.0)
    return float(np.hypot(dr, dz))


def primitive_distance(
    a: CollisionPrimitive, ta: np.ndarray, b: CollisionPrimitive, tb: np.ndarray
) -> float:
    """Distance between two posed primitives (0 when intersecting)."""
    ka, kb = a.kind, b.kind
    if ka == "sphere" and kb == "sphere":
        d = np.linalg.norm(ta[:3, 3] - tb[:3, 3])
        return max(0.0, float(d) - a.dims[0] - b.dims[0])
    if ka == "sphere" and kb == "capsule":
        d = _point_segment_distance(ta[:3, 3], *_capsule_segment(b, tb))
        return max(0.0, d - a.dims[0] - b.dims[0])
    if ka == "capsule" and kb == "sphere":
        return primitive_distance(b, tb, a, ta)
    if ka == "capsule" and kb == "capsule":
        d = _segment_segment_distance(*_capsule_segment(a, ta), *_capsule_segment(b, tb))
        return max(0.0, d - a.dims[0] - b.dims[0])
    if ka == "sphere":
        return max(0.0, point_distance(b, tb, ta[:3, 3]) - a.dims[0])
    if kb == "sphere":
        return max(0.0, point_distance(a, ta, tb[:3, 3]) - b.dims[0])
    sup_a, ra = _core_support(a, ta)
    sup_b, rb = _core_support(b, tb)
    return max(0.0, gjk_distance(sup_a, sup_b) - ra - rb)


def primitives_intersect(
    a: CollisionPrimitive, ta: np.ndarray, b: CollisionPrimitive, tb: np.ndarray
) -> bool:
    # cheap bounding-sphere reject before any exact work
    gap = np.linalg.norm(ta[:3, 3] - tb[:3, 3]) - a.bounding_radius - b.bounding_radius
    if gap > 0.0:
        return False
    return primitive_distance(a, ta, b, tb) <= 0.0


# --- robot occupied space --------------------------------------------------


def occupied_space(assembly, q, base_pose=None):
    """World-posed collision primitives of every robot body at q."""
    return [(prim, pose) for _, prim, pose in _world_primitives(assembly, q, base_pose)]


def _world_primitives(assembly, q, base_pose=None):
    from . import kinematics  # deferred: geometry must not cycle with kinematics

    frames = kinematics.fk_frames(assembly, q, base_pose=base_pose)
    out = []
    for idx, element in enumerate(assembly.elements):
        body_world = frames.body_frames[idx]
        for prim in element.body.geometry:
            out.append((idx, prim, body_world @ prim.pose))
    return out


def in_collision(assembly, q, scene: Scene, self_check: bool = True, base_pose=None) -> bool:
    """True when the robot hits an obstacle or (optionally) itself at q.

    Bodies adjacent in the geometry-bearing chain order are exempt from the
    self check (they legitimately touch at their connector).
    """
    from . import kinematics  # deferred: geometry must not cycle with kinematics

    q = np.asarray(q, dtype=float)
    if q.shape != (assembly.n_joints,):
        raise DimensionMismatch(
            f"expected {assembly.n_joints} joint values, got {q.shape}"
        )
    geom = assembly.geometry_elements
    if not geom:
        return False
    frames = kinematics.fk_frames(assembly, q, base_pose=base_pose)
    poses = [frames.body_frames[ei] @ prim.pose for ei, prim in geom]
    centers = np.array([p[:3, 3] for p in poses])
    radii = assembly.geometry_radii

    if scene.obstacles:
        obs_centers = np.array([o.pose[:3, 3] for o in scene.obstacles])
        obs_radii = np.array([o.bounding_radius for o in scene.obstacles])
        gaps = (
            np.linalg.norm(centers[:, None, :] - obs_centers[None, :, :], axis=2)
            - radii[:, None]
            - obs_radii[None, :]
        )
        for i, j in np.argwhere(gaps <= 0.0):
            prim = geom[i][1]
            obs = scene.obstacles[j]
            if primitive_distance(prim, poses[i], obs, obs.pose) <= 0.0:
                return True

    if self_check and len(assembly.self_pairs):
        ia = assembly.self_pairs[:, 0]
        ib = assembly.self_pairs[:, 1]
        gaps = np.linalg.norm(centers[ia] - centers[ib], axis=1) - radii[ia] - radii[ib]
        for k in np.flatnonzero(gaps <= 0.0):
            i, j = int(ia[k]), int(ib[k])
            if primitive_distance(geom[i][1], poses[i], geom[j][1], poses[j]) <= 0.0:
                return True
    return False


def any_collision_batch(
    assembly, q_batch, scene: Scene, self_check: bool = True, base_pose=None
) -> bool:
    """in_collision over N configurations with one vectorized prefilter pass.

    Equivalent to any(in_collision(assembly, q, ...) for q in q_batch) but
    an order of magnitude faster on clear configurations.
    """
    from . import kinematics  # deferred: geometry must not cycle with kinematics

    geom = assembly.geometry_elements
    if not geom:
        return False
    q_batch = np.atleast_2d(np.asarray(q_batch, dtype=float))
    frames = kinematics.body_frames_batch(assembly, q_batch, base_pose=base_pose)
    element_idx = np.array([ei for ei, _ in geom])
    prim_poses = frames[:, element_idx] @ np.stack([p.pose for _, p in geom])
    centers = prim_poses[:, :, :3, 3]  # (N, P, 3)
    radii = assembly.geometry_radii

    if scene.obstacles:
        obs_centers = np.array([o.pose[:3, 3] for o in scene.obstacles])
        obs_radii = np.array([o.bounding_radius for o in scene.obstacles])
        gaps = (
            np.linalg.norm(centers[:, :, None, :] - obs_centers[None, None, :, :], axis=3)
            - radii[None, :, None]
            - obs_radii[None, None, :]
        )
        for n, i, j in np.argwhere(gaps <= 0.0):
            if primitive_distance(
                geom[i][1], prim_poses[n, i], scene.obstacles[j], scene.obstacles[j].pose
            ) <= 0.0:
                return True

    if self_check and len(assembly.self_pairs):
        ia = assembly.self_pairs[:, 0]
        ib = assembly.self_pairs[:, 1]
        gaps = (
            np.linalg.norm(centers[:, ia] - centers[:, ib], axis=2)
            - radii[ia][None, :]
            - radii[ib][None, :]
        )
        for n, k in np.argwhere(gaps <= 0.0):
            i, j = int(ia[k]), int(ib[k])
            if primitive_distance(
                geom[i][1], prim_poses[n, i], geom[j][1], prim_poses[n, j]
            ) <= 0.0:
                return True
    return False
