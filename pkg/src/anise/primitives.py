"""Analytic shape primitives (boxes and capped cylinders) with exact SDFs,
meshes, bounding boxes and surface samplers.

Synthetic dataset parts are primitives so every downstream quantity (signed
distance, occupancy, surface sample) has an exact oracle.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .fields import FieldError, ImplicitField, PartTransform, TriMesh, box_field, cylinder_field

CYLINDER_SEGMENTS = 48


@dataclass(frozen=True)
class Primitive:
    """Axis-aligned box (``params`` = half extents) or capped cylinder with a
    coordinate-aligned axis (``params`` = (radius, height, axis))."""

    kind: str
    center: tuple[float, float, float]
    params: tuple[float, ...]

    def __post_init__(self):
        if self.kind not in ("box", "cylinder"):
            raise FieldError(f"unknown primitive kind {self.kind!r}")
        object.__setattr__(self, "center", tuple(float(c) for c in self.center))
        object.__setattr__(self, "params", tuple(float(p) for p in self.params))

    def to_json(self) -> dict:
        return {"kind": self.kind, "center": list(self.center), "params": list(self.params)}

    @classmethod
    def from_json(cls, obj: dict) -> "Primitive":
        return cls(kind=obj["kind"], center=tuple(obj["center"]), params=tuple(obj["params"]))


def primitive_field(prim: Primitive) -> ImplicitField:
    if prim.kind == "box":
        return box_field(prim.center, prim.params)
    radius, height, axis = prim.params
    return cylinder_field(prim.center, radius, height, axis=int(axis))


def primitive_bbox(prim: Primitive) -> tuple[np.ndarray, np.ndarray]:
    c = np.asarray(prim.center)
    if prim.kind == "box":
        h = np.asarray(prim.params)
    else:
        radius, height, axis = prim.params
        h = np.full(3, radius)
        h[int(axis)] = height / 2.0
    return c - h, c + h


def normalize_primitive(prim: Primitive) -> tuple[Primitive, PartTransform]:
    """Center at the origin and scale so the largest bbox extent is exactly 1."""
    bmin, bmax = primitive_bbox(prim)
    center = (bmin + bmax) / 2.0
    alpha = float((bmax - bmin).max())
    if alpha <= 0:
        raise FieldError("degenerate primitive (zero extent)")
    new_center = tuple((np.asarray(prim.center) - center) / alpha)
    if prim.kind == "box":
        params = tuple(np.asarray(prim.params) / alpha)
    else:
        radius, height, axis = prim.params
        params = (radius / alpha, height / alpha, axis)
    return Primitive(prim.kind, new_center, params), PartTransform(center, alpha)


def transform_primitive(prim: Primitive, t: PartTransform) -> Primitive:
    center = tuple(np.asarray(prim.center) * t.scale + t.center)
    if prim.kind == "box":
        params = tuple(np.asarray(prim.params) * t.scale)
    else:
        radius, height, axis = prim.params
        params = (radius * t.scale, height * t.scale, axis)
    return Primitive(prim.kind, center, params)


def _box_mesh(center: np.ndarray, half: np.ndarray) -> TriMesh:
    signs = np.array([[x, y, z] for x in (-1, 1) for y in (-1, 1) for z in (-1, 1)], dtype=np.float64)
    verts = center + signs * half
    # Two triangles per face, outward orientation not required downstream.
    quads = [
        (0, 1, 3, 2), (4, 6, 7, 5),  # x- x+
        (0, 4, 5, 1), (2, 3, 7, 6),  # y- y+
        (0, 2, 6, 4), (1, 5, 7, 3),  # z- z+
    ]
    faces = []
    for a, b, c, d in quads:
        faces.append([a, b, c])
        faces.append([a, c, d])
    return TriMesh(verts, np.asarray(faces, dtype=np.int32))


def _cylinder_mesh(center: np.ndarray, radius: float, height: float, axis: int, segments: int) -> TriMesh:
    ang = np.linspace(0.0, 2 * np.pi, segments, endpoint=False)
    circle = np.stack([np.cos(ang), np.sin(ang)], axis=1) * radius
    radial_axes = [i for i in range(3) if i != axis]
    ring = np.zeros((segments, 3))
    ring[:, radial_axes[0]] = circle[:, 0]
    ring[:, radial_axes[1]] = circle[:, 1]
    lo, hi = ring.copy(), ring.copy()
    lo[:, axis] = -height / 2.0
    hi[:, axis] = height / 2.0
    cap_lo = np.zeros(3)
    cap_lo[axis] = -height / 2.0
    cap_hi = -cap_lo
    verts = np.concatenate([lo, hi, [cap_lo], [cap_hi]]) + center
    faces = []
    n = segments
    for i in range(n):
        j = (i + 1) % n
        faces.append([i, j, n + i])
        faces.append([j, n + j, n + i])
        faces.append([2 * n, j, i])
        faces.append([2 * n + 1, n + i, n + j])
    return TriMesh(verts, np.asarray(faces, dtype=np.int32))


def primitive_mesh(prim: Primitive, segments: int = CYLINDER_SEGMENTS) -> TriMesh:
    c = np.asarray(prim.center)
    if prim.kind == "box":
        return _box_mesh(c, np.asarray(prim.params))
    radius, height, axis = prim.params
    return _cylinder_mesh(c, radius, height, int(axis), segments)


def primitive_surface_area(prim: Primitive) -> float:
    if prim.kind == "box":
        hx, hy, hz = prim.params
        return 8.0 * (hx * hy + hy * hz + hx * hz)
    radius, height, _ = prim.params
    return 2 * np.pi * radius * (radius + height)


def primitive_surface_sample(prim: Primitive, n: int, rng: np.random.Generator) -> np.ndarray:
    """Uniform area-weighted samples on the primitive surface."""
    c = np.asarray(prim.center)
    if prim.kind == "box":
        h = np.asarray(prim.params)
        areas = np.array([h[1] * h[2], h[1] * h[2], h[0] * h[2], h[0] * h[2], h[0] * h[1], h[0] * h[1]])
        face = rng.choice(6, size=n, p=areas / areas.sum())
        pts = rng.uniform(-1.0, 1.0, size=(n, 3)) * h
        axis = face // 2
        sign = np.where(face % 2 == 0, -1.0, 1.0)
        pts[np.arange(n), axis] = sign * h[axis]
        return pts + c
    radius, height, axis_i = prim.params
    axis_i = int(axis_i)
    radial_axes = [i for i in range(3) if i != axis_i]
    side_area = 2 * np.pi * radius * height
    cap_area = np.pi * radius**2
    which = rng.choice(3, size=n, p=np.array([side_area, cap_area, cap_area]) / (side_area + 2 * cap_area))
    ang = rng.uniform(0.0, 2 * np.pi, size=n)
    rad = np.where(which == 0, radius, radius * np.sqrt(rng.uniform(0.0, 1.0, size=n)))
    ax = np.where(
        which == 0,
        rng.uniform(-height / 2, height / 2, size=n),
        np.where(which == 1, -height / 2, height / 2),
    )
    pts = np.zeros((n, 3))
    pts[:, radial_axes[0]] = rad * np.cos(ang)
    pts[:, radial_axes[1]] = rad * np.sin(ang)
    pts[:, axis_i] = ax
    return pts + c
