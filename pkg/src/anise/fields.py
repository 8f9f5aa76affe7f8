"""Scalar field algebra: analytic SDF primitives, similarity transforms of
fields, min-union assembly, grid evaluation, and iso-surface meshing.

Convention: a field maps an (N, 3) batch of query points to N values,
negative inside the shape. Analytic primitives are exact signed distance
functions; transforming an exact SDF with :func:`transform_field` keeps it
exact because the scale factor is applied outside the evaluation:
``T(f; c, a)(x) = a * f((x - c) / a)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field as dc_field
from typing import Callable, Sequence

import numpy as np

MIN_SCALE = 1e-6
DEFAULT_CHUNK = 65536


class FieldError(ValueError):
    """Invalid field construction or evaluation request."""


def _as_points(points: np.ndarray) -> np.ndarray:
    pts = np.asarray(points, dtype=np.float64)
    if pts.ndim == 1 and pts.shape[0] == 3:
        pts = pts[None, :]
    if pts.ndim != 2 or pts.shape[1] != 3:
        raise FieldError(f"expected (N, 3) query points, got shape {pts.shape}")
    return pts


@dataclass(frozen=True)
class ImplicitField:
    """An evaluable scalar field over R^3.

    ``kind`` tags how the field was built: ``analytic`` primitives,
    ``learned`` decoder closures, ``transformed`` wrappers and ``union``
    compositions.
    """

    evaluator: Callable[[np.ndarray], np.ndarray]
    kind: str

    def __call__(self, points: np.ndarray) -> np.ndarray:
        pts = _as_points(points)
        out = np.asarray(self.evaluator(pts), dtype=np.float64).reshape(-1)
        if out.shape[0] != pts.shape[0]:
            raise FieldError(f"evaluator returned {out.shape[0]} values for {pts.shape[0]} points")
        return out


@dataclass(frozen=True)
class PartTransform:
    """Similarity transform placing a normalized part: translation plus
    isotropic scale."""

    center: np.ndarray
    scale: float

    def __post_init__(self):
        center = np.asarray(self.center, dtype=np.float64).reshape(3)
        if not np.all(np.isfinite(center)):
            raise FieldError(f"non-finite transform center {center}")
        object.__setattr__(self, "center", center)
        object.__setattr__(self, "scale", float(self.scale))
        if not math.isfinite(self.scale) or self.scale <= MIN_SCALE:
            raise FieldError(f"transform scale must exceed {MIN_SCALE}, got {self.scale}")

    def to_vector(self) -> np.ndarray:
        return np.concatenate([self.center, [self.scale]])

    @classmethod
    def from_vector(cls, vec: np.ndarray) -> "PartTransform":
        vec = np.asarray(vec, dtype=np.float64).reshape(4)
        return cls(center=vec[:3], scale=float(vec[3]))

    def to_json(self) -> dict:
        return {"center": [float(c) for c in self.center], "scale": float(self.scale)}

    @classmethod
    def from_json(cls, obj: dict) -> "PartTransform":
        return cls(center=np.asarray(obj["center"], dtype=np.float64), scale=float(obj["scale"]))

    def apply_points(self, points: np.ndarray) -> np.ndarray:
        """Map points from the normalized part frame into the shape frame."""
        return np.asarray(points, dtype=np.float64) * self.scale + self.center

    def invert_points(self, points: np.ndarray) -> np.ndarray:
        return (np.asarray(points, dtype=np.float64) - self.center) / self.scale


@dataclass(frozen=True)
class TriMesh:
    vertices: np.ndarray
    faces: np.ndarray

    def __post_init__(self):
        verts = np.asarray(self.vertices, dtype=np.float64).reshape(-1, 3)
        faces = np.asarray(self.faces, dtype=np.int32).reshape(-1, 3)
        if verts.size and not np.all(np.isfinite(verts)):
            raise FieldError("mesh has non-finite vertices")
        if faces.size and (faces.min() < 0 or faces.max() >= len(verts)):
            raise FieldError("mesh face indices out of range")
        object.__setattr__(self, "vertices", verts)
        object.__setattr__(self, "faces", faces)

    @property
    def is_empty(self) -> bool:
        return len(self.faces) == 0

    def transformed(self, t: PartTransform) -> "TriMesh":
        return TriMesh(t.apply_points(self.vertices), self.faces)

    def bounds(self) -> tuple[np.ndarray, np.ndarray]:
        if not len(self.vertices):
            raise FieldError("empty mesh has no bounds")
        return self.vertices.min(axis=0), self.vertices.max(axis=0)


def empty_mesh() -> TriMesh:
    return TriMesh(np.zeros((0, 3)), np.zeros((0, 3), dtype=np.int32))


def concat_meshes(meshes: Sequence[TriMesh]) -> TriMesh:
    meshes = [m for m in meshes if len(m.vertices)]
    if not meshes:
        return empty_mesh()
    verts = np.concatenate([m.vertices for m in meshes])
    offsets = np.cumsum([0] + [len(m.vertices) for m in meshes[:-1]])
    faces = np.concatenate([m.faces + off for m, off in zip(meshes, offsets)])
    return TriMesh(verts, faces.astype(np.int32))


@dataclass(frozen=True)
class Grid3:
    """Scalar samples on a regular lattice (values at lattice vertices)."""

    resolution: tuple[int, int, int]
    bounds_min: np.ndarray
    bounds_max: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        res = tuple(int(r) for r in self.resolution)
        bmin = np.asarray(self.bounds_min, dtype=np.float64).reshape(3)
        bmax = np.asarray(self.bounds_max, dtype=np.float64).reshape(3)
        vals = np.asarray(self.values, dtype=np.float64)
        if any(r < 1 for r in res):
            raise FieldError(f"grid resolution must be positive, got {res}")
        if not np.all(bmin < bmax):
            raise FieldError(f"degenerate grid bounds {bmin} .. {bmax}")
        if vals.shape != res:
            raise FieldError(f"grid values shape {vals.shape} != resolution {res}")
        object.__setattr__(self, "resolution", res)
        object.__setattr__(self, "bounds_min", bmin)
        object.__setattr__(self, "bounds_max", bmax)
        object.__setattr__(self, "values", vals)

    def axis_coords(self, axis: int) -> np.ndarray:
        return np.linspace(self.bounds_min[axis], self.bounds_max[axis], self.resolution[axis])

    def cell_size(self) -> np.ndarray:
        res = np.asarray(self.resolution, dtype=np.float64)
        return (self.bounds_max - self.bounds_min) / (res - 1)


# ---------------------------------------------------------------------------
# analytic primitives


def sphere_field(center: Sequence[float], radius: float) -> ImplicitField:
    """Exact sphere SDF: f(x) = |x - center| - radius."""
    if not radius > 0:
        raise FieldError(f"sphere radius must be positive, got {radius}")
    c = np.asarray(center, dtype=np.float64).reshape(3)
    r = float(radius)

    def ev(pts: np.ndarray) -> np.ndarray:
        return np.linalg.norm(pts - c, axis=1) - r

    return ImplicitField(ev, "analytic")


def box_field(center: Sequence[float], half_extents: Sequence[float]) -> ImplicitField:
    """Exact axis-aligned box SDF."""
    h = np.asarray(half_extents, dtype=np.float64).reshape(3)
    if not np.all(h > 0):
        raise FieldError(f"box half extents must be positive, got {h}")
    c = np.asarray(center, dtype=np.float64).reshape(3)

    def ev(pts: np.ndarray) -> np.ndarray:
        q = np.abs(pts - c) - h
        outside = np.linalg.norm(np.maximum(q, 0.0), axis=1)
        inside = np.minimum(q.max(axis=1), 0.0)
        return outside + inside

    return ImplicitField(ev, "analytic")


def cylinder_field(center: Sequence[float], radius: float, height: float, axis: int = 1) -> ImplicitField:
    """Exact capped-cylinder SDF with its axis along a coordinate direction."""
    if not radius > 0 or not height > 0:
        raise FieldError(f"cylinder radius/height must be positive, got {radius}, {height}")
    if axis not in (0, 1, 2):
        raise FieldError(f"cylinder axis must be 0, 1 or 2, got {axis}")
    c = np.asarray(center, dtype=np.float64).reshape(3)
    r, hh = float(radius), float(height) / 2.0
    radial_axes = [i for i in range(3) if i != axis]

    def ev(pts: np.ndarray) -> np.ndarray:
        rel = pts - c
        d_rad = np.linalg.norm(rel[:, radial_axes], axis=1) - r
        d_ax = np.abs(rel[:, axis]) - hh
        outside = np.sqrt(np.maximum(d_rad, 0.0) ** 2 + np.maximum(d_ax, 0.0) ** 2)
        inside = np.minimum(np.maximum(d_rad, d_ax), 0.0)
        return outside + inside

    return ImplicitField(ev, "analytic")


# ---------------------------------------------------------------------------
# field composition


def transform_field(f: ImplicitField, t: PartTransform) -> ImplicitField:
    """Place a normalized-frame field in the shape frame.

    The outer scale factor keeps distances metric: scaling a shape by ``a``
    scales its distances by ``a`` as well.
    """

    def ev(pts: np.ndarray) -> np.ndarray:
        return t.scale * f((pts - t.center) / t.scale)

    return ImplicitField(ev, "transformed")


def union_fields(fields: Sequence[ImplicitField]) -> ImplicitField:
    """Pointwise minimum over member fields (geometric union of interiors)."""
    members = list(fields)
    if not members:
        raise FieldError("union of zero fields")

    def ev(pts: np.ndarray) -> np.ndarray:
        out = members[0](pts)
        for m in members[1:]:
            np.minimum(out, m(pts), out=out)
        return out

    return ImplicitField(ev, "union")


def constant_field(value: float) -> ImplicitField:
    v = float(value)
    return ImplicitField(lambda pts: np.full(len(pts), v), "analytic")


# ---------------------------------------------------------------------------
# grid evaluation and meshing


def grid_points(resolution: tuple[int, int, int], bounds_min: np.ndarray, bounds_max: np.ndarray) -> np.ndarray:
    axes = [np.linspace(bounds_min[i], bounds_max[i], resolution[i]) for i in range(3)]
    mesh = np.meshgrid(*axes, indexing="ij")
    return np.stack([m.reshape(-1) for m in mesh], axis=1)


def eval_on_grid(
    f: ImplicitField,
    resolution: int | tuple[int, int, int],
    bounds_min: Sequence[float],
    bounds_max: Sequence[float],
    chunk: int = DEFAULT_CHUNK,
) -> Grid3:
    """Sample a field at lattice vertices, in chunks to bound memory.

    Results are independent of the chunk size.
    """
    res = (resolution,) * 3 if isinstance(resolution, int) else tuple(int(r) for r in resolution)
    if any(r < 2 for r in res):
        raise FieldError(f"grid resolution must be >= 2 per axis, got {res}")
    bmin = np.asarray(bounds_min, dtype=np.float64).reshape(3)
    bmax = np.asarray(bounds_max, dtype=np.float64).reshape(3)
    if not np.all(bmin < bmax):
        raise FieldError(f"degenerate grid bounds {bmin} .. {bmax}")
    pts = grid_points(res, bmin, bmax)
    values = np.empty(len(pts), dtype=np.float64)
    for start in range(0, len(pts), max(1, int(chunk))):
        stop = min(start + chunk, len(pts))
        values[start:stop] = f(pts[start:stop])
    return Grid3(res, bmin, bmax, values.reshape(res))


def marching_cubes(grid: Grid3, iso: float = 0.0) -> TriMesh:
    """Extract the iso-surface of a grid as a triangle mesh.

    A grid with no sign change around ``iso`` yields an empty mesh. Backed by
    scikit-image's classic table-based extractor with linear edge
    interpolation.
    """
    if any(r < 2 for r in grid.resolution):
        raise FieldError(f"marching cubes needs resolution >= 2 per axis, got {grid.resolution}")
    vmin, vmax = grid.values.min(), grid.values.max()
    if vmin >= iso or vmax <= iso:
        return empty_mesh()
    from skimage import measure

    verts, faces, _, _ = measure.marching_cubes(
        grid.values, level=iso, spacing=tuple(grid.cell_size()), method="lorensen"
    )
    verts = verts + grid.bounds_min[None, :]
    return TriMesh(verts.astype(np.float64), np.ascontiguousarray(faces, dtype=np.int32))


def mesh_field(f: ImplicitField, resolution: int = 64, bounds: float | tuple = 0.6, iso: float = 0.0, chunk: int = DEFAULT_CHUNK) -> TriMesh:
    """Convenience: evaluate a field on a symmetric grid and mesh it."""
    if isinstance(bounds, (int, float)):
        bmin, bmax = (-bounds,) * 3, (bounds,) * 3
    else:
        bmin, bmax = bounds
    return marching_cubes(eval_on_grid(f, resolution, bmin, bmax, chunk=chunk), iso=iso)
