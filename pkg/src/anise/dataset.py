"""Shape/part records, canonical part normalization, and the on-disk dataset
layout::

    <root>/<shape_id>/mesh.obj              assembled reference mesh
    <root>/<shape_id>/parts/<k>.obj         part meshes in the shape frame
    <root>/<shape_id>/transforms.json       [{center: [x,y,z], scale: s}, ...]
    <root>/<shape_id>/primitives.json       analytic part recipes (synthetic only)
    <root>/<shape_id>/samples.bin           shape-frame SDF samples
    <root>/<shape_id>/parts/<k>.samples.bin normalized-frame SDF samples
    <root>/<shape_id>/pointcloud.bin        2048 x 3 surface points
    <root>/<shape_id>/render_<az>_<el>.pgm  64 x 64 silhouettes
    <root>/splits.json                      {"train": [...], "eval": [...]}

Binary files use the project container format. Part normalization centers the
geometry at the origin and scales its largest bounding-box extent to exactly
one; the recorded transform plays it back.
"""

from __future__ import annotations

import json
import zlib
from dataclasses import dataclass, field as dc_field
from pathlib import Path

import numpy as np

from . import sampling
from .fields import FieldError, ImplicitField, PartTransform, TriMesh, transform_field, union_fields
from .io import read_container, read_pgm, write_container, write_obj, write_pgm, read_obj
from .primitives import (
    Primitive,
    normalize_primitive,
    primitive_field,
    primitive_mesh,
    primitive_surface_sample,
)

MAX_PARTS = 10
POINTCLOUD_SIZE = 2048
SHAPE_BOUND = 0.6
PART_SURFACE_POINTS = 1024


class DataError(ValueError):
    """Bad dataset contents or layout."""


@dataclass(frozen=True)
class SdfSampleSet:
    """Query points with target signed distances, in a stated frame."""

    points: np.ndarray
    distances: np.ndarray
    frame: str  # "shape" | "part"

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=np.float64).reshape(-1, 3)
        d = np.asarray(self.distances, dtype=np.float64).reshape(-1)
        if len(pts) == 0 or len(pts) != len(d):
            raise DataError(f"sample set needs matching nonzero counts, got {len(pts)}/{len(d)}")
        if not (np.all(np.isfinite(pts)) and np.all(np.isfinite(d))):
            raise DataError("sample set has non-finite values")
        object.__setattr__(self, "points", pts)
        object.__setattr__(self, "distances", d)

    def __len__(self) -> int:
        return len(self.distances)


def normalize_part(geometry):
    """Normalize a part (``Primitive`` or ``TriMesh``) to the canonical frame.

    Returns ``(normalized_geometry, transform)`` where applying the transform
    to the normalized geometry reproduces the input placement exactly.
    """
    if isinstance(geometry, Primitive):
        return normalize_primitive(geometry)
    if isinstance(geometry, TriMesh):
        if not len(geometry.vertices):
            raise DataError("cannot normalize an empty mesh")
        bmin, bmax = geometry.bounds()
        alpha = float((bmax - bmin).max())
        if alpha <= 0:
            raise DataError("cannot normalize zero-extent geometry")
        center = (bmin + bmax) / 2.0
        t = PartTransform(center, alpha)
        return TriMesh((geometry.vertices - center) / alpha, geometry.faces), t
    raise DataError(f"cannot normalize geometry of type {type(geometry).__name__}")


def _stable_seed(*keys) -> np.random.Generator:
    crcs = [zlib.crc32(str(k).encode("utf-8")) for k in keys]
    return np.random.default_rng(np.random.SeedSequence(crcs))


@dataclass
class PartRecord:
    part_id: str
    mesh: TriMesh  # shape frame
    gt_transform: PartTransform
    normalized_mesh: TriMesh
    primitive: Primitive | None = None  # shape frame
    normalized_primitive: Primitive | None = None
    sample_set: SdfSampleSet | None = None  # normalized frame
    code: np.ndarray | None = None  # filled after pre-training
    mesh_sdf: ImplicitField | None = None  # watertight-mesh SDF (ingested parts)
    _surface_points: np.ndarray | None = None

    def normalized_field(self) -> ImplicitField:
        if self.normalized_primitive is not None:
            return primitive_field(self.normalized_primitive)
        if self.mesh_sdf is not None:
            return self.mesh_sdf
        raise DataError(f"part {self.part_id} has no analytic field; use its sample set or mesh")

    def placed_field(self) -> ImplicitField:
        return transform_field(self.normalized_field(), self.gt_transform)

    def surface_points(self, k: int = PART_SURFACE_POINTS) -> np.ndarray:
        """Deterministic surface samples of the normalized part (encoder input)."""
        if self._surface_points is not None and len(self._surface_points) >= k:
            return self._surface_points[:k]
        rng = _stable_seed("part-surface", self.part_id, k)
        if self.normalized_primitive is not None:
            pts = primitive_surface_sample(self.normalized_primitive, k, rng)
        else:
            pts = sampling.sample_mesh_surface(self.normalized_mesh, k, rng)
        self._surface_points = pts
        return pts


@dataclass
class ShapeRecord:
    shape_id: str
    parts: list[PartRecord]
    full_sample_set: SdfSampleSet | None = None
    pointcloud: np.ndarray | None = None  # (2048, 3) shape frame
    renders: dict[str, np.ndarray] = dc_field(default_factory=dict)
    mesh: TriMesh | None = None

    def __post_init__(self):
        if not 1 <= len(self.parts) <= MAX_PARTS:
            raise DataError(f"shape {self.shape_id} has {len(self.parts)} parts (allowed 1..{MAX_PARTS})")
        if self.pointcloud is not None:
            pc = np.asarray(self.pointcloud, dtype=np.float64)
            if pc.shape != (POINTCLOUD_SIZE, 3):
                raise DataError(f"pointcloud must be {POINTCLOUD_SIZE}x3, got {pc.shape}")
            self.pointcloud = pc

    def assembled_field(self) -> ImplicitField:
        return union_fields([p.placed_field() for p in self.parts])

    def has_analytic_parts(self) -> bool:
        return all(p.normalized_primitive is not None for p in self.parts)

    def bbox(self) -> tuple[np.ndarray, np.ndarray]:
        mins, maxs = zip(*(p.mesh.bounds() for p in self.parts))
        return np.min(mins, axis=0), np.max(maxs, axis=0)


# ---------------------------------------------------------------------------
# shape-frame samplers


def shape_surface_sampler(shape: ShapeRecord):
    """Sampler over the union boundary: area-weighted over part surfaces with
    interior points rejected."""
    if shape.has_analytic_parts():
        prims = [p.primitive for p in shape.parts]
        from .primitives import primitive_surface_area

        areas = np.array([primitive_surface_area(pr) for pr in prims])
        weights = areas / areas.sum()
        field = shape.assembled_field()

        def member_sampler(count: int, rng: np.random.Generator) -> np.ndarray:
            counts = rng.multinomial(count, weights)
            chunks = [primitive_surface_sample(pr, c, rng) for pr, c in zip(prims, counts) if c]
            return np.concatenate(chunks)

    else:
        meshes = [p.mesh for p in shape.parts]
        areas = np.array([sampling.triangle_areas(m).sum() for m in meshes])
        weights = areas / areas.sum()
        field = None

        def member_sampler(count: int, rng: np.random.Generator) -> np.ndarray:
            counts = rng.multinomial(count, weights)
            chunks = [sampling.sample_mesh_surface(m, c, rng) for m, c in zip(meshes, counts) if c]
            return np.concatenate(chunks)

    def sampler(count: int, rng: np.random.Generator) -> np.ndarray:
        if field is None:
            return member_sampler(count, rng)
        return sampling.rejection_surface_points(field, member_sampler, count, rng)

    return sampler


def sample_part_sdf(part: PartRecord, n: int = 100000, seed: int = 0) -> SdfSampleSet:
    """SDF samples for one normalized part, drawn inside its bounding box
    inflated by 10% per axis."""
    rng = np.random.default_rng(np.random.SeedSequence([zlib.crc32(part.part_id.encode()), seed]))
    field = part.normalized_field()
    if part.normalized_primitive is not None:
        from .primitives import primitive_bbox

        bmin, bmax = primitive_bbox(part.normalized_primitive)

        def surface_sampler(count, r):
            return primitive_surface_sample(part.normalized_primitive, count, r)

    else:
        bmin, bmax = part.normalized_mesh.bounds()

        def surface_sampler(count, r):
            return sampling.sample_mesh_surface(part.normalized_mesh, count, r)

    pts, d = sampling.sample_sdf_points(field, surface_sampler, bmin, bmax, n, rng)
    return SdfSampleSet(pts, d, frame="part")


def sample_shape_sdf(shape: ShapeRecord, n: int, seed: int = 0) -> SdfSampleSet:
    """SDF samples for the assembled shape over [-0.6, 0.6]^3."""
    rng = np.random.default_rng(np.random.SeedSequence([zlib.crc32(shape.shape_id.encode()), seed, 1]))
    field = shape.assembled_field()
    bmin, bmax = np.full(3, -SHAPE_BOUND), np.full(3, SHAPE_BOUND)
    pts, d = sampling.sample_sdf_points(field, shape_surface_sampler(shape), bmin, bmax, n, rng, inflate=0.0)
    return SdfSampleSet(pts, d, frame="shape")


def sample_shape_pointcloud(shape: ShapeRecord, seed: int = 0, n: int = POINTCLOUD_SIZE) -> np.ndarray:
    rng = np.random.default_rng(np.random.SeedSequence([zlib.crc32(shape.shape_id.encode()), seed, 2]))
    return shape_surface_sampler(shape)(n, rng)


# ---------------------------------------------------------------------------
# on-disk layout


def _write_samples(path: Path, samples: SdfSampleSet) -> None:
    write_container(
        path,
        {"points": samples.points.astype(np.float32), "distances": samples.distances.astype(np.float32)},
        meta={"frame": samples.frame},
    )


def _read_samples(path: Path) -> SdfSampleSet:
    tensors, meta = read_container(path)
    return SdfSampleSet(tensors["points"], tensors["distances"], frame=meta.get("frame", "shape"))


def write_shape_dir(shape: ShapeRecord, root: str | Path) -> Path:
    out = Path(root) / shape.shape_id
    out.mkdir(parents=True, exist_ok=True)
    if shape.mesh is not None:
        write_obj(out / "mesh.obj", shape.mesh.vertices, shape.mesh.faces)
    transforms = [p.gt_transform.to_json() for p in shape.parts]
    (out / "transforms.json").write_text(json.dumps(transforms, indent=1) + "\n")
    if shape.has_analytic_parts():
        prims = [p.primitive.to_json() for p in shape.parts]
        (out / "primitives.json").write_text(json.dumps(prims, indent=1) + "\n")
    for k, part in enumerate(shape.parts):
        write_obj(out / "parts" / f"{k}.obj", part.mesh.vertices, part.mesh.faces)
        if part.sample_set is not None:
            _write_samples(out / "parts" / f"{k}.samples.bin", part.sample_set)
    if shape.full_sample_set is not None:
        _write_samples(out / "samples.bin", shape.full_sample_set)
    if shape.pointcloud is not None:
        write_container(out / "pointcloud.bin", {"points": shape.pointcloud.astype(np.float32)}, meta={})
    for name, img in shape.renders.items():
        write_pgm(out / f"render_{name}.pgm", img)
    return out


def load_shape_dir(path: str | Path) -> ShapeRecord:
    path = Path(path)
    shape_id = path.name
    tpath = path / "transforms.json"
    if not tpath.exists():
        raise DataError(f"{path}: missing transforms.json")
    transforms = [PartTransform.from_json(t) for t in json.loads(tpath.read_text())]
    prims = None
    ppath = path / "primitives.json"
    if ppath.exists():
        prims = [Primitive.from_json(p) for p in json.loads(ppath.read_text())]
        if len(prims) != len(transforms):
            raise DataError(f"{path}: primitives/transforms count mismatch")

    parts = []
    for k, t in enumerate(transforms):
        obj_path = path / "parts" / f"{k}.obj"
        if not obj_path.exists():
            raise DataError(f"{path}: missing part mesh parts/{k}.obj")
        verts, faces = read_obj(obj_path)
        mesh = TriMesh(verts, faces)
        norm_mesh = TriMesh((verts - t.center) / t.scale, faces)
        prim = prims[k] if prims else None
        norm_prim = normalize_primitive(prim)[0] if prim else None
        sample_path = path / "parts" / f"{k}.samples.bin"
        samples = _read_samples(sample_path) if sample_path.exists() else None
        parts.append(
            PartRecord(
                part_id=f"{shape_id}/p{k}",
                mesh=mesh,
                gt_transform=t,
                normalized_mesh=norm_mesh,
                primitive=prim,
                normalized_primitive=norm_prim,
                sample_set=samples,
            )
        )

    full = _read_samples(path / "samples.bin") if (path / "samples.bin").exists() else None
    pc = None
    if (path / "pointcloud.bin").exists():
        pc = read_container(path / "pointcloud.bin")[0]["points"].astype(np.float64)
    renders = {}
    for rp in sorted(path.glob("render_*.pgm")):
        renders[rp.stem.removeprefix("render_")] = read_pgm(rp)
    mesh = None
    if (path / "mesh.obj").exists():
        mv, mf = read_obj(path / "mesh.obj")
        mesh = TriMesh(mv, mf)
    return ShapeRecord(shape_id, parts, full_sample_set=full, pointcloud=pc, renders=renders, mesh=mesh)


def write_dataset(shapes: list[ShapeRecord], root: str | Path, splits: dict[str, list[str]] | None = None, manifest: dict | None = None) -> None:
    root = Path(root)
    root.mkdir(parents=True, exist_ok=True)
    for shape in shapes:
        write_shape_dir(shape, root)
    if splits is not None:
        (root / "splits.json").write_text(json.dumps(splits, indent=1, sort_keys=True) + "\n")
    if manifest is not None:
        (root / "manifest.json").write_text(json.dumps(manifest, indent=1, sort_keys=True) + "\n")


def dataset_shape_ids(root: str | Path, split: str | None = None) -> list[str]:
    root = Path(root)
    if not root.is_dir():
        raise DataError(f"dataset root {root} is not a directory")
    spath = root / "splits.json"
    if split not in (None, "all"):
        if not spath.exists():
            raise DataError(f"{root}: no splits.json, cannot select split {split!r}")
        splits = json.loads(spath.read_text())
        if split not in splits:
            raise DataError(f"{root}: unknown split {split!r} (have {sorted(splits)})")
        return list(splits[split])
    ids = sorted(p.name for p in root.iterdir() if p.is_dir() and (p / "transforms.json").exists())
    if not ids:
        raise DataError(f"{root}: no shape directories found")
    return ids


def load_dataset(root: str | Path, split: str | None = None) -> list[ShapeRecord]:
    root = Path(root)
    return [load_shape_dir(root / sid) for sid in dataset_shape_ids(root, split)]
