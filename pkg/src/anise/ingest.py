"""Mesh ingestion with voxel watertighting.

Raw (possibly open) part meshes are made watertight by voxelizing the full
shape, flood-filling the outside, and re-meshing the occupancy; each part is
then clipped to its bounding box at the voxel level. Signed distances are
exact nearest-triangle distances to the watertight mesh with the sign taken
from the flood-fill side.

The crust marking is conservative: triangles are midpoint-subdivided until
every edge fits in half a cell, their vertices mark cells, and a one-cell
dilation then guarantees every surface-crossing cell is blocked before the
outside fill runs.
"""

from __future__ import annotations

import logging
import zlib
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy import ndimage
from scipy.spatial import cKDTree

from . import sampling
from .dataset import DataError, PartRecord, ShapeRecord, SdfSampleSet, normalize_part
from .fields import FieldError, Grid3, ImplicitField, TriMesh, marching_cubes
from .io import read_obj

logger = logging.getLogger(__name__)

DEFAULT_VOXEL_RESOLUTION = 128


# ---------------------------------------------------------------------------
# voxelization


def subdivide_triangles(tris: np.ndarray, max_edge: float, max_rounds: int = 16) -> np.ndarray:
    """Midpoint-subdivide (T, 3, 3) triangles until all edges are <= max_edge."""
    for _ in range(max_rounds):
        edges = np.stack(
            [
                np.linalg.norm(tris[:, 0] - tris[:, 1], axis=1),
                np.linalg.norm(tris[:, 1] - tris[:, 2], axis=1),
                np.linalg.norm(tris[:, 2] - tris[:, 0], axis=1),
            ],
            axis=1,
        ).max(axis=1)
        big = edges > max_edge
        if not big.any():
            return tris
        keep = tris[~big]
        t = tris[big]
        m01 = (t[:, 0] + t[:, 1]) / 2
        m12 = (t[:, 1] + t[:, 2]) / 2
        m20 = (t[:, 2] + t[:, 0]) / 2
        quarters = np.concatenate(
            [
                np.stack([t[:, 0], m01, m20], axis=1),
                np.stack([m01, t[:, 1], m12], axis=1),
                np.stack([m20, m12, t[:, 2]], axis=1),
                np.stack([m01, m12, m20], axis=1),
            ]
        )
        tris = np.concatenate([keep, quarters])
    raise DataError("triangle subdivision did not converge (degenerate mesh?)")


@dataclass(frozen=True)
class OccupancyGrid:
    """Boolean occupancy over cell centers ``origin + index * cell``."""

    occupied: np.ndarray
    origin: np.ndarray
    cell: float

    def signed_grid(self) -> Grid3:
        """Signed pseudo-distance at cell centers from distance transforms:
        negative inside the occupancy."""
        occ = self.occupied
        d_out = ndimage.distance_transform_edt(~occ) * self.cell
        d_in = ndimage.distance_transform_edt(occ) * self.cell
        values = d_out - d_in
        res = occ.shape
        bmax = self.origin + (np.asarray(res) - 1) * self.cell
        return Grid3(res, self.origin, bmax, values)

    def field(self) -> ImplicitField:
        """Trilinear interpolation of the signed grid; queries outside the
        grid add the distance to the grid box."""
        grid = self.signed_grid()
        values = grid.values
        res = np.asarray(values.shape)

        def ev(pts: np.ndarray) -> np.ndarray:
            coords = (pts - self.origin) / self.cell
            clamped = np.clip(coords, 0, res - 1)
            outside = np.linalg.norm((coords - clamped) * self.cell, axis=1)
            interp = ndimage.map_coordinates(values, clamped.T, order=1, mode="nearest")
            return interp + outside

        return ImplicitField(ev, "mesh")


def voxel_occupancy(mesh: TriMesh, resolution: int = DEFAULT_VOXEL_RESOLUTION, pad_cells: int = 3) -> OccupancyGrid:
    """Watertight occupancy: conservative surface crust + outside flood fill.
    Occupied = not reachable from the boundary (interior plus crust)."""
    if mesh.is_empty:
        raise DataError("cannot voxelize an empty mesh")
    bmin, bmax = mesh.bounds()
    center = (bmin + bmax) / 2
    extent = float((bmax - bmin).max())
    if extent <= 0:
        raise DataError("cannot voxelize zero-extent mesh")
    cell = extent / max(resolution - 1 - 2 * pad_cells, 1)
    origin = center - (resolution - 1) / 2.0 * cell

    tris = mesh.vertices[mesh.faces]
    tris = subdivide_triangles(tris, max_edge=cell / 2.0)
    samples = tris.reshape(-1, 3)
    idx = np.rint((samples - origin) / cell).astype(int)
    idx = np.clip(idx, 0, resolution - 1)
    crust = np.zeros((resolution,) * 3, dtype=bool)
    crust[idx[:, 0], idx[:, 1], idx[:, 2]] = True
    crust = ndimage.binary_dilation(crust, structure=np.ones((3, 3, 3), dtype=bool))

    labels, _ = ndimage.label(~crust)
    border_labels = np.unique(
        np.concatenate(
            [labels[0].ravel(), labels[-1].ravel(), labels[:, 0].ravel(), labels[:, -1].ravel(), labels[:, :, 0].ravel(), labels[:, :, -1].ravel()]
        )
    )
    border_labels = border_labels[border_labels > 0]
    outside = np.isin(labels, border_labels) & ~crust
    return OccupancyGrid(~outside, origin, cell)


def clip_occupancy(occ: OccupancyGrid, bounds_min: np.ndarray, bounds_max: np.ndarray, slack_cells: float = 1.0) -> OccupancyGrid:
    """Restrict occupancy to an axis-aligned box (part bounding box)."""
    res = occ.occupied.shape[0]
    coords = occ.origin[None, :] + np.arange(res)[:, None] * occ.cell  # (R, 3) per-axis centers
    slack = slack_cells * occ.cell
    masks = [(coords[:, i] >= bounds_min[i] - slack) & (coords[:, i] <= bounds_max[i] + slack) for i in range(3)]
    box = masks[0][:, None, None] & masks[1][None, :, None] & masks[2][None, None, :]
    return OccupancyGrid(occ.occupied & box, occ.origin, occ.cell)


# ---------------------------------------------------------------------------
# exact point-to-triangle distances


def _dot(a, b):
    return np.einsum("ij,ij->i", a, b)


def point_triangle_distance(points: np.ndarray, tris: np.ndarray) -> np.ndarray:
    """Exact distance from points[i] to triangle tris[i] (Ericson's closest
    point on triangle, vectorized)."""
    a, b, c = tris[:, 0], tris[:, 1], tris[:, 2]
    ab, ac, ap = b - a, c - a, points - a
    d1, d2 = _dot(ab, ap), _dot(ac, ap)
    bp = points - b
    d3, d4 = _dot(ab, bp), _dot(ac, bp)
    cp = points - c
    d5, d6 = _dot(ab, cp), _dot(ac, cp)

    va = d3 * d6 - d5 * d4
    vb = d5 * d2 - d1 * d6
    vc = d1 * d4 - d3 * d2

    closest = a.copy()
    # edge AB region
    v = np.divide(d1, d1 - d3, out=np.zeros_like(d1), where=(d1 - d3) != 0)
    mask_ab = (vc <= 0) & (d1 >= 0) & (d3 <= 0)
    closest = np.where(mask_ab[:, None], a + v[:, None] * ab, closest)
    # edge AC region
    w = np.divide(d2, d2 - d6, out=np.zeros_like(d2), where=(d2 - d6) != 0)
    mask_ac = (vb <= 0) & (d2 >= 0) & (d6 <= 0)
    closest = np.where(mask_ac[:, None], a + w[:, None] * ac, closest)
    # edge BC region
    num = d4 - d3
    den = (d4 - d3) + (d5 - d6)
    w2 = np.divide(num, den, out=np.zeros_like(num), where=den != 0)
    mask_bc = (va <= 0) & ((d4 - d3) >= 0) & ((d5 - d6) >= 0)
    closest = np.where(mask_bc[:, None], b + w2[:, None] * (c - b), closest)
    # vertex regions
    mask_a = (d1 <= 0) & (d2 <= 0)
    closest = np.where(mask_a[:, None], a, closest)
    mask_b = (d3 >= 0) & (d4 <= d3)
    closest = np.where(mask_b[:, None], b, closest)
    mask_c = (d6 >= 0) & (d5 <= d6)
    closest = np.where(mask_c[:, None], c, closest)
    # interior
    denom = va + vb + vc
    safe = np.where(denom != 0, denom, 1.0)
    v_in = (vb / safe)[:, None]
    w_in = (vc / safe)[:, None]
    interior = a + v_in * ab + w_in * ac
    handled = mask_ab | mask_ac | mask_bc | mask_a | mask_b | mask_c
    closest = np.where(~handled[:, None], interior, closest)
    return np.linalg.norm(points - closest, axis=1)


def mesh_sdf(mesh: TriMesh, occ: OccupancyGrid, candidates: int = 16) -> ImplicitField:
    """Signed distance to a watertight mesh: exact nearest-triangle distance,
    sign from the flood-fill side (via the interpolated occupancy field)."""
    if mesh.is_empty:
        raise DataError("cannot build an SDF from an empty mesh")
    tris = mesh.vertices[mesh.faces]
    centroids = tris.mean(axis=1)
    tree = cKDTree(centroids)
    sign_field = occ.field()
    k = min(candidates, len(tris))

    def ev(pts: np.ndarray) -> np.ndarray:
        _, idx = tree.query(pts, k=k)
        idx = idx.reshape(len(pts), -1)
        flat_pts = np.repeat(pts, idx.shape[1], axis=0)
        flat_tris = tris[idx.reshape(-1)]
        d = point_triangle_distance(flat_pts, flat_tris).reshape(len(pts), -1).min(axis=1)
        sign = np.where(sign_field(pts) < 0, -1.0, 1.0)
        return sign * d

    return ImplicitField(ev, "mesh")


# ---------------------------------------------------------------------------
# ingestion


def _normalized_field(field: ImplicitField, transform) -> ImplicitField:
    """Express a shape-frame field in a part's normalized frame."""

    def ev(pts: np.ndarray) -> np.ndarray:
        return field(transform.apply_points(pts)) / transform.scale

    return ImplicitField(ev, "mesh")


def ingest_shape_dir(
    path: Path,
    voxel_resolution: int = DEFAULT_VOXEL_RESOLUTION,
    part_samples: int = 20000,
    shape_samples: int = 16384,
    seed: int = 0,
) -> ShapeRecord:
    shape_id = path.name
    part_paths = sorted((path / "parts").glob("*.obj"), key=lambda p: int(p.stem))
    if not part_paths:
        raise DataError(f"{path}: no part meshes under parts/")
    part_meshes = []
    for pp in part_paths:
        verts, faces = read_obj(pp)
        if len(faces) == 0:
            raise DataError(f"{pp}: mesh has no faces")
        part_meshes.append(TriMesh(verts, faces))

    if (path / "mesh.obj").exists():
        fv, ff = read_obj(path / "mesh.obj")
        full_mesh = TriMesh(fv, ff)
    else:
        from .fields import concat_meshes

        full_mesh = concat_meshes(part_meshes)

    occ = voxel_occupancy(full_mesh, voxel_resolution)
    if not occ.occupied.any() or occ.occupied.all():
        raise DataError(f"{path}: degenerate voxel occupancy")
    shape_grid = occ.signed_grid()
    watertight = marching_cubes(shape_grid)
    if watertight.is_empty:
        raise DataError(f"{path}: watertighting produced no surface")
    shape_field = mesh_sdf(watertight, occ)

    rng = np.random.default_rng(np.random.SeedSequence([zlib.crc32(shape_id.encode()), seed, 7]))
    parts = []
    for k, pmesh in enumerate(part_meshes):
        normalized_mesh, transform = normalize_part(pmesh)
        bmin, bmax = pmesh.bounds()
        part_occ = clip_occupancy(occ, bmin, bmax)
        if not part_occ.occupied.any():
            raise DataError(f"{path}: part {k} captures no occupancy")
        part_watertight = marching_cubes(part_occ.signed_grid())
        if part_watertight.is_empty:
            raise DataError(f"{path}: part {k} watertighting produced no surface")
        part_field = mesh_sdf(part_watertight, part_occ)
        record = PartRecord(
            part_id=f"{shape_id}/p{k}",
            mesh=pmesh,
            gt_transform=transform,
            normalized_mesh=normalized_mesh,
            mesh_sdf=_normalized_field(part_field, transform),
        )
        from .dataset import sample_part_sdf

        record.sample_set = sample_part_sdf(record, n=part_samples, seed=seed)
        parts.append(record)

    def surface_sampler(count, r):
        return sampling.sample_mesh_surface(watertight, count, r)

    pts, d = sampling.sample_sdf_points(
        shape_field, surface_sampler, np.full(3, -0.6), np.full(3, 0.6), shape_samples, rng, inflate=0.0
    )
    pc = sampling.sample_mesh_surface(watertight, 2048, rng)
    return ShapeRecord(
        shape_id,
        parts,
        full_sample_set=SdfSampleSet(pts, d, frame="shape"),
        pointcloud=pc,
        mesh=watertight,
    )


def ingest_partnet_layout(root: str | Path, voxel_resolution: int = DEFAULT_VOXEL_RESOLUTION, **kwargs) -> list[ShapeRecord]:
    """Ingest every shape directory under ``root``; unreadable shapes are
    skipped with a logged diagnostic. An empty result set is an error."""
    root = Path(root)
    if not root.is_dir():
        raise DataError(f"ingest root {root} is not a directory")
    records = []
    for shape_dir in sorted(p for p in root.iterdir() if p.is_dir()):
        try:
            records.append(ingest_shape_dir(shape_dir, voxel_resolution, **kwargs))
        except (DataError, FieldError, ValueError, OSError) as exc:
            logger.warning("skipping shape %s: %s", shape_dir.name, exc)
    if not records:
        raise DataError(f"{root}: no ingestable shapes found")
    return records
