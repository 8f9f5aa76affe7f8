"""Procedural box/cylinder furniture generator.

Each shape is a union of 3-8 axis-aligned primitives (tabletop plus legs,
plus optional stretchers and a shelf, or a pedestal table) fitted in
[-0.5, 0.5]^3. Parts are analytic so ground-truth transforms, distances and
occupancies are exact. Generation is deterministic per (seed, index); shape
streams are independent, so any subset can be regenerated in parallel.
"""

from __future__ import annotations

import numpy as np

from .dataset import (
    DataError,
    PartRecord,
    ShapeRecord,
    normalize_part,
    sample_part_sdf,
    sample_shape_pointcloud,
    sample_shape_sdf,
)
from .fields import TriMesh
from .primitives import Primitive, primitive_mesh
from .render import render_silhouette

CATEGORIES = ("boxfurniture",)

DEFAULT_PART_SAMPLES = 20000
DEFAULT_SHAPE_SAMPLES = 16384
DEFAULT_MESH_RES = 64
DEFAULT_RENDER_VIEWS = ((30, 20),)


def _leg_table(rng: np.random.Generator) -> list[Primitive]:
    height = rng.uniform(0.6, 0.95)
    y0 = -height / 2.0
    top_thick = rng.uniform(0.05, 0.1)
    top_kind = "cylinder" if rng.uniform() < 0.2 else "box"
    top_y = height / 2.0 - top_thick / 2.0
    if top_kind == "box":
        hx = rng.uniform(0.32, 0.48)
        hz = rng.uniform(0.24, 0.48)
        top = Primitive("box", (0.0, top_y, 0.0), (hx, top_thick / 2.0, hz))
    else:
        hx = hz = rng.uniform(0.3, 0.48)
        top = Primitive("cylinder", (0.0, top_y, 0.0), (hx, top_thick, 1))

    leg_w = rng.uniform(0.03, 0.06)
    inset = rng.uniform(0.01, 0.06)
    overlap = 0.02  # legs penetrate the top so the union is connected
    leg_h = height - top_thick + overlap
    leg_y = y0 + leg_h / 2.0
    lx = hx - leg_w - inset
    lz = hz - leg_w - inset
    parts = [top]

    slab_legs = rng.uniform() < 0.15
    leg_kind = "cylinder" if (not slab_legs and rng.uniform() < 0.3) else "box"
    if slab_legs:
        for sx in (-1.0, 1.0):
            parts.append(Primitive("box", (sx * lx, leg_y, 0.0), (leg_w, leg_h / 2.0, max(hz - 0.02, 0.05))))
    else:
        for sx in (-1.0, 1.0):
            for sz in (-1.0, 1.0):
                center = (sx * lx, leg_y, sz * lz)
                if leg_kind == "box":
                    parts.append(Primitive("box", center, (leg_w, leg_h / 2.0, leg_w)))
                else:
                    parts.append(Primitive("cylinder", center, (leg_w, leg_h, 1)))

    n_stretchers = int(rng.choice([0, 1, 2], p=[0.45, 0.3, 0.25])) if not slab_legs else 0
    if n_stretchers:
        s = rng.uniform(0.018, 0.03)
        y_str = y0 + rng.uniform(0.06, 0.22) * height
        z_level = [(-1.0, 1.0)[k] * lz for k in range(n_stretchers)]
        for sz in z_level:
            parts.append(Primitive("box", (0.0, y_str, sz), (lx + leg_w, s, s)))

    if rng.uniform() < 0.3 and len(parts) < 8:
        shelf_half = rng.uniform(0.02, 0.03)
        y_shelf = y0 + rng.uniform(0.3, 0.55) * height
        parts.append(Primitive("box", (0.0, y_shelf, 0.0), (lx + leg_w, shelf_half, max(lz + leg_w, 0.08))))
    return parts


def _pedestal_table(rng: np.random.Generator) -> list[Primitive]:
    height = rng.uniform(0.6, 0.95)
    y0 = -height / 2.0
    top_thick = rng.uniform(0.05, 0.09)
    base_thick = rng.uniform(0.04, 0.07)
    overlap = 0.02
    top_r = rng.uniform(0.3, 0.48)
    base_r = rng.uniform(0.16, 0.3)
    col_r = rng.uniform(0.05, 0.09)
    top_y = height / 2.0 - top_thick / 2.0
    base_y = y0 + base_thick / 2.0
    col_h = height - top_thick - base_thick + 2 * overlap
    col_y = y0 + base_thick - overlap + col_h / 2.0
    parts = []
    if rng.uniform() < 0.6:
        parts.append(Primitive("cylinder", (0.0, top_y, 0.0), (top_r, top_thick, 1)))
    else:
        parts.append(Primitive("box", (0.0, top_y, 0.0), (top_r, top_thick / 2.0, rng.uniform(0.24, 0.45))))
    parts.append(Primitive("cylinder", (0.0, col_y, 0.0), (col_r, col_h, 1)))
    if rng.uniform() < 0.5:
        parts.append(Primitive("cylinder", (0.0, base_y, 0.0), (base_r, base_thick, 1)))
    else:
        parts.append(Primitive("box", (0.0, base_y, 0.0), (base_r, base_thick / 2.0, base_r)))
    return parts


def synth_shape_id(seed: int, index: int) -> str:
    return f"synth{seed:04d}-{index:04d}"


def generate_shape(
    seed: int,
    index: int,
    part_samples: int = DEFAULT_PART_SAMPLES,
    shape_samples: int = DEFAULT_SHAPE_SAMPLES,
    mesh_res: int = DEFAULT_MESH_RES,
    render_views: tuple = DEFAULT_RENDER_VIEWS,
    with_samples: bool = True,
) -> ShapeRecord:
    rng = np.random.default_rng(np.random.SeedSequence([int(seed), int(index)]))
    prims = _pedestal_table(rng) if rng.uniform() < 0.25 else _leg_table(rng)
    shape_id = synth_shape_id(seed, index)

    parts = []
    for k, prim in enumerate(prims):
        norm_prim, t = normalize_part(prim)
        parts.append(
            PartRecord(
                part_id=f"{shape_id}/p{k}",
                mesh=primitive_mesh(prim),
                gt_transform=t,
                normalized_mesh=primitive_mesh(norm_prim),
                primitive=prim,
                normalized_primitive=norm_prim,
            )
        )
    shape = ShapeRecord(shape_id, parts)

    if with_samples:
        for part in parts:
            part.sample_set = sample_part_sdf(part, n=part_samples, seed=seed)
        shape.full_sample_set = sample_shape_sdf(shape, shape_samples, seed=seed)
    shape.pointcloud = sample_shape_pointcloud(shape, seed=seed)

    field = shape.assembled_field()
    if mesh_res:
        from .fields import mesh_field

        shape.mesh = mesh_field(field, resolution=mesh_res, bounds=0.6)
    for az, el in render_views:
        shape.renders[f"{int(az)}_{int(el)}"] = render_silhouette(field, az, el)
    return shape


def generate_synthetic_dataset(
    seed: int,
    count: int,
    category: str = "boxfurniture",
    **kwargs,
) -> list[ShapeRecord]:
    """Deterministic synthetic dataset: identical (seed, count) arguments
    produce identical records."""
    if category not in CATEGORIES:
        raise DataError(f"unknown category {category!r} (available: {CATEGORIES})")
    if count < 1:
        raise DataError("count must be >= 1")
    return [generate_shape(seed, i, **kwargs) for i in range(count)]
