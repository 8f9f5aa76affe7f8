"""Point sampling: mesh/primitive surface samples and SDF training samples.

SDF sample sets mix 50% uniform points in an inflated bounding box with 50%
near-surface points (surface sample + isotropic Gaussian offset, sigma split
evenly across two scales). The uniform block comes first, then one block per
sigma in order.
"""

from __future__ import annotations

import numpy as np

from .fields import ImplicitField, TriMesh

NEAR_SURFACE_SIGMAS = (0.01, 0.05)
BBOX_INFLATE = 0.1


def triangle_areas(mesh: TriMesh) -> np.ndarray:
    v = mesh.vertices
    f = mesh.faces
    a, b, c = v[f[:, 0]], v[f[:, 1]], v[f[:, 2]]
    return 0.5 * np.linalg.norm(np.cross(b - a, c - a), axis=1)


def sample_mesh_surface(mesh: TriMesh, n: int, rng: np.random.Generator) -> np.ndarray:
    """Area-weighted uniform samples on a triangle mesh surface."""
    if mesh.is_empty:
        raise ValueError("cannot sample an empty mesh")
    areas = triangle_areas(mesh)
    total = areas.sum()
    if total <= 0:
        raise ValueError("mesh has zero surface area")
    tri = rng.choice(len(areas), size=n, p=areas / total)
    u = rng.uniform(size=(n, 1))
    v = rng.uniform(size=(n, 1))
    flip = (u + v) > 1.0
    u[flip], v[flip] = 1.0 - u[flip], 1.0 - v[flip]
    f = mesh.faces[tri]
    a, b, c = mesh.vertices[f[:, 0]], mesh.vertices[f[:, 1]], mesh.vertices[f[:, 2]]
    return a + u * (b - a) + v * (c - a)


def sample_uniform_box(n: int, bounds_min: np.ndarray, bounds_max: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    return rng.uniform(size=(n, 3)) * (bounds_max - bounds_min) + bounds_min


def near_surface_blocks(n: int) -> tuple[int, list[int]]:
    """Split n into (uniform count, per-sigma near-surface counts)."""
    n_uniform = n // 2
    rest = n - n_uniform
    per = rest // len(NEAR_SURFACE_SIGMAS)
    counts = [per] * len(NEAR_SURFACE_SIGMAS)
    counts[0] += rest - per * len(NEAR_SURFACE_SIGMAS)
    return n_uniform, counts


def sample_sdf_points(
    field: ImplicitField,
    surface_sampler,
    bounds_min: np.ndarray,
    bounds_max: np.ndarray,
    n: int,
    rng: np.random.Generator,
    inflate: float = BBOX_INFLATE,
    sigmas: tuple[float, ...] = NEAR_SURFACE_SIGMAS,
) -> tuple[np.ndarray, np.ndarray]:
    """Draw SDF supervision samples; returns (points, distances).

    ``surface_sampler(count, rng) -> (count, 3)`` provides on-surface points.
    """
    if n < 1:
        raise ValueError("need at least one sample")
    extent = np.asarray(bounds_max) - np.asarray(bounds_min)
    bmin = np.asarray(bounds_min) - 0.5 * inflate * extent
    bmax = np.asarray(bounds_max) + 0.5 * inflate * extent
    n_uniform, counts = near_surface_blocks(n)
    blocks = []
    if n_uniform:
        blocks.append(sample_uniform_box(n_uniform, bmin, bmax, rng))
    for count, sigma in zip(counts, sigmas):
        if count:
            surf = surface_sampler(count, rng)
            blocks.append(surf + rng.normal(scale=sigma, size=(count, 3)))
    points = np.concatenate(blocks) if blocks else np.zeros((0, 3))
    return points, field(points)


def rejection_surface_points(
    union_field: ImplicitField,
    member_sampler,
    n: int,
    rng: np.random.Generator,
    tol: float = 1e-9,
    max_rounds: int = 64,
) -> np.ndarray:
    """Sample the boundary of a union: draw from member surfaces, reject
    points strictly inside the union (covered by another member)."""
    kept: list[np.ndarray] = []
    total = 0
    for _ in range(max_rounds):
        need = n - total
        if need <= 0:
            break
        cand = member_sampler(max(need * 2, 64), rng)
        ok = cand[union_field(cand) >= -tol]
        if len(ok):
            kept.append(ok[:need])
            total += len(kept[-1])
    if total < n:
        raise RuntimeError(f"surface rejection sampling stalled at {total}/{n} points")
    return np.concatenate(kept)
