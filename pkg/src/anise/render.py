"""Orthographic silhouette rendering by sphere-tracing a distance field."""

from __future__ import annotations

import numpy as np

from .fields import ImplicitField

RENDER_RES = 64


def camera_frame(azimuth_deg: float, elevation_deg: float) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    az = np.deg2rad(azimuth_deg)
    el = np.deg2rad(elevation_deg)
    eye = np.array([np.cos(el) * np.cos(az), np.sin(el), np.cos(el) * np.sin(az)])
    forward = -eye
    world_up = np.array([0.0, 1.0, 0.0])
    if abs(forward @ world_up) > 0.999:
        world_up = np.array([0.0, 0.0, 1.0])
    right = np.cross(forward, world_up)
    right /= np.linalg.norm(right)
    up = np.cross(right, forward)
    return eye, right, up


def render_silhouette(
    field: ImplicitField,
    azimuth_deg: float,
    elevation_deg: float,
    res: int = RENDER_RES,
    viewport: float = 0.9,
    distance: float = 2.0,
    max_steps: int = 64,
    eps: float = 1e-3,
) -> np.ndarray:
    """Binary silhouette (uint8, foreground=255) from an orthographic camera
    looking at the origin."""
    eye, right, up = camera_frame(azimuth_deg, elevation_deg)
    ray_dir = -eye  # unit: eye is on the unit sphere scaled below

    px = (np.arange(res) + 0.5) / res * 2.0 - 1.0
    u, v = np.meshgrid(px * viewport, -px * viewport, indexing="xy")
    origins = (
        eye[None, :] * distance
        + u.reshape(-1, 1) * right[None, :]
        + v.reshape(-1, 1) * up[None, :]
    )

    n = origins.shape[0]
    t = np.zeros(n)
    hit = np.zeros(n, dtype=bool)
    active = np.ones(n, dtype=bool)
    t_max = 2.0 * distance + 1.0
    for _ in range(max_steps):
        idx = np.flatnonzero(active)
        if not len(idx):
            break
        pos = origins[idx] + t[idx, None] * ray_dir[None, :]
        f = field(pos)
        newly_hit = f < eps
        hit[idx[newly_hit]] = True
        active[idx[newly_hit]] = False
        step = np.maximum(f, 2e-3)
        t[idx] += np.where(newly_hit, 0.0, step)
        escaped = t[idx] > t_max
        active[idx[escaped & ~newly_hit]] = False

    img = np.where(hit, 255, 0).astype(np.uint8)
    return img.reshape(res, res)
