"""ASCII OBJ read/write: ``v x y z`` vertices and ``f i j k`` faces (1-based).

The writer emits a fixed format so identical meshes serialize to identical
bytes. The reader tolerates normals/texcoords/comments and fan-triangulates
polygon faces.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np


def mesh_to_obj(vertices: np.ndarray, faces: np.ndarray) -> str:
    lines = []
    for v in np.asarray(vertices, dtype=np.float64):
        lines.append(f"v {v[0]:.9g} {v[1]:.9g} {v[2]:.9g}")
    for f in np.asarray(faces, dtype=np.int64):
        lines.append(f"f {f[0] + 1} {f[1] + 1} {f[2] + 1}")
    return "\n".join(lines) + "\n"


def write_obj(path: str | Path, vertices: np.ndarray, faces: np.ndarray) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(mesh_to_obj(vertices, faces), encoding="ascii")


def _vertex_index(token: str, n_vertices: int) -> int:
    idx = int(token.split("/")[0])
    if idx < 0:
        idx = n_vertices + idx + 1
    if not 1 <= idx <= n_vertices:
        raise ValueError(f"face index {idx} out of range (1..{n_vertices})")
    return idx - 1


def obj_to_mesh(text: str) -> tuple[np.ndarray, np.ndarray]:
    vertices: list[list[float]] = []
    faces: list[list[int]] = []
    for line in text.splitlines():
        parts = line.split()
        if not parts or parts[0].startswith("#"):
            continue
        if parts[0] == "v":
            vertices.append([float(parts[1]), float(parts[2]), float(parts[3])])
        elif parts[0] == "f":
            idx = [_vertex_index(tok, len(vertices)) for tok in parts[1:]]
            for k in range(1, len(idx) - 1):
                faces.append([idx[0], idx[k], idx[k + 1]])
    verts = np.asarray(vertices, dtype=np.float64).reshape(-1, 3)
    tris = np.asarray(faces, dtype=np.int32).reshape(-1, 3)
    return verts, tris


def read_obj(path: str | Path) -> tuple[np.ndarray, np.ndarray]:
    return obj_to_mesh(Path(path).read_text(encoding="ascii", errors="replace"))
