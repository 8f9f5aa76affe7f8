"""Part retrieval & assembly: a part database of encoder embeddings with
exact (exhaustive) nearest-neighbor queries, plus assembly of retrieved
normalized parts under predicted transforms.

Queries are exact k-NN by L2 distance with ties broken by lowest part id;
reference sets restrict the candidate pool without changing the metric.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .dataset import PartRecord
from .fields import ImplicitField, PartTransform, TriMesh, concat_meshes, empty_mesh, transform_field, union_fields
from .io import read_container, write_container
from .primitives import Primitive, primitive_field

logger = logging.getLogger(__name__)


class RetrievalError(ValueError):
    pass


@dataclass
class DbEntry:
    part_id: str
    source_shape_id: str
    embedding: np.ndarray  # (256,)
    mesh: TriMesh  # normalized part geometry
    surface_points: np.ndarray  # (K, 3) canonical encoder input
    primitive: Primitive | None = None  # normalized analytic recipe, if any

    def field(self) -> ImplicitField:
        if self.primitive is None:
            raise RetrievalError(f"part {self.part_id} has no analytic field")
        return primitive_field(self.primitive)


class PartDatabase:
    def __init__(self, entries: list[DbEntry], encoder_hash: str):
        entries = sorted(entries, key=lambda e: e.part_id)
        ids = [e.part_id for e in entries]
        if len(set(ids)) != len(ids):
            raise RetrievalError("duplicate part ids in database")
        self.entries = entries
        self.encoder_hash = encoder_hash
        self._by_id = {e.part_id: i for i, e in enumerate(entries)}
        self.embeddings = (
            np.stack([e.embedding for e in entries]).astype(np.float64) if entries else np.zeros((0, 256))
        )

    def __len__(self) -> int:
        return len(self.entries)

    def __contains__(self, part_id: str) -> bool:
        return part_id in self._by_id

    def entry(self, part_id: str) -> DbEntry:
        if part_id not in self._by_id:
            raise RetrievalError(f"unknown part id {part_id!r}")
        return self.entries[self._by_id[part_id]]

    def shape_ids(self) -> list[str]:
        return sorted({e.source_shape_id for e in self.entries})

    def parts_of_shapes(self, shape_ids) -> list[str]:
        wanted = set(shape_ids)
        return [e.part_id for e in self.entries if e.source_shape_id in wanted]

    # -- persistence ---------------------------------------------------------

    def save(self, path: str | Path) -> None:
        tensors: dict[str, np.ndarray] = {"embeddings": self.embeddings.astype(np.float32)}
        manifest = []
        for i, e in enumerate(self.entries):
            tensors[f"mesh{i}/vertices"] = e.mesh.vertices.astype(np.float32)
            tensors[f"mesh{i}/faces"] = e.mesh.faces.astype(np.int32)
            tensors[f"surface{i}"] = e.surface_points.astype(np.float32)
            manifest.append(
                {
                    "part_id": e.part_id,
                    "source_shape_id": e.source_shape_id,
                    "primitive": e.primitive.to_json() if e.primitive else None,
                }
            )
        write_container(path, tensors, meta={"kind": "part_database", "encoder_hash": self.encoder_hash, "entries": manifest})

    @classmethod
    def load(cls, path: str | Path) -> "PartDatabase":
        tensors, meta = read_container(path)
        if meta.get("kind") != "part_database":
            raise RetrievalError(f"{path}: not a part database")
        emb = tensors["embeddings"].astype(np.float64)
        entries = []
        for i, ent in enumerate(meta["entries"]):
            prim = Primitive.from_json(ent["primitive"]) if ent.get("primitive") else None
            entries.append(
                DbEntry(
                    part_id=ent["part_id"],
                    source_shape_id=ent["source_shape_id"],
                    embedding=emb[i],
                    mesh=TriMesh(tensors[f"mesh{i}/vertices"].astype(np.float64), tensors[f"mesh{i}/faces"]),
                    surface_points=tensors[f"surface{i}"].astype(np.float64),
                    primitive=prim,
                )
            )
        return cls(entries, meta.get("encoder_hash", ""))


@dataclass(frozen=True)
class ReferenceSet:
    """User-curated subset of database part ids constraining retrieval."""

    part_ids: frozenset[str]

    def __post_init__(self):
        if not self.part_ids:
            raise RetrievalError("reference set cannot be empty")

    @classmethod
    def from_ids(cls, db: PartDatabase, part_ids=(), shape_ids=()) -> "ReferenceSet":
        ids = set(part_ids)
        if shape_ids:
            known = set(db.shape_ids())
            missing = set(shape_ids) - known
            if missing:
                raise RetrievalError(f"unknown shape ids in reference set: {sorted(missing)[:4]}")
            ids.update(db.parts_of_shapes(shape_ids))
        missing = [i for i in ids if i not in db]
        if missing:
            raise RetrievalError(f"unknown part ids in reference set: {sorted(missing)[:4]}")
        return cls(frozenset(ids))

    @classmethod
    def from_json(cls, db: PartDatabase, obj: dict) -> "ReferenceSet":
        return cls.from_ids(db, part_ids=obj.get("part_ids", ()), shape_ids=obj.get("shape_ids", ()))


def build_database(parts: list[PartRecord], encoder, encoder_hash: str) -> PartDatabase:
    """One entry per normalized part; ``encoder(points) -> (256,)`` is the
    pre-trained part encoder."""
    if not parts:
        raise RetrievalError("cannot build a database from zero parts")
    entries = []
    for part in parts:
        pts = part.surface_points()
        entries.append(
            DbEntry(
                part_id=part.part_id,
                source_shape_id=part.part_id.rsplit("/", 1)[0],
                embedding=np.asarray(encoder(pts), dtype=np.float64),
                mesh=part.normalized_mesh,
                surface_points=pts,
                primitive=part.normalized_primitive,
            )
        )
    return PartDatabase(entries, encoder_hash)


@dataclass(frozen=True)
class QueryResult:
    part_ids: tuple[str, ...]
    distances: np.ndarray
    truncated: bool  # k exceeded the candidate count; all candidates returned


def query_nearest(db: PartDatabase, code: np.ndarray, k: int = 1, restrict: ReferenceSet | None = None) -> QueryResult:
    """Exact k-NN by L2 over the (optionally restricted) database.

    Entries are stored sorted by part id, so a stable argsort breaks distance
    ties toward the lowest part id."""
    if k < 1:
        raise RetrievalError("k must be >= 1")
    code = np.asarray(code, dtype=np.float64).reshape(-1)
    idx = np.arange(len(db.entries))
    if restrict is not None:
        idx = np.array([i for i in idx if db.entries[i].part_id in restrict.part_ids], dtype=int)
        if not len(idx):
            raise RetrievalError("reference set matches no database entries")
    dist = np.linalg.norm(db.embeddings[idx] - code[None, :], axis=1)
    order = np.argsort(dist, kind="stable")
    truncated = k > len(order)
    top = order[: min(k, len(order))]
    return QueryResult(
        part_ids=tuple(db.entries[idx[i]].part_id for i in top),
        distances=dist[top],
        truncated=truncated,
    )


@dataclass(frozen=True)
class RetrievedPart:
    slot: int
    part_id: str
    source_shape_id: str
    transform: PartTransform
    distance: float


def assemble_retrieved(
    slots: list[tuple[int, PartTransform, np.ndarray]],
    db: PartDatabase,
    restrict: ReferenceSet | None = None,
) -> tuple[TriMesh, list[RetrievedPart]]:
    """Assemble nearest database parts under the predicted transforms.

    ``slots`` holds the live (non-empty) slots as (slot index, transform,
    part code); parts may come from different source shapes. All slots empty
    yields an empty mesh."""
    provenance: list[RetrievedPart] = []
    meshes: list[TriMesh] = []
    for slot, transform, code in slots:
        res = query_nearest(db, code, k=1, restrict=restrict)
        entry = db.entry(res.part_ids[0])
        meshes.append(entry.mesh.transformed(transform))
        provenance.append(
            RetrievedPart(slot, entry.part_id, entry.source_shape_id, transform, float(res.distances[0]))
        )
    if not meshes:
        logger.warning("assemble_retrieved: all slots empty, returning empty mesh")
        return empty_mesh(), []
    return concat_meshes(meshes), provenance


def retrieved_field(db: PartDatabase, provenance: list[RetrievedPart]) -> ImplicitField:
    """Min-union field of the retrieved parts (analytic entries only)."""
    if not provenance:
        from .fields import constant_field

        return constant_field(1.0)
    return union_fields([transform_field(db.entry(p.part_id).field(), p.transform) for p in provenance])
