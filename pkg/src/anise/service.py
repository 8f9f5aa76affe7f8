"""HTTP edit service: reconstruct a shape from an observation, then replace,
interpolate or re-position individual parts with live re-meshing.

Sessions live in memory; every mutation runs under the session's lock so
concurrent edits serialize. The service adds no geometry logic of its own:
meshes come straight from the field algebra / retrieval modules applied to
the session's part list.
"""

from __future__ import annotations

import base64
import json
import threading
import uuid
from dataclasses import dataclass, field as dc_field
from pathlib import Path

import numpy as np
from fastapi import FastAPI, HTTPException, Query
from fastapi.responses import PlainTextResponse
from pydantic import BaseModel, Field

from .dataset import POINTCLOUD_SIZE, SHAPE_BOUND
from .fields import FieldError, PartTransform, mesh_field
from .io import mesh_to_obj, pgm_from_bytes
from .models import ReconstructionModel, slot_is_empty
from .retrieval import PartDatabase, ReferenceSet, RetrievalError, query_nearest

MAX_MESH_RESOLUTION = 256
EMPTY_CHECK_RESOLUTION = 32


@dataclass
class SessionPart:
    index: int
    transform: PartTransform
    code: np.ndarray
    empty: bool
    provenance: dict

    def summary(self) -> dict:
        return {
            "index": self.index,
            "center": [float(c) for c in self.transform.center],
            "scale": float(self.transform.scale),
            "empty": self.empty,
            "provenance": self.provenance,
        }


@dataclass
class EditSession:
    session_id: str
    parts: list[SessionPart]
    initial_codes: list[np.ndarray]
    lock: threading.Lock = dc_field(default_factory=threading.Lock)

    def to_json(self) -> dict:
        return {
            "session_id": self.session_id,
            "parts": [
                {**p.summary(), "code": [float(v) for v in p.code]} for p in self.parts
            ],
        }


class ReconstructRequest(BaseModel):
    points: list[list[float]] | None = None
    image: str | None = None  # base64 PGM (P5)


class ReplaceRequest(BaseModel):
    part_id: str | None = None
    source: str | None = None  # "decoded" restores the slot's original code


class InterpolateRequest(BaseModel):
    part_id: str
    alpha: float = Field(ge=0.0, le=1.0)


class TransformRequest(BaseModel):
    center: list[float] = Field(min_length=3, max_length=3)
    scale: float = Field(gt=0.0)


def create_app(
    model: ReconstructionModel,
    db: PartDatabase | None = None,
    session_dump: str | Path | None = None,
    ui_dir: str | Path | None = None,
) -> FastAPI:
    app = FastAPI(title="part-editing service")
    sessions: dict[str, EditSession] = {}
    store_lock = threading.Lock()

    def need_db() -> PartDatabase:
        if db is None:
            raise HTTPException(status_code=404, detail="no part database loaded")
        return db

    def get_session(sid: str) -> EditSession:
        with store_lock:
            session = sessions.get(sid)
        if session is None:
            raise HTTPException(status_code=404, detail=f"unknown session {sid}")
        return session

    def get_part(session: EditSession, m: int) -> SessionPart:
        if not 0 <= m < len(session.parts):
            raise HTTPException(status_code=404, detail=f"part index {m} out of range")
        return session.parts[m]

    def refresh_empty(part: SessionPart) -> None:
        part.empty = slot_is_empty(model, part.transform, part.code, resolution=EMPTY_CHECK_RESOLUTION, bound=SHAPE_BOUND)

    @app.post("/api/reconstruct")
    def reconstruct(req: ReconstructRequest):
        if (req.points is None) == (req.image is None):
            raise HTTPException(status_code=422, detail="provide exactly one of points / image")
        if req.points is not None:
            pts = np.asarray(req.points, dtype=np.float64)
            if pts.shape != (POINTCLOUD_SIZE, 3):
                raise HTTPException(status_code=422, detail=f"points must be {POINTCLOUD_SIZE}x3, got {list(pts.shape)}")
            code = model.shape_code_from_pointcloud(pts)
        else:
            try:
                img = pgm_from_bytes(base64.b64decode(req.image))
            except (ValueError, base64.binascii.Error) as exc:
                raise HTTPException(status_code=422, detail=f"bad PGM image: {exc}")
            if img.shape != (model.config.image_size,) * 2:
                raise HTTPException(status_code=422, detail=f"image must be {model.config.image_size}^2, got {list(img.shape)}")
            code = model.shape_code_from_image(img.astype(np.float64) / 255.0)

        slots, _ = model.assemble(code)
        parts = []
        for m, (transform, part_code) in enumerate(slots):
            part = SessionPart(m, transform, part_code, empty=False, provenance={"source": "decoded"})
            refresh_empty(part)
            parts.append(part)
        session = EditSession(session_id=uuid.uuid4().hex[:16], parts=parts, initial_codes=[p.code.copy() for p in parts])
        with store_lock:
            sessions[session.session_id] = session
        return {"session_id": session.session_id, "parts": [p.summary() for p in parts]}

    @app.get("/api/sessions/{sid}/mesh", response_class=PlainTextResponse)
    def session_mesh(sid: str, res: int = Query(default=64, ge=2), part: int | None = None):
        if res > MAX_MESH_RESOLUTION:
            raise HTTPException(status_code=409, detail=f"resolution {res} exceeds maximum {MAX_MESH_RESOLUTION}")
        session = get_session(sid)
        with session.lock:
            if part is not None:
                sp = get_part(session, part)
                field = model.slots_field([(sp.transform, sp.code)], support_prune=True)
            else:
                live = [(p.transform, p.code) for p in session.parts if not p.empty]
                field = model.slots_field(live, support_prune=True)
            mesh = mesh_field(field, resolution=res, bounds=SHAPE_BOUND)
        return mesh_to_obj(mesh.vertices, mesh.faces)

    @app.post("/api/sessions/{sid}/parts/{m}/replace")
    def replace_part(sid: str, m: int, req: ReplaceRequest):
        session = get_session(sid)
        with session.lock:
            part = get_part(session, m)
            if req.source == "decoded":
                part.code = session.initial_codes[m].copy()
                part.provenance = {"source": "decoded"}
            elif req.part_id is not None:
                try:
                    entry = need_db().entry(req.part_id)
                except RetrievalError as exc:
                    raise HTTPException(status_code=404, detail=str(exc))
                part.code = entry.embedding.copy()
                part.provenance = {"source": "db", "part_id": entry.part_id, "source_shape_id": entry.source_shape_id}
            else:
                raise HTTPException(status_code=422, detail="provide part_id or source='decoded'")
            refresh_empty(part)
            return part.summary()

    @app.post("/api/sessions/{sid}/parts/{m}/interpolate")
    def interpolate_part(sid: str, m: int, req: InterpolateRequest):
        session = get_session(sid)
        with session.lock:
            part = get_part(session, m)
            try:
                entry = need_db().entry(req.part_id)
            except RetrievalError as exc:
                raise HTTPException(status_code=404, detail=str(exc))
            part.code = (1.0 - req.alpha) * part.code + req.alpha * entry.embedding
            part.provenance = {"source": "blend", "part_id": entry.part_id, "alpha": req.alpha}
            if req.alpha > 0:
                refresh_empty(part)
            return part.summary()

    @app.post("/api/sessions/{sid}/parts/{m}/transform")
    def transform_part(sid: str, m: int, req: TransformRequest):
        session = get_session(sid)
        with session.lock:
            part = get_part(session, m)
            try:
                part.transform = PartTransform(np.asarray(req.center), req.scale)
            except FieldError as exc:
                raise HTTPException(status_code=422, detail=str(exc))
            part.provenance = {**part.provenance, "transform_override": True}
            refresh_empty(part)
            return part.summary()

    @app.get("/api/parts/nearest")
    def nearest_parts(session: str, part: int, k: int = Query(default=5, ge=1), refs: str | None = None):
        sess = get_session(session)
        sp = get_part(sess, part)
        database = need_db()
        restrict = None
        if refs:
            ids = [x for x in refs.split(",") if x]
            shape_ids = [x for x in ids if x in set(database.shape_ids())]
            part_ids = [x for x in ids if x not in set(shape_ids)]
            try:
                restrict = ReferenceSet.from_ids(database, part_ids=part_ids, shape_ids=shape_ids)
            except RetrievalError as exc:
                raise HTTPException(status_code=422, detail=str(exc))
        result = query_nearest(database, sp.code, k=k, restrict=restrict)
        return {
            "candidates": [
                {
                    "part_id": pid,
                    "distance": float(d),
                    "source_shape_id": database.entry(pid).source_shape_id,
                }
                for pid, d in zip(result.part_ids, result.distances)
            ],
            "truncated": result.truncated,
        }

    @app.get("/api/db/parts/{part_id:path}/mesh", response_class=PlainTextResponse)
    def db_part_mesh(part_id: str):
        try:
            entry = need_db().entry(part_id)
        except RetrievalError as exc:
            raise HTTPException(status_code=404, detail=str(exc))
        return mesh_to_obj(entry.mesh.vertices, entry.mesh.faces)

    @app.get("/api/db/index")
    def db_index():
        database = need_db()
        return {
            "encoder_hash": database.encoder_hash,
            "shapes": database.shape_ids(),
            "parts": [{"part_id": e.part_id, "source_shape_id": e.source_shape_id} for e in database.entries],
        }

    if session_dump:
        @app.on_event("shutdown")
        def dump_sessions() -> None:
            payload = {sid: s.to_json() for sid, s in sessions.items()}
            Path(session_dump).write_text(json.dumps(payload, sort_keys=True))

    if ui_dir and Path(ui_dir).is_dir():
        from fastapi.staticfiles import StaticFiles

        app.mount("/ui", StaticFiles(directory=str(ui_dir), html=True), name="ui")

    return app
