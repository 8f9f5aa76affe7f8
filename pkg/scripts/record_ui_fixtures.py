"""Record live HTTP exchanges for the frontend's deterministic replay tests.

Drives the real edit service (briefly trained pipeline) through the scripted
10-action editing session the UI tests replay, mirroring the request pattern
the editor store issues per action, and dumps every exchange plus scenario
metadata to frontend/test/fixtures/session.json.
"""

import json
import sys
from pathlib import Path

import torch

torch.set_num_threads(1)

from fastapi.testclient import TestClient

from anise.models import ModelConfig
from anise.retrieval import build_database
from anise.service import create_app
from anise.synth import generate_synthetic_dataset
from anise.training import TrainConfig, run_stage

MESH_RES = 48
K = 5


class Recorder:
    def __init__(self, client: TestClient):
        self.client = client
        self.log = []

    def call(self, method: str, path: str, body=None):
        resp = self.client.request(method, path, json=body) if body is not None else self.client.request(method, path)
        assert resp.status_code == 200, f"{method} {path}: {resp.status_code} {resp.text[:200]}"
        self.log.append(
            {"method": method, "path": path, "body": body, "status": resp.status_code, "response": resp.text}
        )
        return resp


def union_mesh(rec, sid):
    return rec.call("GET", f"/api/sessions/{sid}/mesh?res={MESH_RES}").text


def select(rec, sid, part, refs=None):
    rec.call("GET", f"/api/sessions/{sid}/mesh?res={MESH_RES}&part={part}")
    ref_q = f"&refs={','.join(refs)}" if refs else ""
    return rec.call("GET", f"/api/parts/nearest?session={sid}&part={part}&k={K}{ref_q}").json()


def edit(rec, sid, part, method_path, body, selected, refs=None):
    rec.call("POST", method_path, body)
    mesh = union_mesh(rec, sid)
    if selected == part:
        select(rec, sid, part, refs)
    return mesh


def main(out_path: str):
    shapes = generate_synthetic_dataset(21, 6, part_samples=4000, shape_samples=2048, mesh_res=0, render_views=())
    train = shapes[:4]
    model_cfg = ModelConfig(decoder_hidden=64, encoder_hidden=32, head_hidden=64, seed=0)
    base = dict(batch_size=8, encoder_points=128, query_points=128, seed=0, model=model_cfg, log_every=100)
    model, _ = run_stage(TrainConfig(stage="pretrain", steps=400, lr=1e-3, **base), train)
    model, _ = run_stage(TrainConfig(stage="main", steps=250, lr=1e-3, **base), train, model)
    model, _ = run_stage(TrainConfig(stage="finetune", steps=150, lr=3e-4, **dict(base, batch_size=2)), train, model)
    db = build_database([p for s in train for p in s.parts], model.part_code, model.config.hash())

    app = create_app(model, db)
    with TestClient(app) as client:
        rec = Recorder(client)
        points = shapes[4].pointcloud.tolist()

        # Action 1: reconstruct
        resp = rec.call("POST", "/api/reconstruct", {"points": points}).json()
        sid = resp["session_id"]
        union_mesh(rec, sid)
        # Action 2: select part 1
        cands = select(rec, sid, 1)
        top = cands["candidates"][0]["part_id"]
        # Action 3: replace part 1 with its top candidate
        edit(rec, sid, 1, f"/api/sessions/{sid}/parts/1/replace", {"part_id": top}, selected=1)
        # Action 4: select part 2
        select(rec, sid, 2)
        mesh_before_identity = union_mesh(rec, sid)
        # Action 5: interpolate part 2 with alpha = 0 (identity)
        blend_part = db.entries[2].part_id
        mesh_after_identity = edit(
            rec, sid, 2, f"/api/sessions/{sid}/parts/2/interpolate", {"part_id": blend_part, "alpha": 0.0}, selected=2
        )
        assert mesh_before_identity == mesh_after_identity, "alpha=0 interpolation must be an identity"
        # Action 6: select part 0
        select(rec, sid, 0)
        part0 = resp["parts"][0]
        moved = [part0["center"][0] + 0.1, part0["center"][1], part0["center"][2]]
        # Action 7: transform part 0 (+0.1 in x)
        edit(rec, sid, 0, f"/api/sessions/{sid}/parts/0/transform", {"center": moved, "scale": part0["scale"]}, selected=0)
        # Action 8: interpolate part 0 halfway to a database part
        edit(
            rec, sid, 0, f"/api/sessions/{sid}/parts/0/interpolate", {"part_id": blend_part, "alpha": 0.5}, selected=0
        )
        # Action 9: transform part 0 back (reversibility by re-posting)
        edit(
            rec, sid, 0,
            f"/api/sessions/{sid}/parts/0/transform",
            {"center": part0["center"], "scale": part0["scale"]},
            selected=0,
        )
        # Action 10: restore part 1's decoded code
        final_mesh = edit(rec, sid, 1, f"/api/sessions/{sid}/parts/1/replace", {"source": "decoded"}, selected=1)

        fixture = {
            "mesh_res": MESH_RES,
            "k": K,
            "session_id": sid,
            "points": points,
            "top_candidate": top,
            "blend_part": blend_part,
            "part0": part0,
            "final_mesh": final_mesh,
            "identity_mesh": mesh_before_identity,
            "exchanges": rec.log,
        }
    out = Path(out_path)
    out.parent.mkdir(parents=True, exist_ok=True)
    out.write_text(json.dumps(fixture, indent=1, sort_keys=True))
    print(f"recorded {len(rec.log)} exchanges -> {out}")


if __name__ == "__main__":
    main(sys.argv[1] if len(sys.argv) > 1 else "frontend/test/fixtures/session.json")
