import base64
import json
import threading

import numpy as np
import pytest
from fastapi.testclient import TestClient

from anise.service import create_app


@pytest.fixture(scope="module")
def client(mini_pipeline):
    app = create_app(mini_pipeline.model, mini_pipeline.db)
    with TestClient(app) as c:
        yield c


@pytest.fixture(scope="module")
def session(client, mini_pipeline):
    shape = mini_pipeline.eval_shapes[0]
    resp = client.post("/api/reconstruct", json={"points": shape.pointcloud.tolist()})
    assert resp.status_code == 200
    return resp.json()


def fresh_session(client, mini_pipeline, idx=0):
    shape = mini_pipeline.eval_shapes[idx]
    resp = client.post("/api/reconstruct", json={"points": shape.pointcloud.tolist()})
    assert resp.status_code == 200
    return resp.json()


class TestReconstruct:
    def test_response_schema(self, session):
        import jsonschema
        from referencing import Registry, Resource

        schema = json.loads(open("docs/schemas/reconstruct_response.schema.json").read())
        part_schema = json.loads(open("docs/schemas/part_summary.schema.json").read())
        registry = Registry().with_resource("part_summary.schema.json", Resource.from_contents(part_schema))
        jsonschema.validators.validator_for(schema)(schema, registry=registry).validate(session)
        assert len(session["parts"]) == 10

    def test_deterministic(self, client, mini_pipeline):
        a = fresh_session(client, mini_pipeline)
        b = fresh_session(client, mini_pipeline)
        assert a["parts"] == b["parts"]

    def test_image_input(self, client, mini_pipeline):
        shape = mini_pipeline.eval_shapes[0]
        img = next(iter(shape.renders.values()))
        from anise.io import write_pgm
        import io as _io, tempfile, pathlib

        with tempfile.TemporaryDirectory() as td:
            p = pathlib.Path(td) / "r.pgm"
            write_pgm(p, img)
            payload = base64.b64encode(p.read_bytes()).decode()
        resp = client.post("/api/reconstruct", json={"image": payload})
        assert resp.status_code == 200
        assert len(resp.json()["parts"]) == 10

    def test_bad_inputs(self, client):
        assert client.post("/api/reconstruct", json={}).status_code == 422
        assert client.post("/api/reconstruct", json={"points": [[0, 0, 0]]}).status_code == 422
        assert client.post("/api/reconstruct", json={"image": "notbase64pgm"}).status_code == 422


class TestMesh:
    def test_mesh_is_obj(self, client, session):
        resp = client.get(f"/api/sessions/{session['session_id']}/mesh", params={"res": 24})
        assert resp.status_code == 200
        text = resp.text
        for line in text.splitlines():
            assert line.startswith(("v ", "f ")) or not line

    def test_res_limit_409(self, client, session):
        resp = client.get(f"/api/sessions/{session['session_id']}/mesh", params={"res": 512})
        assert resp.status_code == 409

    def test_unknown_session_404(self, client):
        assert client.get("/api/sessions/nosuch/mesh").status_code == 404

    def test_single_part_mesh(self, client, session):
        resp = client.get(f"/api/sessions/{session['session_id']}/mesh", params={"res": 16, "part": 0})
        assert resp.status_code == 200


class TestEdits:
    def test_interpolate_alpha_zero_identity(self, client, mini_pipeline):
        sess = fresh_session(client, mini_pipeline)
        sid = sess["session_id"]
        before = client.get(f"/api/sessions/{sid}/mesh", params={"res": 24}).text
        any_part = mini_pipeline.db.entries[0].part_id
        resp = client.post(f"/api/sessions/{sid}/parts/0/interpolate", json={"part_id": any_part, "alpha": 0.0})
        assert resp.status_code == 200
        after = client.get(f"/api/sessions/{sid}/mesh", params={"res": 24}).text
        assert before == after

    def test_replace_with_top_candidate(self, client, mini_pipeline):
        sess = fresh_session(client, mini_pipeline)
        sid = sess["session_id"]
        near = client.get("/api/parts/nearest", params={"session": sid, "part": 1, "k": 1}).json()
        top = near["candidates"][0]["part_id"]
        resp = client.post(f"/api/sessions/{sid}/parts/1/replace", json={"part_id": top})
        assert resp.status_code == 200
        assert resp.json()["provenance"] == {"source": "db", "part_id": top, "source_shape_id": mini_pipeline.db.entry(top).source_shape_id}
        # re-query: the replaced code now sits exactly on the stored embedding
        near2 = client.get("/api/parts/nearest", params={"session": sid, "part": 1, "k": 1}).json()
        assert near2["candidates"][0]["part_id"] == top
        assert near2["candidates"][0]["distance"] == 0.0

    def test_replace_then_restore_decoded(self, client, mini_pipeline):
        sess = fresh_session(client, mini_pipeline)
        sid = sess["session_id"]
        before = client.get(f"/api/sessions/{sid}/mesh", params={"res": 16, "part": 2}).text
        any_part = mini_pipeline.db.entries[1].part_id
        client.post(f"/api/sessions/{sid}/parts/2/replace", json={"part_id": any_part})
        restored = client.post(f"/api/sessions/{sid}/parts/2/replace", json={"source": "decoded"})
        assert restored.status_code == 200
        assert restored.json()["provenance"] == {"source": "decoded"}
        after = client.get(f"/api/sessions/{sid}/mesh", params={"res": 16, "part": 2}).text
        assert before == after

    def test_transform_override(self, client, mini_pipeline):
        sess = fresh_session(client, mini_pipeline)
        sid = sess["session_id"]
        part = sess["parts"][0]
        new_center = [part["center"][0] + 0.1, part["center"][1], part["center"][2]]
        resp = client.post(
            f"/api/sessions/{sid}/parts/0/transform", json={"center": new_center, "scale": part["scale"]}
        )
        assert resp.status_code == 200
        assert resp.json()["center"] == pytest.approx(new_center)

    def test_transform_revert_by_reposting(self, client, mini_pipeline):
        sess = fresh_session(client, mini_pipeline)
        sid = sess["session_id"]
        part = sess["parts"][3]
        before = client.get(f"/api/sessions/{sid}/mesh", params={"res": 16}).text
        client.post(f"/api/sessions/{sid}/parts/3/transform", json={"center": [0.3, 0.3, 0.3], "scale": 0.5})
        client.post(f"/api/sessions/{sid}/parts/3/transform", json={"center": part["center"], "scale": part["scale"]})
        after = client.get(f"/api/sessions/{sid}/mesh", params={"res": 16}).text
        assert before == after

    def test_edit_errors(self, client, session, mini_pipeline):
        sid = session["session_id"]
        assert client.post(f"/api/sessions/{sid}/parts/99/replace", json={"part_id": "x"}).status_code == 404
        assert client.post(f"/api/sessions/{sid}/parts/0/replace", json={"part_id": "missing/p9"}).status_code == 404
        assert client.post(f"/api/sessions/{sid}/parts/0/interpolate", json={"part_id": "x", "alpha": 2.0}).status_code == 422
        assert client.post(f"/api/sessions/{sid}/parts/0/transform", json={"center": [0, 0, 0], "scale": -1.0}).status_code == 422
        assert client.post("/api/sessions/ghost/parts/0/replace", json={"part_id": "x"}).status_code == 404


class TestNearest:
    def test_schema_and_restriction(self, client, session, mini_pipeline):
        import jsonschema

        sid = session["session_id"]
        resp = client.get("/api/parts/nearest", params={"session": sid, "part": 0, "k": 5})
        assert resp.status_code == 200
        schema = json.loads(open("docs/schemas/nearest_response.schema.json").read())
        jsonschema.validate(resp.json(), schema)

        shape_id = mini_pipeline.train_shapes[0].shape_id
        resp = client.get("/api/parts/nearest", params={"session": sid, "part": 0, "k": 3, "refs": shape_id})
        allowed = set(mini_pipeline.db.parts_of_shapes([shape_id]))
        for cand in resp.json()["candidates"]:
            assert cand["part_id"] in allowed

    def test_bad_refs_422(self, client, session):
        resp = client.get("/api/parts/nearest", params={"session": session["session_id"], "part": 0, "refs": "bogus/p0"})
        assert resp.status_code == 422


class TestDbEndpoints:
    def test_part_mesh(self, client, mini_pipeline):
        part_id = mini_pipeline.db.entries[0].part_id
        resp = client.get(f"/api/db/parts/{part_id}/mesh")
        assert resp.status_code == 200
        assert resp.text.startswith("v ")

    def test_unknown_part_404(self, client):
        assert client.get("/api/db/parts/zzz/mesh").status_code == 404

    def test_index(self, client, mini_pipeline):
        resp = client.get("/api/db/index")
        assert resp.status_code == 200
        assert len(resp.json()["parts"]) == len(mini_pipeline.db)


class TestConcurrency:
    def test_concurrent_edits_serialize(self, client, mini_pipeline):
        # Final state must equal one of the two sequential orders (transform
        # posts overwrite, so that means: the last writer's state).
        sess = fresh_session(client, mini_pipeline)
        sid = sess["session_id"]
        a = {"center": [0.2, 0.0, 0.0], "scale": 0.4}
        b = {"center": [-0.2, 0.1, 0.0], "scale": 0.6}
        probe_part = mini_pipeline.db.entries[0].part_id

        def read_state():
            # identity interpolation reads the current summary without changing it
            resp = client.post(f"/api/sessions/{sid}/parts/0/interpolate", json={"part_id": probe_part, "alpha": 0.0})
            assert resp.status_code == 200
            return resp.json()

        def post(body):
            assert client.post(f"/api/sessions/{sid}/parts/0/transform", json=body).status_code == 200

        for _ in range(5):
            ta = threading.Thread(target=post, args=(a,))
            tb = threading.Thread(target=post, args=(b,))
            ta.start()
            tb.start()
            ta.join()
            tb.join()
            state = read_state()
            outcome_a = state["center"] == pytest.approx(a["center"]) and state["scale"] == pytest.approx(a["scale"])
            outcome_b = state["center"] == pytest.approx(b["center"]) and state["scale"] == pytest.approx(b["scale"])
            assert outcome_a or outcome_b


class TestSessionDump:
    def test_dump_on_shutdown(self, mini_pipeline, tmp_path):
        dump = tmp_path / "sessions.json"
        app = create_app(mini_pipeline.model, mini_pipeline.db, session_dump=dump)
        with TestClient(app) as c:
            shape = mini_pipeline.eval_shapes[0]
            c.post("/api/reconstruct", json={"points": shape.pointcloud.tolist()})
        payload = json.loads(dump.read_text())
        assert len(payload) == 1
        sess = next(iter(payload.values()))
        assert len(sess["parts"]) == 10
