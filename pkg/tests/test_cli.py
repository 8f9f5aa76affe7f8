import hashlib
import json
import subprocess
import sys
from pathlib import Path

import numpy as np
import pytest

from anise.models import save_checkpoint


def run_cli(*args, cwd=None):
    return subprocess.run(
        [sys.executable, "-m", "anise.cli", *[str(a) for a in args]],
        capture_output=True,
        text=True,
        cwd=cwd,
    )


def tree_digest(root: Path) -> dict:
    return {
        str(p.relative_to(root)): hashlib.sha256(p.read_bytes()).hexdigest()
        for p in sorted(root.rglob("*"))
        if p.is_file()
    }


@pytest.fixture(scope="module")
def artifacts(mini_pipeline, tmp_path_factory):
    """Checkpoint + db files for CLI verbs that load them."""
    root = tmp_path_factory.mktemp("artifacts")
    ckpt = root / "model.bin"
    save_checkpoint(ckpt, mini_pipeline.model, stage="finetune")
    dbp = root / "db.bin"
    mini_pipeline.db.save(dbp)
    return {"ckpt": ckpt, "db": dbp, "root": root}


@pytest.fixture(scope="module")
def small_dataset(tmp_path_factory):
    out = tmp_path_factory.mktemp("data") / "d1"
    res = run_cli(
        "gen-data", "--seed", 3, "--count", 3, "--out", out, "--holdout", 1,
        "--part-samples", 1500, "--shape-samples", 512, "--mesh-res", 16,
    )
    assert res.returncode == 0, res.stderr
    return out


class TestExitCodes:
    def test_unknown_verb_is_usage_error(self):
        res = run_cli("frobnicate")
        assert res.returncode == 2

    def test_bad_flag_usage_error(self):
        res = run_cli("gen-data", "--seed", "x", "--count", 1, "--out", "/tmp/zz")
        assert res.returncode == 2

    def test_missing_data_is_data_error(self, artifacts, tmp_path):
        res = run_cli(
            "eval", "--ckpt", artifacts["ckpt"], "--data", tmp_path, "--split", "eval",
            "--mode", "decoded", "--report", tmp_path / "r.json",
        )
        assert res.returncode == 3
        assert "error:" in res.stderr

    def test_holdout_validation(self, tmp_path):
        res = run_cli("gen-data", "--seed", 1, "--count", 2, "--holdout", 2, "--out", tmp_path / "x")
        assert res.returncode == 2


class TestGenData:
    def test_deterministic_trees(self, tmp_path):
        args = ["--seed", 11, "--count", 2, "--part-samples", 1000, "--shape-samples", 256, "--mesh-res", 12]
        a, b = tmp_path / "a", tmp_path / "b"
        assert run_cli("gen-data", *args, "--out", a).returncode == 0
        assert run_cli("gen-data", *args, "--out", b).returncode == 0
        assert tree_digest(a) == tree_digest(b)

    def test_layout_files(self, small_dataset):
        shape_dirs = [p for p in small_dataset.iterdir() if p.is_dir()]
        assert len(shape_dirs) == 3
        d = shape_dirs[0]
        for name in ("mesh.obj", "transforms.json", "primitives.json", "samples.bin", "pointcloud.bin"):
            assert (d / name).exists(), name
        assert (d / "parts" / "0.obj").exists()
        assert (d / "parts" / "0.samples.bin").exists()
        assert list(d.glob("render_*.pgm"))
        splits = json.loads((small_dataset / "splits.json").read_text())
        assert len(splits["train"]) == 2 and len(splits["eval"]) == 1

    def test_no_samples_flag(self, tmp_path):
        out = tmp_path / "light"
        assert run_cli("gen-data", "--seed", 5, "--count", 1, "--out", out, "--no-samples", "--mesh-res", 0, "--renders", "").returncode == 0
        d = next(p for p in out.iterdir() if p.is_dir())
        assert not (d / "samples.bin").exists()
        assert (d / "pointcloud.bin").exists()


class TestPipelineVerbs:
    def test_reconstruct_decode(self, artifacts, small_dataset, tmp_path):
        shape_dir = sorted(p for p in small_dataset.iterdir() if p.is_dir())[0]
        mesh_out = tmp_path / "recon.obj"
        parts_out = tmp_path / "parts.json"
        res = run_cli(
            "reconstruct", "--ckpt", artifacts["ckpt"], "--input", shape_dir / "pointcloud.bin",
            "--mode", "decode", "--mesh-out", mesh_out, "--res", 24, "--parts-out", parts_out,
        )
        assert res.returncode == 0, res.stderr
        assert mesh_out.exists()
        parts = json.loads(parts_out.read_text())
        assert len(parts) == 10

    def test_reconstruct_pra_requires_db(self, artifacts, small_dataset, tmp_path):
        shape_dir = sorted(p for p in small_dataset.iterdir() if p.is_dir())[0]
        res = run_cli(
            "reconstruct", "--ckpt", artifacts["ckpt"], "--input", shape_dir / "pointcloud.bin",
            "--mode", "pra", "--mesh-out", tmp_path / "x.obj",
        )
        assert res.returncode == 2

    def test_reconstruct_pra(self, artifacts, small_dataset, tmp_path):
        shape_dir = sorted(p for p in small_dataset.iterdir() if p.is_dir())[0]
        res = run_cli(
            "reconstruct", "--ckpt", artifacts["ckpt"], "--input", shape_dir / "pointcloud.bin",
            "--mode", "pra", "--db", artifacts["db"], "--mesh-out", tmp_path / "p.obj",
        )
        assert res.returncode == 0, res.stderr

    def test_reconstruct_from_image(self, artifacts, small_dataset, tmp_path):
        shape_dir = sorted(p for p in small_dataset.iterdir() if p.is_dir())[0]
        pgm = next(shape_dir.glob("render_*.pgm"))
        res = run_cli(
            "reconstruct", "--ckpt", artifacts["ckpt"], "--input", pgm,
            "--mode", "decode", "--mesh-out", tmp_path / "img.obj", "--res", 16,
        )
        assert res.returncode == 0, res.stderr

    def test_eval_writes_report_csv_figure(self, artifacts, small_dataset, tmp_path):
        report = tmp_path / "report.json"
        res = run_cli(
            "eval", "--ckpt", artifacts["ckpt"], "--data", small_dataset, "--split", "eval",
            "--mode", "decoded", "--report", report, "--res", 16,
        )
        assert res.returncode == 0, res.stderr
        assert report.exists()
        assert (tmp_path / "report.csv").exists()
        assert (tmp_path / "report.png").exists()
        payload = json.loads(report.read_text())
        assert set(payload["aggregate"]) == {"iou", "chamfer", "fscore"}

    def test_eval_byte_identical(self, artifacts, small_dataset, tmp_path):
        outs = []
        for name in ("r1.json", "r2.json"):
            path = tmp_path / name
            res = run_cli(
                "eval", "--ckpt", artifacts["ckpt"], "--data", small_dataset, "--split", "eval",
                "--mode", "decoded", "--report", path, "--res", 16, "--seed", 7,
            )
            assert res.returncode == 0, res.stderr
            outs.append(path.read_bytes())
        assert outs[0] == outs[1]

    def test_build_db(self, artifacts, small_dataset, tmp_path):
        out = tmp_path / "db2.bin"
        res = run_cli("build-db", "--data", small_dataset, "--encoder", artifacts["ckpt"], "--out", out)
        assert res.returncode == 0, res.stderr
        from anise.retrieval import PartDatabase

        db = PartDatabase.load(out)
        assert len(db) > 0

    def test_train_smoke(self, small_dataset, tmp_path):
        ck1 = tmp_path / "pre.bin"
        res = run_cli(
            "pretrain-parts", "--data", small_dataset, "--out", ck1, "--steps", 5,
            "--encoder-points", 64, "--query-points", 64,
        )
        assert res.returncode == 0, res.stderr
        ck2 = tmp_path / "main.bin"
        res = run_cli(
            "train", "--stage", "main", "--data", small_dataset, "--init", ck1, "--out", ck2,
            "--steps", 5, "--encoder-points", 64, "--query-points", 64,
        )
        assert res.returncode == 0, res.stderr
        res = run_cli(
            "train", "--stage", "naive-baseline", "--data", small_dataset, "--out", tmp_path / "nb.bin",
            "--steps", 3, "--encoder-points", 64, "--query-points", 64,
        )
        assert res.returncode == 0, res.stderr

    def test_stage_prerequisite_enforced(self, small_dataset, artifacts, tmp_path):
        res = run_cli(
            "train", "--stage", "finetune", "--data", small_dataset, "--out", tmp_path / "x.bin",
            "--steps", 2,
        )
        assert res.returncode == 3

    def test_ingest_verb(self, tmp_path):
        from anise.io import write_obj
        from anise.synth import generate_shape

        raw = tmp_path / "raw"
        shape = generate_shape(53, 0, with_samples=False, mesh_res=0, render_views=())
        d = raw / shape.shape_id / "parts"
        d.mkdir(parents=True)
        for k, part in enumerate(shape.parts):
            write_obj(d / f"{k}.obj", part.mesh.vertices, part.mesh.faces)
        out = tmp_path / "ingested"
        res = run_cli(
            "ingest", "--root", raw, "--out", out, "--voxel-res", 48,
            "--part-samples", 500, "--shape-samples", 256,
        )
        assert res.returncode == 0, res.stderr
        assert (out / shape.shape_id / "samples.bin").exists()
