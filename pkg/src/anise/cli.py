"""Command-line entry points for the full pipeline.

Exit codes: 0 success, 2 usage error, 3 data error. Report-producing verbs
(eval, ablate, retrieval-curve) write figures next to their delimited output.
"""

from __future__ import annotations

import json
import logging
import os
import sys
from pathlib import Path

import click
import numpy as np

logger = logging.getLogger("anise")

DATA_ERRORS: tuple[type[Exception], ...] = ()


def _data_errors():
    global DATA_ERRORS
    if not DATA_ERRORS:
        from .dataset import DataError
        from .evaluation import EvalError
        from .fields import FieldError
        from .io import ContainerError
        from .losses import LossError
        from .models import ModelError
        from .retrieval import RetrievalError
        from .training import TrainingError

        DATA_ERRORS = (DataError, EvalError, FieldError, ContainerError, LossError, ModelError, RetrievalError, TrainingError, OSError)
    return DATA_ERRORS


@click.group()
@click.option("-v", "--verbose", is_flag=True, help="debug logging")
def cli(verbose: bool):
    logging.basicConfig(level=logging.DEBUG if verbose else logging.INFO, format="%(levelname)s %(name)s: %(message)s")


def main():
    try:
        cli(standalone_mode=False)
    except click.ClickException as exc:
        exc.show()
        sys.exit(exc.exit_code)
    except click.Abort:
        sys.exit(2)
    except _data_errors() as exc:
        click.echo(f"error: {exc}", err=True)
        sys.exit(3)
    sys.exit(0)


def _parse_views(spec: str) -> tuple:
    views = []
    for chunk in spec.split(";"):
        if chunk.strip():
            az, el = chunk.split(",")
            views.append((float(az), float(el)))
    return tuple(views)


@cli.command("gen-data")
@click.option("--seed", type=int, required=True)
@click.option("--count", type=int, required=True)
@click.option("--out", type=click.Path(), required=True)
@click.option("--category", default="boxfurniture", show_default=True)
@click.option("--holdout", type=int, default=0, show_default=True, help="shapes reserved for the eval split")
@click.option("--part-samples", type=int, default=20000, show_default=True)
@click.option("--shape-samples", type=int, default=16384, show_default=True)
@click.option("--mesh-res", type=int, default=64, show_default=True)
@click.option("--renders", default="30,20", show_default=True, help="semicolon-separated az,el views ('' = none)")
@click.option("--no-samples", is_flag=True, help="skip SDF sample generation (geometry-only dataset)")
def gen_data(seed, count, out, category, holdout, part_samples, shape_samples, mesh_res, renders, no_samples):
    """Generate a deterministic synthetic dataset."""
    from .dataset import write_dataset
    from .synth import generate_synthetic_dataset

    if holdout >= count:
        raise click.UsageError("--holdout must be smaller than --count")
    shapes = generate_synthetic_dataset(
        seed,
        count,
        category=category,
        part_samples=part_samples,
        shape_samples=shape_samples,
        mesh_res=mesh_res,
        render_views=_parse_views(renders),
        with_samples=not no_samples,
    )
    ids = [s.shape_id for s in shapes]
    splits = {"train": ids[: count - holdout], "eval": ids[count - holdout :]}
    manifest = {
        "category": category,
        "count": count,
        "seed": seed,
        "part_samples": 0 if no_samples else part_samples,
        "shape_samples": 0 if no_samples else shape_samples,
        "mesh_res": mesh_res,
        "renders": renders,
    }
    write_dataset(shapes, out, splits=splits, manifest=manifest)
    click.echo(f"wrote {count} shapes ({len(splits['train'])} train / {len(splits['eval'])} eval) to {out}")


@cli.command("ingest")
@click.option("--root", type=click.Path(exists=True, file_okay=False), required=True)
@click.option("--out", type=click.Path(), required=True)
@click.option("--voxel-res", type=int, default=128, show_default=True)
@click.option("--part-samples", type=int, default=20000, show_default=True)
@click.option("--shape-samples", type=int, default=16384, show_default=True)
def ingest_cmd(root, out, voxel_res, part_samples, shape_samples):
    """Ingest a raw mesh layout (mesh.obj + parts/<k>.obj per shape)."""
    from .dataset import write_dataset
    from .ingest import ingest_partnet_layout

    records = ingest_partnet_layout(root, voxel_resolution=voxel_res, part_samples=part_samples, shape_samples=shape_samples)
    write_dataset(records, out, splits={"train": [r.shape_id for r in records], "eval": []}, manifest={"source": str(root), "voxel_res": voxel_res})
    click.echo(f"ingested {len(records)} shapes to {out}")


def _train_options(fn):
    for opt in reversed(
        [
            click.option("--steps", type=int, default=None, help="stage-specific default if omitted"),
            click.option("--batch", "batch_size", type=int, default=8, show_default=True),
            click.option("--lr", type=float, default=None, help="stage-specific default if omitted"),
            click.option("--seed", type=int, default=0, show_default=True),
            click.option("--encoder-points", type=int, default=256, show_default=True),
            click.option("--query-points", type=int, default=256, show_default=True),
            click.option("--loss", "loss_variant", type=click.Choice(["l1", "clamped_l1"]), default="l1", show_default=True),
            click.option("--clamp-delta", type=float, default=0.1, show_default=True),
        ]
    ):
        fn = opt(fn)
    return fn


STAGE_DEFAULTS = {
    "pretrain": {"steps": 10000, "lr": 5e-4},
    "main": {"steps": 4000, "lr": 5e-4},
    "finetune": {"steps": 1500, "lr": 1e-4, "batch_size": 2},
    "naive_baseline": {"steps": 2500, "lr": 5e-4, "batch_size": 2},
}


def _make_config(stage, steps, lr, batch_size, **kw):
    from .models import ModelConfig
    from .training import TrainConfig

    d = STAGE_DEFAULTS[stage]
    return TrainConfig(
        stage=stage,
        steps=steps if steps is not None else d["steps"],
        lr=lr if lr is not None else d["lr"],
        batch_size=d.get("batch_size", batch_size) if batch_size == 8 else batch_size,
        model=ModelConfig(seed=kw.pop("seed_model", kw.get("seed", 0))),
        **kw,
    )


@cli.command("pretrain-parts")
@click.option("--data", type=click.Path(exists=True, file_okay=False), required=True)
@click.option("--out", type=click.Path(), required=True)
@click.option("--split", default="train", show_default=True)
@_train_options
def pretrain_parts(data, out, split, steps, batch_size, lr, seed, encoder_points, query_points, loss_variant, clamp_delta):
    """Pre-train the part autoencoder (encoder + implicit decoder)."""
    from .dataset import load_dataset
    from .training import run_stage

    shapes = load_dataset(data, split=split)
    cfg = _make_config(
        "pretrain", steps, lr, batch_size, seed=seed, encoder_points=encoder_points, query_points=query_points,
        loss_variant=loss_variant, clamp_delta=clamp_delta, out_dir=str(Path(out).parent),
    )
    model, log = run_stage(cfg, shapes)
    from .models import save_checkpoint

    save_checkpoint(out, model, "pretrain", {"train_config": cfg.to_json()})
    click.echo(f"pretrain done: final loss {log.records[-1]['loss']:.5f} -> {out}")


@cli.command("train")
@click.option("--stage", type=click.Choice(["main", "finetune", "naive-baseline"]), required=True)
@click.option("--data", type=click.Path(exists=True, file_okay=False), required=True)
@click.option("--init", "init_ckpt", type=click.Path(exists=True, dir_okay=False), default=None, help="checkpoint to continue from")
@click.option("--out", type=click.Path(), required=True)
@click.option("--split", default="train", show_default=True)
@click.option("--no-image-encoder", is_flag=True, help="main stage: skip the image input path")
@_train_options
def train_cmd(stage, data, init_ckpt, out, split, no_image_encoder, steps, batch_size, lr, seed, encoder_points, query_points, loss_variant, clamp_delta):
    """Run the main / finetune / naive-baseline training stage."""
    from .dataset import load_dataset
    from .models import load_checkpoint, save_checkpoint
    from .training import run_stage

    stage_key = stage.replace("-", "_")
    shapes = load_dataset(data, split=split)
    model = None
    if init_ckpt:
        model, _ = load_checkpoint(init_ckpt)
    cfg = _make_config(
        stage_key, steps, lr, batch_size, seed=seed, encoder_points=encoder_points, query_points=query_points,
        loss_variant=loss_variant, clamp_delta=clamp_delta, train_image_encoder=not no_image_encoder,
        out_dir=str(Path(out).parent),
    )
    if model is not None:
        cfg.model = model.config
    model, log = run_stage(cfg, shapes, model)
    save_checkpoint(out, model, stage_key, {"train_config": cfg.to_json()})
    click.echo(f"{stage} done: final loss {log.records[-1]['loss']:.5f} -> {out}")


@cli.command("build-db")
@click.option("--data", type=click.Path(exists=True, file_okay=False), required=True, multiple=True)
@click.option("--encoder", "encoder_ckpt", type=click.Path(exists=True, dir_okay=False), required=True)
@click.option("--out", type=click.Path(), required=True)
@click.option("--split", default="train", show_default=True)
def build_db_cmd(data, encoder_ckpt, out, split):
    """Build the part database from dataset parts and a pre-trained encoder."""
    from .dataset import load_dataset
    from .models import load_checkpoint
    from .retrieval import build_database

    model, _ = load_checkpoint(encoder_ckpt)
    parts = []
    for root in data:
        for shape in load_dataset(root, split=split):
            parts.extend(shape.parts)
    db = build_database(parts, model.part_code, encoder_hash=model.config.hash())
    db.save(out)
    click.echo(f"built database with {len(db)} parts from {len(data)} dataset(s) -> {out}")


def _load_observation(model, input_path: str):
    from .io import read_container, read_pgm

    path = Path(input_path)
    if path.suffix == ".pgm":
        img = read_pgm(path).astype(np.float64) / 255.0
        return model.shape_code_from_image(img)
    tensors, _ = read_container(path)
    return model.shape_code_from_pointcloud(tensors["points"].astype(np.float64))


@cli.command("reconstruct")
@click.option("--ckpt", type=click.Path(exists=True, dir_okay=False), required=True)
@click.option("--input", "input_path", type=click.Path(exists=True, dir_okay=False), required=True, help="pointcloud.bin or image.pgm")
@click.option("--mode", type=click.Choice(["decode", "pra"]), default="decode", show_default=True)
@click.option("--db", "db_path", type=click.Path(exists=True, dir_okay=False), default=None, help="part database (pra mode)")
@click.option("--refs", type=click.Path(exists=True, dir_okay=False), default=None, help="reference set JSON (pra mode)")
@click.option("--mesh-out", type=click.Path(), required=True)
@click.option("--res", type=int, default=64, show_default=True)
@click.option("--parts-out", type=click.Path(), default=None, help="write part summaries JSON")
def reconstruct_cmd(ckpt, input_path, mode, db_path, refs, mesh_out, res, parts_out):
    """Reconstruct one observation to an OBJ mesh."""
    from .evaluation import reconstruct_decoded, reconstruct_pra
    from .io import write_obj
    from .models import load_checkpoint
    from .retrieval import PartDatabase, ReferenceSet

    model, _ = load_checkpoint(ckpt)
    code = _load_observation(model, input_path)
    if mode == "pra":
        if not db_path:
            raise click.UsageError("--mode pra requires --db")
        db = PartDatabase.load(db_path)
        restrict = ReferenceSet.from_json(db, json.loads(Path(refs).read_text())) if refs else None
        recon = reconstruct_pra(model, code, db, restrict)
    else:
        recon = reconstruct_decoded(model, code, mesh_resolution=res)
    write_obj(mesh_out, recon.mesh.vertices, recon.mesh.faces)
    if parts_out:
        payload = [
            {
                "index": m,
                "center": [float(c) for c in t.center],
                "scale": float(t.scale),
                "empty": bool(e),
                "provenance": next(({"part_id": p.part_id, "source_shape_id": p.source_shape_id} for p in recon.provenance if p.slot == m), {"source": "decoded"}),
            }
            for m, ((t, _), e) in enumerate(zip(recon.slots, recon.empty))
        ]
        Path(parts_out).write_text(json.dumps(payload, indent=1, sort_keys=True) + "\n")
    click.echo(f"wrote {mesh_out} ({len(recon.mesh.vertices)} vertices, {int(sum(recon.empty))} empty slots)")


@cli.command("eval")
@click.option("--ckpt", type=click.Path(exists=True, dir_okay=False), required=True)
@click.option("--data", type=click.Path(exists=True, file_okay=False), required=True)
@click.option("--split", default="eval", show_default=True)
@click.option("--mode", type=click.Choice(["decoded", "pra"]), default="decoded", show_default=True)
@click.option("--db", "db_path", type=click.Path(exists=True, dir_okay=False), default=None)
@click.option("--report", type=click.Path(), required=True)
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--res", type=int, default=64, show_default=True)
def eval_cmd(ckpt, data, split, mode, db_path, report, seed, res):
    """Evaluate a checkpoint on a dataset split; writes JSON + CSV + figure."""
    from .dataset import load_dataset
    from .evaluation import run_eval
    from .experiments import figure_eval_report, write_csv
    from .models import load_checkpoint
    from .retrieval import PartDatabase

    model, _ = load_checkpoint(ckpt)
    db = PartDatabase.load(db_path) if db_path else None
    shapes = load_dataset(data, split=split)
    rep = run_eval(model, shapes, split=split, mode=mode, db=db, iou_resolution=res, mesh_resolution=res, seed=seed)
    rep.save(report)
    stem = Path(report).with_suffix("")
    write_csv(f"{stem}.csv", rep.per_shape, ["shape_id", "iou", "chamfer", "fscore", "empty_slots"])
    figure_eval_report(rep, f"{stem}.png")
    click.echo(json.dumps(rep.aggregate, sort_keys=True))


@cli.command("ablate")
@click.option("--data", type=click.Path(exists=True, file_okay=False), required=True)
@click.option("--out", type=click.Path(), required=True, help="output directory")
@click.option("--seeds", default="0,1,2", show_default=True)
@click.option("--pretrain-steps", type=int, default=3000, show_default=True)
@click.option("--main-steps", type=int, default=1500, show_default=True)
@click.option("--finetune-steps", type=int, default=600, show_default=True)
def ablate_cmd(data, out, seeds, pretrain_steps, main_steps, finetune_steps):
    """Run the conditioning / fine-tuning ablation grid."""
    from .dataset import load_dataset
    from .experiments import AblationConfig, ablation_summary, experiment_ablation, figure_ablation, write_csv

    train_shapes = load_dataset(data, split="train")
    eval_shapes = load_dataset(data, split="eval")
    cfg = AblationConfig(
        seeds=tuple(int(s) for s in seeds.split(",")),
        pretrain_steps=pretrain_steps,
        main_steps=main_steps,
        finetune_steps=finetune_steps,
    )
    rows = experiment_ablation(train_shapes, eval_shapes, cfg)
    outdir = Path(out)
    outdir.mkdir(parents=True, exist_ok=True)
    write_csv(outdir / "ablation.csv", rows, ["variant", "seed", "iou", "chamfer", "fscore"])
    summary = ablation_summary(rows)
    (outdir / "ablation.json").write_text(json.dumps(summary, indent=1, sort_keys=True) + "\n")
    figure_ablation(rows, outdir / "ablation.png")
    click.echo(json.dumps(summary, sort_keys=True))


@cli.command("retrieval-curve")
@click.option("--ckpt", type=click.Path(exists=True, dir_okay=False), required=True)
@click.option("--db", "db_path", type=click.Path(exists=True, dir_okay=False), required=True)
@click.option("--data", type=click.Path(exists=True, file_okay=False), required=True)
@click.option("--split", default="eval", show_default=True)
@click.option("--out", type=click.Path(), required=True, help="output directory")
@click.option("--k", "k_values", default="5,10,25,50,100", show_default=True)
@click.option("--trials", type=int, default=5, show_default=True)
@click.option("--seed", type=int, default=0, show_default=True)
def retrieval_curve_cmd(ckpt, db_path, data, split, out, k_values, trials, seed):
    """Retrieval quality vs reference-set size; writes CSV + figure."""
    from .dataset import load_dataset
    from .experiments import curve_summary, experiment_retrieval_vs_size, figure_retrieval_curve, write_csv
    from .models import load_checkpoint
    from .retrieval import PartDatabase

    model, _ = load_checkpoint(ckpt)
    db = PartDatabase.load(db_path)
    shapes = load_dataset(data, split=split)
    ks = tuple(int(x) for x in k_values.split(","))
    rows = experiment_retrieval_vs_size(model, db, shapes, k_values=ks, trials=trials, seed=seed)
    outdir = Path(out)
    outdir.mkdir(parents=True, exist_ok=True)
    write_csv(outdir / "curve.csv", rows, ["K", "trial", "iou", "chamfer", "fscore"])
    (outdir / "curve_summary.json").write_text(json.dumps(curve_summary(rows), indent=1, sort_keys=True) + "\n")
    figure_retrieval_curve(rows, outdir / "curve.png")
    click.echo(json.dumps(curve_summary(rows), sort_keys=True))


@cli.command("serve")
@click.option("--ckpt", type=click.Path(exists=True, dir_okay=False), required=True)
@click.option("--db", "db_path", type=click.Path(exists=True, dir_okay=False), default=None)
@click.option("--port", type=int, default=None, help="default: ANISE_PORT or 8080")
@click.option("--host", default="127.0.0.1", show_default=True)
@click.option("--session-dump", type=click.Path(), default=None, help="persist sessions to JSON on shutdown")
@click.option("--ui-dir", type=click.Path(file_okay=False), default=None, help="static frontend to serve at /ui")
def serve_cmd(ckpt, db_path, port, host, session_dump, ui_dir):
    """Start the part-editing HTTP service."""
    import uvicorn

    from .models import load_checkpoint
    from .retrieval import PartDatabase
    from .service import create_app

    model, _ = load_checkpoint(ckpt)
    db = PartDatabase.load(db_path) if db_path else None
    app = create_app(model, db, session_dump=session_dump, ui_dir=ui_dir)
    port = port if port is not None else int(os.environ.get("ANISE_PORT", "8080"))
    uvicorn.run(app, host=host, port=port, log_level="info")


if __name__ == "__main__":
    main()
