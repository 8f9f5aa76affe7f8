"""Pilot continuation: evaluate the main-stage checkpoint, fine-tune, and
re-evaluate (decoded + PR&A)."""
import json
import sys
import time

import torch

torch.set_num_threads(1)

from anise.evaluation import run_eval
from anise.models import load_checkpoint
from anise.retrieval import build_database
from anise.synth import generate_synthetic_dataset
from anise.training import TrainConfig, run_stage


def main(ckpt, out_dir):
    t0 = time.time()

    def log(msg):
        print(f"[{time.time()-t0:7.0f}s] {msg}", flush=True)

    shapes = generate_synthetic_dataset(1, 80, part_samples=20000, shape_samples=16384, mesh_res=0, render_views=((30, 20),))
    train, held = shapes[:64], shapes[64:]
    model, meta = load_checkpoint(ckpt)
    log(f"loaded {ckpt} (stage {meta['stage']})")

    report = run_eval(model, held, split="eval", mode="decoded")
    log(f"decoded eval BEFORE finetune: {report.aggregate}")

    base = dict(batch_size=2, encoder_points=224, query_points=512, seed=0, model=model.config, log_every=250, out_dir=out_dir)
    model, lg = run_stage(TrainConfig(stage="finetune", steps=1500, lr=1e-4, **base), train, model)
    log(f"finetune done, final loss {lg.records[-1]['loss']:.5f}")

    report = run_eval(model, held, split="eval", mode="decoded")
    log(f"decoded eval AFTER finetune: {report.aggregate}")
    for row in report.per_shape:
        log(f"  {row['shape_id']}: iou={row['iou']:.3f} f={row['fscore']:.3f} cd={row['chamfer']:.5f} empty={row['empty_slots']}")

    db = build_database([p for s in train for p in s.parts], model.part_code, model.config.hash())
    pra = run_eval(model, held, split="eval", mode="pra", db=db)
    log(f"PR&A eval: {pra.aggregate}")
    json.dump({"decoded": report.aggregate, "pra": pra.aggregate}, open(f"{out_dir}/pilot_summary.json", "w"))


if __name__ == "__main__":
    main(sys.argv[1], sys.argv[2])
