"""End-to-end pilot at the acceptance scale: 64 train / 16 held-out shapes.

Records the numbers behind the acceptance thresholds (see docs/pilot.md).
"""
import json
import sys
import time

import torch

torch.set_num_threads(1)

from anise.evaluation import run_eval
from anise.models import ModelConfig
from anise.retrieval import build_database
from anise.synth import generate_synthetic_dataset
from anise.training import TrainConfig, run_stage


def main(out_dir):
    t0 = time.time()

    def log(msg):
        print(f"[{time.time()-t0:7.0f}s] {msg}", flush=True)

    shapes = generate_synthetic_dataset(1, 80, part_samples=20000, shape_samples=16384, mesh_res=0, render_views=((30, 20),))
    train, held = shapes[:64], shapes[64:]
    log(f"generated {len(train)} train / {len(held)} eval shapes; parts={sum(len(s.parts) for s in train)}")

    mc = ModelConfig(softplus_beta=25.0, seed=0)
    base = dict(batch_size=8, encoder_points=224, query_points=224, seed=0, model=mc, log_every=500, out_dir=out_dir)

    model, lg = run_stage(TrainConfig(stage="pretrain", steps=10000, lr=5e-4, **base), train)
    log(f"pretrain done, final loss {lg.records[-1]['loss']:.5f}")

    model, lg = run_stage(TrainConfig(stage="main", steps=4000, lr=5e-4, **base), train, model)
    log(f"main done, final loss {lg.records[-1]['loss']:.5f} comps={lg.records[-1]['components']}")

    report = run_eval(model, held, split="eval", mode="decoded")
    log(f"decoded eval BEFORE finetune: {report.aggregate}")

    ft = dict(base, batch_size=2, query_points=512)
    model, lg = run_stage(TrainConfig(stage="finetune", steps=1500, lr=1e-4, **ft), train, model)
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
    main(sys.argv[1])
