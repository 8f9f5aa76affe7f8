"""Shared fixtures: a small synthetic dataset and a briefly trained pipeline
(model + part database) reused by retrieval/service/CLI tests. Quality-bar
training lives in the acceptance suite, not here."""

from dataclasses import dataclass

import pytest
import torch

torch.set_num_threads(1)

from anise.dataset import ShapeRecord
from anise.models import ModelConfig, ReconstructionModel
from anise.retrieval import PartDatabase, build_database
from anise.synth import generate_synthetic_dataset
from anise.training import TrainConfig, run_stage

MINI_MODEL = ModelConfig(decoder_hidden=64, encoder_hidden=32, head_hidden=64, seed=0)


@dataclass
class Pipeline:
    model: ReconstructionModel
    db: PartDatabase
    train_shapes: list[ShapeRecord]
    eval_shapes: list[ShapeRecord]


@pytest.fixture(scope="session")
def mini_shapes() -> list[ShapeRecord]:
    return generate_synthetic_dataset(
        21, 6, part_samples=4000, shape_samples=2048, mesh_res=0, render_views=((30, 20),)
    )


@pytest.fixture(scope="session")
def mini_pipeline(mini_shapes) -> Pipeline:
    train, held = mini_shapes[:4], mini_shapes[4:]
    base = dict(batch_size=8, encoder_points=128, query_points=128, seed=0, model=MINI_MODEL, log_every=100)
    model, _ = run_stage(TrainConfig(stage="pretrain", steps=400, lr=1e-3, **base), train)
    model, _ = run_stage(TrainConfig(stage="main", steps=250, lr=1e-3, **base), train, model)
    ft = dict(base, batch_size=2)
    model, _ = run_stage(TrainConfig(stage="finetune", steps=150, lr=3e-4, **ft), train, model)
    parts = [p for s in train for p in s.parts]
    db = build_database(parts, model.part_code, encoder_hash=model.config.hash())
    return Pipeline(model=model, db=db, train_shapes=train, eval_shapes=held)
