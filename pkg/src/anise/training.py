"""Training stages.

``pretrain``       part autoencoder (encoder + implicit decoder) on
                   normalized-part SDF samples, with Gaussian noise on the
                   bottleneck codes.
``main``           transform head + geometry head (and input encoders) from
                   transform matching plus matched part-code supervision,
                   total = L1 + lambda * L2; the part decoder stays frozen.
``finetune``       end-to-end through the min-union on whole-shape SDF
                   samples.
``naive_baseline`` the same whole-shape objective from scratch, kept as a
                   regression artifact: without part supervision a single
                   slot swallows the shape and the rest go empty.

Stages are deterministic per (seed, config, dataset): batch selection and
noise come from per-step numpy generators and torch runs single-threaded.
"""

from __future__ import annotations

import json
import time
from dataclasses import dataclass, field as dc_field, asdict
from pathlib import Path

import numpy as np
import torch

from .dataset import PartRecord, ShapeRecord
from .losses import LossError, loss_part, loss_part_codes, loss_transform_matching
from .models import ModelConfig, ReconstructionModel, save_checkpoint

STAGES = ("pretrain", "main", "finetune", "naive_baseline")
_STAGE_REQUIRES = {"pretrain": (None, "init"), "main": ("pretrain",), "finetune": ("main",), "naive_baseline": (None, "init")}


class TrainingError(RuntimeError):
    pass


@dataclass
class TrainConfig:
    stage: str
    steps: int = 1000
    batch_size: int = 8
    lr: float = 1e-4
    lr_decay: str = "cosine"  # "none" | "cosine" (to 5% of lr over the run)
    lam: float = 0.02
    loss_variant: str = "l1"
    clamp_delta: float = 0.1
    seed: int = 0
    noise_sigma: float = 0.02
    encoder_points: int = 512
    query_points: int = 512
    train_image_encoder: bool = True
    finetune_decoder: bool = True
    log_every: int = 50
    checkpoint_every: int = 0
    out_dir: str | None = None
    model: ModelConfig = dc_field(default_factory=ModelConfig)

    def __post_init__(self):
        if self.stage not in STAGES:
            raise TrainingError(f"unknown stage {self.stage!r} (available: {STAGES})")
        if self.lr_decay not in ("none", "cosine"):
            raise TrainingError(f"unknown lr decay {self.lr_decay!r}")
        if self.lam < 0:
            raise TrainingError("lambda must be >= 0")
        if self.model.max_parts < 1:
            raise TrainingError("need at least one part slot")
        if self.loss_variant == "clamped_l1" and not self.clamp_delta > 0:
            raise TrainingError("clamped L1 needs a positive delta")

    def to_json(self) -> dict:
        d = asdict(self)
        return d


class MetricLog:
    """Per-step loss records, optionally appended to a JSON-lines file."""

    def __init__(self, out_dir: str | None, stage: str):
        self.records: list[dict] = []
        self._fh = None
        if out_dir:
            path = Path(out_dir)
            path.mkdir(parents=True, exist_ok=True)
            self._fh = open(path / f"{stage}_log.jsonl", "a")

    def append(self, step: int, stage: str, loss: float, components: dict, wall_ms: float) -> None:
        rec = {"step": step, "stage": stage, "loss": loss, "components": components, "wall_ms": wall_ms}
        self.records.append(rec)
        if self._fh:
            self._fh.write(json.dumps(rec, sort_keys=True) + "\n")
            self._fh.flush()

    def close(self):
        if self._fh:
            self._fh.close()


def _step_rng(seed: int, stage: str, step: int) -> np.random.Generator:
    import zlib

    return np.random.default_rng(np.random.SeedSequence([zlib.crc32(stage.encode()), seed, step]))


def _apply_lr(opt: torch.optim.Optimizer, config: TrainConfig, step: int) -> None:
    if config.lr_decay == "cosine":
        import math

        frac = step / max(config.steps - 1, 1)
        lr = config.lr * (0.05 + 0.95 * 0.5 * (1.0 + math.cos(math.pi * frac)))
        for group in opt.param_groups:
            group["lr"] = lr


def _tensor(model: ReconstructionModel, arr: np.ndarray) -> torch.Tensor:
    return torch.as_tensor(arr, dtype=model.config.torch_dtype())


def _subsample(rng: np.random.Generator, count: int, k: int) -> np.ndarray:
    if count >= k:
        return rng.choice(count, size=k, replace=False)
    return rng.integers(count, size=k)


def _require_stage(model_stage: str | None, stage: str) -> None:
    allowed = _STAGE_REQUIRES[stage]
    if model_stage not in allowed:
        raise TrainingError(
            f"stage {stage!r} requires a checkpoint from {[a for a in allowed if a]}, got {model_stage!r}"
        )


def theta_tensor(model: ReconstructionModel, parts: dict[str, torch.Tensor]) -> torch.Tensor:
    """Flatten predicted (center, scale) into (B, M, 4) transform vectors."""
    return torch.cat([parts["center"], parts["scale"].unsqueeze(-1)], dim=-1)


def gt_theta_array(shape: ShapeRecord) -> np.ndarray:
    return np.stack([p.gt_transform.to_vector() for p in shape.parts])


def cache_part_codes(model: ReconstructionModel, shapes: list[ShapeRecord]) -> None:
    """Fill each part's code with the frozen encoder's canonical embedding."""
    for shape in shapes:
        for part in shape.parts:
            part.code = model.part_code(part.surface_points())


# ---------------------------------------------------------------------------
# stages


def _collect_parts(dataset) -> list[PartRecord]:
    if dataset and isinstance(dataset[0], ShapeRecord):
        parts = [p for s in dataset for p in s.parts]
    else:
        parts = list(dataset)
    missing = [p.part_id for p in parts if p.sample_set is None]
    if missing:
        raise TrainingError(f"parts without SDF samples: {missing[:4]}{'...' if len(missing) > 4 else ''}")
    return parts


def run_pretrain(config: TrainConfig, dataset, model: ReconstructionModel) -> tuple[ReconstructionModel, MetricLog]:
    parts = _collect_parts(dataset)
    log = MetricLog(config.out_dir, "pretrain")
    opt = torch.optim.Adam(
        list(model.part_encoder.parameters()) + list(model.part_decoder.parameters()), lr=config.lr
    )
    surf = [p.surface_points() for p in parts]
    for step in range(config.steps):
        t0 = time.perf_counter()
        _apply_lr(opt, config, step)
        rng = _step_rng(config.seed, "pretrain", step)
        batch = _subsample(rng, len(parts), min(config.batch_size, len(parts)))
        enc_pts, qpts, qd = [], [], []
        for i in batch:
            part = parts[i]
            enc_pts.append(surf[i][_subsample(rng, len(surf[i]), config.encoder_points)])
            sel = _subsample(rng, len(part.sample_set), config.query_points)
            qpts.append(part.sample_set.points[sel])
            qd.append(part.sample_set.distances[sel])
        enc = _tensor(model, np.stack(enc_pts))
        x = _tensor(model, np.stack(qpts))
        target = _tensor(model, np.stack(qd))
        r = model.encode_part(enc)
        noise = _tensor(model, rng.normal(scale=config.noise_sigma, size=r.shape)) if config.noise_sigma > 0 else 0.0
        pred = model.part_decoder(x, r + noise)
        loss = loss_part(pred, target, config.loss_variant, config.clamp_delta)
        opt.zero_grad()
        loss.backward()
        opt.step()
        _log_step(config, log, model, step, "pretrain", loss, {"l_part": float(loss.detach())}, t0)
    return model, log


def _main_targets(model: ReconstructionModel, shapes: list[ShapeRecord]):
    cache_part_codes(model, shapes)
    thetas = [_tensor(model, gt_theta_array(s)) for s in shapes]
    codes = [_tensor(model, np.stack([p.code for p in s.parts])) for s in shapes]
    return thetas, codes


def run_main(config: TrainConfig, dataset, model: ReconstructionModel) -> tuple[ReconstructionModel, MetricLog]:
    shapes = [s for s in dataset if s.pointcloud is not None]
    if not shapes:
        raise TrainingError("main stage needs shapes with point clouds")
    log = MetricLog(config.out_dir, "main")
    with torch.no_grad():
        thetas, codes = _main_targets(model, shapes)
    renders = [next(iter(s.renders.values())) if s.renders else None for s in shapes]
    use_image = config.train_image_encoder and all(r is not None for r in renders)
    params = (
        list(model.pointcloud_encoder.parameters())
        + list(model.transform_head.parameters())
        + list(model.transform_decoder.parameters())
        + list(model.geometry_head.parameters())
        + (list(model.image_encoder.parameters()) if use_image else [])
    )
    opt = torch.optim.Adam(params, lr=config.lr)
    pcs = np.stack([s.pointcloud for s in shapes])
    imgs = np.stack([r.astype(np.float64) / 255.0 for r in renders]) if use_image else None

    for step in range(config.steps):
        t0 = time.perf_counter()
        _apply_lr(opt, config, step)
        rng = _step_rng(config.seed, "main", step)
        batch = _subsample(rng, len(shapes), min(config.batch_size, len(shapes)))
        s_codes = [model.encode_pointcloud(_tensor(model, pcs[batch]))]
        if use_image:
            s_codes.append(model.encode_image(_tensor(model, imgs[batch])))
        l1_total = torch.zeros((), dtype=model.config.torch_dtype())
        l2_total = torch.zeros((), dtype=model.config.torch_dtype())
        for s in s_codes:
            parts = model.predict_parts(s)
            theta_pred = theta_tensor(model, parts)
            for j, i in enumerate(batch):
                l1, _ = loss_transform_matching(thetas[i], theta_pred[j])
                l2 = loss_part_codes(thetas[i], codes[i], theta_pred[j], parts["r"][j])
                l1_total = l1_total + l1 / (len(batch) * len(s_codes))
                l2_total = l2_total + l2 / (len(batch) * len(s_codes))
        loss = l1_total + config.lam * l2_total
        opt.zero_grad()
        loss.backward()
        opt.step()
        comps = {"l1": float(l1_total.detach()), "l2": float(l2_total.detach()), "lambda": config.lam}
        _log_step(config, log, model, step, "main", loss, comps, t0)
    return model, log


def _run_shape_sdf_stage(config: TrainConfig, dataset, model: ReconstructionModel, stage: str) -> tuple[ReconstructionModel, MetricLog]:
    shapes = [s for s in dataset if s.pointcloud is not None and s.full_sample_set is not None]
    if not shapes:
        raise TrainingError(f"{stage} stage needs shapes with point clouds and SDF samples")
    log = MetricLog(config.out_dir, stage)
    params = (
        list(model.pointcloud_encoder.parameters())
        + list(model.transform_head.parameters())
        + list(model.transform_decoder.parameters())
        + list(model.geometry_head.parameters())
    )
    if config.finetune_decoder or stage == "naive_baseline":
        params += list(model.part_decoder.parameters())
    opt = torch.optim.Adam(params, lr=config.lr)
    pcs = np.stack([s.pointcloud for s in shapes])

    for step in range(config.steps):
        t0 = time.perf_counter()
        _apply_lr(opt, config, step)
        rng = _step_rng(config.seed, stage, step)
        batch = _subsample(rng, len(shapes), min(config.batch_size, len(shapes)))
        qpts, qd = [], []
        for i in batch:
            ss = shapes[i].full_sample_set
            sel = _subsample(rng, len(ss), config.query_points)
            qpts.append(ss.points[sel])
            qd.append(ss.distances[sel])
        s = model.encode_pointcloud(_tensor(model, pcs[batch]))
        parts = model.predict_parts(s)
        values = model.compose_values(_tensor(model, np.stack(qpts)), parts["center"], parts["scale"], parts["r"])
        loss = loss_part(values, _tensor(model, np.stack(qd)), config.loss_variant, config.clamp_delta)
        opt.zero_grad()
        loss.backward()
        opt.step()
        _log_step(config, log, model, step, stage, loss, {"l_shape": float(loss.detach())}, t0)
    return model, log


def _log_step(config, log, model, step, stage, loss, components, t0):
    wall_ms = (time.perf_counter() - t0) * 1000.0
    if step % config.log_every == 0 or step == config.steps - 1:
        log.append(step, stage, float(loss.detach()), components, wall_ms)
    if config.checkpoint_every and config.out_dir and step and step % config.checkpoint_every == 0:
        save_checkpoint(Path(config.out_dir) / f"{stage}_step{step}.bin", model, stage, {"step": step})


def run_stage(config: TrainConfig, dataset, model: ReconstructionModel | None = None) -> tuple[ReconstructionModel, MetricLog]:
    """Run one training stage, enforcing stage prerequisites.

    ``dataset`` is a list of shape records (part records also accepted for
    pretraining). Returns the trained model (its ``stage`` attribute updated)
    and the metric log.
    """
    prev_stage = getattr(model, "stage", None) if model is not None else None
    _require_stage(prev_stage, config.stage)
    if model is None:
        model = ReconstructionModel(config.model)
    model.train()
    if config.stage == "pretrain":
        model, log = run_pretrain(config, dataset, model)
    elif config.stage == "main":
        model, log = run_main(config, dataset, model)
    elif config.stage == "finetune":
        model, log = _run_shape_sdf_stage(config, dataset, model, "finetune")
    else:
        model, log = _run_shape_sdf_stage(config, dataset, model, "naive_baseline")
    model.eval()
    model.stage = config.stage
    log.close()
    if config.out_dir:
        save_checkpoint(Path(config.out_dir) / f"{config.stage}.bin", model, config.stage, {"train_config": config.to_json()})
    return model, log
