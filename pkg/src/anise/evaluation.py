"""Held-out evaluation: reconstruct every shape in a split (decoded min-union
or part retrieval & assembly) and score IoU / Chamfer / F-score against the
ground truth.

Reports are deterministic per seed and serialize to JSON (schema under
``docs/schemas/eval_report.schema.json``) plus CSV/figure companions via the
CLI.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field as dc_field
from pathlib import Path

import numpy as np

from .dataset import SHAPE_BOUND, ShapeRecord
from .fields import Grid3, ImplicitField, PartTransform, TriMesh, eval_on_grid, marching_cubes, mesh_field
from .metrics import DEFAULT_FSCORE_TAU, metric_chamfer, metric_fscore, metric_iou
from .models import ReconstructionModel, slots_empty
from .retrieval import PartDatabase, ReferenceSet, assemble_retrieved, retrieved_field

EVAL_MODES = ("decoded", "pra")


class EvalError(ValueError):
    pass


@dataclass
class EvalReport:
    mode: str
    split: str
    per_shape: list[dict]
    aggregate: dict
    config: dict

    def to_json(self) -> dict:
        return {
            "mode": self.mode,
            "split": self.split,
            "per_shape": self.per_shape,
            "aggregate": self.aggregate,
            "config": self.config,
        }

    def dumps(self) -> str:
        return json.dumps(self.to_json(), indent=1, sort_keys=True) + "\n"

    def save(self, path: str | Path) -> None:
        Path(path).parent.mkdir(parents=True, exist_ok=True)
        Path(path).write_text(self.dumps())


def gt_field(shape: ShapeRecord, voxel_resolution: int = 128) -> ImplicitField:
    """Exact union field for analytic shapes, voxel occupancy field otherwise."""
    if shape.has_analytic_parts():
        return shape.assembled_field()
    if shape.mesh is None or shape.mesh.is_empty:
        raise EvalError(f"shape {shape.shape_id} has neither analytic parts nor a mesh")
    from .ingest import voxel_occupancy

    return voxel_occupancy(shape.mesh, voxel_resolution).field()


def gt_mesh(shape: ShapeRecord, resolution: int = 64) -> TriMesh:
    if shape.has_analytic_parts():
        return mesh_field(shape.assembled_field(), resolution=resolution, bounds=SHAPE_BOUND)
    if shape.mesh is None or shape.mesh.is_empty:
        raise EvalError(f"shape {shape.shape_id} has no reference mesh")
    return shape.mesh


@dataclass
class Reconstruction:
    """One reconstructed shape: slot list with empty flags, the field used
    for IoU, the extracted mesh (plus its evaluation grid, reused for IoU),
    and retrieval provenance (PR&A mode)."""

    slots: list[tuple[PartTransform, np.ndarray]]
    empty: list[bool]
    field: ImplicitField
    mesh: TriMesh
    grid: Grid3 | None = None
    provenance: list = dc_field(default_factory=list)

    @property
    def live_slots(self) -> list[tuple[int, PartTransform, np.ndarray]]:
        return [(m, t, c) for m, ((t, c), e) in enumerate(zip(self.slots, self.empty)) if not e]


def predict_slots(model: ReconstructionModel, shape_code: np.ndarray, empty_res: int = 32):
    slots, _ = model.assemble(shape_code)
    empty = slots_empty(model, slots, resolution=empty_res, bound=SHAPE_BOUND)
    return slots, empty


def dedupe_slots(slots: list[tuple[PartTransform, np.ndarray]], eps: float = 0.1) -> list[tuple[PartTransform, np.ndarray]]:
    """Drop slots whose transform nearly coincides with an earlier one.

    Surplus slots converge onto the same parts during training; their
    min-union contribution is redundant, so skipping them only saves decoder
    evaluations. Distinct parts in this data family sit far apart in
    (center, scale) space compared to eps."""
    kept: list[tuple[PartTransform, np.ndarray]] = []
    for t, c in slots:
        vec = t.to_vector()
        if all(np.linalg.norm(vec - kt.to_vector()) >= eps for kt, _ in kept):
            kept.append((t, c))
    return kept


def reconstruct_decoded(
    model: ReconstructionModel,
    shape_code: np.ndarray,
    mesh_resolution: int = 64,
    empty_res: int = 32,
    with_mesh: bool = True,
    dedupe_eps: float = 0.1,
) -> Reconstruction:
    slots, empty = predict_slots(model, shape_code, empty_res)
    live = [(t, c) for (t, c), e in zip(slots, empty) if not e]
    if dedupe_eps > 0:
        live = dedupe_slots(live, dedupe_eps)
    field = model.slots_field(live if live else slots, support_prune=True)
    grid = None
    mesh = TriMesh(np.zeros((0, 3)), np.zeros((0, 3), dtype=np.int32))
    if with_mesh:
        grid = eval_on_grid(field, mesh_resolution, (-SHAPE_BOUND,) * 3, (SHAPE_BOUND,) * 3)
        mesh = marching_cubes(grid)
    return Reconstruction(slots=slots, empty=empty, field=field, mesh=mesh, grid=grid)


def reconstruct_pra(
    model: ReconstructionModel,
    shape_code: np.ndarray,
    db: PartDatabase,
    restrict: ReferenceSet | None = None,
    empty_res: int = 32,
    precomputed=None,
) -> Reconstruction:
    """Retrieval mode: nearest database parts placed by predicted transforms.
    ``precomputed`` optionally reuses (slots, empty) from a prior call."""
    slots, empty = precomputed if precomputed is not None else predict_slots(model, shape_code, empty_res)
    live = [(m, t, c) for m, ((t, c), e) in enumerate(zip(slots, empty)) if not e]
    mesh, provenance = assemble_retrieved(live, db, restrict)
    field = retrieved_field(db, provenance)
    return Reconstruction(slots=slots, empty=empty, field=field, mesh=mesh, provenance=provenance)


def score_reconstruction(
    recon: Reconstruction,
    shape: ShapeRecord,
    iou_resolution: int = 64,
    n_samples: int = 10000,
    tau: float = DEFAULT_FSCORE_TAU,
    seed: int = 0,
    reference: tuple | None = None,
) -> dict:
    ref_field, ref_mesh = reference if reference is not None else (gt_field(shape), gt_mesh(shape))
    if recon.grid is not None and recon.grid.resolution == (iou_resolution,) * 3:
        occ_a = recon.grid.values < 0
        occ_b = eval_on_grid(ref_field, iou_resolution, (-SHAPE_BOUND,) * 3, (SHAPE_BOUND,) * 3).values < 0
        union = np.logical_or(occ_a, occ_b).sum()
        iou = 1.0 if union == 0 else float(np.logical_and(occ_a, occ_b).sum() / union)
    else:
        iou = metric_iou(recon.field, ref_field, resolution=iou_resolution, bound=SHAPE_BOUND)
    if recon.mesh.is_empty:
        chamfer, fscore = float("inf"), 0.0
    else:
        chamfer = metric_chamfer(recon.mesh, ref_mesh, n_samples=n_samples, seed=seed)
        fscore = metric_fscore(recon.mesh, ref_mesh, tau=tau, n_samples=n_samples, seed=seed)
    return {
        "shape_id": shape.shape_id,
        "iou": iou,
        "chamfer": chamfer,
        "fscore": fscore,
        "empty_slots": int(sum(recon.empty)),
    }


def run_eval(
    model: ReconstructionModel,
    shapes: list[ShapeRecord],
    split: str,
    mode: str = "decoded",
    db: PartDatabase | None = None,
    restrict: ReferenceSet | None = None,
    iou_resolution: int = 64,
    mesh_resolution: int = 64,
    seed: int = 0,
    modality: str = "pointcloud",
) -> EvalReport:
    """Evaluate a checkpoint over a dataset split; aggregate = mean of rows."""
    if mode not in EVAL_MODES:
        raise EvalError(f"unknown eval mode {mode!r} (available: {EVAL_MODES})")
    if mode == "pra" and db is None:
        raise EvalError("pra mode needs a part database")
    if not shapes:
        raise EvalError("empty evaluation split")
    rows = []
    for shape in shapes:
        if modality == "pointcloud":
            if shape.pointcloud is None:
                raise EvalError(f"shape {shape.shape_id} has no point cloud")
            code = model.shape_code_from_pointcloud(shape.pointcloud)
        else:
            if not shape.renders:
                raise EvalError(f"shape {shape.shape_id} has no renders")
            img = next(iter(shape.renders.values())).astype(np.float64) / 255.0
            code = model.shape_code_from_image(img)
        if mode == "decoded":
            recon = reconstruct_decoded(model, code, mesh_resolution=mesh_resolution)
        else:
            recon = reconstruct_pra(model, code, db, restrict)
        rows.append(score_reconstruction(recon, shape, iou_resolution=iou_resolution, seed=seed))
    aggregate = {
        key: float(np.mean([r[key] for r in rows])) for key in ("iou", "chamfer", "fscore")
    }
    config = {
        "mode": mode,
        "split": split,
        "iou_resolution": iou_resolution,
        "mesh_resolution": mesh_resolution,
        "seed": seed,
        "modality": modality,
        "model_config_hash": model.config.hash(),
        "n_shapes": len(shapes),
    }
    return EvalReport(mode=mode, split=split, per_shape=rows, aggregate=aggregate, config=config)
