"""Scripted experiments: the conditioning/fine-tuning ablation grid and the
retrieval-quality-vs-reference-set-size study. Each experiment emits rows for
CSV plus a rendered figure alongside (see ``figures``).
"""

from __future__ import annotations

import csv
import io
import logging
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from .dataset import ShapeRecord
from .evaluation import gt_field, gt_mesh, reconstruct_pra, predict_slots, score_reconstruction, run_eval
from .models import ModelConfig, ReconstructionModel
from .retrieval import PartDatabase, ReferenceSet
from .training import TrainConfig, run_stage

logger = logging.getLogger(__name__)

ABLATION_VARIANTS = ("unconditioned", "conditioned", "finetuned")
DEFAULT_K_VALUES = (5, 10, 25, 50, 100)
DEFAULT_TRIALS = 5


# ---------------------------------------------------------------------------
# ablation


@dataclass
class AblationConfig:
    seeds: tuple[int, ...] = (0, 1, 2)
    pretrain_steps: int = 3000
    main_steps: int = 1500
    finetune_steps: int = 600
    batch_size: int = 8
    finetune_batch: int = 2
    encoder_points: int = 256
    query_points: int = 256
    lr: float = 5e-4
    finetune_lr: float = 1e-4
    model: ModelConfig = None  # type: ignore[assignment]

    def __post_init__(self):
        if self.model is None:
            self.model = ModelConfig()


def _train_variant(shapes, seed: int, cfg: AblationConfig, unconditioned: bool):
    model_cfg = replace(cfg.model, seed=seed, unconditioned=unconditioned)
    base = dict(batch_size=cfg.batch_size, encoder_points=cfg.encoder_points, query_points=cfg.query_points, seed=seed, model=model_cfg)
    model, _ = run_stage(TrainConfig(stage="pretrain", steps=cfg.pretrain_steps, lr=cfg.lr, **base), shapes)
    model, _ = run_stage(TrainConfig(stage="main", steps=cfg.main_steps, lr=cfg.lr, train_image_encoder=False, **base), shapes, model)
    return model


def experiment_ablation(train_shapes: list[ShapeRecord], eval_shapes: list[ShapeRecord], cfg: AblationConfig | None = None) -> list[dict]:
    """Train {unconditioned, conditioned, conditioned+finetuned} with shared
    seeds and evaluate each on the held-out split. Returns one row per
    (variant, seed) with iou/chamfer/fscore."""
    cfg = cfg or AblationConfig()
    rows = []
    for seed in cfg.seeds:
        for variant in ("unconditioned", "conditioned"):
            model = _train_variant(train_shapes, seed, cfg, unconditioned=(variant == "unconditioned"))
            report = run_eval(model, eval_shapes, split="eval", mode="decoded", seed=seed)
            rows.append({"variant": variant, "seed": seed, **report.aggregate})
            logger.info("ablation %s seed=%d: %s", variant, seed, report.aggregate)
            if variant == "conditioned":
                ft_cfg = TrainConfig(
                    stage="finetune",
                    steps=cfg.finetune_steps,
                    lr=cfg.finetune_lr,
                    batch_size=cfg.finetune_batch,
                    encoder_points=cfg.encoder_points,
                    query_points=cfg.query_points,
                    seed=seed,
                    model=model.config,
                )
                model, _ = run_stage(ft_cfg, train_shapes, model)
                report = run_eval(model, eval_shapes, split="eval", mode="decoded", seed=seed)
                rows.append({"variant": "finetuned", "seed": seed, **report.aggregate})
                logger.info("ablation finetuned seed=%d: %s", seed, report.aggregate)
    return rows


def ablation_summary(rows: list[dict]) -> dict[str, dict]:
    """Mean metrics per variant across seeds."""
    out = {}
    for variant in ABLATION_VARIANTS:
        vrows = [r for r in rows if r["variant"] == variant]
        if vrows:
            out[variant] = {k: float(np.mean([r[k] for r in vrows])) for k in ("iou", "chamfer", "fscore")}
    return out


# ---------------------------------------------------------------------------
# naive whole-shape baseline check


def naive_baseline_report(model: ReconstructionModel, shapes: list[ShapeRecord], resolution: int = 24, bound: float = 0.6) -> list[dict]:
    """Measure the documented failure of naive whole-shape training: for each
    shape, the largest fraction of its bounding-box volume covered by a
    single slot's occupied region, plus the number of empty slots."""
    from .models import slots_values_on_grid

    axes = np.linspace(-bound, bound, resolution)
    cell = axes[1] - axes[0]
    rows = []
    for shape in shapes:
        code = model.shape_code_from_pointcloud(shape.pointcloud)
        slots, _ = model.assemble(code)
        values = slots_values_on_grid(model, slots, resolution, bound)
        bmin, bmax = shape.bbox()
        shape_vol = float(np.prod(bmax - bmin))
        best = 0.0
        empty = 0
        for v in values:
            neg = v < 0
            if not neg.any() or neg.all():
                empty += 1
                continue
            ii, jj, kk = np.nonzero(neg)
            lo = np.array([axes[ii.min()], axes[jj.min()], axes[kk.min()]]) - cell / 2
            hi = np.array([axes[ii.max()], axes[jj.max()], axes[kk.max()]]) + cell / 2
            inter = np.maximum(np.minimum(hi, bmax) - np.maximum(lo, bmin), 0.0)
            best = max(best, float(np.prod(inter)) / shape_vol)
        rows.append({"shape_id": shape.shape_id, "max_coverage": best, "empty_slots": empty})
    return rows


# ---------------------------------------------------------------------------
# retrieval quality vs reference set size


def experiment_retrieval_vs_size(
    model: ReconstructionModel,
    db: PartDatabase,
    eval_shapes: list[ShapeRecord],
    k_values: tuple[int, ...] = DEFAULT_K_VALUES,
    trials: int = DEFAULT_TRIALS,
    seed: int = 0,
) -> list[dict]:
    """PR&A quality as a function of the number K of reference shapes whose
    parts may be retrieved. K counts shapes; per (K, trial) a random K-subset
    of database source shapes forms the reference set. The full-database K is
    appended as a single exact control trial."""
    db_shapes = db.shape_ids()
    if max(k_values) > len(db_shapes):
        raise ValueError(f"K={max(k_values)} exceeds database shape count {len(db_shapes)}")

    # Model predictions and references are restriction-independent: compute once.
    predictions = []
    references = []
    for shape in eval_shapes:
        code = model.shape_code_from_pointcloud(shape.pointcloud)
        predictions.append(predict_slots(model, code))
        references.append((gt_field(shape), gt_mesh(shape)))

    def eval_restricted(restrict: ReferenceSet | None) -> dict:
        scores = []
        for shape, pred, ref in zip(eval_shapes, predictions, references):
            recon = reconstruct_pra(model, None, db, restrict=restrict, precomputed=pred)
            scores.append(score_reconstruction(recon, shape, seed=seed, reference=ref))
        return {k: float(np.mean([s[k] for s in scores])) for k in ("iou", "chamfer", "fscore")}

    rows = []
    for k in k_values:
        for trial in range(trials):
            rng = np.random.default_rng(np.random.SeedSequence([seed, k, trial]))
            chosen = list(rng.choice(db_shapes, size=k, replace=False))
            restrict = ReferenceSet.from_ids(db, shape_ids=chosen)
            rows.append({"K": k, "trial": trial, **eval_restricted(restrict)})
            logger.info("retrieval curve K=%d trial=%d: %s", k, trial, rows[-1])
    rows.append({"K": len(db_shapes), "trial": 0, **eval_restricted(None)})
    return rows


def curve_summary(rows: list[dict]) -> list[dict]:
    """Mean and standard deviation per K."""
    out = []
    for k in sorted({r["K"] for r in rows}):
        krows = [r for r in rows if r["K"] == k]
        entry = {"K": k, "trials": len(krows)}
        for metric in ("iou", "chamfer", "fscore"):
            vals = np.array([r[metric] for r in krows])
            entry[f"{metric}_mean"] = float(vals.mean())
            entry[f"{metric}_std"] = float(vals.std())
        out.append(entry)
    return out


# ---------------------------------------------------------------------------
# delimited output + figures


def rows_to_csv(rows: list[dict], columns: list[str]) -> str:
    buf = io.StringIO()
    writer = csv.DictWriter(buf, fieldnames=columns, lineterminator="\n")
    writer.writeheader()
    for row in rows:
        writer.writerow({c: row.get(c, "") for c in columns})
    return buf.getvalue()


def write_csv(path: str | Path, rows: list[dict], columns: list[str]) -> None:
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    Path(path).write_text(rows_to_csv(rows, columns))


def _matplotlib():
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    return plt


def figure_retrieval_curve(rows: list[dict], path: str | Path) -> None:
    plt = _matplotlib()
    summary = curve_summary(rows)
    ks = [s["K"] for s in summary]
    fig, axes = plt.subplots(1, 2, figsize=(9, 3.5))
    for ax, metric in zip(axes, ("fscore", "iou")):
        mean = [s[f"{metric}_mean"] for s in summary]
        std = [s[f"{metric}_std"] for s in summary]
        ax.errorbar(ks, mean, yerr=std, marker="o", capsize=3)
        ax.set_xscale("log")
        ax.set_xlabel("reference shapes K")
        ax.set_ylabel(metric)
        ax.grid(True, alpha=0.3)
    fig.suptitle("Retrieval & assembly quality vs reference set size")
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def figure_ablation(rows: list[dict], path: str | Path) -> None:
    plt = _matplotlib()
    summary = ablation_summary(rows)
    variants = [v for v in ABLATION_VARIANTS if v in summary]
    x = np.arange(len(variants))
    fig, ax = plt.subplots(figsize=(6, 3.5))
    width = 0.35
    ax.bar(x - width / 2, [summary[v]["iou"] for v in variants], width, label="IoU")
    ax.bar(x + width / 2, [summary[v]["fscore"] for v in variants], width, label="F-score")
    ax.set_xticks(x, variants)
    ax.set_ylim(0, 1)
    ax.legend()
    ax.set_title("Conditioning / fine-tuning ablation (means over seeds)")
    ax.grid(True, axis="y", alpha=0.3)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def figure_eval_report(report, path: str | Path) -> None:
    plt = _matplotlib()
    rows = report.per_shape
    x = np.arange(len(rows))
    fig, ax = plt.subplots(figsize=(max(6, 0.35 * len(rows)), 3.5))
    ax.bar(x - 0.2, [r["iou"] for r in rows], 0.4, label="IoU")
    ax.bar(x + 0.2, [r["fscore"] for r in rows], 0.4, label="F-score")
    ax.axhline(report.aggregate["iou"], color="C0", ls="--", lw=1, alpha=0.7)
    ax.axhline(report.aggregate["fscore"], color="C1", ls="--", lw=1, alpha=0.7)
    ax.set_xticks(x, [r["shape_id"][-9:] for r in rows], rotation=90, fontsize=6)
    ax.set_ylim(0, 1.05)
    ax.set_title(f"{report.mode} reconstruction on split {report.split!r}")
    ax.legend()
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
