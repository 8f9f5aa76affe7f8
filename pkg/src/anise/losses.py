"""Training losses: the L1/clamped-L1 field-fitting loss, the bidirectional
transform set-matching loss, and the matched part-code loss.

Sums in the definitions are mean-reduced per batch; argmin ties break toward
the lowest index everywhere.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import torch

from .fields import ImplicitField

LOSS_VARIANTS = ("l1", "clamped_l1")


class LossError(ValueError):
    pass


def _as_tensor(x, dtype=None) -> torch.Tensor:
    if isinstance(x, torch.Tensor):
        return x
    return torch.as_tensor(np.asarray(x), dtype=dtype or torch.float64)


def loss_part(pred, target, variant: str = "l1", clamp_delta: float = 0.1) -> torch.Tensor:
    """Mean absolute error between predicted field values and target signed
    distances; the clamped variant compares values clamped to [-delta, delta]."""
    pred = _as_tensor(pred)
    target = _as_tensor(target, dtype=pred.dtype)
    if pred.shape != target.shape:
        raise LossError(f"pred/target shape mismatch: {tuple(pred.shape)} vs {tuple(target.shape)}")
    if variant == "l1":
        return (pred - target).abs().mean()
    if variant == "clamped_l1":
        if not clamp_delta > 0:
            raise LossError(f"clamp delta must be positive, got {clamp_delta}")
        d = float(clamp_delta)
        return (pred.clamp(-d, d) - target.clamp(-d, d)).abs().mean()
    raise LossError(f"unknown loss variant {variant!r} (available: {LOSS_VARIANTS})")


@dataclass(frozen=True)
class MatchResult:
    """Bidirectional argmin assignment between ground-truth and predicted
    transforms: recall_pairs[n] is the predicted slot matched to GT part n,
    precision_pairs[m] the GT part matched to predicted slot m."""

    recall_pairs: np.ndarray
    precision_pairs: np.ndarray
    loss: float


def transform_distance_matrix(gt: torch.Tensor, pred: torch.Tensor) -> torch.Tensor:
    if gt.ndim != 2 or gt.shape[-1] != 4 or pred.ndim != 2 or pred.shape[-1] != 4:
        raise LossError("transforms must be flattened to (count, 4) [center, scale] vectors")
    diff = gt[:, None, :] - pred[None, :, :]
    return torch.linalg.vector_norm(diff, dim=-1)  # (N_p, M)


def loss_transform_matching(gt, pred) -> tuple[torch.Tensor, MatchResult]:
    """Bidirectional Chamfer over (center, scale) 4-vectors: mean over GT
    parts of the closest prediction plus mean over predictions of the closest
    GT part."""
    gt = _as_tensor(gt)
    pred = _as_tensor(pred, dtype=gt.dtype)
    if gt.shape[0] < 1:
        raise LossError("need at least one ground-truth transform")
    if pred.shape[0] < 1:
        raise LossError("need at least one predicted transform")
    dist = transform_distance_matrix(gt, pred)
    recall_idx = torch.argmin(dist, dim=1)  # first minimal index on ties
    precision_idx = torch.argmin(dist, dim=0)
    recall = dist.gather(1, recall_idx[:, None]).mean()
    precision = dist.gather(0, precision_idx[None, :]).mean()
    loss = recall + precision
    result = MatchResult(
        recall_pairs=recall_idx.detach().cpu().numpy(),
        precision_pairs=precision_idx.detach().cpu().numpy(),
        loss=float(loss.detach()),
    )
    return loss, result


def loss_part_codes(gt_thetas, gt_codes, pred_thetas, pred_codes) -> torch.Tensor:
    """For each predicted slot, find the GT part with the closest transform
    and penalize the Euclidean distance between their part codes."""
    gt_thetas = _as_tensor(gt_thetas)
    pred_thetas = _as_tensor(pred_thetas, dtype=gt_thetas.dtype)
    gt_codes = _as_tensor(gt_codes, dtype=gt_thetas.dtype)
    pred_codes = _as_tensor(pred_codes, dtype=gt_thetas.dtype)
    if gt_codes.shape[-1] != pred_codes.shape[-1]:
        raise LossError(f"code dimension mismatch: {gt_codes.shape[-1]} vs {pred_codes.shape[-1]}")
    if len(gt_thetas) != len(gt_codes):
        raise LossError("gt transforms/codes count mismatch")
    dist = transform_distance_matrix(gt_thetas.detach(), pred_thetas.detach())
    matched = torch.argmin(dist, dim=0)  # n' for each predicted slot m
    target = gt_codes[matched]
    return torch.linalg.vector_norm(target - pred_codes, dim=-1).mean()


def match_codes_index(gt_thetas, pred_thetas) -> np.ndarray:
    """The n' selection used by the part-code loss, exposed for verification."""
    dist = transform_distance_matrix(_as_tensor(gt_thetas), _as_tensor(pred_thetas))
    return torch.argmin(dist, dim=0).cpu().numpy()


def loss_shape(field: ImplicitField, samples, variant: str = "l1", clamp_delta: float = 0.1) -> float:
    """Field-level form of the shape loss: evaluate the assembled field at the
    sample points and compare against stored distances."""
    values = field(samples.points)
    return float(loss_part(torch.as_tensor(values), torch.as_tensor(samples.distances), variant, clamp_delta))
