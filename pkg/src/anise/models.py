"""Learnable components: part autoencoder (point encoder + implicit decoder),
input encoders for point clouds and silhouette images, the transform head
producing per-slot transform codes, the transform parameter decoder, and the
shared geometry head.

All forward paths are differentiable end to end; the min-union composition
routes gradients to the lowest-index member among ties. Checkpoints go
through the project binary container with the architecture config embedded,
and every tensor shape is validated against that config on load.
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import torch
import torch.nn as nn
import torch.nn.functional as F

from .fields import DEFAULT_CHUNK, ImplicitField, PartTransform
from .io import read_container, write_container

MIN_DECODED_SCALE = 1e-6
_SCALE_LOG_MIN = -13.0
_SCALE_LOG_MAX = 3.0
_INIT_SCALE = 0.35

_DTYPES = {"float32": torch.float32, "float64": torch.float64}


class ModelError(ValueError):
    """Invalid model input or checkpoint."""


@dataclass(frozen=True)
class ModelConfig:
    part_code_dim: int = 256
    transform_code_dim: int = 128
    shape_code_dim: int = 256
    max_parts: int = 10
    decoder_hidden: int = 256
    encoder_hidden: int = 128
    encoder_blocks: int = 4
    head_hidden: int = 512
    image_size: int = 64
    pointcloud_size: int = 2048
    softplus_beta: float = 10.0
    unconditioned: bool = False  # ablation: geometry head sees only the shape code
    seed: int = 0
    dtype: str = "float32"

    def to_json(self) -> dict:
        return dataclasses.asdict(self)

    @classmethod
    def from_json(cls, obj: dict) -> "ModelConfig":
        known = {f.name for f in dataclasses.fields(cls)}
        return cls(**{k: v for k, v in obj.items() if k in known})

    def hash(self) -> str:
        blob = json.dumps(self.to_json(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()[:12]

    def torch_dtype(self) -> torch.dtype:
        return _DTYPES[self.dtype]


class _Softplus(nn.Module):
    def __init__(self, beta: float):
        super().__init__()
        self.beta = beta

    def forward(self, x):
        return F.softplus(x, beta=self.beta)


def _mlp(dims: list[int], beta: float) -> nn.Sequential:
    layers: list[nn.Module] = []
    for i in range(len(dims) - 1):
        layers.append(nn.Linear(dims[i], dims[i + 1]))
        if i < len(dims) - 2:
            layers.append(_Softplus(beta))
    return nn.Sequential(*layers)


class ResnetBlockFC(nn.Module):
    """Fully connected residual block (in -> hidden -> hidden) with a linear
    shortcut when dimensions differ."""

    def __init__(self, dim_in: int, dim_out: int, beta: float):
        super().__init__()
        self.fc0 = nn.Linear(dim_in, dim_out)
        self.fc1 = nn.Linear(dim_out, dim_out)
        self.shortcut = nn.Linear(dim_in, dim_out, bias=False) if dim_in != dim_out else None
        self.act = _Softplus(beta)

    def forward(self, x):
        net = self.fc1(self.act(self.fc0(self.act(x))))
        skip = x if self.shortcut is None else self.shortcut(x)
        return skip + net


class PointSetEncoder(nn.Module):
    """Per-point MLP with residual blocks and max-pool aggregation; exactly
    permutation invariant over input points."""

    def __init__(self, out_dim: int, hidden: int = 128, blocks: int = 4, beta: float = 10.0):
        super().__init__()
        self.fc_in = nn.Linear(3, hidden)
        self.blocks = nn.ModuleList([ResnetBlockFC(2 * hidden, hidden, beta) for _ in range(blocks)])
        self.fc_out = nn.Linear(hidden, out_dim)
        self.act = _Softplus(beta)

    def forward(self, points: torch.Tensor) -> torch.Tensor:
        if points.ndim != 3 or points.shape[-1] != 3:
            raise ModelError(f"expected (B, K, 3) points, got {tuple(points.shape)}")
        h = self.fc_in(points)
        for block in self.blocks:
            pooled = h.max(dim=1, keepdim=True).values.expand_as(h)
            h = block(torch.cat([h, pooled], dim=-1))
        return self.fc_out(self.act(h.max(dim=1).values))


class ImageEncoder(nn.Module):
    """Five stride-2 convolutions then a linear projection."""

    def __init__(self, out_dim: int, beta: float = 10.0):
        super().__init__()
        chans = [1, 16, 32, 64, 128, 256]
        self.convs = nn.ModuleList(
            [nn.Conv2d(chans[i], chans[i + 1], kernel_size=3, stride=2, padding=1) for i in range(5)]
        )
        self.fc = nn.Linear(256 * 2 * 2, out_dim)
        self.act = _Softplus(beta)

    def forward(self, image: torch.Tensor) -> torch.Tensor:
        if image.ndim == 3:
            image = image[:, None, :, :]
        h = image
        for conv in self.convs:
            h = self.act(conv(h))
        return self.fc(h.flatten(1))


class TransformHead(nn.Module):
    """Shape code -> M transform codes."""

    def __init__(self, shape_dim: int, transform_dim: int, max_parts: int, hidden: int, beta: float):
        super().__init__()
        self.max_parts = max_parts
        self.transform_dim = transform_dim
        self.net = _mlp([shape_dim, hidden, hidden, max_parts * transform_dim], beta)

    def forward(self, s: torch.Tensor) -> torch.Tensor:
        return self.net(s).reshape(*s.shape[:-1], self.max_parts, self.transform_dim)


class TransformParamDecoder(nn.Module):
    """Transform code -> (center, scale); the scale goes through an
    exp-clamped positivity map with floor 1e-6, so decoded transforms are
    always valid."""

    def __init__(self, transform_dim: int, beta: float):
        super().__init__()
        self.net = _mlp([transform_dim, transform_dim, 4], beta)
        final: nn.Linear = self.net[-1]
        with torch.no_grad():
            final.weight.mul_(0.1)
            final.bias.zero_()
            final.bias[3] = math.log(_INIT_SCALE)

    def forward(self, t: torch.Tensor) -> tuple[torch.Tensor, torch.Tensor]:
        raw = self.net(t)
        center = raw[..., :3]
        scale = MIN_DECODED_SCALE + torch.exp(torch.clamp(raw[..., 3], _SCALE_LOG_MIN, _SCALE_LOG_MAX))
        return center, scale


class GeometryHead(nn.Module):
    """(transform code, shape code) -> part code, shared across slots. The
    unconditioned variant sees only the shape code."""

    def __init__(self, transform_dim: int, shape_dim: int, part_dim: int, hidden: int, beta: float, unconditioned: bool):
        super().__init__()
        self.unconditioned = unconditioned
        in_dim = shape_dim if unconditioned else transform_dim + shape_dim
        self.net = _mlp([in_dim, hidden, hidden, part_dim], beta)

    def forward(self, t: torch.Tensor, s: torch.Tensor) -> torch.Tensor:
        inp = s if self.unconditioned else torch.cat([t, s], dim=-1)
        return self.net(inp)


class PartDecoder(nn.Module):
    """(query point, part code) -> field value; 6 hidden layers with the
    (x, r) input re-injected at layer 3."""

    def __init__(self, part_dim: int, hidden: int, beta: float):
        super().__init__()
        in_dim = 3 + part_dim
        self.l0 = nn.Linear(in_dim, hidden)
        self.l1 = nn.Linear(hidden, hidden)
        self.l2 = nn.Linear(hidden + in_dim, hidden)
        self.l3 = nn.Linear(hidden, hidden)
        self.l4 = nn.Linear(hidden, hidden)
        self.l5 = nn.Linear(hidden, hidden)
        self.out = nn.Linear(hidden, 1)
        self.act = _Softplus(beta)
        # Start near a small positive constant field: unused slots begin
        # empty and training carves geometry in.
        with torch.no_grad():
            self.out.weight.mul_(0.1)
            self.out.bias.fill_(0.1)

    def forward(self, x: torch.Tensor, r: torch.Tensor) -> torch.Tensor:
        if x.shape[-1] != 3:
            raise ModelError(f"query points must end in dim 3, got {tuple(x.shape)}")
        rexp = r.unsqueeze(-2).expand(*x.shape[:-1], r.shape[-1])
        inp = torch.cat([x, rexp], dim=-1)
        h = self.act(self.l0(inp))
        h = self.act(self.l1(h))
        h = self.act(self.l2(torch.cat([h, inp], dim=-1)))
        h = self.act(self.l3(h))
        h = self.act(self.l4(h))
        h = self.act(self.l5(h))
        return self.out(h).squeeze(-1)


def min_union(values: torch.Tensor, dim: int = -2) -> torch.Tensor:
    """Minimum over member fields with the subgradient routed to the
    lowest-index member among ties."""
    idx = torch.argmin(values, dim=dim, keepdim=True)
    return torch.gather(values, dim, idx).squeeze(dim)


class ReconstructionModel(nn.Module):
    """The full coarse-to-fine pipeline plus the part autoencoder."""

    def __init__(self, config: ModelConfig):
        super().__init__()
        self.config = config
        self.stage = "init"  # advanced by the training stages / checkpoint load
        beta = config.softplus_beta
        with torch.random.fork_rng():
            torch.manual_seed(config.seed)
            self.part_encoder = PointSetEncoder(config.part_code_dim, config.encoder_hidden, config.encoder_blocks, beta)
            self.pointcloud_encoder = PointSetEncoder(config.shape_code_dim, config.encoder_hidden, config.encoder_blocks, beta)
            self.image_encoder = ImageEncoder(config.shape_code_dim, beta)
            self.transform_head = TransformHead(config.shape_code_dim, config.transform_code_dim, config.max_parts, config.head_hidden, beta)
            self.transform_decoder = TransformParamDecoder(config.transform_code_dim, beta)
            self.geometry_head = GeometryHead(
                config.transform_code_dim, config.shape_code_dim, config.part_code_dim, config.head_hidden, beta, config.unconditioned
            )
            self.part_decoder = PartDecoder(config.part_code_dim, config.decoder_hidden, beta)
        self.to(config.torch_dtype())

    # -- encoders ----------------------------------------------------------

    def encode_part(self, points: torch.Tensor) -> torch.Tensor:
        if points.shape[-2] < 16:
            raise ModelError(f"part encoder needs >= 16 points, got {points.shape[-2]}")
        return self.part_encoder(points)

    def encode_pointcloud(self, points: torch.Tensor) -> torch.Tensor:
        if points.shape[-2] != self.config.pointcloud_size:
            raise ModelError(f"point cloud encoder expects exactly {self.config.pointcloud_size} points, got {points.shape[-2]}")
        return self.pointcloud_encoder(points)

    def encode_image(self, image: torch.Tensor) -> torch.Tensor:
        size = self.config.image_size
        if image.shape[-2:] != (size, size):
            raise ModelError(f"image encoder expects {size}x{size} input, got {tuple(image.shape[-2:])}")
        if image.min() < -1e-6 or image.max() > 1.0 + 1e-6:
            raise ModelError("image values must lie in [0, 1]")
        return self.image_encoder(image)

    # -- coarse-to-fine prediction ------------------------------------------

    def predict_parts(self, s: torch.Tensor) -> dict[str, torch.Tensor]:
        """Shape code -> transform codes, decoded transforms, and part codes."""
        t = self.transform_head(s)  # (B, M, Dt)
        center, scale = self.transform_decoder(t)  # (B, M, 3), (B, M)
        sexp = s.unsqueeze(-2).expand(*t.shape[:-1], s.shape[-1])
        r = self.geometry_head(t, sexp)  # (B, M, Dr)
        return {"t": t, "center": center, "scale": scale, "r": r}

    def compose_values(
        self, points: torch.Tensor, center: torch.Tensor, scale: torch.Tensor, r: torch.Tensor
    ) -> torch.Tensor:
        """Assembled field values at shape-frame points (B, N, 3): per slot,
        scale * f((x - c) / scale), then min across slots."""
        local = (points.unsqueeze(1) - center.unsqueeze(2)) / scale[..., None, None]  # (B, M, N, 3)
        vals = self.part_decoder(local, r)  # (B, M, N)
        vals = scale[..., None] * vals
        return min_union(vals, dim=1)

    def forward(self, points: torch.Tensor, observation: torch.Tensor, modality: str = "pointcloud") -> torch.Tensor:
        s = self.encode_pointcloud(observation) if modality == "pointcloud" else self.encode_image(observation)
        parts = self.predict_parts(s)
        return self.compose_values(points, parts["center"], parts["scale"], parts["r"])

    # -- numpy-facing inference ---------------------------------------------

    def _np(self, arr: np.ndarray) -> torch.Tensor:
        return torch.as_tensor(np.asarray(arr), dtype=self.config.torch_dtype())

    @torch.no_grad()
    def shape_code_from_pointcloud(self, points: np.ndarray) -> np.ndarray:
        return self.encode_pointcloud(self._np(points)[None]).squeeze(0).cpu().numpy()

    @torch.no_grad()
    def shape_code_from_image(self, image: np.ndarray) -> np.ndarray:
        return self.encode_image(self._np(image)[None]).squeeze(0).cpu().numpy()

    @torch.no_grad()
    def part_code(self, points: np.ndarray) -> np.ndarray:
        return self.encode_part(self._np(points)[None]).squeeze(0).cpu().numpy()

    def decoder_field(self, code: np.ndarray) -> ImplicitField:
        """Normalized-frame field of one part code."""
        code_t = self._np(code)[None]

        def ev(pts: np.ndarray) -> np.ndarray:
            with torch.no_grad():
                vals = self.part_decoder(self._np(pts)[None], code_t)
            return vals.squeeze(0).cpu().numpy().astype(np.float64)

        return ImplicitField(ev, "learned")

    @torch.no_grad()
    def assemble(self, s: np.ndarray) -> tuple[list[tuple[PartTransform, np.ndarray]], ImplicitField]:
        """One forward pass producing all slots and the min-union field."""
        parts = self.predict_parts(self._np(s)[None])
        centers = parts["center"].squeeze(0).cpu().numpy().astype(np.float64)
        scales = parts["scale"].squeeze(0).cpu().numpy().astype(np.float64)
        codes = parts["r"].squeeze(0).cpu().numpy().astype(np.float64)
        slots = [(PartTransform(c, float(a)), code) for c, a, code in zip(centers, scales, codes)]
        field = self.slots_field(slots)
        return slots, field

    def slots_field(
        self,
        slots: list[tuple[PartTransform, np.ndarray]],
        chunk: int | None = None,
        support_prune: bool = False,
        support_half: float = 0.75,
    ) -> ImplicitField:
        """Min-union field over (transform, code) slots.

        The default path evaluates every slot everywhere (exactly the min over
        transformed decoder fields). With ``support_prune`` each slot's decoder
        runs only inside its inflated support cube; outside, a conservative
        positive lower bound of the part distance substitutes, which preserves
        signs and the iso-surface while skipping most decoder work."""
        if not slots:
            from .fields import constant_field

            return constant_field(1.0)
        if chunk is None:
            # all slots evaluate per chunk; bound the decoder activation size
            chunk = max(1024, 65536 // len(slots))
        centers_np = np.stack([t.center for t, _ in slots])
        scales_np = np.array([t.scale for t, _ in slots])
        centers = self._np(centers_np)
        scales = self._np(scales_np)
        codes = self._np(np.stack([c for _, c in slots]))
        margin = support_half - 0.5

        def ev_exact(pts: np.ndarray) -> np.ndarray:
            out = np.empty(len(pts), dtype=np.float64)
            for start in range(0, len(pts), chunk):
                stop = min(start + chunk, len(pts))
                with torch.no_grad():
                    x = self._np(pts[start:stop])[None]
                    vals = self.compose_values(x, centers[None], scales[None], codes[None])
                out[start:stop] = vals.squeeze(0).cpu().numpy()
            return out

        def ev_pruned(pts: np.ndarray) -> np.ndarray:
            out = np.full(len(pts), np.inf)
            for m in range(len(slots)):
                local = (pts - centers_np[m]) / scales_np[m]
                inside = np.abs(local).max(axis=1) <= support_half
                # outside the support: distance to the part is at least the
                # distance to the support cube plus the inflation margin
                q = np.abs(local[~inside]) - support_half
                bound = np.linalg.norm(np.maximum(q, 0.0), axis=1) + margin
                out[~inside] = np.minimum(out[~inside], scales_np[m] * bound)
                idx = np.flatnonzero(inside)
                for start in range(0, len(idx), chunk):
                    sel = idx[start : start + chunk]
                    with torch.no_grad():
                        vals = self.part_decoder(self._np(local[sel])[None], codes[m : m + 1])
                    out[sel] = np.minimum(out[sel], scales_np[m] * vals.squeeze(0).cpu().numpy())
            return out

        return ImplicitField(ev_pruned if support_prune else ev_exact, "union")

    def slot_field(self, transform: PartTransform, code: np.ndarray) -> ImplicitField:
        from .fields import transform_field

        return transform_field(self.decoder_field(code), transform)


@torch.no_grad()
def slots_values_on_grid(
    model: ReconstructionModel,
    slots: list[tuple[PartTransform, np.ndarray]],
    resolution: int = 32,
    bound: float = 0.6,
    chunk: int = 8192,
    support_prune: bool = True,
    support_half: float = 0.75,
) -> np.ndarray:
    """Per-slot transformed field values on a shared lattice, shape
    (n_slots, res, res, res). With ``support_prune`` (default) the decoder
    only runs inside each slot's inflated support cube; outside, a positive
    lower bound on the part distance substitutes (signs preserved)."""
    from .fields import grid_points

    res = (resolution,) * 3
    pts = grid_points(res, np.full(3, -bound), np.full(3, bound))
    centers_np = np.stack([t.center for t, _ in slots])
    scales_np = np.array([t.scale for t, _ in slots])
    codes = model._np(np.stack([c for _, c in slots]))
    margin = support_half - 0.5
    out = np.empty((len(slots), len(pts)), dtype=np.float64)
    for m in range(len(slots)):
        local = (pts - centers_np[m]) / scales_np[m]
        if support_prune:
            inside = np.abs(local).max(axis=1) <= support_half
            q = np.abs(local[~inside]) - support_half
            out[m, ~inside] = scales_np[m] * (np.linalg.norm(np.maximum(q, 0.0), axis=1) + margin)
            idx = np.flatnonzero(inside)
        else:
            idx = np.arange(len(pts))
        for start in range(0, len(idx), chunk):
            sel = idx[start : start + chunk]
            vals = model.part_decoder(model._np(local[sel])[None], codes[m : m + 1])
            out[m, sel] = scales_np[m] * vals.squeeze(0).cpu().numpy()
    return out.reshape(len(slots), *res)


def slots_empty(model: ReconstructionModel, slots: list, resolution: int = 32, bound: float = 0.6) -> list[bool]:
    """Empty-slot flags: a slot is empty when its transformed field has no
    zero crossing inside [-bound, bound]^3."""
    values = slots_values_on_grid(model, slots, resolution, bound)
    return [bool(v.min() > 0.0 or v.max() < 0.0) for v in values]


def slot_is_empty(model: ReconstructionModel, transform: PartTransform, code: np.ndarray, resolution: int = 32, bound: float = 0.6) -> bool:
    """True when the slot's transformed field has no zero crossing inside
    [-bound, bound]^3 (the model's way of expressing unused slots)."""
    return slots_empty(model, [(transform, code)], resolution, bound)[0]


# ---------------------------------------------------------------------------
# checkpoints


def save_checkpoint(path: str | Path, model: ReconstructionModel, stage: str, extra_meta: dict | None = None) -> None:
    tensors = {name: p.detach().cpu().numpy().astype(np.float32) for name, p in model.state_dict().items()}
    meta = {"kind": "checkpoint", "stage": stage, "config": model.config.to_json(), "config_hash": model.config.hash()}
    meta.update(extra_meta or {})
    write_container(path, tensors, meta=meta)


def load_checkpoint(path: str | Path) -> tuple[ReconstructionModel, dict]:
    tensors, meta = read_container(path)
    if meta.get("kind") != "checkpoint":
        raise ModelError(f"{path}: not a model checkpoint")
    config = ModelConfig.from_json(meta["config"])
    model = ReconstructionModel(config)
    state = model.state_dict()
    if set(state) != set(tensors):
        missing = set(state) - set(tensors)
        extra = set(tensors) - set(state)
        raise ModelError(f"{path}: checkpoint tensors do not match config (missing {sorted(missing)}, extra {sorted(extra)})")
    for name, arr in tensors.items():
        if tuple(state[name].shape) != tuple(arr.shape):
            raise ModelError(f"{path}: tensor {name} has shape {arr.shape}, config expects {tuple(state[name].shape)}")
    model.load_state_dict({k: torch.as_tensor(v, dtype=model.config.torch_dtype()) for k, v in tensors.items()})
    model.stage = meta.get("stage", "init")
    model.eval()
    return model, meta
