"""Mixed view augmentation: different classical transforms per view.

Each sample in an epoch gets an independent per-view assignment of ops drawn
uniformly from {identity, hflip, rotate, crop, scale} with uniform params in
the declared ranges, keyed by (seed, epoch, sample index). Cross-placing ops
across the views of one sample is the point: the frontal view may be flipped
while the left view is cropped.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import InvalidInputError
from .rng import stream
from .views import MultiviewSample, ViewImage

OP_KINDS = ("identity", "hflip", "rotate", "crop", "scale")

ROTATE_RANGE = (-15.0, 15.0)
CROP_FRACTION_RANGE = (0.8, 1.0)
SCALE_RANGE = (0.9, 1.1)


@dataclass(frozen=True)
class AugOp:
    kind: str
    angle: float = 0.0            # rotate, degrees
    crop_fraction: float = 1.0    # crop window side as a fraction of H/W
    crop_ox: float = 0.0          # crop offsets, fraction of the slack [0, 1]
    crop_oy: float = 0.0
    scale_factor: float = 1.0

    def __post_init__(self):
        if self.kind not in OP_KINDS:
            raise InvalidInputError(f"op kind {self.kind!r} not in {OP_KINDS}")
        if self.kind == "rotate" and not (ROTATE_RANGE[0] <= self.angle <= ROTATE_RANGE[1]):
            raise InvalidInputError(f"rotate angle {self.angle} outside {ROTATE_RANGE}")
        if self.kind == "crop":
            if not (CROP_FRACTION_RANGE[0] <= self.crop_fraction <= CROP_FRACTION_RANGE[1]):
                raise InvalidInputError(f"crop fraction {self.crop_fraction} outside {CROP_FRACTION_RANGE}")
            if not (0.0 <= self.crop_ox <= 1.0 and 0.0 <= self.crop_oy <= 1.0):
                raise InvalidInputError("crop offsets must lie in [0, 1]")
        if self.kind == "scale" and not (SCALE_RANGE[0] <= self.scale_factor <= SCALE_RANGE[1]):
            raise InvalidInputError(f"scale factor {self.scale_factor} outside {SCALE_RANGE}")


@dataclass(frozen=True)
class MixedAugPlan:
    frontal: AugOp
    left: AugOp
    right: AugOp
    seed: int
    epoch: int = 0
    sample_index: int = 0

    def op_for(self, view_name: str) -> AugOp:
        return getattr(self, view_name)


def _bilinear_sample(pixels: np.ndarray, rows: np.ndarray, cols: np.ndarray) -> np.ndarray:
    """Sample continuous (row, col) pixel-center coordinates; out of support -> 0.

    Out-of-support lookups land in a zero padding ring: any index clamps into
    [-1, H] (or [-1, W]), and the ring rows/cols are zero, which is exactly
    the zero-fill convention without per-corner masks.
    """
    H, W = pixels.shape
    padded = np.zeros((H + 2, W + 2))
    padded[1:-1, 1:-1] = pixels
    u = rows - 0.5
    v = cols - 0.5
    u0 = np.floor(u).astype(np.int64)
    v0 = np.floor(v).astype(np.int64)
    du = u - u0
    dv = v - v0
    r0 = np.clip(u0, -1, H) + 1
    r1 = np.clip(u0 + 1, -1, H) + 1
    c0 = np.clip(v0, -1, W) + 1
    c1 = np.clip(v0 + 1, -1, W) + 1

    top = padded[r0, c0] * (1 - dv) + padded[r0, c1] * dv
    bot = padded[r1, c0] * (1 - dv) + padded[r1, c1] * dv
    return top * (1 - du) + bot * du


_GRID_CACHE: dict[tuple[int, int], tuple[np.ndarray, np.ndarray]] = {}


def _output_grid(H: int, W: int):
    if (H, W) not in _GRID_CACHE:
        r = np.arange(H) + 0.5
        c = np.arange(W) + 0.5
        _GRID_CACHE[(H, W)] = tuple(np.meshgrid(r, c, indexing="ij"))
    return _GRID_CACHE[(H, W)]


def apply(img: ViewImage, op: AugOp) -> ViewImage:
    """Transformed copy; dimensions preserved, pixels stay in [0, 1]."""
    px = img.pixels
    H, W = px.shape
    if op.kind == "identity":
        out = px.copy()
    elif op.kind == "hflip":
        out = px[:, ::-1].copy()
    elif op.kind == "rotate":
        theta = np.deg2rad(op.angle)
        cy, cx = H / 2.0, W / 2.0
        rr, cc = _output_grid(H, W)
        dr, dc = rr - cy, cc - cx
        # inverse map: rotate output coords by -theta to find the source
        src_r = cy + np.cos(theta) * dr + np.sin(theta) * dc
        src_c = cx - np.sin(theta) * dr + np.cos(theta) * dc
        out = _bilinear_sample(px, src_r, src_c)
    elif op.kind == "crop":
        f = op.crop_fraction
        top = op.crop_oy * (1.0 - f) * H
        left = op.crop_ox * (1.0 - f) * W
        rr, cc = _output_grid(H, W)
        src_r = top + rr * f
        src_c = left + cc * f
        out = _bilinear_sample(px, src_r, src_c)
    elif op.kind == "scale":
        s = op.scale_factor
        cy, cx = H / 2.0, W / 2.0
        rr, cc = _output_grid(H, W)
        src_r = cy + (rr - cy) / s
        src_c = cx + (cc - cx) / s
        out = _bilinear_sample(px, src_r, src_c)
    else:  # pragma: no cover - guarded by AugOp validation
        raise InvalidInputError(f"unknown op kind {op.kind!r}")
    return ViewImage(view=img.view, pixels=out, kind=img.kind)


def _bilinear_sample_batch(stack: np.ndarray, rows: np.ndarray, cols: np.ndarray) -> np.ndarray:
    """Batched variant of _bilinear_sample: (B, H, W) stack, (B|1, H, W) coords."""
    B, H, W = stack.shape
    padded = np.zeros((B, H + 2, W + 2))
    padded[:, 1:-1, 1:-1] = stack
    flat = padded.reshape(B, -1)
    u = rows - 0.5
    v = cols - 0.5
    u0 = np.floor(u).astype(np.int64)
    v0 = np.floor(v).astype(np.int64)
    du = u - u0
    dv = v - v0
    r0 = np.clip(u0, -1, H) + 1
    r1 = np.clip(u0 + 1, -1, H) + 1
    c0 = np.clip(v0, -1, W) + 1
    c1 = np.clip(v0 + 1, -1, W) + 1

    stride = W + 2

    def fetch(r, c):
        idx = (r * stride + c).reshape(r.shape[0], -1)
        if idx.shape[0] != B:
            idx = np.broadcast_to(idx, (B, idx.shape[1]))
        return np.take_along_axis(flat, idx, axis=1).reshape(B, H, W)

    top = fetch(r0, c0) * (1 - dv) + fetch(r0, c1) * dv
    bot = fetch(r1, c0) * (1 - dv) + fetch(r1, c1) * dv
    return top * (1 - du) + bot * du


def apply_batch(stack: np.ndarray, ops: list[AugOp]) -> np.ndarray:
    """Apply one op per image of a (B, H, W) stack; matches `apply` per image."""
    B, H, W = stack.shape
    out = np.empty_like(stack)
    by_kind: dict[str, list[int]] = {}
    for i, op in enumerate(ops):
        by_kind.setdefault(op.kind, []).append(i)

    for kind, idxs in by_kind.items():
        sel = np.array(idxs)
        if kind == "identity":
            out[sel] = stack[sel]
            continue
        if kind == "hflip":
            out[sel] = stack[sel][:, :, ::-1]
            continue
        rr, cc = _output_grid(H, W)
        rr = rr[None]
        cc = cc[None]
        cy, cx = H / 2.0, W / 2.0
        if kind == "rotate":
            theta = np.deg2rad([ops[i].angle for i in idxs])[:, None, None]
            dr, dc = rr - cy, cc - cx
            src_r = cy + np.cos(theta) * dr + np.sin(theta) * dc
            src_c = cx - np.sin(theta) * dr + np.cos(theta) * dc
        elif kind == "crop":
            f = np.array([ops[i].crop_fraction for i in idxs])[:, None, None]
            top = np.array([ops[i].crop_oy for i in idxs])[:, None, None] * (1.0 - f) * H
            left = np.array([ops[i].crop_ox for i in idxs])[:, None, None] * (1.0 - f) * W
            src_r = top + rr * f
            src_c = left + cc * f
        else:  # scale
            s = np.array([ops[i].scale_factor for i in idxs])[:, None, None]
            src_r = cy + (rr - cy) / s
            src_c = cx + (cc - cx) / s
        out[sel] = _bilinear_sample_batch(stack[sel], src_r, src_c)
    return out


def _draw_op(g: np.random.Generator) -> AugOp:
    kind = OP_KINDS[int(g.integers(len(OP_KINDS)))]
    if kind == "rotate":
        return AugOp(kind, angle=float(g.uniform(*ROTATE_RANGE)))
    if kind == "crop":
        return AugOp(kind, crop_fraction=float(g.uniform(*CROP_FRACTION_RANGE)),
                     crop_ox=float(g.uniform(0, 1)), crop_oy=float(g.uniform(0, 1)))
    if kind == "scale":
        return AugOp(kind, scale_factor=float(g.uniform(*SCALE_RANGE)))
    return AugOp(kind)


def plan_epoch(n_samples: int, seed: int, epoch: int) -> list[MixedAugPlan]:
    """Per-sample independent op assignments for one epoch."""
    if n_samples < 1:
        raise InvalidInputError("n_samples must be >= 1")
    plans = []
    for i in range(n_samples):
        g = stream(seed, epoch, i, 0x316)
        ops = {name: _draw_op(g) for name in ("frontal", "left", "right")}
        plans.append(MixedAugPlan(seed=seed, epoch=epoch, sample_index=i, **ops))
    return plans


def apply_plan(sample: MultiviewSample, plan: MixedAugPlan) -> MultiviewSample:
    return MultiviewSample(
        frontal=apply(sample.frontal, plan.frontal),
        left=apply(sample.left, plan.left),
        right=apply(sample.right, plan.right),
    )
