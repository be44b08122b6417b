"""Supervision stack for the dual-branch segmentation model: pixel BCE,
soft IoU, attention-matrix targets, the attention-guided loss on the
kernel's cross-attention maps, and their sum over all side outputs.

Every loss returns its analytic gradient so the whole stack can be checked
against finite differences.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .graftkern import CamStack, window_partition
from .raster import binarize, resize_bilinear

CLAMP_EPS = 1e-7  # keeps the logarithms finite on saturated predictions
N_SIDE_OUTPUTS = 6
N_SUPERVISED_CAMS = 3
TARGET_THRESHOLD = 0.5


def _clamp(p):
    return np.clip(p, CLAMP_EPS, 1.0 - CLAMP_EPS)


def bce(p, g):
    """Mean binary cross entropy and its gradient w.r.t. the prediction.

    The prediction is clamped to [eps, 1-eps]; clamped coordinates get a
    zero gradient (the clamp is flat there).
    """
    p = np.asarray(p, np.float64)
    g = np.asarray(g, np.float64)
    if p.shape != g.shape:
        raise ValueError(f"shape mismatch: {p.shape} vs {g.shape}")
    pc = _clamp(p)
    loss = float(-(g * np.log(pc) + (1.0 - g) * np.log(1.0 - pc)).mean())
    grad = (pc - g) / (pc * (1.0 - pc)) / p.size
    grad[(p < CLAMP_EPS) | (p > 1.0 - CLAMP_EPS)] = 0.0
    return loss, grad


def iou_loss(p, g):
    """Soft IoU loss 1 - sum(G*P) / sum(G + P - G*P) and its gradient."""
    p = np.asarray(p, np.float64)
    g = np.asarray(g, np.float64)
    if p.shape != g.shape:
        raise ValueError(f"shape mismatch: {p.shape} vs {g.shape}")
    if not g.any():
        raise ValueError("IoU loss needs a nonempty target")
    inter = float((g * p).sum())
    union = float((g + p - g * p).sum())
    loss = 1.0 - inter / union
    grad = -(g * union - inter * (1.0 - g)) / (union * union)
    return loss, grad


def attention_target(mask, window_size: int) -> np.ndarray:
    """Per-window outer product m m^T of the flattened binary mask.

    Returns (N, S*S, S*S) matching the kernel's window layout; the result
    is symmetric and idempotent under the elementwise square.
    """
    mask = np.asarray(mask, bool)
    m = window_partition(mask[None].astype(np.float64), window_size)[:, :, 0]
    return m[:, :, None] * m[:, None, :]


def agl(cams, target):
    """Attention-guided loss: per-entry-mean BCE between each window's
    cross-attention matrix and its target, averaged over windows."""
    cams = np.asarray(cams, np.float64)
    target = np.asarray(target, np.float64)
    if cams.shape != target.shape:
        raise ValueError(
            f"window layout mismatch: {cams.shape} vs {target.shape}")
    return bce(cams, target)


@dataclass
class LossBreakdown:
    side_bce: list[float]  # one per side output
    side_iou: list[float]
    agl_terms: list[float]  # one per supervised attention stack
    total: float
    side_grads: list[np.ndarray]
    cam_grads: list[np.ndarray]


def total_loss(side_outputs, cam_stacks, gt) -> LossBreakdown:
    """Sum of BCE + IoU over the six side outputs plus the attention-guided
    loss over the three supervised cross-attention stacks.

    Each side output is compared at its own resolution: the ground truth is
    resized bilinearly and re-binarized at 0.5.  Attention targets are built
    the same way at each stack's feature resolution.
    """
    side_outputs = list(side_outputs)
    cam_stacks = list(cam_stacks)
    if len(side_outputs) != N_SIDE_OUTPUTS:
        raise ValueError(
            f"expected {N_SIDE_OUTPUTS} side outputs, got {len(side_outputs)}")
    if len(cam_stacks) != N_SUPERVISED_CAMS:
        raise ValueError(
            f"expected {N_SUPERVISED_CAMS} attention stacks, "
            f"got {len(cam_stacks)}")
    gt = np.asarray(gt, np.float64)

    def gt_at(h, w):
        g = gt if gt.shape == (h, w) else resize_bilinear(gt, w, h)
        return binarize(g, TARGET_THRESHOLD).astype(np.float64)

    side_bce, side_iou, side_grads = [], [], []
    for p in side_outputs:
        p = np.asarray(p, np.float64)
        g = gt_at(*p.shape)
        lb, gb = bce(p, g)
        li, gi = iou_loss(p, g)
        side_bce.append(lb)
        side_iou.append(li)
        side_grads.append(gb + gi)

    agl_terms, cam_grads = [], []
    for stack in cam_stacks:
        if not isinstance(stack, CamStack):
            raise TypeError(f"expected a CamStack, got {type(stack).__name__}")
        s = stack.window_size
        gh, gw = stack.grid
        target = attention_target(binarize(gt_at(gh * s, gw * s), 0.5), s)
        la, ga = agl(stack.windows, target)
        agl_terms.append(la)
        cam_grads.append(ga)

    total = sum(side_bce) + sum(side_iou) + sum(agl_terms)
    return LossBreakdown(side_bce=side_bce, side_iou=side_iou,
                         agl_terms=agl_terms, total=total,
                         side_grads=side_grads, cam_grads=cam_grads)


def make_loss_instance(seed: int = 0, size: int = 32, window_size: int = 4):
    """Seeded toy inputs for gradient verification of the whole stack."""
    rng = np.random.default_rng(seed)
    gt = (rng.random((size, size)) < 0.5).astype(np.float64)
    sides = [rng.uniform(0.1, 0.9, (size >> (k // 2), size >> (k // 2)))
             for k in range(N_SIDE_OUTPUTS)]
    s = window_size
    stacks = []
    for _ in range(N_SUPERVISED_CAMS):
        grid = (2, 2)
        cams = rng.uniform(0.1, 0.9, (grid[0] * grid[1], s * s, s * s))
        stacks.append(CamStack(cams, grid, s))
    return sides, stacks, gt


def finite_diff_check(step: float = 1e-4, seed: int = 0,
                      coords_per_array: int = 12):
    """Worst relative error of the total-loss gradients against central
    finite differences, probing a random subset of coordinates."""
    sides, stacks, gt = make_loss_instance(seed)
    br = total_loss(sides, stacks, gt)
    rng = np.random.default_rng(seed + 1)
    worst = 0.0

    def probe(arr, grad):
        nonlocal worst
        flat = arr.reshape(-1)
        gflat = grad.reshape(-1)
        idx = rng.choice(flat.size, min(coords_per_array, flat.size),
                         replace=False)
        for i in idx:
            orig = flat[i]
            flat[i] = orig + step
            fp = total_loss(sides, stacks, gt).total
            flat[i] = orig - step
            fm = total_loss(sides, stacks, gt).total
            flat[i] = orig
            numeric = (fp - fm) / (2.0 * step)
            a = float(gflat[i])
            worst = max(worst, abs(a - numeric)
                        / max(abs(a), abs(numeric), 1e-6))

    for p, g in zip(sides, br.side_grads):
        probe(p, g)
    for stack, g in zip(stacks, br.cam_grads):
        probe(stack.windows, g)
    return worst
