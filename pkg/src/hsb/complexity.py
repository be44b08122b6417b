"""Shape-complexity statistics of ground-truth masks and the
complexity-ranked test-set splitter."""

from __future__ import annotations

import math
from dataclasses import dataclass, fields

import numpy as np

from .raster import (
    binarize,
    boundary_pixels,
    connected_components,
    distance_transform,
    hole_mask,
    trace_contours,
)

CHI2_EPS = 1e-12
HIST_BINS = 8  # per RGB channel -> 512 bins
LOCAL_BAND_FRACTION = 0.05
MASK_THRESHOLD = 0.5  # annotations may carry anti-aliased edges


@dataclass
class ComplexityProfile:
    image_id: str
    ipq: float
    c_num: int
    e_num: int
    fg_ratio: float
    center_dist: float
    margin_dist: float
    global_contrast: float
    local_contrast: float
    score: float

    # column order for CSV reports
    NUMERIC_FIELDS = ("ipq", "c_num", "e_num", "fg_ratio", "center_dist",
                      "margin_dist", "global_contrast", "local_contrast",
                      "score")


def ipq(mask) -> float:
    """Isoperimetric quotient C^2 / (4*pi*A) over all traced contours."""
    mask = np.asarray(mask, bool)
    if not mask.any():
        raise ValueError("ipq needs a nonempty mask")
    perimeter = sum(p for _, p in trace_contours(mask))
    area = int(mask.sum())
    return perimeter * perimeter / (4.0 * math.pi * area)


def contour_count(mask) -> int:
    """Outer boundaries of 8-connected components plus 4-connected holes."""
    mask = np.asarray(mask, bool)
    if not mask.any():
        return 0
    return connected_components(mask, 8).count + hole_mask(mask).count


def euler_number(mask) -> int:
    """8-connected component count minus 4-connected hole count."""
    mask = np.asarray(mask, bool)
    if not mask.any():
        return 0
    return connected_components(mask, 8).count - hole_mask(mask).count


def geometry_stats(mask):
    """(fg_ratio, center_dist, margin_dist); distances are normalized by the
    half-diagonal so a corner pixel of a full frame sits at 1."""
    mask = np.asarray(mask, bool)
    if not mask.any():
        raise ValueError("geometry_stats needs a nonempty mask")
    h, w = mask.shape
    cy, cx = (h - 1) / 2.0, (w - 1) / 2.0
    half_diag = math.hypot(cy, cx)
    ys, xs = np.nonzero(mask)
    fg_ratio = ys.size / (h * w)
    center_dist = math.hypot(ys.mean() - cy, xs.mean() - cx)
    margin_dist = float(np.sqrt(((ys - cy) ** 2 + (xs - cx) ** 2).min()))
    if half_diag == 0:  # 1x1 image
        return fg_ratio, 0.0, 0.0
    return fg_ratio, center_dist / half_diag, margin_dist / half_diag


def _rgb_histogram(rgb, select) -> np.ndarray:
    """L1-normalized 8x8x8 RGB histogram over the selected pixels."""
    px = rgb[select]
    codes = ((px[:, 0] >> 5).astype(np.intp) * 64
             + (px[:, 1] >> 5).astype(np.intp) * 8
             + (px[:, 2] >> 5).astype(np.intp))
    hist = np.bincount(codes, minlength=HIST_BINS**3).astype(np.float64)
    return hist / hist.sum()


def _chi2(h1, h2) -> float:
    return float(0.5 * np.sum((h1 - h2) ** 2 / (h1 + h2 + CHI2_EPS)))


def color_contrast(image, mask):
    """(global, local) chi-square contrast between fg and bg histograms.

    The local statistic is restricted to a band of radius 0.05*diagonal on
    each side of the mask boundary.
    """
    rgb = np.asarray(image)
    mask = np.asarray(mask, bool)
    if rgb.ndim != 3 or rgb.shape[2] < 3 or rgb.dtype != np.uint8:
        raise ValueError("color_contrast expects an 8-bit RGB image")
    if rgb.shape[:2] != mask.shape:
        raise ValueError(
            f"shape mismatch: image {rgb.shape[:2]} vs mask {mask.shape}")
    if not mask.any() or mask.all():
        raise ValueError("color_contrast needs both foreground and background")
    rgb = rgb[:, :, :3]

    global_c = _chi2(_rgb_histogram(rgb, mask), _rgb_histogram(rgb, ~mask))

    h, w = mask.shape
    radius = LOCAL_BAND_FRACTION * math.hypot(h, w)
    band = distance_transform(boundary_pixels(mask)) <= max(radius, 1.0)
    inner = band & mask
    outer = band & ~mask
    if not inner.any() or not outer.any():
        raise ValueError("degenerate boundary band for local contrast")
    local_c = _chi2(_rgb_histogram(rgb, inner), _rgb_histogram(rgb, outer))
    return global_c, local_c


def profile_mask(image_id, gt_gray, image=None) -> ComplexityProfile:
    """Build the full complexity profile of one ground-truth map."""
    mask = binarize(np.asarray(gt_gray, np.float64), MASK_THRESHOLD)
    if not mask.any():
        raise ValueError(f"{image_id}: empty ground truth")
    q = ipq(mask)
    c = contour_count(mask)
    e = euler_number(mask)
    fg, cdist, mdist = geometry_stats(mask)
    if image is not None and not mask.all():
        gc, lc = color_contrast(image, mask)
    else:
        gc = lc = math.nan
    return ComplexityProfile(image_id=image_id, ipq=q, c_num=c, e_num=e,
                             fg_ratio=fg, center_dist=cdist, margin_dist=mdist,
                             global_contrast=gc, local_contrast=lc,
                             score=q * c)


def split_subsets(profiles, k: int):
    """Sort ascending by score (ties by image_id) and slice into k contiguous
    groups whose sizes differ by at most one (earlier groups take the extra)."""
    profiles = list(profiles)
    if k < 1:
        raise ValueError(f"k must be >= 1, got {k}")
    if k > len(profiles):
        raise ValueError(f"k={k} exceeds {len(profiles)} profiles")
    ordered = sorted(profiles, key=lambda p: (p.score, p.image_id))
    n, rem = divmod(len(ordered), k)
    out = []
    pos = 0
    for i in range(k):
        size = n + (1 if i < rem else 0)
        out.append([p.image_id for p in ordered[pos:pos + size]])
        pos += size
    return out


def dataset_summary(profiles, dims=None) -> dict:
    """Mean and population standard deviation per profile column (plus image
    height/width when dimensions are supplied)."""
    profiles = list(profiles)
    if not profiles:
        raise ValueError("cannot summarize an empty profile list")
    out = {}
    for name in ComplexityProfile.NUMERIC_FIELDS:
        vals = np.array([getattr(p, name) for p in profiles], np.float64)
        out[name] = (float(np.nanmean(vals)), float(np.nanstd(vals)))
    if dims is not None:
        dims = np.asarray(list(dims), np.float64)
        out["height"] = (float(dims[:, 0].mean()), float(dims[:, 0].std()))
        out["width"] = (float(dims[:, 1].mean()), float(dims[:, 1].std()))
    return out
