"""Saliency evaluation metrics: MAE, max/weighted F, S-measure, E-measure, mBA.

All operations take a prediction gray map P and a ground-truth bool mask G of
equal shape.  `evaluate_pair` applies the size-mismatch policy (prediction is
resampled to the ground-truth resolution, never the other way around).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, fields

import numpy as np
from scipy import ndimage

from .raster import (
    binarize,
    boundary_pixels,
    distance_transform,
    feature_transform,
    resize_bilinear,
)

EPS = np.finfo(np.float64).eps
FBETA2 = 0.3  # beta^2 of the F-measure sweep
WF_BETA2 = 1.0  # beta^2 of the weighted F-measure
WF_SIGMA = 5.0  # Gaussian diffusion sigma (7x7 kernel)
WF_DECAY = math.log(0.5) / 5.0  # distance decay of false-positive weighting
MBA_RADII = 5
MBA_DIAGONAL_FRACTION = 0.02
MBA_THRESHOLD = 0.5

METRIC_NAMES = ("mae", "max_f", "weighted_f", "s_measure", "e_measure", "mba")


class DegenerateGroundTruthError(ValueError):
    """Ground truth has no foreground; recall-based metrics are undefined."""


@dataclass
class MetricReport:
    image_id: str
    mae: float
    max_f: float
    weighted_f: float
    s_measure: float
    e_measure: float
    mba: float


@dataclass
class ThresholdCurve:
    """Precision/recall/F at the 256 threshold codes 0..255."""

    thresholds: np.ndarray
    precision: np.ndarray
    recall: np.ndarray
    f_beta: np.ndarray

    @property
    def max_f(self) -> float:
        return float(self.f_beta.max())


def _check_pair(p, g):
    p = np.asarray(p, np.float64)
    g = np.asarray(g, bool)
    if p.shape != g.shape:
        raise ValueError(f"shape mismatch: prediction {p.shape} vs gt {g.shape}")
    return p, g


def mae(p, g) -> float:
    p, g = _check_pair(p, g)
    return float(np.abs(p - g).mean())


def f_curve(p, g) -> ThresholdCurve:
    """Precision/recall/F-beta for thresholds t/255, t = 0..255.

    Empty predictions get precision 0 by convention; an empty ground truth
    is a hard error (recall undefined).
    """
    p, g = _check_pair(p, g)
    npos = int(g.sum())
    if npos == 0:
        raise DegenerateGroundTruthError("ground truth has no foreground")

    thresholds = np.arange(256) / 255.0
    fg = np.sort(p[g])
    bg = np.sort(p[~g])
    # count of values >= threshold == n - first index where value >= threshold
    tp = fg.size - np.searchsorted(fg, thresholds, side="left")
    fp = bg.size - np.searchsorted(bg, thresholds, side="left")

    predicted = tp + fp
    precision = np.divide(tp, predicted, out=np.zeros(256), where=predicted > 0)
    recall = tp / npos
    denom = FBETA2 * precision + recall
    f = np.divide((1 + FBETA2) * precision * recall, denom,
                  out=np.zeros(256), where=denom > 0)
    return ThresholdCurve(np.arange(256), precision, recall, f)


def max_f(p, g) -> float:
    return f_curve(p, g).max_f


def _gaussian_kernel_7x5() -> np.ndarray:
    ax = np.arange(7) - 3
    k = np.exp(-(ax[:, None] ** 2 + ax[None, :] ** 2) / (2 * WF_SIGMA**2))
    return k / k.sum()


def weighted_f(p, g) -> float:
    """Weighted F-measure with Gaussian error diffusion and distance decay.

    An all-zero prediction is defined to score 0 (zero weighted recall).
    """
    p, g = _check_pair(p, g)
    if not g.any():
        raise DegenerateGroundTruthError("ground truth has no foreground")
    if not p.any():
        return 0.0

    err = np.abs(p - g.astype(np.float64))
    dist, ny, nx = feature_transform(g)

    # Dependency rule: outside the ground truth the error is taken from the
    # nearest ground-truth pixel before diffusion.
    err_dep = err.copy()
    bg = ~g
    err_dep[bg] = err[ny[bg], nx[bg]]
    diffused = ndimage.correlate(err_dep, _gaussian_kernel_7x5(),
                                 mode="constant", cval=0.0)
    min_err = err.copy()
    take = g & (diffused < err)
    min_err[take] = diffused[take]

    weight = np.ones_like(err)
    weight[bg] = 2.0 - np.exp(WF_DECAY * dist[bg])
    ew = min_err * weight

    tp_w = g.sum() - ew[g].sum()
    fp_w = ew[bg].sum()
    recall_w = 1.0 - ew[g].mean()
    precision_w = tp_w / (tp_w + fp_w + EPS)
    return float((1 + WF_BETA2) * precision_w * recall_w
                 / (WF_BETA2 * precision_w + recall_w + EPS))


# --------------------------------------------------------------------------
# S-measure


def _object_score(values: np.ndarray) -> float:
    if values.size == 0:
        return 0.0
    x = values.mean()
    sigma = values.std(ddof=1) if values.size > 1 else 0.0
    return float(2.0 * x / (x * x + 1.0 + sigma + EPS))


def _s_object(p, g) -> float:
    o_fg = _object_score(p[g])
    o_bg = _object_score(1.0 - p[~g])
    u = g.mean()
    # o_bg + u*(o_fg - o_bg) rather than u*o_fg + (1-u)*o_bg: identical
    # algebraically but exact when both sides agree (self-similarity case).
    return o_bg + u * (o_fg - o_bg)


def _ssim_block(p, g) -> float:
    n = p.size
    if n == 0:
        return 1.0
    x = p.mean()
    y = g.mean()
    if n > 1:
        sx = ((p - x) ** 2).sum() / (n - 1)
        sy = ((g - y) ** 2).sum() / (n - 1)
        sxy = ((p - x) * (g - y)).sum() / (n - 1)
    else:
        sx = sy = sxy = 0.0
    a = 4.0 * x * y * sxy
    b = (x * x + y * y) * (sx + sy)
    if a == b:  # covers the 0/0 case and exact self-similarity
        return 1.0
    if a != 0.0:
        return float(a / (b + EPS))
    return 0.0


def gt_centroid(g) -> tuple[int, int]:
    """(row, col) centroid of a nonempty mask, rounded half-even."""
    ys, xs = np.nonzero(g)
    return int(np.round(ys.mean())), int(np.round(xs.mean()))


def _s_region(p, g) -> float:
    h, w = g.shape
    cy, cx = gt_centroid(g)
    rs = (slice(0, cy + 1), slice(cy + 1, h))
    cs = (slice(0, cx + 1), slice(cx + 1, w))
    total = h * w
    q = []
    wts = []
    for r in rs:
        for c in cs:
            q.append(_ssim_block(p[r, c], g[r, c].astype(np.float64)))
            wts.append((r.stop - r.start) * (c.stop - c.start) / total)
    # anchored form: exact when all four block scores coincide
    return q[3] + wts[0] * (q[0] - q[3]) + wts[1] * (q[1] - q[3]) \
        + wts[2] * (q[2] - q[3])


def s_measure(p, g) -> float:
    """Structure measure: 0.5 * object-aware + 0.5 * region-aware similarity."""
    p, g = _check_pair(p, g)
    if not g.any():
        return float(min(1.0, max(0.0, 1.0 - p.mean())))
    if g.all():
        return float(min(1.0, max(0.0, p.mean())))
    s = 0.5 * _s_object(p, g) + 0.5 * _s_region(p, g)
    return float(min(1.0, max(0.0, s)))


# --------------------------------------------------------------------------
# E-measure


def _alignment_term(phi_g: float, phi_p: float) -> float:
    den = phi_g * phi_g + phi_p * phi_p
    if den == 0.0:
        return 1.0  # both deviations vanish: perfect alignment
    xi = 2.0 * phi_g * phi_p / den
    return (1.0 + xi) ** 2 / 4.0


def e_measure(p, g) -> float:
    """Enhanced-alignment measure, maximum over the 256 threshold codes.

    The prediction is binarized per threshold; the alignment is computed
    from the mean-removed maps, with vanishing deviations on both sides
    treated as perfect alignment.
    """
    p, g = _check_pair(p, g)
    total = g.size
    npos = int(g.sum())
    thresholds = np.arange(256) / 255.0
    values = np.sort(p.ravel())
    fg = np.sort(p[g])
    n_pred = values.size - np.searchsorted(values, thresholds, side="left")
    n11 = fg.size - np.searchsorted(fg, thresholds, side="left")

    best = 0.0
    for t in range(256):
        tp = int(n11[t])
        pred = int(n_pred[t])
        counts = (
            (tp, 1.0, 1.0),                       # G=1, P=1
            (npos - tp, 1.0, 0.0),                # G=1, P=0
            (pred - tp, 0.0, 1.0),                # G=0, P=1
            (total - npos - pred + tp, 0.0, 0.0),  # G=0, P=0
        )
        mu_g = npos / total
        mu_p = pred / total
        acc = 0.0
        for n, gv, pv in counts:
            if n:
                acc += n * _alignment_term(gv - mu_g, pv - mu_p)
        best = max(best, acc / total)
    return float(best)


# --------------------------------------------------------------------------
# mBA


def mba_radii(h: int, w: int) -> np.ndarray:
    rmax = max(1, round(MBA_DIAGONAL_FRACTION * math.hypot(h, w)))
    return np.linspace(1.0, rmax, MBA_RADII)


def mba(p, g) -> float:
    """Mean boundary accuracy over bands around the ground-truth boundary."""
    p, g = _check_pair(p, g)
    if not g.any():
        raise DegenerateGroundTruthError("ground truth has no foreground")
    pb = binarize(p, MBA_THRESHOLD)
    agree = pb == g
    dist = distance_transform(boundary_pixels(g))
    accs = [agree[dist <= r].mean() for r in mba_radii(*g.shape)]
    return float(np.mean(accs))


# --------------------------------------------------------------------------
# per-image driver and aggregation


def evaluate_pair(p, g, image_id: str = "", selected=METRIC_NAMES,
                  strict: bool = False) -> MetricReport:
    """Compute the selected metrics for one prediction/ground-truth pair.

    Size mismatches resample the prediction to the ground-truth resolution
    (bilinear) unless strict mode is on.
    """
    p = np.asarray(p, np.float64)
    g = np.asarray(g, bool)
    if p.shape != g.shape:
        if strict:
            raise ValueError(
                f"strict mode: prediction {p.shape} does not match gt {g.shape}")
        gh, gw = g.shape
        p = resize_bilinear(p, gw, gh)
    funcs = {"mae": mae, "max_f": max_f, "weighted_f": weighted_f,
             "s_measure": s_measure, "e_measure": e_measure, "mba": mba}
    out = {name: math.nan for name in METRIC_NAMES}
    for name in selected:
        out[name] = funcs[name](p, g)
    return MetricReport(image_id=image_id, **out)


def aggregate(reports) -> dict:
    """Arithmetic mean per metric; order-independent (sorted by image_id)."""
    reports = sorted(reports, key=lambda r: r.image_id)
    if not reports:
        raise ValueError("cannot aggregate an empty report list")
    out = {}
    for f in fields(MetricReport):
        if f.name == "image_id":
            continue
        out[f.name] = float(np.mean([getattr(r, f.name) for r in reports]))
    return out
