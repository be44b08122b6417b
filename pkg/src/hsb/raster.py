"""Raster primitives shared by the metric, complexity and benchmark modules.

Conventions used throughout the package:

* a gray map is a 2-D float64 array with values in [0, 1]
* a binary mask is a 2-D bool array
* arrays are indexed (row, col) with row 0 at the top
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from numba import njit
from PIL import Image
from scipy import ndimage

# Diagonal step length for traced contours. The naive sqrt(2) weight
# overestimates the perimeter of smooth shapes by ~5.5%, which pushes the
# isoperimetric quotient of a disk to ~1.11. This weight is calibrated so
# that large rasterized disks measure 2*pi*r while axis-aligned perimeters
# stay exact (straight steps keep weight 1).
DIAG_STEP = (math.pi / 4 - math.sqrt(2) + 1) / (1 - math.sqrt(2) / 2)

# Perimeter assigned to a degenerate single-pixel contour.
SINGLE_PIXEL_PERIMETER = 0.0

_STRUCT_4 = np.array([[0, 1, 0], [1, 1, 1], [0, 1, 0]], bool)
_STRUCT_8 = np.ones((3, 3), bool)

_BT601 = np.array([0.299, 0.587, 0.114])


class RasterIOError(Exception):
    """Raised when a raster file cannot be loaded or stored."""

    def __init__(self, path, reason):
        super().__init__(f"{path}: {reason}")
        self.path = str(path)
        self.reason = reason


@dataclass
class LabelMap:
    """Connected-component labelling; labels run 1..count, 0 is background."""

    labels: np.ndarray
    count: int

    @property
    def height(self):
        return self.labels.shape[0]

    @property
    def width(self):
        return self.labels.shape[1]


def load_gray(path) -> np.ndarray:
    """Load a PNG as a gray map.

    8-bit codes map to v/255, 16-bit to v/65535.  RGB(A) input is reduced
    with ITU-R BT.601 luminance.  Anything else is rejected.
    """
    try:
        img = Image.open(path)
        img.load()
    except FileNotFoundError:
        raise RasterIOError(path, "file not found")
    except Exception as exc:  # corrupt file, not an image, ...
        raise RasterIOError(path, f"cannot read raster: {exc}")

    if img.mode == "P":
        img = img.convert("RGB")
    arr = np.asarray(img)
    if img.mode == "L" or (arr.ndim == 2 and arr.dtype == np.uint8):
        return arr.astype(np.float64) / 255.0
    if arr.ndim == 2 and arr.dtype == np.uint16:
        return arr.astype(np.float64) / 65535.0
    if img.mode == "I":
        if arr.max(initial=0) > 65535 or arr.min(initial=0) < 0:
            raise RasterIOError(path, "integer image exceeds 16-bit range")
        return arr.astype(np.float64) / 65535.0
    if arr.ndim == 3 and arr.shape[2] in (3, 4) and arr.dtype == np.uint8:
        rgb = arr[:, :, :3].astype(np.float64) / 255.0
        return np.clip(rgb @ _BT601, 0.0, 1.0)
    raise RasterIOError(path, f"unsupported mode/bit depth: {img.mode}")


def load_rgb(path) -> np.ndarray:
    """Load an image as an 8-bit (H, W, 3) RGB array."""
    try:
        img = Image.open(path)
        img.load()
    except FileNotFoundError:
        raise RasterIOError(path, "file not found")
    except Exception as exc:
        raise RasterIOError(path, f"cannot read raster: {exc}")
    return np.asarray(img.convert("RGB"))


def store_gray(m: np.ndarray, path) -> None:
    """Store a gray map as an 8-bit single-channel PNG (round-half-even)."""
    codes = np.rint(np.asarray(m, np.float64) * 255.0).astype(np.uint8)
    try:
        Image.fromarray(codes, mode="L").save(path, format="PNG")
    except Exception as exc:
        raise RasterIOError(path, f"cannot write raster: {exc}")


def binarize(m: np.ndarray, theta: float) -> np.ndarray:
    """Threshold a gray map; the comparison is inclusive (value >= theta)."""
    return np.asarray(m) >= theta


def resize_bilinear(m: np.ndarray, w2: int, h2: int) -> np.ndarray:
    """Bilinear resampling with half-pixel centers (corner-aligned false)."""
    if w2 < 1 or h2 < 1:
        raise ValueError(f"target size must be positive, got {w2}x{h2}")
    m = np.asarray(m, np.float64)
    h, w = m.shape
    if (w2, h2) == (w, h):
        return m.copy()

    src_y = np.clip((np.arange(h2) + 0.5) * (h / h2) - 0.5, 0, h - 1)
    src_x = np.clip((np.arange(w2) + 0.5) * (w / w2) - 0.5, 0, w - 1)
    y0 = np.floor(src_y).astype(np.intp)
    x0 = np.floor(src_x).astype(np.intp)
    y1 = np.minimum(y0 + 1, h - 1)
    x1 = np.minimum(x0 + 1, w - 1)
    wy = (src_y - y0)[:, None]
    wx = (src_x - x0)[None, :]

    top = m[np.ix_(y0, x0)] * (1 - wx) + m[np.ix_(y0, x1)] * wx
    bot = m[np.ix_(y1, x0)] * (1 - wx) + m[np.ix_(y1, x1)] * wx
    return np.clip(top * (1 - wy) + bot * wy, 0.0, 1.0)


def connected_components(mask: np.ndarray, connectivity: int = 8) -> LabelMap:
    """Label foreground components (labels contiguous from 1)."""
    if connectivity == 4:
        structure = _STRUCT_4
    elif connectivity == 8:
        structure = _STRUCT_8
    else:
        raise ValueError(f"connectivity must be 4 or 8, got {connectivity}")
    labels, count = ndimage.label(np.asarray(mask, bool), structure=structure)
    return LabelMap(labels=labels, count=int(count))


# ---------------------------------------------------------------------------
# contour tracing

_MOORE = [(-1, 0), (-1, 1), (0, 1), (1, 1), (1, 0), (1, -1), (0, -1), (-1, -1)]
_MOORE_INDEX = {d: i for i, d in enumerate(_MOORE)}


def _moore_trace(region: np.ndarray) -> np.ndarray:
    """Trace the outer boundary of a single connected region.

    Returns the closed contour as an (n, 2) array of (row, col) pixel
    coordinates without repeating the start pixel.
    """
    ys, xs = np.nonzero(region)
    start = (int(ys[0]), int(xs[0]))  # topmost then leftmost
    h, w = region.shape

    def is_set(q):
        return 0 <= q[0] < h and 0 <= q[1] < w and region[q]

    contour = [start]
    # The pixel west of the start is outside the region by construction.
    p = start
    back = (start[0], start[1] - 1)  # cell we "came from"; always false
    first_step = None
    while True:
        entry = _MOORE_INDEX[(back[0] - p[0], back[1] - p[1])]
        move = None
        last_false = back
        for i in range(1, 9):
            d = (entry + i) % 8
            q = (p[0] + _MOORE[d][0], p[1] + _MOORE[d][1])
            if is_set(q):
                move = q
                break
            last_false = q
        if move is None:
            break  # isolated pixel
        if first_step is None:
            first_step = (p, move)
        elif (p, move) == first_step:
            break  # about to repeat the very first step: loop closed
        contour.append(move)
        back = last_false
        p = move
    while len(contour) > 1 and contour[-1] == start:
        contour.pop()
    return np.array(contour, dtype=np.intp)


def _contour_perimeter(contour: np.ndarray) -> float:
    if len(contour) < 2:
        return SINGLE_PIXEL_PERIMETER
    closed = np.vstack([contour, contour[:1]])
    d = np.abs(np.diff(closed, axis=0))
    diag = (d[:, 0] == 1) & (d[:, 1] == 1)
    return float(np.count_nonzero(~diag) + DIAG_STEP * np.count_nonzero(diag))


def hole_mask(mask: np.ndarray) -> LabelMap:
    """Label the holes of a mask: 4-connected background regions that do
    not touch the image border."""
    mask = np.asarray(mask, bool)
    bg = connected_components(~mask, connectivity=4)
    border = np.zeros_like(mask)
    border[0, :] = border[-1, :] = True
    border[:, 0] = border[:, -1] = True
    touching = np.unique(bg.labels[border & ~mask])
    hole_labels = [i for i in range(1, bg.count + 1) if i not in touching]
    out = np.zeros_like(bg.labels)
    for new, old in enumerate(hole_labels, start=1):
        out[bg.labels == old] = new
    return LabelMap(labels=out, count=len(hole_labels))


def trace_contours(mask: np.ndarray):
    """Trace every outer component boundary and every hole boundary.

    Returns a list of (contour, perimeter) pairs.  Perimeters count
    straight steps as 1 and diagonal steps as DIAG_STEP; a single-pixel
    contour has perimeter SINGLE_PIXEL_PERIMETER.
    """
    mask = np.asarray(mask, bool)
    out = []
    comps = connected_components(mask, connectivity=8)
    for i in range(1, comps.count + 1):
        contour = _moore_trace(comps.labels == i)
        out.append((contour, _contour_perimeter(contour)))
    holes = hole_mask(mask)
    for i in range(1, holes.count + 1):
        contour = _moore_trace(holes.labels == i)
        out.append((contour, _contour_perimeter(contour)))
    return out


# ---------------------------------------------------------------------------
# exact Euclidean distance transform (separable feature transform)

# Tie-break contract for the nearest true pixel: smallest squared distance,
# then smallest column, then smallest row.  Keeping the rule explicit makes
# the transform reproducible against a brute-force scan.


def _nearest_rows_per_column(mask: np.ndarray):
    """For every (y, c): nearest true row in column c (ties -> smaller row).

    Returns (squared row distance, chosen row); empty columns get a
    sentinel squared distance larger than any achievable one.
    """
    h, w = mask.shape
    large = h * h + w * w + 1
    rows = np.arange(h, dtype=np.int64)[:, None]

    up = np.where(mask, rows, np.int64(-1))
    up = np.maximum.accumulate(up, axis=0)
    down = np.where(mask, rows, np.int64(h + large))
    down = np.minimum.accumulate(down[::-1], axis=0)[::-1]

    dist_up = np.where(up >= 0, rows - up, np.int64(large))
    dist_down = np.where(down < h, down - rows, np.int64(large))
    use_up = dist_up <= dist_down  # tie -> smaller row
    r1 = np.where(use_up, up, down)
    dr = np.where(use_up, dist_up, dist_down)
    g = np.where(dr >= large, np.int64(large), dr * dr)
    r1 = np.where(g >= large, np.int64(0), r1)
    return g, r1


@njit(cache=True)
def _ft_pass2(g, r1):  # pragma: no cover - exercised via feature_transform
    h, w = g.shape
    d2 = np.empty((h, w), np.int64)
    ny = np.empty((h, w), np.int64)
    nx = np.empty((h, w), np.int64)
    v = np.empty(w, np.int64)
    znum = np.empty(w + 1, np.int64)
    zden = np.empty(w + 1, np.int64)  # den 0 encodes +/- inf by sign of num
    for y in range(h):
        k = 0
        v[0] = 0
        znum[0] = -1
        zden[0] = 0
        znum[1] = 1
        zden[1] = 0
        for q in range(1, w):
            fq = g[y, q] + q * q
            while True:
                p = v[k]
                snum = fq - (g[y, p] + p * p)
                sden = 2 * (q - p)
                if zden[k] == 0:
                    le = znum[k] > 0  # s <= +inf; never <= -inf
                else:
                    le = snum * zden[k] <= znum[k] * sden
                if le:
                    if k == 0:
                        v[0] = q
                        znum[1] = 1
                        zden[1] = 0
                        break
                    k -= 1
                else:
                    k += 1
                    v[k] = q
                    znum[k] = snum
                    zden[k] = sden
                    znum[k + 1] = 1
                    zden[k + 1] = 0
                    break
        k = 0
        for x in range(w):
            while zden[k + 1] != 0 and znum[k + 1] < x * zden[k + 1]:
                k += 1
            c = v[k]
            dx = x - c
            d2[y, x] = dx * dx + g[y, c]
            nx[y, x] = c
            ny[y, x] = r1[y, c]
    return d2, ny, nx


def feature_transform(mask: np.ndarray):
    """Exact EDT with nearest-pixel indices.

    Returns (distance, nearest_row, nearest_col).  The mask must contain at
    least one true pixel.
    """
    mask = np.asarray(mask, bool)
    if not mask.any():
        raise ValueError("feature_transform needs a nonempty mask")
    g, r1 = _nearest_rows_per_column(mask)
    d2, ny, nx = _ft_pass2(np.ascontiguousarray(g), np.ascontiguousarray(r1))
    return np.sqrt(d2.astype(np.float64)), ny, nx


# Sentinel distance reported for every pixel when the mask is empty.
EMPTY_MASK_DISTANCE = np.inf


def distance_transform(mask: np.ndarray) -> np.ndarray:
    """Exact Euclidean distance to the nearest true pixel (0 on true pixels).

    An all-false mask yields EMPTY_MASK_DISTANCE everywhere.
    """
    mask = np.asarray(mask, bool)
    if not mask.any():
        return np.full(mask.shape, EMPTY_MASK_DISTANCE)
    dist, _, _ = feature_transform(mask)
    return dist


def boundary_pixels(mask: np.ndarray) -> np.ndarray:
    """True pixels 4-adjacent to a false pixel or lying on the image border."""
    mask = np.asarray(mask, bool)
    interior = ndimage.binary_erosion(mask, structure=_STRUCT_4, border_value=0)
    return mask & ~interior


def boundary_band(mask: np.ndarray, r: float) -> np.ndarray:
    """Pixels within distance r of the mask's boundary (both sides)."""
    if r < 1:
        raise ValueError(f"band radius must be >= 1, got {r}")
    mask = np.asarray(mask, bool)
    edge = boundary_pixels(mask)
    if not edge.any():
        return np.zeros_like(mask)
    return distance_transform(edge) <= r
