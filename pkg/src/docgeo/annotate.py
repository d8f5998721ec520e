"""Automatic textline annotation.

Lines are found in the rectified (flat) view, where text runs horizontally,
and then mapped into the distorted photo through the ground-truth backward
flow.  The detection pipeline is classical: adaptive binarization, a wide
horizontal dilation that fuses words into bars, connected components, and
geometric filtering of the resulting boxes.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy import ndimage

from .geometry import WarpField, map_points_through_flow

__all__ = [
    "Textline",
    "BBox",
    "binarize_adaptive",
    "dilate_horizontal",
    "connected_components",
    "filter_boxes",
    "boxes_to_centerlines",
    "annotate_distorted",
    "rasterize_lines",
    "point_to_polyline_distance",
]


@dataclass
class Textline:
    """One annotated line: a center polyline plus a stroke thickness.

    ``points`` is (N, 2) float with rows ``(x, y)``; N >= 2 and thickness
    must be positive.
    """

    points: np.ndarray
    thickness: float

    def __post_init__(self):
        self.points = np.asarray(self.points, dtype=np.float64)
        if self.points.ndim != 2 or self.points.shape[1] != 2 or self.points.shape[0] < 2:
            raise ValueError(f"polyline must be (N>=2, 2), got {self.points.shape}")
        if not np.isfinite(self.points).all():
            raise ValueError("polyline contains non-finite coordinates")
        self.thickness = float(self.thickness)
        if self.thickness <= 0:
            raise ValueError("thickness must be positive")

    @property
    def length(self) -> float:
        """Horizontal extent of the polyline."""
        return float(self.points[:, 0].max() - self.points[:, 0].min())


@dataclass(frozen=True)
class BBox:
    """Inclusive pixel bounds of a component.

    Width and height are coordinate extents (x1 - x0, y1 - y0), matching
    how aspect and size thresholds are stated.
    """

    x0: int
    y0: int
    x1: int
    y1: int

    @property
    def width(self) -> int:
        return self.x1 - self.x0

    @property
    def height(self) -> int:
        return self.y1 - self.y0


def _gaussian_kernel(window: int) -> np.ndarray:
    # OpenCV's size->sigma rule, so a familiar window size behaves familiarly
    sigma = 0.3 * ((window - 1) * 0.5 - 1.0) + 0.8
    xs = np.arange(window, dtype=np.float64) - (window - 1) / 2.0
    k = np.exp(-(xs ** 2) / (2.0 * sigma ** 2))
    return k / k.sum()


def binarize_adaptive(image: np.ndarray, window: int = 15, offset: float = 0.05) -> np.ndarray:
    """Foreground (ink) mask: pixel < Gaussian-weighted local mean - offset.

    ``window`` is the odd side length of the local Gaussian window; borders
    are handled by reflection.  Returns a boolean (H, W) array.
    """
    image = np.asarray(image, dtype=np.float64)
    if image.ndim != 2:
        raise ValueError("binarize_adaptive expects a grayscale (H, W) image")
    if window < 3 or window % 2 == 0:
        raise ValueError("window must be an odd integer >= 3")
    k = _gaussian_kernel(window)
    local = ndimage.correlate1d(image, k, axis=0, mode="reflect")
    local = ndimage.correlate1d(local, k, axis=1, mode="reflect")
    return image < (local - offset)


def dilate_horizontal(mask: np.ndarray, kernel: int = 9) -> np.ndarray:
    """Binary dilation with a 1 x kernel structuring element."""
    mask = np.asarray(mask, dtype=bool)
    if kernel < 1:
        raise ValueError("kernel must be >= 1")
    if kernel == 1:
        return mask.copy()
    return ndimage.binary_dilation(mask, structure=np.ones((1, kernel), dtype=bool))


def connected_components(mask: np.ndarray) -> list:
    """Bounding boxes of 8-connected foreground components.

    Boxes come back in raster order of each component's anchor (first
    foreground pixel scanning rows then columns), so the result is
    deterministic.
    """
    mask = np.asarray(mask, dtype=bool)
    labeled, n = ndimage.label(mask, structure=np.ones((3, 3), dtype=bool))
    if n == 0:
        return []
    objects = ndimage.find_objects(labeled)
    flat = labeled.ravel()
    first_idx = np.full(n + 1, flat.size, dtype=np.int64)
    nz = np.flatnonzero(flat)
    # reversed so earlier raster indices win
    first_idx[flat[nz[::-1]]] = nz[::-1]
    order = np.argsort(first_idx[1:], kind="stable")
    boxes = []
    for lab in order:
        sl_y, sl_x = objects[lab]
        boxes.append(BBox(x0=int(sl_x.start), y0=int(sl_y.start),
                          x1=int(sl_x.stop - 1), y1=int(sl_y.stop - 1)))
    return boxes


def filter_boxes(boxes: list, image_shape: tuple, min_aspect: float = 3.0,
                 min_height: int = 2, max_height_frac: float = 0.05,
                 min_width_frac: float = 0.03) -> list:
    """Keep boxes that look like text lines.

    A box survives when aspect (width/height) >= min_aspect, height lies in
    [min_height, max_height_frac * H] and width >= min_width_frac * W.
    Never adds boxes; an empty input stays empty.
    """
    h, w = image_shape[:2]
    out = []
    for b in boxes:
        if b.height < min_height or b.height > max_height_frac * h:
            continue
        if b.width < min_width_frac * w:
            continue
        if b.height == 0 or b.width / b.height < min_aspect:
            continue
        out.append(b)
    return out


def boxes_to_centerlines(boxes: list, step: int = 4) -> list:
    """Horizontal center polyline of each box, sampled every ``step`` px.

    The polyline runs along y = (y0 + y1) / 2 with floor(width/step) + 1
    points starting at x0; thickness is the box height.
    """
    if step < 1:
        raise ValueError("step must be >= 1")
    lines = []
    for b in boxes:
        n = b.width // step + 1
        if n < 2:
            continue
        xs = b.x0 + step * np.arange(n, dtype=np.float64)
        ys = np.full(n, (b.y0 + b.y1) / 2.0)
        thickness = max(float(b.height), 1.0)
        lines.append(Textline(np.stack([xs, ys], axis=1), thickness))
    return lines


def annotate_distorted(rectified: np.ndarray, gt_flow: WarpField,
                       window: int = 15, offset: float = 0.05,
                       kernel: int = 9, step: int = 4,
                       min_aspect: float = 3.0, min_height: int = 2,
                       max_height_frac: float = 0.05,
                       min_width_frac: float = 0.03) -> list:
    """Detect textlines in a rectified view and map them to distorted coords.

    ``rectified`` is the flat (or ground-truth rectified) grayscale image on
    the same grid as ``gt_flow``; returned polylines live in the distorted
    image because each point p is pushed to p + f(p).  A blank page yields
    an empty list, not an error.
    """
    rectified = np.asarray(rectified, dtype=np.float64)
    if rectified.ndim == 3:
        rectified = rectified.mean(axis=2)
    fg = binarize_adaptive(rectified, window=window, offset=offset)
    bars = dilate_horizontal(fg, kernel=kernel)
    boxes = filter_boxes(connected_components(bars), rectified.shape,
                         min_aspect=min_aspect, min_height=min_height,
                         max_height_frac=max_height_frac,
                         min_width_frac=min_width_frac)
    lines = boxes_to_centerlines(boxes, step=step)
    return [Textline(map_points_through_flow(ln.points, gt_flow), ln.thickness)
            for ln in lines]


def _segment_distance(px: np.ndarray, py: np.ndarray, a: np.ndarray, b: np.ndarray) -> np.ndarray:
    # distance from grid points to segment ab, with degenerate segments as points
    abx, aby = b[0] - a[0], b[1] - a[1]
    denom = abx * abx + aby * aby
    if denom == 0:
        return np.hypot(px - a[0], py - a[1])
    t = ((px - a[0]) * abx + (py - a[1]) * aby) / denom
    t = np.clip(t, 0.0, 1.0)
    return np.hypot(px - (a[0] + t * abx), py - (a[1] + t * aby))


def rasterize_lines(lines: list, shape: tuple) -> np.ndarray:
    """Paint polylines as capsules: pixel on iff distance <= thickness / 2.

    Returns a float32 (H, W) mask of 0s and 1s, suitable as a supervision
    target.
    """
    h, w = shape[:2]
    mask = np.zeros((h, w), dtype=bool)
    for ln in lines:
        r = ln.thickness / 2.0
        pts = ln.points
        for a, b in zip(pts[:-1], pts[1:]):
            lo_x = max(int(np.floor(min(a[0], b[0]) - r)) - 1, 0)
            hi_x = min(int(np.ceil(max(a[0], b[0]) + r)) + 2, w)
            lo_y = max(int(np.floor(min(a[1], b[1]) - r)) - 1, 0)
            hi_y = min(int(np.ceil(max(a[1], b[1]) + r)) + 2, h)
            if lo_x >= hi_x or lo_y >= hi_y:
                continue
            px, py = np.meshgrid(np.arange(lo_x, hi_x, dtype=np.float64),
                                 np.arange(lo_y, hi_y, dtype=np.float64))
            d = _segment_distance(px, py, a, b)
            mask[lo_y:hi_y, lo_x:hi_x] |= d <= r
    return mask.astype(np.float32)


def point_to_polyline_distance(points: np.ndarray, poly: np.ndarray) -> np.ndarray:
    """Distance from each (N, 2) point to the nearest segment of ``poly``."""
    points = np.asarray(points, dtype=np.float64)
    poly = np.asarray(poly, dtype=np.float64)
    if poly.ndim != 2 or poly.shape[0] < 2:
        raise ValueError("polyline must have at least 2 points")
    best = np.full(points.shape[0], np.inf)
    for a, b in zip(poly[:-1], poly[1:]):
        d = _segment_distance(points[:, 0], points[:, 1], a, b)
        best = np.minimum(best, d)
    return best
