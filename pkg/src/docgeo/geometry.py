"""Dense backward-warp geometry.

Conventions shared by the whole package:

* ``x`` is the column index and ``y`` the row index, origin at the top-left
  pixel, pixel centers on integer coordinates.
* A :class:`WarpField` stores per-pixel displacements ``(dx, dy)`` on the
  grid of the *output* (rectified) image.  Rectification samples the input
  image at ``(x + dx, y + dy)``, i.e. the field points from output pixels
  back into the source image (a backward warp).
* A coordinate map is an ``(H, W, 2)`` float array whose last axis holds
  absolute sample positions ``(x, y)``.  ``flow_to_coords`` /
  ``coords_to_flow`` convert between the two representations.

Images are numpy arrays shaped ``(H, W)`` or ``(H, W, C)`` with float
values; sampling is bilinear throughout.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = [
    "WarpField",
    "InversionError",
    "identity_flow",
    "identity_coords",
    "flow_to_coords",
    "coords_to_flow",
    "apply_flow",
    "sample_image",
    "eval_coord_map",
    "map_points_through_flow",
    "invert_map",
]


class InversionError(RuntimeError):
    """Raised when fixed-point inversion fails to reach tolerance.

    Carries ``worst_residual``, the largest ``|h(g(p)) - p|`` in pixels
    over the grid when iteration stopped.
    """

    def __init__(self, worst_residual: float, max_iter: int):
        self.worst_residual = float(worst_residual)
        self.max_iter = int(max_iter)
        super().__init__(
            f"map inversion did not converge in {max_iter} iterations "
            f"(worst residual {worst_residual:.6g} px)"
        )


@dataclass
class WarpField:
    """Per-pixel backward-warp displacements on the output grid.

    ``dx`` and ``dy`` are ``(H, W)`` float arrays; both must be finite and
    share one shape.
    """

    dx: np.ndarray
    dy: np.ndarray

    def __post_init__(self):
        self.dx = np.asarray(self.dx)
        self.dy = np.asarray(self.dy)
        if self.dx.ndim != 2 or self.dx.shape != self.dy.shape:
            raise ValueError(
                f"dx/dy must be 2D arrays of equal shape, got {self.dx.shape} vs {self.dy.shape}"
            )
        if not (np.isfinite(self.dx).all() and np.isfinite(self.dy).all()):
            raise ValueError("warp field contains non-finite values")

    @property
    def height(self) -> int:
        return self.dx.shape[0]

    @property
    def width(self) -> int:
        return self.dx.shape[1]

    @property
    def shape(self) -> tuple:
        return self.dx.shape


def identity_flow(height: int, width: int) -> WarpField:
    """Zero displacement everywhere; applying it reproduces the input."""
    if height < 1 or width < 1:
        raise ValueError("identity_flow needs positive dimensions")
    z = np.zeros((height, width), dtype=np.float32)
    return WarpField(z, z.copy())


def identity_coords(height: int, width: int) -> np.ndarray:
    """Coordinate map sending every pixel to itself, shape (H, W, 2)."""
    xs, ys = np.meshgrid(np.arange(width, dtype=np.float64),
                         np.arange(height, dtype=np.float64))
    return np.stack([xs, ys], axis=-1)


def flow_to_coords(flow: WarpField) -> np.ndarray:
    """Absolute sample positions (x + dx, y + dy) as an (H, W, 2) map."""
    coords = identity_coords(flow.height, flow.width)
    coords[..., 0] += flow.dx
    coords[..., 1] += flow.dy
    return coords


def coords_to_flow(coords: np.ndarray) -> WarpField:
    """Inverse of :func:`flow_to_coords`."""
    coords = np.asarray(coords, dtype=np.float64)
    if coords.ndim != 3 or coords.shape[2] != 2:
        raise ValueError(f"coordinate map must be (H, W, 2), got {coords.shape}")
    ident = identity_coords(coords.shape[0], coords.shape[1])
    delta = coords - ident
    return WarpField(delta[..., 0], delta[..., 1])


def sample_image(image: np.ndarray, xs: np.ndarray, ys: np.ndarray,
                 border: str = "clamp") -> np.ndarray:
    """Bilinear lookup of ``image`` at float positions ``(xs, ys)``.

    border="clamp" replicates edge pixels for out-of-range positions;
    border="zero" returns 0 for positions strictly outside the image
    rectangle.  Positions landing exactly on grid points reproduce source
    pixels with no arithmetic error.
    """
    image = np.asarray(image, dtype=np.float64)
    xs = np.asarray(xs, dtype=np.float64)
    ys = np.asarray(ys, dtype=np.float64)
    if border not in ("clamp", "zero"):
        raise ValueError(f"unknown border policy {border!r}")
    h, w = image.shape[:2]

    if border == "zero":
        inside = (xs >= 0) & (xs <= w - 1) & (ys >= 0) & (ys <= h - 1)

    xc = np.clip(xs, 0.0, float(w - 1))
    yc = np.clip(ys, 0.0, float(h - 1))
    x0 = np.floor(xc).astype(np.int64)
    y0 = np.floor(yc).astype(np.int64)
    # neighbor index clamped; its weight is 0 whenever clamping engages
    x1 = np.minimum(x0 + 1, w - 1)
    y1 = np.minimum(y0 + 1, h - 1)
    tx = xc - x0
    ty = yc - y0

    if image.ndim == 3:
        tx = tx[..., None]
        ty = ty[..., None]

    v00 = image[y0, x0]
    v01 = image[y0, x1]
    v10 = image[y1, x0]
    v11 = image[y1, x1]
    top = (1.0 - tx) * v00 + tx * v01
    bot = (1.0 - tx) * v10 + tx * v11
    out = (1.0 - ty) * top + ty * bot

    if border == "zero":
        mask = inside if image.ndim == 2 else inside[..., None]
        out = np.where(mask, out, 0.0)
    return out


def apply_flow(image: np.ndarray, flow: WarpField, border: str = "clamp") -> np.ndarray:
    """Backward-warp ``image`` with ``flow``.

    output(y, x) = image(y + dy(y, x), x + dx(y, x)), sampled bilinearly.
    The output grid is the flow's grid, so the result has the flow's
    height/width (channels carried through).
    """
    image = np.asarray(image)
    if image.ndim not in (2, 3):
        raise ValueError(f"image must be (H, W) or (H, W, C), got shape {image.shape}")
    xs, ys = np.meshgrid(np.arange(flow.width, dtype=np.float64),
                         np.arange(flow.height, dtype=np.float64))
    return sample_image(image, xs + flow.dx, ys + flow.dy, border=border)


def eval_coord_map(coords: np.ndarray, xs: np.ndarray, ys: np.ndarray) -> np.ndarray:
    """Evaluate a dense (H, W, 2) coordinate map at float positions.

    Bilinear inside the grid, linear extrapolation outside (the edge cell's
    plane is extended), which keeps fixed-point inversion well behaved for
    positions that wander past the border.  Returns an array shaped like
    ``xs`` + a trailing axis of 2.
    """
    coords = np.asarray(coords, dtype=np.float64)
    h, w = coords.shape[:2]
    if h < 2 or w < 2:
        raise ValueError("coordinate map must be at least 2x2 for interpolation")
    xs = np.asarray(xs, dtype=np.float64)
    ys = np.asarray(ys, dtype=np.float64)
    x0 = np.clip(np.floor(xs), 0, w - 2).astype(np.int64)
    y0 = np.clip(np.floor(ys), 0, h - 2).astype(np.int64)
    tx = (xs - x0)[..., None]
    ty = (ys - y0)[..., None]
    v00 = coords[y0, x0]
    v01 = coords[y0, x0 + 1]
    v10 = coords[y0 + 1, x0]
    v11 = coords[y0 + 1, x0 + 1]
    top = (1.0 - tx) * v00 + tx * v01
    bot = (1.0 - tx) * v10 + tx * v11
    return (1.0 - ty) * top + ty * bot


def map_points_through_flow(points: np.ndarray, flow: WarpField) -> np.ndarray:
    """Push (N, 2) points ``(x, y)`` through the flow: p -> p + f(p).

    The displacement at a non-integer point is the bilinear interpolation
    of the field (edge-clamped outside the grid).
    """
    points = np.asarray(points, dtype=np.float64)
    if points.ndim != 2 or points.shape[1] != 2:
        raise ValueError(f"points must be (N, 2), got {points.shape}")
    field = np.stack([flow.dx, flow.dy], axis=-1).astype(np.float64)
    disp = sample_image(field, points[:, 0], points[:, 1], border="clamp")
    return points + disp


def invert_map(coords: np.ndarray, tol: float = 1e-3, max_iter: int = 50,
               damping: float = 0.5) -> np.ndarray:
    """Numerically invert a dense coordinate map ``h``.

    Returns ``g`` with ``h(g(p)) == p`` to within ``tol`` pixels (worst
    case over the grid), via damped fixed-point iteration
    ``g <- g - damping * (h(g) - p)`` started from the first-order guess
    ``g0 = 2p - h(p)``.  Requires ``h`` to be a smooth, orientation
    preserving deformation of the grid; raises :class:`InversionError`
    with the worst residual otherwise.
    """
    coords = np.asarray(coords, dtype=np.float64)
    if coords.ndim != 3 or coords.shape[2] != 2:
        raise ValueError(f"coordinate map must be (H, W, 2), got {coords.shape}")
    h, w = coords.shape[:2]
    target = identity_coords(h, w)
    g = 2.0 * target - coords
    worst = np.inf
    for _ in range(max_iter):
        val = eval_coord_map(coords, g[..., 0], g[..., 1])
        resid = val - target
        worst = float(np.sqrt((resid ** 2).sum(axis=-1)).max())
        if worst <= tol:
            return g
        g = g - damping * resid
    # one final check: the last update may have landed inside tolerance
    val = eval_coord_map(coords, g[..., 0], g[..., 1])
    worst = float(np.sqrt(((val - target) ** 2).sum(axis=-1)).max())
    if worst <= tol:
        return g
    raise InversionError(worst, max_iter)
