"""Synthetic distorted-document generation with exact ground truth.

Each sample starts from a procedurally rendered flat page (text rendered as
glyph-textured bars whose centerlines are known exactly), picks an analytic
surface deformation, and renders the distorted photo by numerically
inverting the forward map.  Because the forward map ``h_fwd`` (flat -> photo
coordinates) is analytic, every ground-truth artifact is exact:

* backward warping flow on the rectified grid: ``f = h_fwd - id``,
* page mask: photo pixels whose preimage lies on the page,
* per-pixel 3D surface coordinates (orthographic camera, so X/Y are the
  photo position and Z the surface height), normalized into [0, 1]^3,
* textline polylines mapped from the flat page into the photo.

Deformation families: ``curl`` bends the sheet over a circular-arc cylinder
with arc length preserved along the bend direction, ``fold`` tilts the
sheet across one or two smoothed piecewise-planar ridges, ``crumple`` adds
a handful of smooth Gaussian height bumps with the matching in-plane
contraction, and ``flat`` is the exact identity.  Parameter ranges are
chosen so the Jacobian determinant of ``h_fwd`` stays positive; a draw that
still fails the grid check is rejected and resampled.
"""

from __future__ import annotations

import dataclasses
import io
from dataclasses import dataclass

import numpy as np

from . import formats
from .annotate import Textline
from .geometry import (
    WarpField,
    apply_flow,
    identity_coords,
    invert_map,
    sample_image,
)

__all__ = [
    "DeformationParams",
    "DistortedSample",
    "NonInvertibleDeformation",
    "DEFAULT_MIX",
    "KINDS",
    "sample_deformation",
    "deformation_to_maps",
    "make_flat_page",
    "make_background",
    "render_sample",
    "make_sample",
    "write_sample",
    "read_sample",
    "sample_dir_name",
    "generate_dataset",
]

KINDS = ("curl", "fold", "flat", "crumple")

# kind probabilities for (curl, fold, flat, crumple)
DEFAULT_MIX = (0.4, 0.4, 0.1, 0.1)

MIN_PAGE_SIDE = 96

META_VERSION = 1

COORDS_CONVENTION = (
    "X=x/(W-1), Y=y/(H-1), Z=0.5+z/(1.5*max(H,W)) inside the page mask; "
    "all three channels are 0 outside the mask"
)


class NonInvertibleDeformation(RuntimeError):
    """A parameter draw produced a non-orientation-preserving map."""


@dataclass(frozen=True)
class DeformationParams:
    """Analytic deformation description, resolution independent.

    All positions/lengths are fractions of the page dimensions so the same
    params can be rendered at any size.  ``ridges`` rows are
    ``(cx, cy, normal_angle, strength_share, width_frac)``; ``bumps`` rows
    are ``(cx, cy, sigma_frac, signed_height_share)`` with height shares
    summing to 1 in absolute value.  ``jitter`` is a row-major 2x2 matrix
    applied about the page center after the warp.
    """

    kind: str
    seed: int
    amplitude: float
    bend_angle: float = 0.0
    center: tuple = (0.5, 0.5)
    ridges: tuple = ()
    bumps: tuple = ()
    jitter: tuple = (1.0, 0.0, 0.0, 1.0)
    margin: float = 0.05

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown deformation kind {self.kind!r}")
        if not (0.0 <= self.amplitude <= 0.35):
            raise ValueError("amplitude must lie in [0, 0.35]")


@dataclass
class DistortedSample:
    """One synthetic sample: photo, ground truth, and provenance."""

    img: np.ndarray        # (H, W, 3) float in [0, 1]
    flat: np.ndarray       # (H, W) float in [0, 1]
    mask: np.ndarray       # (H, W) bool, True where the page projects
    flow: WarpField        # rectified grid -> photo displacements, float32
    coords3d: np.ndarray   # (H, W, 3) float32 in [0, 1]^3, zero off-page
    lines: list            # Textline polylines in photo coordinates
    flat_lines: list       # the same lines on the flat page
    params: DeformationParams
    seed: int | None = None


def sample_deformation(seed: int, mix=DEFAULT_MIX) -> DeformationParams:
    """Draw deformation parameters for one sample.

    ``mix`` gives the (curl, fold, flat, crumple) probabilities and must
    sum to 1.
    """
    mix = tuple(float(m) for m in mix)
    if len(mix) != 4 or abs(sum(mix) - 1.0) > 1e-9 or min(mix) < 0:
        raise ValueError("mix must be 4 non-negative probabilities summing to 1")
    rng = np.random.default_rng(seed)
    kind = KINDS[int(rng.choice(4, p=mix))]

    if kind == "flat":
        return DeformationParams(kind="flat", seed=int(seed), amplitude=0.0)

    jitter_rot = rng.uniform(-0.06, 0.06)
    sx, sy = rng.uniform(0.96, 1.04, size=2)
    shear = rng.uniform(-0.03, 0.03)
    cr, sr = np.cos(jitter_rot), np.sin(jitter_rot)
    # R(rot) @ [[sx, shear], [0, sy]]
    jitter = (cr * sx, cr * shear - sr * sy, sr * sx, sr * shear + cr * sy)
    margin = float(rng.uniform(0.04, 0.08))
    center = (float(rng.uniform(0.3, 0.7)), float(rng.uniform(0.3, 0.7)))

    if kind == "curl":
        amplitude = float(rng.uniform(0.12, 0.35))
        bend = float(rng.uniform(-0.35, 0.35))
        if rng.random() < 0.25:
            bend += np.pi / 2.0  # occasional horizontal cylinder axis
        return DeformationParams(kind="curl", seed=int(seed), amplitude=amplitude,
                                 bend_angle=bend, center=center, jitter=jitter,
                                 margin=margin)

    if kind == "fold":
        amplitude = float(rng.uniform(0.08, 0.3))
        n = int(rng.integers(1, 3))
        shares = rng.dirichlet(np.ones(n) * 3.0)
        ridges = tuple(
            (float(rng.uniform(0.25, 0.75)), float(rng.uniform(0.25, 0.75)),
             float(rng.uniform(0.0, np.pi)), float(shares[k]),
             float(rng.uniform(0.02, 0.05)))
            for k in range(n))
        return DeformationParams(kind="fold", seed=int(seed), amplitude=amplitude,
                                 center=center, ridges=ridges, jitter=jitter,
                                 margin=margin)

    amplitude = float(rng.uniform(0.08, 0.3))
    n = int(rng.integers(3, 7))
    shares = rng.dirichlet(np.ones(n) * 2.0)
    signs = rng.choice([-1.0, 1.0], size=n)
    bumps = tuple(
        (float(rng.uniform(0.1, 0.9)), float(rng.uniform(0.1, 0.9)),
         float(rng.uniform(0.12, 0.22)), float(signs[k] * shares[k]))
        for k in range(n))
    return DeformationParams(kind="crumple", seed=int(seed), amplitude=amplitude,
                             center=center, bumps=bumps, jitter=jitter,
                             margin=margin)


def _eval_raw(params: DeformationParams, height: int, width: int,
              xs: np.ndarray, ys: np.ndarray):
    """Forward warp before jitter/fit: flat coords -> (u, v, z)."""
    xs = np.asarray(xs, dtype=np.float64)
    ys = np.asarray(ys, dtype=np.float64)
    w1, h1 = float(width - 1), float(height - 1)
    if params.kind == "flat" or params.amplitude <= 1e-9:
        return xs.copy(), ys.copy(), np.zeros_like(xs)

    if params.kind == "curl":
        cx, cy = params.center[0] * w1, params.center[1] * h1
        dx, dy = np.cos(params.bend_angle), np.sin(params.bend_angle)
        s = (xs - cx) * dx + (ys - cy) * dy
        corners = [(0.0, 0.0), (w1, 0.0), (0.0, h1), (w1, h1)]
        s_max = max(abs((px - cx) * dx + (py - cy) * dy) for px, py in corners)
        theta = params.amplitude * 2.5
        r = s_max / theta
        bent = r * np.sin(s / r)
        z = r * (1.0 - np.cos(s / r))
        return xs + dx * (bent - s), ys + dy * (bent - s), z

    if params.kind == "fold":
        u, v = xs.copy(), ys.copy()
        z = np.zeros_like(xs)
        total = 1.6 * params.amplitude
        for (rcx, rcy, nang, share, wfrac) in params.ridges:
            nx, ny = np.cos(nang), np.sin(nang)
            t = (xs - rcx * w1) * nx + (ys - rcy * h1) * ny
            smooth_w = max(wfrac * min(height, width), 1.0)
            tp = smooth_w * np.logaddexp(0.0, t / smooth_w)
            strength = min(share * total, 0.79)
            u -= nx * tp * strength
            v -= ny * tp * strength
            z += tp * np.sqrt(strength * (2.0 - strength))
        return u, v, z

    # crumple: z = sum of Gaussian bumps, in-plane motion along -grad z
    z = np.zeros_like(xs)
    gx = np.zeros_like(xs)
    gy = np.zeros_like(xs)
    sigma_min = min(b[2] for b in params.bumps) * min(height, width)
    for (bcx, bcy, sig_frac, hshare) in params.bumps:
        sig = sig_frac * min(height, width)
        hk = hshare * params.amplitude * w1
        ex = xs - bcx * w1
        ey = ys - bcy * h1
        g = np.exp(-(ex ** 2 + ey ** 2) / (2.0 * sig ** 2))
        z += hk * g
        gx += hk * g * (-ex / sig ** 2)
        gy += hk * g * (-ey / sig ** 2)
    alpha = 0.55 * sigma_min ** 2 / (0.35 * w1)
    return xs - alpha * gx, ys - alpha * gy, z


def _jitter_xy(params, height, width, u, v):
    if params.kind == "flat":
        return u, v
    a, b, c, d = params.jitter
    pcx, pcy = (width - 1) / 2.0, (height - 1) / 2.0
    du, dv = u - pcx, v - pcy
    return a * du + b * dv + pcx, c * du + d * dv + pcy


def _fit_transform(params: DeformationParams, height: int, width: int):
    """Scale/translate placing the warped page inside the canvas margin.

    Deterministic in (params, height, width): the raw warp is probed on a
    sparse grid and its bounding box mapped to the margin rectangle.
    Returns (scale_x, off_x, scale_y, off_y, z_scale).
    """
    if params.kind == "flat":
        return 1.0, 0.0, 1.0, 0.0, 1.0
    n = 24
    gx, gy = np.meshgrid(np.linspace(0, width - 1, n), np.linspace(0, height - 1, n))
    u, v, _ = _eval_raw(params, height, width, gx, gy)
    u, v = _jitter_xy(params, height, width, u, v)
    mx = params.margin * (width - 1)
    my = params.margin * (height - 1)
    span_u = max(float(u.max() - u.min()), 1e-6)
    span_v = max(float(v.max() - v.min()), 1e-6)
    scale_x = (width - 1 - 2 * mx) / span_u
    scale_y = (height - 1 - 2 * my) / span_v
    off_x = mx - scale_x * float(u.min())
    off_y = my - scale_y * float(v.min())
    return scale_x, off_x, scale_y, off_y, (scale_x + scale_y) / 2.0


def eval_forward(params: DeformationParams, height: int, width: int,
                 xs: np.ndarray, ys: np.ndarray):
    """Analytic forward map: flat coords -> (photo coords, surface height)."""
    fit = _fit_transform(params, height, width)
    u, v, z = _eval_raw(params, height, width, xs, ys)
    u, v = _jitter_xy(params, height, width, u, v)
    sx, ox, sy, oy, sz = fit
    return sx * u + ox, sy * v + oy, sz * z


def _build_geometry(params: DeformationParams, height: int, width: int):
    ident = identity_coords(height, width)
    u, v, _ = eval_forward(params, height, width, ident[..., 0], ident[..., 1])
    h_fwd = np.stack([u, v], axis=-1)

    dudx = np.gradient(u, axis=1)
    dudy = np.gradient(u, axis=0)
    dvdx = np.gradient(v, axis=1)
    dvdy = np.gradient(v, axis=0)
    det = dudx * dvdy - dudy * dvdx
    if det.min() <= 1e-3:
        raise NonInvertibleDeformation(
            f"{params.kind} draw (seed {params.seed}) has Jacobian det "
            f"min {det.min():.4g}")

    flow = WarpField((u - ident[..., 0]).astype(np.float32),
                     (v - ident[..., 1]).astype(np.float32))

    if params.kind == "flat":
        g = ident.copy()
        mask = np.ones((height, width), dtype=bool)
    else:
        g = invert_map(h_fwd, tol=5e-4, max_iter=150)
        eps = 1e-6
        mask = ((g[..., 0] >= -eps) & (g[..., 0] <= width - 1 + eps)
                & (g[..., 1] >= -eps) & (g[..., 1] <= height - 1 + eps))

    _, _, z_at_g = eval_forward(params, height, width, g[..., 0], g[..., 1])
    coords = np.zeros((height, width, 3), dtype=np.float64)
    coords[..., 0] = ident[..., 0] / max(width - 1, 1)
    coords[..., 1] = ident[..., 1] / max(height - 1, 1)
    coords[..., 2] = 0.5 + z_at_g / (1.5 * max(height, width))
    coords = np.clip(coords, 0.0, 1.0) * mask[..., None]
    return h_fwd, flow, g, mask, coords.astype(np.float32)


def deformation_to_maps(params: DeformationParams, height: int, width: int):
    """Dense ground truth for a deformation at a given grid size.

    Returns ``(h_fwd, gt_flow, coords3d)``: the forward coordinate map
    (flat -> photo, (H, W, 2)), the backward-warp flow ``h_fwd - id`` on
    the rectified grid, and the per-photo-pixel 3D surface coordinate map.
    Raises :class:`NonInvertibleDeformation` when the draw folds over
    itself (callers resample).
    """
    h_fwd, flow, _, _, coords = _build_geometry(params, height, width)
    return h_fwd, flow, coords


def make_flat_page(seed, height: int, width: int, line_range=(8, 20)):
    """Render a flat synthetic page and its exact line records.

    The page is near-white (>= 0.9) with dark glyph-textured bars standing
    in for text lines (stroke intensity <= 0.3).  Returns ``(page, lines)``
    where lines are straight horizontal :class:`Textline` centerlines in
    page coordinates.
    """
    if height < MIN_PAGE_SIDE or width < MIN_PAGE_SIDE:
        raise ValueError(f"page must be at least {MIN_PAGE_SIDE} px per side")
    lo, hi = int(line_range[0]), int(line_range[1])
    if lo < 1 or hi < lo:
        raise ValueError("bad line_range")
    rng = np.random.default_rng(seed)

    page = np.clip(rng.uniform(0.93, 0.98) + rng.normal(0, 0.008, (height, width)),
                   0.905, 1.0)

    mx = int(round(width * rng.uniform(0.06, 0.1)))
    my = int(round(height * rng.uniform(0.06, 0.1)))
    t_lo = max(2, round(height / 85))
    t_hi = max(t_lo + 1, round(height / 36))

    lines = []
    y = my
    max_lines = int(rng.integers(lo, hi + 1))
    while len(lines) < max_lines:
        t = int(rng.integers(t_lo, t_hi + 1))
        if y + t > height - my:
            break
        x0 = mx + (int(rng.integers(0, width // 12)) if rng.random() < 0.15 else 0)
        full = width - mx
        x1 = full if rng.random() > 0.3 else int(x0 + (full - x0) * rng.uniform(0.5, 1.0))
        if x1 - x0 >= width * 0.25:
            _draw_bar(page, rng, x0, x1, y, t)
            cy = y + (t - 1) / 2.0
            lines.append(Textline(np.array([[float(x0), cy], [float(x1 - 1), cy]]),
                                  float(t)))
        y += t + int(round(t * rng.uniform(1.0, 1.8))) + 3
    if len(lines) < lo:
        raise ValueError(
            f"page {height}x{width} too small for {lo} lines (placed {len(lines)})")
    return page, lines


def _draw_bar(page, rng, x0, x1, y, t):
    # words: dark runs separated by short gaps the annotator can bridge
    x = x0
    while x < x1:
        wl = int(rng.integers(8, 30))
        end = min(x + wl, x1)
        ink = rng.uniform(0.05, 0.25)
        col = np.clip(ink + rng.normal(0, 0.02, (t, end - x)), 0.02, 0.3)
        page[y:y + t, x:end] = col
        x = end + int(rng.integers(3, 8))


def make_background(seed, height: int, width: int) -> np.ndarray:
    """Procedural photo background, (H, W, 3) float, darker than the page."""
    from scipy import ndimage
    rng = np.random.default_rng(seed)
    style = rng.integers(0, 3)
    c0 = rng.uniform(0.15, 0.7, size=3)
    if style == 0:
        bg = np.broadcast_to(c0, (height, width, 3)).copy()
    elif style == 1:
        c1 = np.clip(c0 + rng.uniform(-0.25, 0.25, size=3), 0.05, 0.8)
        ang = rng.uniform(0, 2 * np.pi)
        ys, xs = np.mgrid[0:height, 0:width].astype(np.float64)
        ramp = (np.cos(ang) * xs / max(width - 1, 1)
                + np.sin(ang) * ys / max(height - 1, 1))
        ramp = (ramp - ramp.min()) / max(ramp.max() - ramp.min(), 1e-9)
        bg = c0 + ramp[..., None] * (c1 - c0)
    else:
        noise = ndimage.gaussian_filter(rng.random((height, width)), 8.0)
        noise = (noise - noise.min()) / max(noise.max() - noise.min(), 1e-9)
        amp = rng.uniform(0.1, 0.3)
        bg = np.clip(c0 + (noise[..., None] - 0.5) * amp, 0.05, 0.8)
    bg = bg + rng.normal(0, 0.01, (height, width, 3))
    return np.clip(bg, 0.0, 0.82)


def render_sample(flat: np.ndarray, lines: list, params: DeformationParams,
                  background: np.ndarray) -> DistortedSample:
    """Render the distorted photo of a flat pageplus all ground truth.

    The photo grid equals the page grid, so the rectified target shares
    H x W with the input.  The page is composited over ``background``
    (which must be at least as large as the page).
    """
    flat = np.asarray(flat, dtype=np.float64)
    if flat.ndim != 2:
        raise ValueError("flat page must be grayscale (H, W)")
    height, width = flat.shape
    background = np.asarray(background, dtype=np.float64)
    if background.ndim != 3 or background.shape[2] != 3:
        raise ValueError("background must be (H, W, 3)")
    if background.shape[0] < height or background.shape[1] < width:
        raise ValueError("background smaller than the output canvas")

    h_fwd, flow, g, mask, coords = _build_geometry(params, height, width)
    page_view = sample_image(flat, g[..., 0], g[..., 1], border="clamp")
    img = background[:height, :width].copy()
    img[mask] = page_view[mask][:, None]

    mapped = []
    for ln in lines:
        u, v, _ = eval_forward(params, height, width, ln.points[:, 0], ln.points[:, 1])
        mapped.append(Textline(np.stack([u, v], axis=1), ln.thickness))

    return DistortedSample(img=img, flat=flat, mask=mask, flow=flow,
                           coords3d=coords, lines=mapped, flat_lines=list(lines),
                           params=params)


def make_sample(seed: int, height: int = 256, width: int = 256,
                mix=DEFAULT_MIX, line_range=(8, 20),
                max_attempts: int = 20) -> DistortedSample:
    """Build one fully annotated sample from a single integer seed.

    Page content, background, and deformation draw their own streams from
    the seed, so samples are reproducible item by item.  Non-invertible
    deformation draws are rejected and redrawn (bounded attempts).
    """
    flat, lines = make_flat_page(np.random.SeedSequence([seed, 0]), height, width,
                                 line_range)
    bg = make_background(np.random.SeedSequence([seed, 1]), height, width)
    last_err = None
    for attempt in range(max_attempts):
        params = sample_deformation(seed * 100 + attempt, mix=mix)
        try:
            sample = render_sample(flat, lines, params, bg)
            sample.seed = int(seed)
            return sample
        except NonInvertibleDeformation as exc:
            last_err = exc
    raise NonInvertibleDeformation(
        f"no invertible draw for seed {seed} in {max_attempts} attempts: {last_err}")


def sample_dir_name(index: int) -> str:
    return f"sample_{index:05d}"


def _png_bytes(image: np.ndarray) -> bytes:
    from PIL import Image
    data = np.clip(np.round(np.asarray(image, dtype=np.float64) * 255.0), 0, 255)
    buf = io.BytesIO()
    Image.fromarray(data.astype(np.uint8)).save(buf, format="PNG")
    return buf.getvalue()


def write_sample(directory, sample: DistortedSample) -> None:
    """Write one sample directory (img/flat/mask PNGs, flow, coords, lines, meta).

    Every file is written atomically; meta.json records the deformation
    parameters, seed, and the 3D-coordinate normalization convention.
    """
    import os
    os.makedirs(directory, exist_ok=True)
    join = lambda name: os.path.join(os.fspath(directory), name)
    formats.atomic_write_bytes(join("img.png"), _png_bytes(sample.img))
    formats.atomic_write_bytes(join("flat.png"), _png_bytes(sample.flat))
    formats.atomic_write_bytes(join("mask.png"),
                               _png_bytes(sample.mask.astype(np.float64)))
    formats.write_warp_field(join("flow.dgwf"), sample.flow)
    formats.write_coords3d(join("coords.dg3d"), sample.coords3d)
    formats.write_textlines(join("lines.jsonl"), sample.lines)
    meta = {
        "format_version": META_VERSION,
        "seed": sample.seed,
        "height": int(sample.flat.shape[0]),
        "width": int(sample.flat.shape[1]),
        "kind": sample.params.kind,
        "params": dataclasses.asdict(sample.params),
        "coords_convention": COORDS_CONVENTION,
        "flat_lines": [
            {"points": ln.points.tolist(), "thickness": ln.thickness}
            for ln in sample.flat_lines
        ],
    }
    formats.write_json(join("meta.json"), meta)


def _params_from_meta(meta: dict) -> DeformationParams:
    raw = dict(meta["params"])
    for key in ("center", "jitter"):
        raw[key] = tuple(raw[key])
    for key in ("ridges", "bumps"):
        raw[key] = tuple(tuple(row) for row in raw[key])
    return DeformationParams(**raw)


def read_sample(directory) -> DistortedSample:
    """Load a sample directory written by :func:`write_sample`."""
    import os
    join = lambda name: os.path.join(os.fspath(directory), name)
    meta = formats.read_json(join("meta.json"))
    flat_lines = [Textline(np.asarray(d["points"], dtype=np.float64),
                           float(d["thickness"]))
                  for d in meta.get("flat_lines", [])]
    return DistortedSample(
        img=formats.load_image(join("img.png")),
        flat=formats.load_image(join("flat.png")),
        mask=formats.load_mask(join("mask.png")),
        flow=formats.read_warp_field(join("flow.dgwf")),
        coords3d=formats.read_coords3d(join("coords.dg3d")),
        lines=formats.read_textlines(join("lines.jsonl")),
        flat_lines=flat_lines,
        params=_params_from_meta(meta),
        seed=meta.get("seed"),
    )


def generate_dataset(out_dir, count: int, seed: int, height: int = 256,
                     width: int = 256, mix=DEFAULT_MIX,
                     progress=None) -> list:
    """Generate ``count`` samples under ``out_dir``; returns their paths."""
    import os
    os.makedirs(out_dir, exist_ok=True)
    paths = []
    for i in range(count):
        sample = make_sample(seed + i, height=height, width=width, mix=mix)
        path = os.path.join(os.fspath(out_dir), sample_dir_name(i))
        write_sample(path, sample)
        paths.append(path)
        if progress is not None:
            progress(i + 1, count)
    return paths
