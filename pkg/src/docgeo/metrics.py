"""Evaluation metrics for rectified document images.

Image similarity follows the usual protocol for this task: both images are
resized to a fixed 598,400-pixel area, converted to grayscale in [0, 1],
and compared with multi-scale SSIM using the canonical five scale weights.
Geometric quality is Local Distortion: the mean Euclidean displacement of a
dense correspondence field between the reference scan and the rectified
image.  OCR quality is Levenshtein edit distance and character error rate
against reference text, with the engine run out of process.
"""

from __future__ import annotations

import os
import shutil
import subprocess
import unicodedata
import warnings
from dataclasses import dataclass

import numpy as np
from PIL import Image
from scipy import ndimage

from .geometry import identity_coords, sample_image

__all__ = [
    "MS_SSIM_WEIGHTS",
    "TARGET_AREA",
    "to_gray",
    "resize_to_area",
    "ssim",
    "ms_ssim",
    "local_distortion",
    "dense_match",
    "EditCounts",
    "edit_distance",
    "cer",
    "normalize_text",
    "OCRUnavailable",
    "OCRFailed",
    "run_ocr",
]

# five-scale weights used throughout the literature (they sum to 1.0001)
MS_SSIM_WEIGHTS = (0.0448, 0.2856, 0.3001, 0.2363, 0.1333)

# evaluation area: every image is rescaled to this many pixels before MS-SSIM
TARGET_AREA = 598400


def to_gray(image: np.ndarray) -> np.ndarray:
    """Luma conversion (ITU-R 601) for RGB input; grayscale passes through."""
    image = np.asarray(image, dtype=np.float64)
    if image.ndim == 2:
        return image
    if image.ndim == 3 and image.shape[2] == 3:
        return image[..., 0] * 0.299 + image[..., 1] * 0.587 + image[..., 2] * 0.114
    raise ValueError(f"expected (H, W) or (H, W, 3), got {image.shape}")


def resize_to_area(image: np.ndarray, area: int = TARGET_AREA) -> np.ndarray:
    """Rescale so H*W lands on ``area`` (within rounding), keeping aspect.

    The scale is s = sqrt(area / (H*W)); each side is rounded to the
    nearest integer, which keeps the output area within a fraction of a
    percent of the target.  Bilinear resampling.
    """
    image = np.asarray(image, dtype=np.float64)
    h, w = image.shape[:2]
    if h < 1 or w < 1:
        raise ValueError("empty image")
    s = float(np.sqrt(area / (h * w)))
    nh, nw = max(int(round(h * s)), 1), max(int(round(w * s)), 1)
    if (nh, nw) == (h, w):
        return image.copy()
    if image.ndim == 2:
        planes = [image]
    else:
        planes = [image[..., c] for c in range(image.shape[2])]
    resized = [np.asarray(Image.fromarray(p.astype(np.float32), mode="F")
                          .resize((nw, nh), Image.BILINEAR), dtype=np.float64)
               for p in planes]
    return resized[0] if image.ndim == 2 else np.stack(resized, axis=-1)


def _gaussian_window(size: int, sigma: float) -> np.ndarray:
    xs = np.arange(size, dtype=np.float64) - (size - 1) / 2.0
    k = np.exp(-(xs ** 2) / (2.0 * sigma ** 2))
    return k / k.sum()


def _window_filter(img: np.ndarray, kernel: np.ndarray) -> np.ndarray:
    out = ndimage.correlate1d(img, kernel, axis=0, mode="constant")
    out = ndimage.correlate1d(out, kernel, axis=1, mode="constant")
    crop = (len(kernel) - 1) // 2
    return out[crop:-crop or None, crop:-crop or None]


def _ssim_and_cs(a, b, window, sigma, k1, k2, data_range):
    kern = _gaussian_window(window, sigma)
    c1 = (k1 * data_range) ** 2
    c2 = (k2 * data_range) ** 2
    mu1 = _window_filter(a, kern)
    mu2 = _window_filter(b, kern)
    mu1_sq, mu2_sq, mu12 = mu1 * mu1, mu2 * mu2, mu1 * mu2
    s1 = _window_filter(a * a, kern) - mu1_sq
    s2 = _window_filter(b * b, kern) - mu2_sq
    s12 = _window_filter(a * b, kern) - mu12
    cs_map = (2.0 * s12 + c2) / (s1 + s2 + c2)
    ssim_map = ((2.0 * mu12 + c1) / (mu1_sq + mu2_sq + c1)) * cs_map
    return float(ssim_map.mean()), float(cs_map.mean())


def ssim(a: np.ndarray, b: np.ndarray, window: int = 11, sigma: float = 1.5,
         k1: float = 0.01, k2: float = 0.03, data_range: float = 1.0) -> float:
    """Single-scale SSIM over valid (fully covered) Gaussian windows."""
    a, b = to_gray(a), to_gray(b)
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch {a.shape} vs {b.shape}")
    if min(a.shape) < window:
        raise ValueError(f"image smaller than the {window}x{window} window")
    return _ssim_and_cs(a, b, window, sigma, k1, k2, data_range)[0]


def _downsample2(img: np.ndarray) -> np.ndarray:
    h, w = img.shape
    img = img[: h - (h % 2), : w - (w % 2)]
    return (img[0::2, 0::2] + img[0::2, 1::2] + img[1::2, 0::2] + img[1::2, 1::2]) / 4.0


def ms_ssim(a: np.ndarray, b: np.ndarray, weights=MS_SSIM_WEIGHTS,
            window: int = 11, sigma: float = 1.5, k1: float = 0.01,
            k2: float = 0.03, data_range: float = 1.0) -> float:
    """Multi-scale SSIM with the standard five scale weights.

    Contrast/structure terms are taken at every scale and the luminance
    term at the coarsest; negative terms are clamped at zero, so the result
    stays in [0, 1] for non-negative-luminance inputs.  Images too small
    for the full pyramid fall back to fewer scales (renormalized weights)
    with a warning.
    """
    a, b = to_gray(a), to_gray(b)
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch {a.shape} vs {b.shape}")
    weights = np.asarray(weights, dtype=np.float64)
    levels = len(weights)
    max_levels = 0
    side = min(a.shape)
    while side >= window and max_levels < levels:
        max_levels += 1
        side //= 2
    if max_levels == 0:
        raise ValueError(f"image smaller than the {window}x{window} window")
    if max_levels < levels:
        warnings.warn(
            f"image too small for {levels} MS-SSIM scales; using {max_levels}",
            stacklevel=2)
        weights = weights[:max_levels] / weights[:max_levels].sum() * weights.sum()
        levels = max_levels

    vals = []
    ca, cb = a, b
    for lvl in range(levels):
        s, cs = _ssim_and_cs(ca, cb, window, sigma, k1, k2, data_range)
        vals.append(max(s, 0.0) if lvl == levels - 1 else max(cs, 0.0))
        if lvl != levels - 1:
            ca, cb = _downsample2(ca), _downsample2(cb)
    out = 1.0
    for v, wgt in zip(vals, weights):
        out *= v ** wgt
    return float(out)


def local_distortion(matches: np.ndarray, valid: np.ndarray | None = None) -> float:
    """Mean Euclidean displacement of a dense correspondence field.

    ``matches`` is (H, W, 2): for the reference pixel at (x, y), the
    position of its counterpart in the rectified image.  ``valid``
    optionally restricts the mean to a boolean mask.
    """
    matches = np.asarray(matches, dtype=np.float64)
    if matches.ndim != 3 or matches.shape[2] != 2:
        raise ValueError(f"matches must be (H, W, 2), got {matches.shape}")
    delta = matches - identity_coords(matches.shape[0], matches.shape[1])
    dist = np.sqrt((delta ** 2).sum(axis=-1))
    if valid is not None:
        valid = np.asarray(valid, dtype=bool)
        if valid.shape != dist.shape:
            raise ValueError("valid mask shape mismatch")
        if not valid.any():
            raise ValueError("valid mask is empty")
        dist = dist[valid]
    return float(dist.mean())


def _local_stats(img: np.ndarray, size: int):
    mean = ndimage.uniform_filter(img, size=size, mode="nearest")
    sq = ndimage.uniform_filter(img * img, size=size, mode="nearest")
    var = np.maximum(sq - mean * mean, 0.0)
    return mean, var


def dense_match(ref: np.ndarray, rect: np.ndarray, patch: int = 9,
                radius: int = 2, min_side: int = 24,
                smooth_sigma: float = 2.0) -> np.ndarray:
    """Dense correspondences from ``ref`` pixels into ``rect``.

    Coarse-to-fine normalized cross-correlation: at each pyramid level the
    rectified image is pre-warped by the current field, integer offsets
    within ``radius`` are scored by windowed NCC, the best offset gets a
    parabolic sub-pixel refinement, and the updated field is smoothed
    (Gaussian prior) before moving a level finer.  Texture-free regions
    keep the propagated field.  A fully blank pair degenerates to identity
    with a warning.  Returns (H, W, 2) absolute positions.
    """
    ref = to_gray(ref)
    rect = to_gray(rect)
    if ref.shape != rect.shape:
        raise ValueError(f"shape mismatch {ref.shape} vs {rect.shape}")
    h, w = ref.shape
    if float(ref.std()) < 1e-9 or float(rect.std()) < 1e-9:
        warnings.warn("dense_match: blank image pair, returning identity", stacklevel=2)
        return identity_coords(h, w)

    pyr_ref, pyr_rect = [ref], [rect]
    while min(pyr_ref[-1].shape) >= 2 * min_side:
        pyr_ref.append(_downsample2(pyr_ref[-1]))
        pyr_rect.append(_downsample2(pyr_rect[-1]))

    flow = None
    var_floor = 1e-6
    for lvl in range(len(pyr_ref) - 1, -1, -1):
        r_l, t_l = pyr_ref[lvl], pyr_rect[lvl]
        lh, lw = r_l.shape
        if flow is None:
            flow = np.zeros((lh, lw, 2), dtype=np.float64)
        else:
            planes = [np.asarray(Image.fromarray((2.0 * flow[..., c]).astype(np.float32),
                                                 mode="F").resize((lw, lh), Image.BILINEAR),
                       dtype=np.float64) for c in range(2)]
            flow = np.stack(planes, axis=-1)

        ident = identity_coords(lh, lw)
        warped = sample_image(t_l, ident[..., 0] + flow[..., 0],
                              ident[..., 1] + flow[..., 1], border="clamp")
        mu_r, var_r = _local_stats(r_l, patch)
        best_score = np.full((lh, lw), -np.inf)
        best_dx = np.zeros((lh, lw), dtype=np.int64)
        best_dy = np.zeros((lh, lw), dtype=np.int64)
        score_cache = {}
        for dy in range(-radius, radius + 1):
            for dx in range(-radius, radius + 1):
                shifted = sample_image(warped, ident[..., 0] + dx,
                                       ident[..., 1] + dy, border="clamp")
                mu_s, var_s = _local_stats(shifted, patch)
                cov = ndimage.uniform_filter(r_l * shifted, size=patch,
                                             mode="nearest") - mu_r * mu_s
                ncc = cov / np.sqrt(np.maximum(var_r * var_s, var_floor ** 2))
                score_cache[(dx, dy)] = ncc
                better = ncc > best_score
                best_score = np.where(better, ncc, best_score)
                best_dx = np.where(better, dx, best_dx)
                best_dy = np.where(better, dy, best_dy)

        # parabolic sub-pixel refinement along each axis where neighbors exist
        sub_dx = best_dx.astype(np.float64)
        sub_dy = best_dy.astype(np.float64)
        for axis, best_int, sub in (("x", best_dx, sub_dx), ("y", best_dy, sub_dy)):
            interior = np.abs(best_int) < radius
            if not interior.any():
                continue
            here = best_score
            plus = np.full_like(here, -np.inf)
            minus = np.full_like(here, -np.inf)
            for (dx, dy), ncc in score_cache.items():
                if axis == "x":
                    sel_p = (best_dx == dx - 1) & (best_dy == dy)
                    sel_m = (best_dx == dx + 1) & (best_dy == dy)
                else:
                    sel_p = (best_dy == dy - 1) & (best_dx == dx)
                    sel_m = (best_dy == dy + 1) & (best_dx == dx)
                plus = np.where(sel_p, ncc, plus)
                minus = np.where(sel_m, ncc, minus)
            denom = minus - 2.0 * here + plus
            ok = interior & np.isfinite(plus) & np.isfinite(minus) & (denom < -1e-12)
            delta = np.zeros_like(here)
            delta[ok] = 0.5 * (minus[ok] - plus[ok]) / denom[ok]
            sub += np.clip(delta, -0.5, 0.5) * ok

        textured = var_r > 25.0 * var_floor
        update = np.stack([sub_dx, sub_dy], axis=-1) * textured[..., None]
        flow = flow + update
        flow[..., 0] = ndimage.gaussian_filter(flow[..., 0], smooth_sigma, mode="nearest")
        flow[..., 1] = ndimage.gaussian_filter(flow[..., 1], smooth_sigma, mode="nearest")

    return identity_coords(h, w) + flow


@dataclass(frozen=True)
class EditCounts:
    """Levenshtein distance with its operation breakdown.

    Among all minimum-cost alignments the one maximizing character matches
    is used, which makes the (deletions, insertions, substitutions) split
    deterministic and symmetric: swapping the arguments swaps deletions
    with insertions.
    """

    distance: int
    deletions: int
    insertions: int
    substitutions: int
    matches: int


def edit_distance(ref: str, hyp: str) -> EditCounts:
    """Unit-cost Levenshtein distance from ``ref`` to ``hyp`` with counts."""
    n, m = len(ref), len(hyp)
    # DP over (cost, -matches), lexicographic; transitions add constants so
    # the lexicographic minimum has optimal substructure
    prev = [(j, 0) for j in range(m + 1)]
    for i in range(1, n + 1):
        ri = ref[i - 1]
        cur = [(i, 0)]
        for j in range(1, m + 1):
            if ri == hyp[j - 1]:
                cd, md = prev[j - 1]
                best = (cd, md - 1)
            else:
                cd, md = prev[j - 1]
                best = (cd + 1, md)
            cu, mu = prev[j]
            cand = (cu + 1, mu)
            if cand < best:
                best = cand
            cl, ml = cur[j - 1]
            cand = (cl + 1, ml)
            if cand < best:
                best = cand
            cur.append(best)
        prev = cur
    cost, neg_matches = prev[m]
    matched = -neg_matches
    subs = n + m - 2 * matched - cost
    dels = n - matched - subs
    ins = m - matched - subs
    return EditCounts(distance=cost, deletions=dels, insertions=ins,
                      substitutions=subs, matches=matched)


def cer(ref: str, hyp: str) -> float:
    """Character error rate (d + i + s) / len(ref); empty ref is undefined."""
    if len(ref) == 0:
        raise ValueError("CER is undefined for an empty reference")
    return edit_distance(ref, hyp).distance / len(ref)


def normalize_text(text: str) -> str:
    """Unicode NFC plus whitespace collapse, applied before OCR scoring."""
    text = unicodedata.normalize("NFC", text)
    return " ".join(text.split())


class OCRUnavailable(RuntimeError):
    """The configured OCR engine binary is not on PATH."""


class OCRFailed(RuntimeError):
    """The OCR engine ran but exited nonzero."""


def run_ocr(image_path, binary: str | None = None, timeout: float = 120.0) -> str:
    """Run the external OCR engine on an image and return its text.

    The engine binary comes from ``binary``, else the ``DOCGEO_OCR_BIN``
    environment variable, else ``tesseract``, and is invoked as
    ``<bin> <image> stdout``.  Raises :class:`OCRUnavailable` when the
    binary cannot be found and :class:`OCRFailed` on a nonzero exit.
    """
    binary = binary or os.environ.get("DOCGEO_OCR_BIN") or "tesseract"
    resolved = shutil.which(binary)
    if resolved is None:
        raise OCRUnavailable(f"OCR engine {binary!r} not found on PATH")
    proc = subprocess.run([resolved, os.fspath(image_path), "stdout"],
                          capture_output=True, timeout=timeout)
    if proc.returncode != 0:
        raise OCRFailed(
            f"{binary} exited {proc.returncode}: {proc.stderr.decode('utf-8', 'replace')[:500]}")
    return proc.stdout.decode("utf-8", "replace")
