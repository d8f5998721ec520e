"""Synthetic data: deformation sampling, exact ground truth, sample I/O."""

import dataclasses

import numpy as np
import pytest

from docgeo import synthgen
from docgeo.geometry import apply_flow, identity_coords
from docgeo.metrics import ms_ssim, to_gray
from docgeo.synthgen import (
    DEFAULT_MIX,
    DeformationParams,
    NonInvertibleDeformation,
    deformation_to_maps,
    generate_dataset,
    make_background,
    make_flat_page,
    make_sample,
    read_sample,
    render_sample,
    sample_deformation,
    write_sample,
)


def _first_sample_of_kind(kind, size=192, start=0):
    for seed in range(start, start + 300):
        s = make_sample(seed, size, size)
        if s.params.kind == kind:
            return s
    raise AssertionError(f"no {kind} sample found")


# ------------------------------------------------------------- sampling

def test_sample_deformation_deterministic():
    a = sample_deformation(42)
    b = sample_deformation(42)
    assert a == b


def test_sample_deformation_amplitude_bounds():
    for seed in range(200):
        p = sample_deformation(seed)
        assert 0.0 <= p.amplitude <= 0.35
        if p.kind == "flat":
            assert p.amplitude == 0.0


def test_sample_deformation_mix_frequencies():
    counts = {k: 0 for k in synthgen.KINDS}
    n = 10000
    for seed in range(n):
        counts[sample_deformation(seed).kind] += 1
    for kind, want in zip(synthgen.KINDS, DEFAULT_MIX):
        assert abs(counts[kind] / n - want) < 0.03


def test_sample_deformation_rejects_bad_mix():
    with pytest.raises(ValueError):
        sample_deformation(0, mix=(0.5, 0.5, 0.5, 0.5))


def test_params_validation():
    with pytest.raises(ValueError):
        DeformationParams(kind="curl", seed=0, amplitude=0.5)
    with pytest.raises(ValueError):
        DeformationParams(kind="spiral", seed=0, amplitude=0.1)


# ---------------------------------------------------------------- maps

def test_flat_kind_gives_identity_ground_truth():
    p = DeformationParams(kind="flat", seed=0, amplitude=0.0)
    h_fwd, flow, coords = deformation_to_maps(p, 128, 128)
    assert np.array_equal(h_fwd, identity_coords(128, 128))
    assert not flow.dx.any() and not flow.dy.any()
    # Z channel constant at the zero-height level inside the all-page mask
    assert np.allclose(coords[..., 2], 0.5, atol=1e-7)


def test_flow_equals_forward_minus_identity():
    p = sample_deformation(1)
    h_fwd, flow, _ = deformation_to_maps(p, 144, 160)
    ident = identity_coords(144, 160)
    assert np.allclose(flow.dx, (h_fwd[..., 0] - ident[..., 0]).astype(np.float32))
    assert np.allclose(flow.dy, (h_fwd[..., 1] - ident[..., 1]).astype(np.float32))


def test_jacobian_positive_on_assorted_draws():
    checked = 0
    for seed in range(40):
        p = sample_deformation(seed)
        if p.kind == "flat":
            continue
        h_fwd, _, _ = deformation_to_maps(p, 128, 128)
        du_dx = np.gradient(h_fwd[..., 0], axis=1)
        du_dy = np.gradient(h_fwd[..., 0], axis=0)
        dv_dx = np.gradient(h_fwd[..., 1], axis=1)
        dv_dy = np.gradient(h_fwd[..., 1], axis=0)
        det = du_dx * dv_dy - du_dy * dv_dx
        assert det.min() > 0
        checked += 1
    assert checked > 20


def test_curl_displacement_monotone_in_amplitude():
    base = DeformationParams(kind="curl", seed=0, amplitude=0.1, bend_angle=0.1,
                             center=(0.5, 0.5), jitter=(1.0, 0.0, 0.0, 1.0),
                             margin=0.05)
    prev = -1.0
    for a in np.linspace(0.04, 0.35, 8):
        p = dataclasses.replace(base, amplitude=float(a))
        _, flow, _ = deformation_to_maps(p, 160, 160)
        peak = float(np.abs(flow.dx).max())
        assert peak >= prev - 1e-9
        prev = peak


def test_overfolded_draw_is_rejected():
    p = DeformationParams(
        kind="fold", seed=0, amplitude=0.3,
        ridges=((0.5, 0.5, 0.2, 1.2, 0.03), (0.5, 0.5, 0.2, 1.2, 0.03)))
    with pytest.raises(NonInvertibleDeformation):
        deformation_to_maps(p, 128, 128)


# ---------------------------------------------------------------- pages

def test_flat_page_deterministic_and_in_range():
    page1, lines1 = make_flat_page(7, 256, 256)
    page2, lines2 = make_flat_page(7, 256, 256)
    assert np.array_equal(page1, page2)
    assert len(lines1) == len(lines2)
    assert 8 <= len(lines1) <= 20
    # strokes <= 0.3, paper >= 0.9: nothing in between
    mid = (page1 > 0.35) & (page1 < 0.9)
    assert not mid.any()
    assert page1.max() <= 1.0 and page1.min() >= 0.0


def test_flat_page_lines_cover_dark_pixels():
    page, lines = make_flat_page(3, 256, 256)
    for ln in lines:
        y = int(round(ln.points[0, 1]))
        x0, x1 = int(ln.points[0, 0]), int(ln.points[-1, 0])
        row = page[y, x0:x1 + 1]
        # glyph bars leave word gaps, but most of the row is ink
        assert (row <= 0.3).mean() > 0.5


def test_flat_page_too_small_errors():
    with pytest.raises(ValueError):
        make_flat_page(0, 64, 64)


def test_background_range_and_determinism():
    for seed in range(6):
        bg = make_background(seed, 128, 140)
        assert bg.shape == (128, 140, 3)
        assert bg.min() >= 0.0 and bg.max() <= 0.82
    assert np.array_equal(make_background(2, 96, 96), make_background(2, 96, 96))


# -------------------------------------------------------------- samples

@pytest.mark.parametrize("kind", ["curl", "fold", "crumple", "flat"])
def test_round_trip_ms_ssim_per_kind(kind):
    s = _first_sample_of_kind(kind)
    rect = apply_flow(to_gray(s.img), s.flow)
    assert ms_ssim(rect, s.flat) >= 0.95


def test_mapped_lines_inside_mask():
    s = _first_sample_of_kind("curl")
    for ln in s.lines:
        for x, y in ln.points:
            assert s.mask[int(round(y)), int(round(x))]


def test_background_shows_outside_mask():
    s = _first_sample_of_kind("fold")
    outside = ~s.mask
    assert outside.any()
    # photo gray outside the page stays at background levels, never paper-white
    assert to_gray(s.img)[outside].max() <= 0.85


def test_coords3d_contract():
    s = _first_sample_of_kind("crumple")
    c = s.coords3d
    assert c.shape == (192, 192, 3)
    assert c.min() >= 0.0 and c.max() <= 1.0
    assert not c[~s.mask].any()
    # continuity inside the mask: compare against 8-neighborhood, eroded
    from scipy import ndimage
    interior = ndimage.binary_erosion(s.mask, np.ones((3, 3)))
    for ch in range(3):
        gy, gx = np.gradient(c[..., ch].astype(np.float64))
        mag = np.hypot(gx, gy)[interior]
        assert mag.max() < 0.05


def test_flat_sample_flow_is_identity():
    s = _first_sample_of_kind("flat")
    assert not s.flow.dx.any() and not s.flow.dy.any()
    assert s.mask.all()


def test_make_sample_deterministic():
    a = make_sample(5, 160, 160)
    b = make_sample(5, 160, 160)
    assert np.array_equal(a.img, b.img)
    assert np.array_equal(a.flow.dx, b.flow.dx)
    assert np.array_equal(a.coords3d, b.coords3d)
    assert a.params == b.params


def test_write_read_sample_round_trip(tmp_path):
    s = make_sample(9, 160, 160)
    write_sample(tmp_path / "s0", s)
    back = read_sample(tmp_path / "s0")
    assert np.array_equal(back.flow.dx, s.flow.dx)
    assert np.array_equal(back.flow.dy, s.flow.dy)
    assert np.array_equal(back.coords3d, s.coords3d)
    assert np.array_equal(back.mask, s.mask)
    assert np.max(np.abs(back.img - s.img)) <= 0.5 / 255 + 1e-9
    assert len(back.lines) == len(s.lines)
    for a, b in zip(back.lines, s.lines):
        assert np.allclose(a.points, b.points)
        assert a.thickness == b.thickness
    assert back.params == s.params
    assert back.seed == 9


def test_generate_dataset_deterministic_bytes(tmp_path):
    d1 = tmp_path / "run1"
    d2 = tmp_path / "run2"
    generate_dataset(d1, 2, seed=100, height=128, width=128)
    generate_dataset(d2, 2, seed=100, height=128, width=128)
    files1 = sorted(p.relative_to(d1) for p in d1.rglob("*") if p.is_file())
    files2 = sorted(p.relative_to(d2) for p in d2.rglob("*") if p.is_file())
    assert files1 == files2
    assert len(files1) == 2 * 7
    for rel in files1:
        assert (d1 / rel).read_bytes() == (d2 / rel).read_bytes()
