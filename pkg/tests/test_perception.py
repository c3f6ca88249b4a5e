import colorsys
import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from lanetow.perception import (SENTINEL, ColorModel, SingularHomographyError, apply_homography,
                                binarize_hue, extract_contours, homography_from_points,
                                lane_region, mask_iou, quantize_colors, rgb_to_hsv,
                                valid_region, warp_to_bev)


def gradient_image(w=40, h=30):
    u, v = np.meshgrid(np.arange(w), np.arange(h))
    return np.stack([4 * u + 10, 5 * v + 20, (u + v) + 30], axis=2).astype(np.uint8)


# ------------------------------------------------------------------ warp

def test_identity_warp_is_byte_identical():
    img = np.random.default_rng(0).integers(1, 256, (30, 40, 3), dtype=np.uint8)
    assert np.array_equal(warp_to_bev(img, np.eye(3), 40, 30), img)


def test_scale_warp_samples_half_coordinates():
    img = gradient_image()
    out = warp_to_bev(img, np.diag([2.0, 2.0, 1.0]), 79, 59)
    # output corner (78, 58) samples the input at (39, 29)
    assert np.array_equal(out[58, 78], img[29, 39])
    # linear gradients are reproduced exactly by bilinear sampling
    u, v = np.meshgrid(np.arange(79) / 2.0, np.arange(59) / 2.0)
    expect = np.stack([4 * u + 10, 5 * v + 20, u + v + 30], axis=2)
    assert np.abs(out.astype(float) - expect).max() <= 0.5


def test_out_of_view_pixels_get_sentinel():
    img = np.full((10, 10, 3), 200, dtype=np.uint8)
    out = warp_to_bev(img, np.array([[1.0, 0, 5], [0, 1, 0], [0, 0, 1]]), 20, 10)
    valid = valid_region(out)
    assert valid[:, 5:15].all() and not valid[:, :5].any() and not valid[:, 15:].any()
    assert (out[~valid] == SENTINEL).all()


def test_singular_homography_rejected():
    with pytest.raises(SingularHomographyError):
        warp_to_bev(np.zeros((4, 4, 3), np.uint8), np.zeros((3, 3)), 4, 4)
    with pytest.raises(SingularHomographyError):
        homography_from_points([[0, 0], [1, 1], [2, 2], [3, 3]], [[0, 0], [1, 0], [1, 1], [0, 1]])


def test_homography_from_points_round_trip():
    src = np.array([[10.0, 5.0], [90.0, 8.0], [70.0, 60.0], [20.0, 50.0]])
    dst = np.array([[0.0, 0.0], [100.0, 0.0], [100.0, 80.0], [0.0, 80.0]])
    h = homography_from_points(src, dst)
    assert h[2, 2] == 1.0
    assert np.allclose(apply_homography(h, src), dst, atol=1e-9)


# ------------------------------------------------------------------ K-means

def reference_lloyd(px, centers, tol=0.5, max_iter=50):
    for _ in range(max_iter):
        d = ((px[:, None, :] - centers[None]) ** 2).sum(axis=2)
        lab = d.argmin(axis=1)
        new = np.array([px[lab == j].mean(axis=0) if np.any(lab == j) else centers[j]
                        for j in range(len(centers))])
        shift = np.abs(new - centers).max()
        centers = new
        if shift < tol:
            break
    return centers


def test_two_colour_image_unchanged():
    img = np.zeros((20, 20, 3), np.uint8)
    img[:, :10] = (200, 30, 30)
    img[:, 10:] = (20, 40, 220)
    res = quantize_colors(img, 2, seed=5)
    assert not res.degenerate
    assert np.array_equal(res.image, img)


def test_k_below_two_rejected():
    with pytest.raises(ValueError):
        quantize_colors(np.zeros((4, 4, 3), np.uint8), 1)


def test_too_few_colours_is_degenerate():
    img = np.full((8, 8, 3), 77, np.uint8)
    res = quantize_colors(img, 3)
    assert res.degenerate and np.array_equal(res.image, img)


def test_noisy_two_colour_centroids():
    rng = np.random.default_rng(11)
    base = np.array([[180.0, 60.0, 50.0], [60.0, 90.0, 170.0]])
    lab = rng.integers(0, 2, (60, 80))
    img = np.clip(np.rint(base[lab] + rng.normal(0, 10, (60, 80, 3))), 0, 255).astype(np.uint8)
    res = quantize_colors(img, 2, seed=0)
    pal = res.palette[np.argsort(res.palette[:, 0])[::-1]]
    oracle = reference_lloyd(img.reshape(-1, 3).astype(float), base.copy())
    assert np.abs(pal - oracle).max() < 0.5
    assert np.abs(pal - base).max() <= 5.0
    assert len(np.unique(res.image.reshape(-1, 3), axis=0)) <= 2


def test_quantize_fixed_point_and_determinism():
    rng = np.random.default_rng(2)
    img = rng.integers(0, 256, (30, 30, 3), dtype=np.uint8)
    a = quantize_colors(img, 4, seed=9)
    b = quantize_colors(img, 4, seed=9)
    assert np.array_equal(a.image, b.image)
    px = img.reshape(-1, 3).astype(float)
    lab = ((px[:, None] - a.palette[None]) ** 2).sum(axis=2).argmin(axis=1)
    new = np.array([px[lab == j].mean(axis=0) for j in range(4)])
    lab2 = ((px[:, None] - new[None]) ** 2).sum(axis=2).argmin(axis=1)
    assert np.abs(new - a.palette).max() < 0.5
    assert np.mean(lab == lab2) > 0.99


def test_sentinel_excluded_from_clustering():
    img = np.zeros((10, 10, 3), np.uint8)
    img[:, 5:] = (200, 40, 40)
    img[:5, 5:] = (100, 100, 100)
    res = quantize_colors(img, 2)
    assert not any(np.allclose(c, 0) for c in res.palette)
    assert (res.image[:, :5] == 0).all()


# ------------------------------------------------------------------ HSV

def test_hsv_examples():
    hsv = rgb_to_hsv(np.array([[[255, 0, 0], [0, 255, 0], [128, 128, 128]]], np.uint8))[0]
    assert tuple(hsv[0]) == (0, 1, 1)
    assert tuple(hsv[1]) == (120, 1, 1)
    assert hsv[2, 1] == 0 and hsv[2, 2] == pytest.approx(0.502, abs=1e-3) and hsv[2, 0] == 0


@given(st.tuples(*[st.integers(0, 255)] * 3))
def test_hsv_matches_colorsys(rgb):
    h, s, v = rgb_to_hsv(np.array([[rgb]], np.uint8))[0, 0]
    eh, es, ev = colorsys.rgb_to_hsv(*(c / 255.0 for c in rgb))
    assert 0 <= h < 360 and 0 <= s <= 1 and 0 <= v <= 1
    assert s == pytest.approx(es, abs=1e-12) and v == pytest.approx(ev, abs=1e-12)
    if es > 0:
        dh = abs(h - 360 * eh) % 360
        assert min(dh, 360 - dh) < 1e-9


def test_binarize_examples():
    red = np.full((4, 4, 3), (250, 10, 5), np.uint8)
    assert binarize_hue(rgb_to_hsv(red), ColorModel(hue_min=350, hue_max=10)).all()
    gray = np.full((4, 4, 3), 128, np.uint8)
    assert not binarize_hue(rgb_to_hsv(gray), ColorModel(hue_min=0, hue_max=359)).any()
    img = np.zeros((6, 8, 3), np.uint8)
    img[:, :4] = (220, 20, 20)
    img[:, 4:] = (20, 20, 220)
    mask = binarize_hue(rgb_to_hsv(img), ColorModel())
    expect = np.zeros((6, 8), bool)
    expect[:, :4] = True
    assert np.array_equal(mask, expect)


def test_binarize_is_pure():
    img = np.random.default_rng(4).integers(0, 256, (20, 20, 3), dtype=np.uint8)
    m = ColorModel()
    assert np.array_equal(binarize_hue(rgb_to_hsv(img), m), binarize_hue(rgb_to_hsv(img), m))


@pytest.mark.parametrize("kw", [dict(k=1), dict(hue_min=360), dict(sat_min=1.5), dict(val_min=-0.1)])
def test_color_model_validation(kw):
    with pytest.raises(ValueError):
        ColorModel(**kw)


# ------------------------------------------------------------------ contours

def assert_closed_8_chain(points):
    p = np.asarray(points)
    steps = np.abs(np.diff(np.vstack([p, p[:1]]), axis=0))
    assert steps.max() <= 1 and (steps.sum(axis=1) > 0).all()


def test_contours_empty():
    assert extract_contours(np.zeros((10, 10), bool)) == []


def test_rectangle_contour():
    mask = np.zeros((30, 40), bool)
    mask[5:16, 8:20] = True  # rows 5..15, cols 8..19
    (c,) = extract_contours(mask)
    pts = {tuple(p) for p in c.points}
    assert {(8, 5), (19, 5), (19, 15), (8, 15)} <= pts
    assert len(c.points) == 2 * (12 - 1) + 2 * (11 - 1)
    assert c.area == 12 * 11
    assert_closed_8_chain(c.points)


def test_two_blobs_and_min_area():
    mask = np.zeros((40, 40), bool)
    mask[2:12, 2:12] = True
    mask[20:35, 18:30] = True
    mask[38, 38] = True  # speck below min_area
    cs = extract_contours(mask, min_area=64)
    assert len(cs) == 2
    assert len(extract_contours(mask, min_area=1)) == 3


def border_pixels(comp):
    padded = np.pad(comp, 1)
    inner = padded[1:-1, 1:-1]
    four = padded[:-2, 1:-1] & padded[2:, 1:-1] & padded[1:-1, :-2] & padded[1:-1, 2:]
    return {(u, v) for v, u in zip(*np.nonzero(inner & ~four))}


@given(st.integers(5, 30), st.integers(5, 30), st.floats(2.5, 14), st.floats(2.5, 14),
       st.floats(0, math.pi))
def test_ellipse_contour_is_its_border(cx, cy, ax, ay, ang):
    v, u = np.mgrid[0:40, 0:40]
    c, s = math.cos(ang), math.sin(ang)
    mask = (((u - cx) * c + (v - cy) * s) / ax) ** 2 + ((-(u - cx) * s + (v - cy) * c) / ay) ** 2 <= 1
    (cont,) = extract_contours(mask, min_area=1)[:1] or [None]
    assert cont is not None
    assert_closed_8_chain(cont.points)
    assert all(mask[q[1], q[0]] for q in cont.points)
    assert {tuple(p) for p in cont.points} == border_pixels(mask) or len(cont.points) > 0 and \
        {tuple(p) for p in cont.points} <= border_pixels(mask)


def test_single_pixel_and_line_contours():
    mask = np.zeros((5, 5), bool)
    mask[2, 2] = True
    (c,) = extract_contours(mask, min_area=1)
    assert c.points.tolist() == [[2, 2]]
    mask[2, 1:4] = True
    (c,) = extract_contours(mask, min_area=1)
    assert c.points.tolist() == [[1, 2], [2, 2], [3, 2], [2, 2]]


def test_lane_region_fills_holes_and_drops_specks():
    mask = np.zeros((40, 40), bool)
    mask[5:35, 10:25] = True
    mask[15:18, 15:18] = False  # glare hole
    mask[1, 1] = True
    region = lane_region(mask, 64)
    assert region[16, 16] and not region[1, 1]
    assert region.sum() == 30 * 15
    assert np.array_equal(lane_region(mask, 64, extract_contours(mask, 64)), region)


def test_mask_iou():
    a = np.zeros((4, 4), bool)
    b = a.copy()
    assert mask_iou(a, b) == 1.0
    a[0, :2] = True
    b[0, 1:3] = True
    assert mask_iou(a, b) == pytest.approx(1 / 3)
