import math

import numpy as np
import pytest

import gloflow as gf
import gloflow.vision as vision
from gloflow.simulate import bilinear_crop


# ---------------------------------------------------------------------------
# brute-force oracles
# ---------------------------------------------------------------------------

def score_map_oracle(data: np.ndarray) -> np.ndarray:
    """Per-pixel structure-tensor min-eigenvalue via explicit loops.

    Same definition as the library (3x3 Sobel, replicate borders, 7x7
    window sums) but evaluated directly, pixel by pixel.
    """
    h, w = data.shape
    pad = np.pad(data, 1, mode="edge")
    ix = np.zeros((h, w))
    iy = np.zeros((h, w))
    for y in range(h):
        for x in range(w):
            win = pad[y : y + 3, x : x + 3]
            ix[y, x] = (
                (win[0, 2] + 2 * win[1, 2] + win[2, 2])
                - (win[0, 0] + 2 * win[1, 0] + win[2, 0])
            )
            iy[y, x] = (
                (win[2, 0] + 2 * win[2, 1] + win[2, 2])
                - (win[0, 0] + 2 * win[0, 1] + win[0, 2])
            )
    r = 3  # 7x7 score window
    pxx = np.pad(ix * ix, r, mode="edge")
    pxy = np.pad(ix * iy, r, mode="edge")
    pyy = np.pad(iy * iy, r, mode="edge")
    out = np.zeros((h, w))
    for y in range(h):
        for x in range(w):
            a = pxx[y : y + 7, x : x + 7].sum()
            b = pxy[y : y + 7, x : x + 7].sum()
            c = pyy[y : y + 7, x : x + 7].sum()
            out[y, x] = 0.5 * (a + c - math.sqrt((a - c) ** 2 + 4 * b * b))
    return out


def zncc_oracle(region: np.ndarray, tpl: np.ndarray) -> np.ndarray:
    th, tw = tpl.shape
    tz = tpl - tpl.mean()
    tn = math.sqrt((tz * tz).sum())
    ph = region.shape[0] - th + 1
    pw = region.shape[1] - tw + 1
    out = np.zeros((ph, pw))
    for y in range(ph):
        for x in range(pw):
            win = region[y : y + th, x : x + tw]
            wz = win - win.mean()
            d = math.sqrt((wz * wz).sum()) * tn
            out[y, x] = (wz * tz).sum() / d if d > 1e-12 else 0.0
    return out


# ---------------------------------------------------------------------------
# shi_tomasi
# ---------------------------------------------------------------------------

def test_score_map_matches_bruteforce():
    rng = gf.make_rng(21)
    img = gf.GrayImage(rng.random((48, 40)))
    got = gf.corner_score_map(img)
    want = score_map_oracle(img.data)
    np.testing.assert_allclose(got, want, atol=1e-9)


def test_uniform_image_has_no_corners():
    img = gf.GrayImage(np.full((64, 64), 0.5))
    assert gf.shi_tomasi(img) == []


def test_white_square_yields_its_four_corners():
    data = np.zeros((64, 64))
    data[24:40, 24:40] = 1.0
    img = gf.GrayImage(data)
    corners = gf.shi_tomasi(img, max_corners=10, quality=0.1, min_distance=8)
    assert len(corners) == 4
    # the 7x7 score window pulls each peak ~2 px diagonally inside the
    # square; the brute-force map is the authority for where maxima sit
    oracle = score_map_oracle(data)
    for ex, ey in [(24, 24), (39, 24), (24, 39), (39, 39)]:
        match = [c for c in corners if math.hypot(c.x - ex, c.y - ey) <= 3.0]
        assert len(match) == 1
        c = match[0]
        qy, qx = slice(max(int(c.y) - 2, 0), int(c.y) + 3), slice(max(int(c.x) - 2, 0), int(c.x) + 3)
        assert oracle[int(c.y), int(c.x)] == pytest.approx(oracle[qy, qx].max(), rel=1e-9)
        assert c.score == pytest.approx(oracle[int(c.y), int(c.x)], rel=1e-9)


def test_checkerboard_respects_count_and_spacing():
    y, x = np.mgrid[0:64, 0:64]
    img = gf.GrayImage((((y // 8) + (x // 8)) % 2).astype(float))
    corners = gf.shi_tomasi(img, max_corners=10, quality=0.01, min_distance=10)
    assert len(corners) == 10
    for i, a in enumerate(corners):
        for b in corners[i + 1 :]:
            assert math.hypot(a.x - b.x, a.y - b.y) >= 10
    assert all(c.score >= 0.01 * gf.corner_score_map(img).max() for c in corners)


def test_corner_scores_sorted_and_in_bounds(detail_texture):
    img = gf.GrayImage(detail_texture.data[:128, :160])
    corners = gf.shi_tomasi(img, max_corners=50)
    scores = [c.score for c in corners]
    assert scores == sorted(scores, reverse=True)
    assert all(0 <= c.x < img.width and 0 <= c.y < img.height for c in corners)


def test_shi_tomasi_validations():
    with pytest.raises(gf.ValidationError):
        gf.shi_tomasi(gf.GrayImage(np.zeros((4, 4))))
    with pytest.raises(gf.ValidationError):
        gf.shi_tomasi(gf.GrayImage(np.zeros((32, 32))), quality=0.0)


# ---------------------------------------------------------------------------
# build_pyramid
# ---------------------------------------------------------------------------

def test_pyramid_dimensions_halve():
    img = gf.GrayImage(np.zeros((512, 512)))
    pyr = gf.build_pyramid(img, 3)
    assert [lvl.shape for lvl in pyr.levels] == [(512, 512), (256, 256), (128, 128)]
    odd = gf.build_pyramid(gf.GrayImage(np.zeros((65, 33))), 2)
    assert odd.levels[1].shape == (33, 17)


def test_pyramid_constant_stays_constant():
    img = gf.GrayImage(np.full((64, 64), 0.37))
    pyr = gf.build_pyramid(img, 3)
    for lvl in pyr.levels:
        np.testing.assert_allclose(lvl.data, 0.37, atol=1e-6)


def test_pyramid_single_level_is_input():
    img = gf.GrayImage(gf.make_rng(3).random((32, 32)))
    pyr = gf.build_pyramid(img, 1)
    assert pyr.levels[0] is img


def test_pyramid_too_many_levels():
    with pytest.raises(gf.ValidationError):
        gf.build_pyramid(gf.GrayImage(np.zeros((32, 32))), 4)


# ---------------------------------------------------------------------------
# lk_track
# ---------------------------------------------------------------------------

def test_lk_identity_motion(detail_texture):
    img = gf.GrayImage(detail_texture.data[:256, :256])
    pyr = gf.build_pyramid(img, 3)
    pts = gf.shi_tomasi(img, max_corners=30)
    for t, conv in gf.lk_track(pyr, pyr, pts):
        assert conv
        assert abs(t.dx) <= 0.01 and abs(t.dy) <= 0.01


def test_lk_integer_shift_crop_pair(detail_texture):
    src = detail_texture.data
    prev = gf.GrayImage(src[50:306, 50:306])
    next = gf.GrayImage(src[50:306, 57:313])  # capture window moved +7 in x
    pp, pn = gf.build_pyramid(prev, 3), gf.build_pyramid(next, 3)
    pts = gf.shi_tomasi(prev, max_corners=40)
    results = gf.lk_track(pp, pn, pts)
    converged = [t for t, ok in results if ok]
    assert len(converged) >= 0.8 * len(results)
    for t in converged:
        assert abs(t.dx - 7.0) <= 0.25 and abs(t.dy) <= 0.25


def test_lk_subpixel_shift(detail_texture):
    src = detail_texture.data
    prev = gf.GrayImage(bilinear_crop(src, 60.0, 60.0, 256, 256))
    next = gf.GrayImage(bilinear_crop(src, 60.0 + 12.5, 60.0 - 3.25, 256, 256))
    pp, pn = gf.build_pyramid(prev, 3), gf.build_pyramid(next, 3)
    pts = gf.shi_tomasi(prev, max_corners=40)
    flows = np.array([[t.dx, t.dy] for t, ok in gf.lk_track(pp, pn, pts) if ok])
    med = np.median(flows, axis=0)
    assert abs(med[0] - 12.5) <= 0.5 and abs(med[1] + 3.25) <= 0.5


def test_lk_integer_shift_property_100_seeds(detail_texture):
    # shifts up to the window size (Euclidean magnitude <= 21 px)
    src = detail_texture.data
    rng = gf.make_rng(42)
    fails = 0
    done = 0
    while done < 100:
        sx, sy = (int(v) for v in rng.integers(-21, 22, 2))
        if math.hypot(sx, sy) > 21:
            continue
        done += 1
        base = 40 + int(rng.integers(0, 200))
        prev = gf.GrayImage(src[base : base + 224, base : base + 224])
        next = gf.GrayImage(src[base + sy : base + sy + 224, base + sx : base + sx + 224])
        pp, pn = gf.build_pyramid(prev, 3), gf.build_pyramid(next, 3)
        pts = gf.shi_tomasi(prev, max_corners=25)
        flows = np.array([[t.dx, t.dy] for t, ok in gf.lk_track(pp, pn, pts) if ok])
        assert flows.shape[0] >= 4
        med = np.median(flows, axis=0)
        if not (abs(med[0] - sx) <= 0.25 and abs(med[1] - sy) <= 0.25):
            fails += 1
    assert fails == 0


def test_lk_empty_points(detail_texture):
    img = gf.GrayImage(detail_texture.data[:64, :64])
    pyr = gf.build_pyramid(img, 2)
    assert gf.lk_track(pyr, pyr, []) == []


def test_lk_validations(detail_texture):
    img = gf.GrayImage(detail_texture.data[:64, :64])
    p2 = gf.build_pyramid(img, 2)
    p3 = gf.build_pyramid(img, 3)
    with pytest.raises(gf.ValidationError):
        gf.lk_track(p2, p3, [gf.Corner(10, 10, 1.0)])
    with pytest.raises(gf.ValidationError):
        gf.lk_track(p2, p2, [gf.Corner(10, 10, 1.0)], window=8)


# ---------------------------------------------------------------------------
# dilate_mask
# ---------------------------------------------------------------------------

def test_dilate_single_pixel_block():
    mask = np.zeros((21, 21), dtype=bool)
    mask[10, 10] = True
    out = gf.dilate_mask(mask, 2)
    want = np.zeros_like(mask)
    want[8:13, 8:13] = True
    np.testing.assert_array_equal(out, want)


def test_dilate_radius_zero_is_identity():
    rng = gf.make_rng(5)
    mask = rng.random((16, 16)) > 0.8
    np.testing.assert_array_equal(gf.dilate_mask(mask, 0), mask)


def test_dilate_merges_nearby_pixels():
    from scipy.ndimage import label

    mask = np.zeros((9, 9), dtype=bool)
    mask[4, 2] = mask[4, 5] = True
    out = gf.dilate_mask(mask, 2)
    _, n = label(out, structure=np.ones((3, 3), dtype=int))
    assert n == 1


def test_dilate_properties():
    rng = gf.make_rng(6)
    for _ in range(10):
        mask = rng.random((24, 24)) > 0.9
        r1, r2 = int(rng.integers(0, 3)), int(rng.integers(0, 3))
        d1 = gf.dilate_mask(mask, r1)
        assert np.all(d1 >= mask)  # extensive
        assert np.all(gf.dilate_mask(mask, r1 + r2) >= d1)  # monotone
        np.testing.assert_array_equal(  # square elements compose additively
            gf.dilate_mask(d1, r2), gf.dilate_mask(mask, r1 + r2)
        )


# ---------------------------------------------------------------------------
# extract_templates
# ---------------------------------------------------------------------------

def test_single_corner_template(detail_texture):
    frame = gf.GrayImage(detail_texture.data[:256, :256])
    tpls = gf.extract_templates(frame, [gf.Corner(100, 100, 1.0)], dilation_radius=15)
    assert len(tpls) == 1
    assert tpls[0].origin == (85, 85)
    assert tpls[0].patch.shape == (31, 31)


def test_two_far_corners_stay_disjoint(detail_texture):
    frame = gf.GrayImage(detail_texture.data[:256, :256])
    tpls = gf.extract_templates(
        frame, [gf.Corner(60, 60, 1.0), gf.Corner(160, 60, 2.0)], dilation_radius=15
    )
    assert len(tpls) == 2
    # ranked by score sum: the higher-scored corner's template first
    assert tpls[0].origin == (145, 45)


def test_two_close_corners_merge(detail_texture):
    frame = gf.GrayImage(detail_texture.data[:256, :256])
    tpls = gf.extract_templates(
        frame, [gf.Corner(100, 100, 1.0), gf.Corner(110, 100, 1.0)], dilation_radius=15
    )
    assert len(tpls) == 1
    (x0, y0) = tpls[0].origin
    h, w = tpls[0].patch.shape
    assert x0 <= 100 and x0 + w > 110 and y0 <= 100 and y0 + h > 100


def test_templates_respect_size_limits_and_count(detail_texture):
    frame = gf.GrayImage(detail_texture.data[:400, :400])
    corners = gf.shi_tomasi(frame, max_corners=60, min_distance=12)
    tpls = gf.extract_templates(frame, corners, max_templates=5, min_size=16, max_size=64)
    assert len(tpls) <= 5
    for t in tpls:
        h, w = t.patch.shape
        assert 16 <= h <= 64 and 16 <= w <= 64
        assert np.var(t.patch.data) > 0


def test_no_corners_no_templates(detail_texture):
    frame = gf.GrayImage(detail_texture.data[:64, :64])
    assert gf.extract_templates(frame, []) == []


def test_flat_template_rejected():
    with pytest.raises(gf.ValidationError):
        gf.Template(gf.GrayImage(np.full((16, 16), 0.5)), (0, 0))


# ---------------------------------------------------------------------------
# match_template
# ---------------------------------------------------------------------------

def test_self_match_is_exact(detail_texture):
    target = gf.GrayImage(detail_texture.data[:200, :200])
    tpl = gf.Template(gf.GrayImage(target.data[60:100, 80:120]), (80, 60))
    m = gf.match_template(tpl, target, gf.Translation2D(0, 0), 8)
    assert m.translation.dx == 0.0 and m.translation.dy == 0.0
    assert m.correlation == pytest.approx(1.0, abs=1e-6)


def test_match_recovers_known_offset(detail_texture):
    target = gf.GrayImage(detail_texture.data[:200, :200])
    # template cut at (80, 60) in the target, tagged with origin (95, 72):
    # the implied frame step is origin - placement = (15, 12)
    tpl = gf.Template(gf.GrayImage(target.data[60:100, 80:120]), (95, 72))
    m = gf.match_template(tpl, target, gf.Translation2D(15, 12), 10)
    assert (m.translation.dx, m.translation.dy) == (15.0, 12.0)
    assert m.correlation == pytest.approx(1.0, abs=1e-6)


def test_match_invariant_to_brightness_offset(detail_texture):
    base = 0.25 + 0.5 * detail_texture.data[:200, :200]
    target = gf.GrayImage(base)
    tpl = gf.Template(gf.GrayImage(base[60:100, 80:120] - 0.2), (80, 60))
    m = gf.match_template(tpl, target, gf.Translation2D(0, 0), 8)
    assert m.translation.dx == 0.0 and m.translation.dy == 0.0
    assert m.correlation == pytest.approx(1.0, abs=1e-6)


def test_match_invariant_to_affine_gain(detail_texture):
    data = detail_texture.data[:160, :160]
    tpl = gf.Template(gf.GrayImage(data[40:72, 50:82]), (50, 40))
    m1 = gf.match_template(tpl, gf.GrayImage(data), gf.Translation2D(0, 0), 12)
    m2 = gf.match_template(tpl, gf.GrayImage(np.clip(0.6 * data + 0.3, 0, 1)),
                           gf.Translation2D(0, 0), 12)
    assert (m1.translation.dx, m1.translation.dy) == (m2.translation.dx, m2.translation.dy)
    assert m1.correlation == pytest.approx(m2.correlation, abs=1e-6)


def test_match_against_simulated_truth(small_scan):
    fs, real, cfg = small_scan
    for i in (0, 5, 20):
        prev, next = fs.frames[i], fs.frames[i + 1]
        step = fs.truth_steps[i]
        corners = gf.shi_tomasi(prev, max_corners=20, min_distance=34)
        tpls = gf.extract_templates(prev, corners)
        assert tpls
        m = gf.match_template(tpls[0], next, step, 40)
        assert abs(m.translation.dx - step.dx) <= 1.0
        assert abs(m.translation.dy - step.dy) <= 1.0


def test_match_window_outside_target_is_no_match(detail_texture):
    target = gf.GrayImage(detail_texture.data[:100, :100])
    tpl = gf.Template(gf.GrayImage(target.data[10:42, 10:42]), (10, 10))
    assert gf.match_template(tpl, target, gf.Translation2D(500, 0), 5) is None


def test_match_validations(detail_texture):
    big = gf.Template(gf.GrayImage(detail_texture.data[:100, :100]), (0, 0))
    with pytest.raises(gf.ValidationError):
        gf.match_template(big, gf.GrayImage(detail_texture.data[:80, :80]))


def test_zncc_matches_bruteforce_oracle(detail_texture):
    region = detail_texture.data[:60, :64]
    tpl = detail_texture.data[200:217, 300:319]
    np.testing.assert_allclose(vision.zncc_map(region, tpl), zncc_oracle(region, tpl), atol=1e-9)


def test_zncc_spatial_and_fft_paths_agree(detail_texture, monkeypatch):
    region = detail_texture.data[:150, :150]
    tpl = detail_texture.data[400:431, 500:531]
    monkeypatch.setattr(vision, "_SPATIAL_MAC_LIMIT", float("inf"))
    spatial = vision.zncc_map(region, tpl)
    monkeypatch.setattr(vision, "_SPATIAL_MAC_LIMIT", 0.0)
    fft = vision.zncc_map(region, tpl)
    np.testing.assert_allclose(spatial, fft, atol=1e-9)


def test_match_tie_breaks_lexicographic():
    # dyadic values keep every sum exact, so repeated content ties exactly
    rng = gf.make_rng(30)
    patch = rng.integers(0, 8, (12, 12)).astype(np.float64) / 8.0
    target = np.zeros((40, 40))
    for oy, ox in ((4, 4), (4, 20), (22, 4)):
        target[oy : oy + 12, ox : ox + 12] = patch
    tpl = gf.Template(gf.GrayImage(patch), (0, 0))
    m = gf.match_template(tpl, gf.GrayImage(target), gf.Translation2D(0, 0), 60)
    # all three placements score 1.0; smallest (dy, dx) = (4, 4) wins
    assert (m.translation.dx, m.translation.dy) == (-4.0, -4.0)
    assert m.correlation == pytest.approx(1.0, abs=1e-12)
