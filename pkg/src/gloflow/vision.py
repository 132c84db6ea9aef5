"""Pixel-level primitives: corner detection, pyramidal point tracking,
binary dilation, template extraction, and ZNCC template matching.

All translations returned by this module follow the package-wide camera
convention (see ``gloflow.core``): a translation (dx, dy) between frame A
and frame B is B's origin minus A's origin in global space; the image
content therefore moves by (-dx, -dy) from A to B.
"""

import math
from dataclasses import dataclass

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view
from scipy.fft import irfft2, next_fast_len, rfft2
from scipy.ndimage import correlate1d, find_objects, label, maximum_filter

from .core import GrayImage, Translation2D, ValidationError

_GAUSS5 = np.array([1.0, 4.0, 6.0, 4.0, 1.0]) / 16.0
_DERIV = np.array([-1.0, 0.0, 1.0])
_SMOOTH = np.array([1.0, 2.0, 1.0])

#: Score window used for the corner structure tensor (side length, odd).
SCORE_WINDOW = 7

#: Above this many multiply-adds the ZNCC numerator switches from the
#: sliding-dot spatial path to FFT correlation (identical scores to ~1e-12).
_SPATIAL_MAC_LIMIT = 2e6


@dataclass(frozen=True)
class Corner:
    """Detected feature point with its min-eigenvalue score."""

    x: float
    y: float
    score: float


@dataclass(frozen=True)
class Pyramid:
    """Image pyramid; level 0 is full resolution, each level halves it."""

    levels: tuple

    def __len__(self) -> int:
        return len(self.levels)


@dataclass(frozen=True)
class Template:
    """A patch cut from a source frame, tagged with its upper-left origin."""

    patch: GrayImage
    origin: tuple[int, int]

    def __post_init__(self):
        if float(np.var(self.patch.data)) <= 0.0:
            raise ValidationError("flat template (zero variance) is not matchable")


@dataclass(frozen=True)
class MatchResult:
    """Best ZNCC placement expressed as a frame-to-frame translation."""

    translation: Translation2D
    correlation: float


def _sobel_gradients(data: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    # 3x3 Sobel, replicate borders: derivative [-1,0,1] x smoothing [1,2,1]
    gx = correlate1d(data, _DERIV, axis=1, mode="nearest")
    ix = correlate1d(gx, _SMOOTH, axis=0, mode="nearest")
    gy = correlate1d(data, _DERIV, axis=0, mode="nearest")
    iy = correlate1d(gy, _SMOOTH, axis=1, mode="nearest")
    return ix, iy


def _window_sum(data: np.ndarray, size: int) -> np.ndarray:
    out = correlate1d(data, np.ones(size), axis=0, mode="nearest")
    return correlate1d(out, np.ones(size), axis=1, mode="nearest")


def corner_score_map(img: GrayImage) -> np.ndarray:
    """Min-eigenvalue of the windowed structure tensor at every pixel.

    The score is 0.5 * (a + c - sqrt((a - c)^2 + 4 b^2)) where a, b, c are
    the window sums of Ix^2, Ix*Iy, Iy^2 over a 7x7 neighborhood.
    """
    ix, iy = _sobel_gradients(img.data)
    a = _window_sum(ix * ix, SCORE_WINDOW)
    b = _window_sum(ix * iy, SCORE_WINDOW)
    c = _window_sum(iy * iy, SCORE_WINDOW)
    return 0.5 * ((a + c) - np.sqrt((a - c) ** 2 + 4.0 * b * b))


def shi_tomasi(
    img: GrayImage,
    max_corners: int = 200,
    quality: float = 0.01,
    min_distance: float = 10.0,
) -> list[Corner]:
    """Detect corners, strongest first, with greedy distance suppression.

    Every returned score is >= quality * max(score map) and no two corners
    are closer than min_distance. A textureless image yields an empty list.
    """
    if img.width < 8 or img.height < 8:
        raise ValidationError(f"image too small for corner detection: {img.shape}")
    if not (0.0 < quality <= 1.0):
        raise ValidationError(f"quality must be in (0, 1], got {quality}")

    score = corner_score_map(img)
    smax = float(score.max())
    if smax <= 0.0:
        return []
    ys, xs = np.nonzero(score >= quality * smax)
    vals = score[ys, xs]
    order = np.lexsort((xs, ys, -vals))

    # greedy acceptance with a uniform grid so distance checks stay local
    cell = max(min_distance, 1.0)
    grid: dict[tuple[int, int], list[tuple[float, float]]] = {}
    accepted: list[Corner] = []
    min_d2 = min_distance * min_distance
    for k in order:
        x, y = float(xs[k]), float(ys[k])
        cx, cy = int(x / cell), int(y / cell)
        ok = True
        for gy in range(cy - 1, cy + 2):
            for gx in range(cx - 1, cx + 2):
                for ax, ay in grid.get((gy, gx), ()):
                    if (ax - x) ** 2 + (ay - y) ** 2 < min_d2:
                        ok = False
                        break
                if not ok:
                    break
            if not ok:
                break
        if ok:
            accepted.append(Corner(x, y, float(vals[k])))
            grid.setdefault((cy, cx), []).append((x, y))
            if len(accepted) >= max_corners:
                break
    return accepted


def build_pyramid(img: GrayImage, levels: int = 3) -> Pyramid:
    """Gaussian pyramid: 5-tap blur then 2x decimation per level.

    Level dimensions are ceil(previous / 2); the coarsest level must stay
    at least 8x8.
    """
    if levels < 1:
        raise ValidationError("pyramid needs at least one level")
    w, h = img.width, img.height
    for _ in range(levels - 1):
        w, h = (w + 1) // 2, (h + 1) // 2
    if w < 8 or h < 8:
        raise ValidationError(
            f"{levels} levels reduce a {img.width}x{img.height} image below 8x8"
        )
    out = [img]
    cur = img.data
    for _ in range(levels - 1):
        blurred = correlate1d(cur, _GAUSS5, axis=0, mode="nearest")
        blurred = correlate1d(blurred, _GAUSS5, axis=1, mode="nearest")
        cur = np.clip(blurred[::2, ::2], 0.0, 1.0)
        out.append(GrayImage(cur))
    return Pyramid(tuple(out))


def _bilinear(data: np.ndarray, x: np.ndarray, y: np.ndarray) -> np.ndarray:
    """Sample with replicate borders; exact at integer coordinates."""
    h, w = data.shape
    xc = np.clip(x, 0.0, w - 1.0)
    yc = np.clip(y, 0.0, h - 1.0)
    x0 = np.clip(np.floor(xc).astype(np.intp), 0, max(w - 2, 0))
    y0 = np.clip(np.floor(yc).astype(np.intp), 0, max(h - 2, 0))
    fx = xc - x0
    fy = yc - y0
    x1 = np.minimum(x0 + 1, w - 1)
    y1 = np.minimum(y0 + 1, h - 1)
    top = (1.0 - fx) * data[y0, x0] + fx * data[y0, x1]
    bot = (1.0 - fx) * data[y1, x0] + fx * data[y1, x1]
    return (1.0 - fy) * top + fy * bot


def _point_xy(p) -> tuple[float, float]:
    if isinstance(p, Corner):
        return p.x, p.y
    return float(p[0]), float(p[1])


def lk_track(
    prev: Pyramid,
    next: Pyramid,
    points,
    window: int = 21,
    max_iters: int = 30,
    eps: float = 0.01,
) -> list[tuple[Translation2D, bool]]:
    """Pyramidal Lucas-Kanade tracking of points from prev into next.

    Returns one (translation, converged) pair per input point, in the
    camera convention: the translation is the frame step, the negative of
    the tracked pixel motion. converged is False when the final update
    never fell below eps at full resolution or the point left the frame.
    """
    if len(prev) != len(next):
        raise ValidationError("pyramids must have the same number of levels")
    if prev.levels[0].shape != next.levels[0].shape:
        raise ValidationError("pyramids must come from same-sized frames")
    if window % 2 != 1:
        raise ValidationError(f"window must be odd, got {window}")
    n = len(points)
    if n == 0:
        return []

    pts = np.array([_point_xy(p) for p in points], dtype=np.float64)
    hw = window // 2
    off = np.arange(-hw, hw + 1, dtype=np.float64)
    offx = np.tile(off, window)
    offy = np.repeat(off, window)

    g = np.zeros((n, 2))  # accumulated content motion at current level scale
    lost = np.zeros(n, dtype=bool)
    converged = np.zeros(n, dtype=bool)

    for level in range(len(prev) - 1, -1, -1):
        ip = prev.levels[level].data
        inx = next.levels[level].data
        h, w = ip.shape
        pl = pts / (2.0**level)

        px = pl[:, 0:1] + offx[None, :]
        py = pl[:, 1:2] + offy[None, :]
        tmpl = _bilinear(ip, px, py)
        gx = 0.5 * (_bilinear(ip, px + 1.0, py) - _bilinear(ip, px - 1.0, py))
        gy = 0.5 * (_bilinear(ip, px, py + 1.0) - _bilinear(ip, px, py - 1.0))
        a11 = np.sum(gx * gx, axis=1)
        a12 = np.sum(gx * gy, axis=1)
        a22 = np.sum(gy * gy, axis=1)
        det = a11 * a22 - a12 * a12

        usable = (det > 1e-14) & ~lost
        v = np.zeros((n, 2))
        level_done = np.zeros(n, dtype=bool)
        active = usable.copy()
        for _ in range(max_iters):
            idx = np.nonzero(active)[0]
            if idx.size == 0:
                break
            cx = pl[idx, 0:1] + g[idx, 0:1] + v[idx, 0:1] + offx[None, :]
            cy = pl[idx, 1:2] + g[idx, 1:2] + v[idx, 1:2] + offy[None, :]
            diff = tmpl[idx] - _bilinear(inx, cx, cy)
            b1 = np.sum(diff * gx[idx], axis=1)
            b2 = np.sum(diff * gy[idx], axis=1)
            d = det[idx]
            ux = (a22[idx] * b1 - a12[idx] * b2) / d
            uy = (a11[idx] * b2 - a12[idx] * b1) / d
            v[idx, 0] += ux
            v[idx, 1] += uy
            step = np.hypot(ux, uy)
            done = step < eps
            level_done[idx[done]] = True
            ctr_x = pl[idx, 0] + g[idx, 0] + v[idx, 0]
            ctr_y = pl[idx, 1] + g[idx, 1] + v[idx, 1]
            out = (ctr_x < 0) | (ctr_x > w - 1) | (ctr_y < 0) | (ctr_y > h - 1)
            lost[idx[out]] = True
            active[idx] &= ~done & ~out
        g = g + v
        if level > 0:
            g *= 2.0
        if level == 0:
            converged = level_done & usable & ~lost

    return [
        (Translation2D(-g[i, 0], -g[i, 1]), bool(converged[i]) and not bool(lost[i]))
        for i in range(n)
    ]


def dilate_mask(mask: np.ndarray, radius: int) -> np.ndarray:
    """Morphological dilation with a square element of half-width radius."""
    if radius < 0:
        raise ValidationError(f"radius must be >= 0, got {radius}")
    m = np.asarray(mask, dtype=bool)
    if radius == 0:
        return m.copy()
    return maximum_filter(m, size=2 * radius + 1, mode="constant", cval=False)


def extract_templates(
    frame: GrayImage,
    corners,
    dilation_radius: int = 15,
    max_templates: int = 8,
    min_size: int = 16,
    max_size: int = 128,
) -> list[Template]:
    """Grow corner neighborhoods into patches by dilation and merging.

    Corner pixels are dilated by a square element; each connected component
    whose bounding box has both sides in [min_size, max_size] becomes a
    template, ranked by the summed score of its corners and truncated to
    max_templates. Flat patches are dropped.
    """
    if len(corners) == 0:
        return []
    h, w = frame.shape
    mask = np.zeros((h, w), dtype=bool)
    pix = []
    for c in corners:
        x, y = _point_xy(c)
        xi = min(max(int(round(x)), 0), w - 1)
        yi = min(max(int(round(y)), 0), h - 1)
        mask[yi, xi] = True
        pix.append((xi, yi, float(getattr(c, "score", 1.0))))

    grown = dilate_mask(mask, dilation_radius)
    labels, count = label(grown, structure=np.ones((3, 3), dtype=int))
    if count == 0:
        return []
    score_sum = np.zeros(count + 1)
    for xi, yi, s in pix:
        score_sum[labels[yi, xi]] += s

    candidates = []
    for comp, sl in enumerate(find_objects(labels), start=1):
        if sl is None:
            continue
        ys, xs = sl
        bh, bw = ys.stop - ys.start, xs.stop - xs.start
        if not (min_size <= bh <= max_size and min_size <= bw <= max_size):
            continue
        patch = frame.data[ys, xs]
        if float(np.var(patch)) <= 0.0:
            continue
        candidates.append((score_sum[comp], xs.start, ys.start, patch))

    candidates.sort(key=lambda t: (-t[0], t[2], t[1]))
    return [
        Template(GrayImage(patch), (x0, y0))
        for _, x0, y0, patch in candidates[:max_templates]
    ]


def _box_sums(data: np.ndarray, th: int, tw: int) -> np.ndarray:
    """Sliding-window sums over all valid th x tw placements (integral image)."""
    ii = np.zeros((data.shape[0] + 1, data.shape[1] + 1))
    np.cumsum(data, axis=0, out=ii[1:, 1:])
    np.cumsum(ii[1:, 1:], axis=1, out=ii[1:, 1:])
    return ii[th:, tw:] - ii[:-th, tw:] - ii[th:, :-tw] + ii[:-th, :-tw]


def _fft_correlate_valid(region: np.ndarray, tpl: np.ndarray, cache: dict | None, region_key) -> np.ndarray:
    """Valid-mode correlation via cyclic FFT at the region's own size.

    With the region transformed at (>= region-size) fast lengths, the
    wrap-around of cyclic convolution only touches placements that valid
    mode discards, so no extra padding is needed. The region transform is
    reusable across templates and is memoized when a cache is supplied.
    """
    h, w = region.shape
    th, tw = tpl.shape
    fh, fw = next_fast_len(h), next_fast_len(w)
    spectrum = None
    key = (region_key, fh, fw)
    if cache is not None and region_key is not None:
        spectrum = cache.get(key)
    if spectrum is None:
        spectrum = rfft2(region, (fh, fw))
        if cache is not None and region_key is not None:
            cache[key] = spectrum
    tsp = rfft2(tpl[::-1, ::-1], (fh, fw))
    full = irfft2(spectrum * tsp, (fh, fw))
    return full[th - 1 : h, tw - 1 : w]


def zncc_map(
    region: np.ndarray,
    tpl: np.ndarray,
    cache: dict | None = None,
    region_key=None,
) -> np.ndarray:
    """ZNCC of tpl against every valid placement inside region.

    Normalization sums come from integral images; the numerator uses a
    sliding dot product, or FFT correlation when the search is large.
    Windows with no variance score 0.
    """
    th, tw = tpl.shape
    area = th * tw
    tz = tpl - tpl.mean()
    tnorm = math.sqrt(float(np.sum(tz * tz)))

    var_sum = None
    if cache is not None and region_key is not None:
        var_sum = cache.get((region_key, "var", th, tw))
    if var_sum is None:
        s1 = _box_sums(region, th, tw)
        s2 = _box_sums(region * region, th, tw)
        var_sum = np.maximum(s2 - s1 * s1 / area, 0.0)
        if cache is not None and region_key is not None:
            cache[(region_key, "var", th, tw)] = var_sum

    n_place = var_sum.size
    if n_place * area <= _SPATIAL_MAC_LIMIT:
        windows = sliding_window_view(region, (th, tw))
        tzf = tz.ravel()
        num = np.empty(var_sum.shape)
        for row in range(num.shape[0]):
            num[row] = windows[row].reshape(-1, area) @ tzf
    else:
        num = _fft_correlate_valid(region, tz, cache, region_key)

    denom = np.sqrt(var_sum) * tnorm
    out = np.zeros_like(num)
    good = denom > 1e-12
    out[good] = num[good] / denom[good]
    return np.clip(out, -1.0, 1.0)


def match_template(
    template: Template,
    target: GrayImage,
    search_center: Translation2D = Translation2D(0.0, 0.0),
    search_radius: float = 40.0,
    cache: dict | None = None,
) -> MatchResult | None:
    """Exhaustive ZNCC search for a template inside a neighbor frame.

    search_center is the prior frame-to-frame translation; placements
    within +/- search_radius of the implied location are scored and the
    argmax (ties: smallest (dy, dx) placement) is returned as a
    MatchResult. Returns None when no valid placement intersects the
    window.
    """
    tpl = template.patch.data
    th, tw = tpl.shape
    h, w = target.shape
    if th >= h or tw >= w:
        raise ValidationError(f"template {tw}x{th} must be smaller than target {w}x{h}")
    if float(np.var(tpl)) <= 0.0:
        raise ValidationError("flat template (zero variance) is not matchable")

    ox, oy = template.origin
    ex = ox - search_center.dx
    ey = oy - search_center.dy
    x_lo = max(0, math.ceil(ex - search_radius))
    x_hi = min(w - tw, math.floor(ex + search_radius))
    y_lo = max(0, math.ceil(ey - search_radius))
    y_hi = min(h - th, math.floor(ey + search_radius))
    if x_lo > x_hi or y_lo > y_hi:
        return None

    region = target.data[y_lo : y_hi + th, x_lo : x_hi + tw]
    # full-target searches share one spectrum/normalization per frame
    full = x_lo == 0 and y_lo == 0 and x_hi == w - tw and y_hi == h - th
    region_key = id(target.data) if (full and cache is not None) else None
    ncc = zncc_map(region, tpl, cache, region_key)
    flat = int(np.argmax(ncc))  # first max in row-major order: smallest (dy, dx)
    py, px = divmod(flat, ncc.shape[1])
    best = float(ncc[py, px])
    placement_x = x_lo + px
    placement_y = y_lo + py
    return MatchResult(
        Translation2D(float(ox - placement_x), float(oy - placement_y)), best
    )
