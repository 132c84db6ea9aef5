"""Render frames at global coordinates into a single stitched canvas."""

from dataclasses import dataclass

import numpy as np

from .core import CoordinateSet, GrayImage, ValidationError

BLEND_MODES = ("overwrite", "average")


@dataclass(frozen=True)
class Canvas:
    """Shrink-wrapped stitch raster; origin_offset maps global (x, y) to
    canvas pixels: canvas_xy = global_xy + origin_offset."""

    image: GrayImage
    origin_offset: tuple[int, int]


def _round_half_away(v: np.ndarray) -> np.ndarray:
    return np.copysign(np.floor(np.abs(v) + 0.5), v)


def composite(frames, coords: CoordinateSet, blend: str = "overwrite", margin: int = 0) -> Canvas:
    """Place frames at rounded coordinates; later frames win under
    'overwrite', 'average' takes the per-pixel mean of contributors.
    Untouched pixels are 0."""
    if blend not in BLEND_MODES:
        raise ValidationError(f"blend must be one of {BLEND_MODES}, got '{blend}'")
    if len(frames) < 1:
        raise ValidationError("need at least one frame")
    if len(coords) != len(frames):
        raise ValidationError(f"{len(coords)} coordinates for {len(frames)} frames")

    placed = _round_half_away(coords.xy).astype(np.int64)
    fw = np.array([[f.width, f.height] for f in frames])
    lo = placed.min(axis=0) - margin
    hi = (placed + fw).max(axis=0) + margin
    width, height = int(hi[0] - lo[0]), int(hi[1] - lo[1])

    acc = np.zeros((height, width))
    if blend == "average":
        cnt = np.zeros((height, width), dtype=np.int64)
    for f, (px, py) in zip(frames, placed):
        x0, y0 = int(px - lo[0]), int(py - lo[1])
        sl = np.s_[y0 : y0 + f.height, x0 : x0 + f.width]
        if blend == "overwrite":
            acc[sl] = f.data
        else:
            acc[sl] += f.data
            cnt[sl] += 1
    if blend == "average":
        np.divide(acc, cnt, out=acc, where=cnt > 0)
    return Canvas(GrayImage(np.clip(acc, 0.0, 1.0)), (int(-lo[0]), int(-lo[1])))
