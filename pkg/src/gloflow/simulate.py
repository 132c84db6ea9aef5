"""Simulated microscope video scans with exact ground truth.

A scan walks a patch window over a large source image in a serpentine
(boustrophedonic) pattern: alternating left/right horizontal passes with
downward transition steps between rows. Four per-scan draws control the
motion model: mean step magnitude, a magnitude noise factor, the angular
jitter of each step, and the overlap between successive rows.
"""

import math
from dataclasses import dataclass, field

import numpy as np

from .core import (
    FrameSequence,
    GrayImage,
    Translation2D,
    ValidationError,
    make_rng,
)
from .vision import _bilinear

_MAX_REDRAWS = 20


@dataclass(frozen=True)
class SimConfig:
    """Scan-generation settings; each range is sampled once per scan."""

    patch: int = 512
    mag_range: tuple[float, float] = (14.62, 20.48)
    noise_factor_range: tuple[float, float] = (5.0, 25.0)
    angle_std_range_deg: tuple[float, float] = (1.0, 15.0)
    row_overlap_range: tuple[float, float] = (0.2, 0.4)
    seed: int = 0

    def __post_init__(self):
        for name in ("mag_range", "noise_factor_range", "angle_std_range_deg", "row_overlap_range"):
            lo, hi = getattr(self, name)
            if not (lo <= hi):
                raise ValidationError(f"{name} must have low <= high, got ({lo}, {hi})")
        if self.patch < 64:
            raise ValidationError(f"patch must be >= 64 px, got {self.patch}")
        if self.mag_range[1] >= self.patch:
            raise ValidationError(
                f"mean step magnitude {self.mag_range[1]} must stay below patch {self.patch} "
                "so successive frames overlap"
            )


@dataclass(frozen=True)
class ScanRealization:
    """The four per-scan draws, fixed for one data-generation run."""

    mean_mag: float
    noise_factor: float
    angle_std_deg: float
    row_overlap: float

    def as_dict(self) -> dict:
        return {
            "mean_mag": self.mean_mag,
            "noise_factor": self.noise_factor,
            "angle_std_deg": self.angle_std_deg,
            "row_overlap": self.row_overlap,
        }


def plan_scan(
    source_w: int, source_h: int, cfg: SimConfig
) -> tuple[ScanRealization, list[Translation2D]]:
    """Plan the step sequence of a serpentine scan over a source image.

    Every step is mean_mag + N(0, mean_mag / noise_factor) in magnitude,
    pointing along the nominal direction (right, left, or down) rotated by
    N(0, angle_std) degrees. Horizontal passes end when the next step
    would leave the source; transitions step down until the accumulated
    vertical displacement reaches patch * (1 - row_overlap); the scan ends
    when a patch would exit the bottom. All planned patch rectangles lie
    fully inside the source.
    """
    patch = cfg.patch
    if source_w < 2 * patch or source_h < 2 * patch:
        raise ValidationError(
            f"source {source_w}x{source_h} must be at least twice the patch ({patch}) per axis"
        )
    rng = make_rng(cfg.seed)
    real = ScanRealization(
        mean_mag=float(rng.uniform(*cfg.mag_range)),
        noise_factor=float(rng.uniform(*cfg.noise_factor_range)),
        angle_std_deg=float(rng.uniform(*cfg.angle_std_range_deg)),
        row_overlap=float(rng.uniform(*cfg.row_overlap_range)),
    )
    mag_std = real.mean_mag / real.noise_factor
    ang_std = math.radians(real.angle_std_deg)
    x_max = float(source_w - patch)
    y_max = float(source_h - patch)
    row_advance = patch * (1.0 - real.row_overlap)

    def draw(nominal_x: float, nominal_y: float) -> Translation2D:
        mag = real.mean_mag + rng.normal(0.0, mag_std)
        phi = rng.normal(0.0, ang_std)
        c, s = math.cos(phi), math.sin(phi)
        bx, by = mag * nominal_x, mag * nominal_y
        return Translation2D(bx * c - by * s, bx * s + by * c)

    steps: list[Translation2D] = []
    x, y = 0.0, 0.0
    heading = 1.0  # +1 right, -1 left

    while True:
        # horizontal pass: exhausting the travel axis ends the pass, but a
        # cross-axis drift past the top/bottom edge is redrawn (otherwise a
        # row hugging an edge would collapse after a single upward wiggle)
        while True:
            step = None
            pass_over = False
            for _ in range(_MAX_REDRAWS):
                cand = draw(heading, 0.0)
                if not (0.0 <= x + cand.dx <= x_max):
                    pass_over = True  # the failing step is discarded
                    break
                if 0.0 <= y + cand.dy <= y_max:
                    step = cand
                    break
            if pass_over or step is None:
                break
            steps.append(step)
            x, y = x + step.dx, y + step.dy

        # downward transition to the next row
        acc = 0.0
        while acc < row_advance:
            step = None
            for _ in range(_MAX_REDRAWS):
                cand = draw(0.0, 1.0)
                if y + cand.dy > y_max:
                    return real, steps  # next patch would exit the bottom
                if 0.0 <= x + cand.dx <= x_max and y + cand.dy >= 0.0:
                    step = cand
                    break
            if step is None:
                return real, steps  # cornered against a side edge
            steps.append(step)
            x, y = x + step.dx, y + step.dy
            acc += step.dy
        heading = -heading


def bilinear_crop(data: np.ndarray, x: float, y: float, w: int, h: int) -> np.ndarray:
    """Crop a w x h patch at fractional (x, y); exact at integer offsets."""
    xs = x + np.arange(w, dtype=np.float64)[None, :]
    ys = y + np.arange(h, dtype=np.float64)[:, None]
    return _bilinear(data, np.broadcast_to(xs, (h, w)), np.broadcast_to(ys, (h, w)))


def render_scan(
    source: GrayImage,
    plan: list[Translation2D],
    cfg: SimConfig,
    source_id: str = "source",
) -> FrameSequence:
    """Render the planned scan into frames with verbatim ground truth."""
    coords = [(0.0, 0.0)]
    for s in plan:
        coords.append((coords[-1][0] + s.dx, coords[-1][1] + s.dy))
    patch = cfg.patch
    x_max = source.width - patch
    y_max = source.height - patch
    frames = []
    for i, (x, y) in enumerate(coords):
        if not (0.0 <= x <= x_max and 0.0 <= y <= y_max):
            raise RuntimeError(
                f"frame {i} at ({x:.2f}, {y:.2f}) falls outside the source; "
                "the plan does not belong to this source"
            )
        frames.append(GrayImage(np.clip(bilinear_crop(source.data, x, y, patch, patch), 0.0, 1.0)))
    return FrameSequence(
        frames=tuple(frames), truth_steps=tuple(plan), source_id=source_id, seed=cfg.seed
    )


def render_frames_at(source: GrayImage, coords, patch: int) -> list[GrayImage]:
    """Render patches at explicit coordinates (for subsampled pipelines)."""
    out = []
    for x, y in np.asarray(coords, dtype=np.float64):
        out.append(GrayImage(np.clip(bilinear_crop(source.data, x, y, patch, patch), 0.0, 1.0)))
    return out


#: Octave (scale_px, amplitude) mixes for the two texture profiles.
#: "detail" concentrates variance at fine scales so small patches are
#: discriminative under correlation (false matches decay fast); "smooth"
#: favors coarse octaves for gentle gradients (sub-pixel compositing
#: comparisons stay tight).
TEXTURE_PROFILES = {
    "detail": ((2, 0.55), (4, 0.7), (8, 0.42), (16, 0.35), (32, 0.25), (64, 0.18)),
    "smooth": ((4, 2.0), (8, 2.8), (16, 4.0), (32, 5.7), (64, 8.0), (128, 11.3)),
}


def synthetic_texture(
    width: int,
    height: int,
    seed: int = 0,
    profile: str = "detail",
) -> GrayImage:
    """Multi-octave value noise standing in for slide content.

    Octave scales and amplitudes come from TEXTURE_PROFILES; the result is
    normalized to [0.02, 0.98].
    """
    if profile not in TEXTURE_PROFILES:
        raise ValidationError(f"profile must be one of {sorted(TEXTURE_PROFILES)}, got '{profile}'")
    rng = make_rng(seed)
    acc = np.zeros((height, width))
    ys = np.arange(height, dtype=np.float64)[:, None]
    xs = np.arange(width, dtype=np.float64)[None, :]
    for s, amp in TEXTURE_PROFILES[profile]:
        gh = height // s + 3
        gw = width // s + 3
        grid = rng.random((gh, gw))
        gy = np.broadcast_to(ys / s, (height, width))
        gx = np.broadcast_to(xs / s, (height, width))
        acc += amp * _bilinear(grid, gx, gy)
    lo, hi = acc.min(), acc.max()
    return GrayImage(0.02 + 0.96 * (acc - lo) / (hi - lo))
