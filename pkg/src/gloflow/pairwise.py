"""Stage one: one translation per consecutive retained frame pair.

Estimators either track Shi-Tomasi corners with pyramidal LK and take
the componentwise median of the converged point flows, or replay
externally supplied predictions from a flow file. Composing the steps
gives the approximate stitch that stage two refines.
"""

import logging
import math
from dataclasses import dataclass, field

import numpy as np

from .core import CoordinateSet, GrayImage, Translation2D, ValidationError, compose_coords
from .io import read_steps_csv
from .vision import Pyramid, build_pyramid, lk_track, shi_tomasi

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class LkParams:
    """Settings for the LK pair estimator.

    pyramid_levels=None picks enough levels to shrink the short frame side
    to ~16 px, extending the tracker's reach to large inter-frame steps
    (subsampled scans move by hundreds of pixels between retained frames).
    """

    window: int = 21
    pyramid_levels: int | None = None
    max_iters: int = 30
    eps: float = 0.01
    max_corners: int = 200
    quality: float = 0.01
    min_distance: float = 10.0
    inlier_radius: float = 1.5
    min_converged: int = 4

    def levels_for(self, shape: tuple[int, int]) -> int:
        if self.pyramid_levels is not None:
            return self.pyramid_levels
        short = min(shape)
        want = max(3, int(math.log2(max(short / 16, 1))) + 1)
        cap = max(1, int(math.log2(short / 8)) + 1) if short >= 8 else 1
        return min(want, cap)


@dataclass
class ApproxStitch:
    """Stage-one output: steps, their composition, and per-step confidence."""

    coords: CoordinateSet
    steps: list[Translation2D]
    per_step_confidence: list[float]
    retained: list[int] = field(default_factory=list)

    def __post_init__(self):
        if len(self.steps) != len(self.coords) - 1:
            raise ValidationError(
                f"{len(self.coords)} coords need {len(self.coords) - 1} steps, got {len(self.steps)}"
            )
        if len(self.per_step_confidence) != len(self.steps):
            raise ValidationError("need one confidence per step")
        if not self.retained:
            self.retained = list(range(len(self.coords)))


def estimate_pair_lk(
    prev: GrayImage, next: GrayImage, params: LkParams | None = None
) -> tuple[Translation2D, float]:
    """Median-aggregated LK translation between two frames.

    Confidence is the fraction of converged points within 1.5 px of the
    median flow; falls back to ((0, 0), 0.0) when fewer than 4 points
    converge.
    """
    params = params or LkParams()
    if prev.shape != next.shape:
        raise ValidationError(f"frame size mismatch: {prev.shape} vs {next.shape}")
    levels = params.levels_for(prev.shape)
    return _estimate_from_pyramids(
        build_pyramid(prev, levels), build_pyramid(next, levels), prev, params
    )


def aggregate_flows(
    flows: np.ndarray, inlier_radius: float = 1.5, min_count: int = 4
) -> tuple[Translation2D, float]:
    """Componentwise median of point flows plus the inlier-ratio confidence.

    The median tolerates up to just under half the points being outliers;
    confidence is the fraction of flows within inlier_radius of it. Fewer
    than min_count flows fall back to ((0, 0), 0.0).
    """
    flows = np.asarray(flows, dtype=np.float64).reshape(-1, 2)
    if flows.shape[0] < min_count:
        return Translation2D(0.0, 0.0), 0.0
    med = np.median(flows, axis=0)
    dist = np.hypot(flows[:, 0] - med[0], flows[:, 1] - med[1])
    confidence = float(np.mean(dist <= inlier_radius))
    return Translation2D(float(med[0]), float(med[1])), confidence


def _estimate_from_pyramids(
    prev_pyr: Pyramid, next_pyr: Pyramid, prev_img: GrayImage, params: LkParams
) -> tuple[Translation2D, float]:
    corners = shi_tomasi(
        prev_img,
        max_corners=params.max_corners,
        quality=params.quality,
        min_distance=params.min_distance,
    )
    if not corners:
        return Translation2D(0.0, 0.0), 0.0
    tracked = lk_track(
        prev_pyr,
        next_pyr,
        corners,
        window=params.window,
        max_iters=params.max_iters,
        eps=params.eps,
    )
    flows = np.array([[t.dx, t.dy] for t, ok in tracked if ok]).reshape(-1, 2)
    return aggregate_flows(flows, params.inlier_radius, params.min_converged)


class LkEstimator:
    """Pairwise estimator backed by corner tracking.

    Consecutive pairs share a frame, so the last pyramid is kept and
    reused when the next call's prev is the frame it was built from.
    """

    kind = "LK"

    def __init__(self, params: LkParams | None = None):
        self.params = params or LkParams()
        self._cache: tuple[int, int, Pyramid] | None = None  # (frame id, levels, pyramid)

    def _pyramid(self, img: GrayImage, levels: int) -> Pyramid:
        key = (id(img.data), levels)
        if self._cache is not None and self._cache[:2] == key:
            return self._cache[2]
        return build_pyramid(img, levels)

    def estimate(self, pair_index: int, prev: GrayImage, next: GrayImage):
        if prev.shape != next.shape:
            raise ValidationError(f"frame size mismatch: {prev.shape} vs {next.shape}")
        levels = self.params.levels_for(prev.shape)
        prev_pyr = self._pyramid(prev, levels)
        next_pyr = build_pyramid(next, levels)
        self._cache = (id(next.data), levels, next_pyr)
        return _estimate_from_pyramids(prev_pyr, next_pyr, prev, self.params)


class ExternalFlowEstimator:
    """Replays predictions loaded from a flow file, one row per pair."""

    kind = "ExternalFlowFile"

    def __init__(self, rows: list[tuple[Translation2D, float]]):
        self.rows = list(rows)

    @classmethod
    def from_file(cls, path, expected_pairs: int | None = None) -> "ExternalFlowEstimator":
        return cls(load_external_flows(path, expected_pairs))

    def estimate(self, pair_index: int, prev: GrayImage, next: GrayImage):
        return self.rows[pair_index]


def load_external_flows(path, expected_pairs: int | None = None) -> list[tuple[Translation2D, float]]:
    """Load `index,dx,dy[,confidence]` predictions; verbatim passthrough."""
    rows = read_steps_csv(path)
    if expected_pairs is not None and len(rows) != expected_pairs:
        raise ValidationError(
            f"{path}: expected {expected_pairs} prediction rows "
            f"(retained frames - 1), found {len(rows)}"
        )
    return rows


def retained_indices(n_frames: int, stride: int) -> list[int]:
    return list(range(0, n_frames, stride))


def run_stage_one(frames, estimator, stride: int = 20) -> ApproxStitch:
    """Estimate consecutive retained pairs and compose the approximate stitch.

    Frames 0, stride, 2*stride, ... are retained. A failing estimator
    records a ((0, 0), 0.0) step and the pipeline continues; stage two
    exists to repair such steps.
    """
    if stride < 1:
        raise ValidationError(f"stride must be >= 1, got {stride}")
    keep = retained_indices(len(frames), stride)
    if len(keep) < 2:
        raise ValidationError(
            f"{len(frames)} frames at stride {stride} leave {len(keep)} retained frames; need >= 2"
        )
    if isinstance(estimator, ExternalFlowEstimator) and len(estimator.rows) != len(keep) - 1:
        raise ValidationError(
            f"external flow file covers {len(estimator.rows)} pairs, "
            f"but {len(keep)} retained frames need {len(keep) - 1}"
        )
    steps: list[Translation2D] = []
    confs: list[float] = []
    for k in range(len(keep) - 1):
        prev, next = frames[keep[k]], frames[keep[k + 1]]
        try:
            t, c = estimator.estimate(k, prev, next)
        except Exception:
            log.warning("pair %d (frames %d->%d) failed; recording zero step", k, keep[k], keep[k + 1])
            t, c = Translation2D(0.0, 0.0), 0.0
        steps.append(t)
        confs.append(float(c))
    return ApproxStitch(
        coords=compose_coords(steps), steps=steps, per_step_confidence=confs, retained=keep
    )
