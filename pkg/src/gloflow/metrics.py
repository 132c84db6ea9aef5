"""Stitch-accuracy metrics: endpoint error and its recentered variant.

epe measures the mean per-element Euclidean error between predicted and
true vectors. re_epe recenters both coordinate sets on every node in
turn and averages the resulting epe values, which cancels any shared
global offset between the two stitches.
"""

from dataclasses import dataclass

import numpy as np

from .core import ValidationError, coords_from

REPORT_HEADER = "method,n_frames,epe,re_epe,comparisons,wall_time_s"


@dataclass(frozen=True)
class MetricReport:
    """One benchmark row; epe_pairwise is None for global-only methods."""

    method: str
    n_frames: int
    epe_pairwise: float | None
    re_epe: float
    comparisons_made: int | None
    wall_time: float

    def to_csv_row(self) -> str:
        epe_s = "" if self.epe_pairwise is None else repr(float(self.epe_pairwise))
        cmp_s = "" if self.comparisons_made is None else str(self.comparisons_made)
        return f"{self.method},{self.n_frames},{epe_s},{repr(float(self.re_epe))},{cmp_s},{self.wall_time:.2f}"


def epe(predicted, truth) -> float:
    """Mean Euclidean distance between corresponding elements."""
    p = coords_from(predicted)
    t = coords_from(truth)
    if p.shape != t.shape:
        raise ValidationError(f"length mismatch: predicted {p.shape[0]} vs truth {t.shape[0]}")
    return float(np.mean(np.hypot(p[:, 0] - t[:, 0], p[:, 1] - t[:, 1])))


def re_epe(predicted, truth) -> float:
    """Recentered endpoint error, invariant to a shared global offset.

    Equals mean_i of epe(P - P[i], T - T[i]); evaluated directly as the
    mean pairwise distance matrix of the per-node error vectors D = P - T.
    """
    p = coords_from(predicted)
    t = coords_from(truth)
    if p.shape != t.shape:
        raise ValidationError(f"length mismatch: predicted {p.shape[0]} vs truth {t.shape[0]}")
    d = p - t
    diff = d[None, :, :] - d[:, None, :]
    return float(np.mean(np.hypot(diff[..., 0], diff[..., 1])))


def evaluate(
    pred_coords,
    truth_coords,
    pred_steps=None,
    truth_steps=None,
    method: str = "",
    comparisons_made: int | None = None,
    wall_time: float = 0.0,
) -> MetricReport:
    """Assemble a benchmark row from coordinates and optional step lists."""
    pc = coords_from(pred_coords)
    pairwise = None
    if pred_steps is not None and truth_steps is not None:
        pairwise = epe(pred_steps, truth_steps)
    return MetricReport(
        method=method,
        n_frames=pc.shape[0],
        epe_pairwise=pairwise,
        re_epe=re_epe(pred_coords, truth_coords),
        comparisons_made=comparisons_made,
        wall_time=float(wall_time),
    )
