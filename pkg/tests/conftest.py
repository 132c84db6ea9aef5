import logging

import numpy as np
import pytest

import gloflow as gf

logging.getLogger("gloflow").setLevel(logging.ERROR)


@pytest.fixture(scope="session")
def detail_texture():
    """Fine-grained source: discriminative under template matching."""
    return gf.synthetic_texture(1600, 1600, seed=100, profile="detail")


@pytest.fixture(scope="session")
def smooth_texture():
    """Coarse source: gentle gradients for compositing comparisons."""
    return gf.synthetic_texture(1400, 1400, seed=101, profile="smooth")


@pytest.fixture(scope="session")
def small_scan(detail_texture):
    """A short fixed-realization scan used by several module tests."""
    cfg = gf.SimConfig(
        patch=512,
        mag_range=(16.0, 16.0),
        noise_factor_range=(20.0, 20.0),
        angle_std_range_deg=(3.0, 3.0),
        row_overlap_range=(0.3, 0.3),
        seed=11,
    )
    real, plan = gf.plan_scan(detail_texture.width, detail_texture.height, cfg)
    fs = gf.render_scan(detail_texture, plan, cfg, source_id="detail-1600")
    return fs, real, cfg


def subsample(fs: gf.FrameSequence, stride: int):
    """Retained frames plus their truth coordinates re-anchored at frame 0."""
    keep = list(range(0, len(fs), stride))
    frames = [fs.frames[i] for i in keep]
    truth = gf.CoordinateSet(fs.truth_coords.xy[keep] - fs.truth_coords.xy[keep[0]])
    return frames, truth, keep
