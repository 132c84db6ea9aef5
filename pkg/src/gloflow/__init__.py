"""Two-stage video-scan stitching with global graph alignment.

Stage one estimates one translation per consecutive frame pair (LK corner
tracking or an external predictor) and composes an approximate stitch.
Stage two builds a neighborhood graph over the approximate coordinates,
re-registers neighbors by template matching, prunes and consistency-checks
the candidate edges, and solves a weighted least-squares system for the
final global coordinates. A scan simulator provides exact ground truth,
and epe/re_epe measure stitch accuracy.
"""

from .compositor import Canvas, composite
from .core import (
    RNG_NAME,
    CoordinateSet,
    FrameSequence,
    GrayImage,
    Translation2D,
    ValidationError,
    compose_coords,
    make_rng,
)
from .graph import (
    AlignmentGraph,
    CandidateEdge,
    GraphConfig,
    NeighborhoodGraph,
    TemplateParams,
    build_neighborhood,
    enforce_consistency,
    propose_candidates,
    prune_multigraph,
    run_pure_graph,
    run_stage_two,
    solve_coordinates,
)
from .metrics import MetricReport, epe, evaluate, re_epe
from .pairwise import (
    ApproxStitch,
    ExternalFlowEstimator,
    LkEstimator,
    LkParams,
    estimate_pair_lk,
    load_external_flows,
    run_stage_one,
)
from .simulate import (
    ScanRealization,
    SimConfig,
    bilinear_crop,
    plan_scan,
    render_scan,
    synthetic_texture,
)
from .vision import (
    Corner,
    MatchResult,
    Pyramid,
    Template,
    build_pyramid,
    corner_score_map,
    dilate_mask,
    extract_templates,
    lk_track,
    match_template,
    shi_tomasi,
)

__version__ = "0.1.0"

__all__ = [
    "AlignmentGraph",
    "ApproxStitch",
    "Canvas",
    "CandidateEdge",
    "CoordinateSet",
    "Corner",
    "ExternalFlowEstimator",
    "FrameSequence",
    "GrayImage",
    "GraphConfig",
    "LkEstimator",
    "LkParams",
    "MatchResult",
    "MetricReport",
    "NeighborhoodGraph",
    "Pyramid",
    "RNG_NAME",
    "ScanRealization",
    "SimConfig",
    "Template",
    "TemplateParams",
    "Translation2D",
    "ValidationError",
    "bilinear_crop",
    "build_neighborhood",
    "build_pyramid",
    "compose_coords",
    "composite",
    "corner_score_map",
    "dilate_mask",
    "enforce_consistency",
    "epe",
    "estimate_pair_lk",
    "evaluate",
    "extract_templates",
    "lk_track",
    "load_external_flows",
    "make_rng",
    "match_template",
    "plan_scan",
    "propose_candidates",
    "prune_multigraph",
    "re_epe",
    "render_scan",
    "run_pure_graph",
    "run_stage_one",
    "run_stage_two",
    "shi_tomasi",
    "solve_coordinates",
    "synthetic_texture",
]
