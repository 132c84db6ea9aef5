"""Stage two: global alignment over a pruned neighborhood graph.

From the approximate stitch, frames whose upper-left coordinates lie
within a radius of each other become neighbors. Template matching
between neighbors proposes candidate translations (a multigraph), which
are pruned per directed pair, cross-checked for forward/backward
antisymmetry, and finally fed to a weighted least-squares solve for
global coordinates. The same machinery with an all-pairs graph and
full-frame search is the Pure Graph baseline.
"""

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace

import numpy as np
from scipy import sparse
from scipy.sparse.linalg import cg as sparse_cg

from .core import CoordinateSet, Translation2D, ValidationError
from .pairwise import ApproxStitch
from .vision import Template, extract_templates, match_template, shi_tomasi

log = logging.getLogger(__name__)

MULTIGRAPH = "multigraph"
DIRECTED = "directed"
UNDIRECTED = "undirected"


@dataclass(frozen=True)
class GraphConfig:
    """Stage-two knobs; radius_factor realizes the twice-the-frame-width rule."""

    radius_factor: float = 2.0
    search_radius: float = 40.0
    translation_merge_tol: float = 3.0
    min_weight: float = 0.65
    consistency_tol: float = 4.0
    min_edges_per_node: int = 1
    # When the prior-guided search finds nothing at/above min_weight for a
    # pair, retry that pair with a full-target search. This lets stage two
    # recover from stage-one failures larger than search_radius.
    fallback_full_search: bool = True

    def __post_init__(self):
        if min(self.radius_factor, self.search_radius, self.translation_merge_tol,
               self.consistency_tol) <= 0:
            raise ValidationError("GraphConfig distances must be positive")
        if not (0.0 < self.min_weight <= 1.0):
            raise ValidationError(f"min_weight must be in (0, 1], got {self.min_weight}")

    @property
    def solo_edge_weight(self) -> float:
        return self.min_weight + 0.15


@dataclass(frozen=True)
class TemplateParams:
    """Corner selection and template extraction settings for matching.

    Corners are spaced so their dilated neighborhoods stay disjoint
    (min_distance > 2 * dilation_radius + 1), keeping template bounding
    boxes within size limits on texture-rich frames.
    """

    dilation_radius: int = 15
    max_templates: int = 8
    min_size: int = 16
    max_size: int = 128
    max_corners: int = 32
    quality: float = 0.01
    min_distance: float = 34.0


@dataclass(frozen=True)
class NeighborhoodGraph:
    """Symmetric, irreflexive adjacency over frame indices."""

    n: int
    adjacency: tuple

    def neighbors(self, u: int) -> frozenset:
        return self.adjacency[u]


@dataclass(frozen=True)
class CandidateEdge:
    """A measured translation dst_origin - src_origin with its NCC weight."""

    src: int
    dst: int
    translation: Translation2D
    weight: float


@dataclass
class AlignmentGraph:
    stage: str
    edges: list
    comparisons_made: int = 0


def build_neighborhood(
    approx: CoordinateSet, frame_width: float, cfg: GraphConfig | None = None
) -> NeighborhoodGraph:
    """Frames within radius_factor * frame_width of each other are neighbors.

    Uses a uniform grid hash, so construction is O(n) expected for
    bounded-density stitches. Distance is Euclidean between upper-left
    coordinates, boundary inclusive.
    """
    cfg = cfg or GraphConfig()
    n = len(approx)
    if n < 2:
        raise ValidationError("neighborhood graph needs at least 2 frames")
    radius = cfg.radius_factor * frame_width
    r2 = radius * radius
    xy = approx.xy
    cells: dict[tuple[int, int], list[int]] = {}
    keys = np.floor(xy / radius).astype(np.int64)
    for i in range(n):
        cells.setdefault((int(keys[i, 0]), int(keys[i, 1])), []).append(i)

    adj: list[set[int]] = [set() for _ in range(n)]
    for (kx, ky), members in cells.items():
        neighbors_here: list[int] = []
        for gx in (kx - 1, kx, kx + 1):
            for gy in (ky - 1, ky, ky + 1):
                neighbors_here.extend(cells.get((gx, gy), ()))
        for u in members:
            for v in neighbors_here:
                if v <= u:
                    continue
                d = xy[u] - xy[v]
                if d[0] * d[0] + d[1] * d[1] <= r2:
                    adj[u].add(v)
                    adj[v].add(u)
    return NeighborhoodGraph(n, tuple(frozenset(s) for s in adj))


def complete_graph(n: int) -> NeighborhoodGraph:
    if n < 2:
        raise ValidationError("need at least 2 frames")
    full = frozenset(range(n))
    return NeighborhoodGraph(n, tuple(full - {u} for u in range(n)))


def frame_templates(frame, params: TemplateParams) -> list[Template]:
    corners = shi_tomasi(
        frame,
        max_corners=params.max_corners,
        quality=params.quality,
        min_distance=params.min_distance,
    )
    return extract_templates(
        frame,
        corners,
        dilation_radius=params.dilation_radius,
        max_templates=params.max_templates,
        min_size=params.min_size,
        max_size=params.max_size,
    )


def propose_candidates(
    frames,
    graph: NeighborhoodGraph,
    cfg: GraphConfig | None = None,
    prior: CoordinateSet | None = None,
    template_params: TemplateParams | None = None,
    threads: int = 1,
) -> AlignmentGraph:
    """Match each frame's templates into its neighbors.

    Every directed (u, v) pair contributes one candidate edge per template
    of u (its best placement), searched around the prior offset
    prior[v] - prior[u]. comparisons_made counts directed pairs processed.
    """
    cfg = cfg or GraphConfig()
    tp = template_params or TemplateParams()
    prior_xy = prior.xy if prior is not None else np.zeros((graph.n, 2))
    full_search = prior is None

    templates: list[list[Template]] = []
    for u in range(graph.n):
        tpls = frame_templates(frames[u], tp)
        if not tpls:
            log.warning("frame %d yields no templates; no outgoing candidates", u)
        templates.append(tpls)

    pairs = [(u, v) for u in range(graph.n) for v in sorted(graph.neighbors(u))]
    cache: dict = {}  # shared target spectra / normalization sums

    def run_pair(uv):
        u, v = uv
        target = frames[v]
        full_radius = float(max(target.width, target.height))
        if full_search:
            center, radius = Translation2D(0.0, 0.0), full_radius
        else:
            center = Translation2D(
                float(prior_xy[v, 0] - prior_xy[u, 0]), float(prior_xy[v, 1] - prior_xy[u, 1])
            )
            radius = cfg.search_radius
        found = []
        for tpl in templates[u]:
            r = match_template(tpl, target, center, radius, cache=cache)
            if r is not None:
                found.append(CandidateEdge(u, v, r.translation, r.correlation))
        best = max((e.weight for e in found), default=-np.inf)
        # a miss only signals a bad prior when the prior claims overlap
        claims_overlap = (
            not full_search
            and abs(center.dx) < target.width
            and abs(center.dy) < target.height
        )
        if (
            cfg.fallback_full_search
            and claims_overlap
            and radius < full_radius
            and best < cfg.min_weight
        ):
            found = []
            for tpl in templates[u]:
                r = match_template(tpl, target, Translation2D(0.0, 0.0), full_radius, cache=cache)
                if r is not None:
                    found.append(CandidateEdge(u, v, r.translation, r.correlation))
        return found

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as ex:
            per_pair = list(ex.map(run_pair, pairs))
    else:
        per_pair = [run_pair(uv) for uv in pairs]

    edges = [e for found in per_pair for e in found]
    return AlignmentGraph(MULTIGRAPH, edges, comparisons_made=len(pairs))


def prune_multigraph(mg: AlignmentGraph, cfg: GraphConfig | None = None) -> AlignmentGraph:
    """Collapse each ordered pair's candidates to its best translation cluster.

    Candidates within translation_merge_tol (L-inf) of the strongest
    remaining candidate form a cluster; the representative translation is
    the weight-weighted mean and the representative weight the cluster
    max. Only the best cluster survives, and only at/above min_weight.
    """
    if mg.stage != MULTIGRAPH:
        raise ValidationError(f"expected a multigraph, got stage '{mg.stage}'")
    cfg = cfg or GraphConfig()
    groups: dict[tuple[int, int], list[CandidateEdge]] = {}
    for e in mg.edges:
        groups.setdefault((e.src, e.dst), []).append(e)

    out = []
    for (src, dst) in sorted(groups):
        pool = sorted(
            groups[(src, dst)],
            key=lambda e: (-e.weight, e.translation.dy, e.translation.dx),
        )
        clusters = []
        while pool:
            seed = pool[0]
            members = [
                e
                for e in pool
                if max(
                    abs(e.translation.dx - seed.translation.dx),
                    abs(e.translation.dy - seed.translation.dy),
                )
                <= cfg.translation_merge_tol
            ]
            pool = [e for e in pool if e not in members]
            wsum = sum(e.weight for e in members)
            tx = sum(e.weight * e.translation.dx for e in members) / wsum
            ty = sum(e.weight * e.translation.dy for e in members) / wsum
            clusters.append((max(e.weight for e in members), Translation2D(tx, ty)))
        best_w, best_t = max(clusters, key=lambda c: c[0])
        if best_w >= cfg.min_weight:
            out.append(CandidateEdge(src, dst, best_t, best_w))
    return AlignmentGraph(DIRECTED, out, comparisons_made=mg.comparisons_made)


def enforce_consistency(dg: AlignmentGraph, cfg: GraphConfig | None = None) -> AlignmentGraph:
    """Keep pairs whose forward and backward translations cancel.

    Where both directions exist, the pair survives iff ||t_uv + t_vu|| <=
    consistency_tol, stored as t = (t_uv - t_vu) / 2 oriented low->high
    with the weaker direction's weight. One-directional measurements need
    the stricter solo threshold (min_weight + 0.15).
    """
    if dg.stage != DIRECTED:
        raise ValidationError(f"expected a directed graph, got stage '{dg.stage}'")
    cfg = cfg or GraphConfig()
    directed = {(e.src, e.dst): e for e in dg.edges}
    out = []
    for (u, v) in sorted({(min(s, d), max(s, d)) for s, d in directed}):
        fwd = directed.get((u, v))
        bwd = directed.get((v, u))
        if fwd is not None and bwd is not None:
            s = fwd.translation + bwd.translation
            if s.norm() <= cfg.consistency_tol:
                t = Translation2D(
                    0.5 * (fwd.translation.dx - bwd.translation.dx),
                    0.5 * (fwd.translation.dy - bwd.translation.dy),
                )
                out.append(CandidateEdge(u, v, t, min(fwd.weight, bwd.weight)))
        else:
            e = fwd if fwd is not None else bwd
            if e.weight >= cfg.solo_edge_weight:
                t = e.translation if fwd is not None else -e.translation
                out.append(CandidateEdge(u, v, t, e.weight))
    return AlignmentGraph(UNDIRECTED, out, comparisons_made=dg.comparisons_made)


def _solve_component(nodes: list[int], edges: list[CandidateEdge], fallback: np.ndarray) -> np.ndarray:
    """Weighted LS positions for one connected component, anchor at 0."""
    m = len(nodes)
    local = np.zeros((m, 2))
    if m == 1 or not edges:
        return local
    index = {node: i for i, node in enumerate(nodes)}
    rows, cols, vals = [], [], []
    b = np.zeros((m, 2))
    for e in edges:
        iu, iv = index[e.src], index[e.dst]
        w = e.weight
        rows += [iu, iv, iu, iv]
        cols += [iu, iv, iv, iu]
        vals += [w, w, -w, -w]
        b[iv, 0] += w * e.translation.dx
        b[iu, 0] -= w * e.translation.dx
        b[iv, 1] += w * e.translation.dy
        b[iu, 1] -= w * e.translation.dy
    lap = sparse.csr_matrix((vals, (rows, cols)), shape=(m, m))
    keep = np.arange(1, m)  # anchor (lowest node index) pinned at the origin
    a = lap[keep][:, keep]
    diag = a.diagonal()
    precond = sparse.diags(1.0 / np.where(diag > 0, diag, 1.0))
    x0 = fallback[nodes][1:] - fallback[nodes[0]]
    # rtol well below the 1e-6 agreement required against tree integration;
    # ill-conditioned chains amplify the residual into coordinates
    for axis in range(2):
        sol, info = sparse_cg(
            a, b[keep, axis], x0=x0[:, axis].copy(), rtol=1e-12, atol=1e-12,
            M=precond, maxiter=20 * m,
        )
        if info != 0:
            log.warning("CG fell back to a dense solve (info=%d)", info)
            sol = np.linalg.solve(a.toarray(), b[keep, axis])
        local[1:, axis] = sol
    return local


def solve_coordinates(
    ug: AlignmentGraph, n_frames: int, fallback: CoordinateSet
) -> CoordinateSet:
    """Global coordinates from consistent edges by weighted least squares.

    Each connected component solves min sum_e w_e ||p_v - p_u - t_uv||^2
    (x and y decouple) with Jacobi-preconditioned conjugate gradient,
    anchored at its lowest-index node; components are then placed at their
    anchors' fallback positions, and everything is shifted so frame 0
    lands at (0, 0). An empty graph returns the fallback verbatim.
    """
    if ug.stage != UNDIRECTED:
        raise ValidationError(f"expected a consistent undirected graph, got '{ug.stage}'")
    if len(fallback) != n_frames:
        raise ValidationError(f"fallback has {len(fallback)} coords for {n_frames} frames")
    if not ug.edges:
        log.warning("no consistent edges; returning the approximate stitch unchanged")
        return fallback

    adj: list[list[CandidateEdge]] = [[] for _ in range(n_frames)]
    for e in ug.edges:
        adj[e.src].append(e)
        adj[e.dst].append(e)

    seen = np.zeros(n_frames, dtype=bool)
    out = np.zeros((n_frames, 2))
    for start in range(n_frames):
        if seen[start]:
            continue
        comp_nodes = []
        comp_edges = []
        stack = [start]
        seen[start] = True
        while stack:
            u = stack.pop()
            comp_nodes.append(u)
            for e in adj[u]:
                o = e.dst if e.src == u else e.src
                if not seen[o]:
                    seen[o] = True
                    stack.append(o)
        comp_nodes.sort()
        node_set = set(comp_nodes)
        comp_edges = [e for e in ug.edges if e.src in node_set and e.dst in node_set]
        local = _solve_component(comp_nodes, comp_edges, fallback.xy)
        out[comp_nodes] = local + fallback.xy[comp_nodes[0]]
    return CoordinateSet(out - out[0])


def run_stage_two(
    frames,
    approx,
    cfg: GraphConfig | None = None,
    template_params: TemplateParams | None = None,
    threads: int = 1,
    collect_stages: list | None = None,
) -> tuple[CoordinateSet, AlignmentGraph]:
    """Neighborhood graph -> candidates -> prune -> consistency -> solve."""
    cfg = cfg or GraphConfig()
    prior = approx.coords if isinstance(approx, ApproxStitch) else approx
    if len(prior) != len(frames):
        raise ValidationError(f"{len(prior)} prior coords for {len(frames)} frames")
    ngraph = build_neighborhood(prior, frames[0].width, cfg)
    mg = propose_candidates(frames, ngraph, cfg, prior, template_params, threads)
    dg = prune_multigraph(mg, cfg)
    ug = enforce_consistency(dg, cfg)
    low = [u for u in range(ngraph.n) if sum(1 for e in ug.edges if u in (e.src, e.dst)) < cfg.min_edges_per_node]
    if low:
        log.warning("%d frames have fewer than %d consistent edges", len(low), cfg.min_edges_per_node)
    if collect_stages is not None:
        collect_stages.extend([(MULTIGRAPH, mg), (DIRECTED, dg), (UNDIRECTED, ug)])
    coords = solve_coordinates(ug, len(frames), prior)
    return coords, ug


def run_pure_graph(
    frames,
    cfg: GraphConfig | None = None,
    template_params: TemplateParams | None = None,
    threads: int = 1,
    collect_stages: list | None = None,
) -> tuple[CoordinateSet, AlignmentGraph]:
    """All-pairs baseline: no prior, full-frame search, n(n-1) comparisons."""
    cfg = cfg or GraphConfig()
    n = len(frames)
    ngraph = complete_graph(n)
    mg = propose_candidates(frames, ngraph, cfg, None, template_params, threads)
    dg = prune_multigraph(mg, cfg)
    ug = enforce_consistency(dg, cfg)
    if collect_stages is not None:
        collect_stages.extend([(MULTIGRAPH, mg), (DIRECTED, dg), (UNDIRECTED, ug)])
    zeros = CoordinateSet(np.zeros((n, 2)))
    coords = solve_coordinates(ug, n, zeros)
    return coords, ug
