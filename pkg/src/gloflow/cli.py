"""Command-line front end: simulate scans, stitch them with any of the
five methods, evaluate against ground truth, and benchmark all methods
on one dataset.

Methods map to pipeline arms: `lk` and `external` are stage-one-only
(pairwise) methods that report per-pair EPE; `pure-graph`, `gloflow-lk`,
and `gloflow-external` produce global coordinates (EPE is not defined
for them and is left blank in reports).
"""

import argparse
import json
import logging
import os
import sys
import time
from dataclasses import fields, replace
from pathlib import Path

import numpy as np

from . import io
from .compositor import composite
from .core import RNG_NAME, CoordinateSet, Translation2D, compose_coords
from .graph import GraphConfig, TemplateParams, run_pure_graph, run_stage_two
from .metrics import evaluate
from .pairwise import (
    ExternalFlowEstimator,
    LkEstimator,
    retained_indices,
    run_stage_one,
)
from .simulate import SimConfig, plan_scan, render_scan, synthetic_texture

log = logging.getLogger("gloflow")

PAIRWISE_METHODS = ("lk", "external")
GLOBAL_METHODS = ("pure-graph", "gloflow-lk", "gloflow-external")
ALL_METHODS = PAIRWISE_METHODS + GLOBAL_METHODS


def _setup_logging():
    level = os.environ.get("GLOFLOW_LOG", "WARNING").upper()
    logging.basicConfig(level=getattr(logging, level, logging.WARNING),
                        format="%(levelname)s %(name)s: %(message)s")


def _apply_config_overrides(obj, overrides: dict, prefix: str):
    known = {f.name for f in fields(obj)}
    picked = {}
    for key, val in overrides.items():
        if key in known:
            fld = next(f for f in fields(obj) if f.name == key)
            if isinstance(val, list):
                val = tuple(val)
            picked[key] = val
    if picked:
        obj = replace(obj, **picked)
        log.info("%s overrides applied: %s", prefix, sorted(picked))
    return obj


def _load_config(path) -> dict:
    if path is None:
        return {}
    with open(path) as fh:
        return json.load(fh)


def cmd_simulate(args) -> int:
    overrides = _load_config(args.config)
    cfg = SimConfig(seed=args.seed, patch=args.patch)
    cfg = _apply_config_overrides(cfg, overrides, "SimConfig")

    if args.source is not None:
        source = io.read_gray_png(args.source)
        source_id = Path(args.source).name
    else:
        w, h = map(int, args.synthetic.lower().split("x"))
        source = synthetic_texture(w, h, seed=args.seed, profile=args.texture_profile)
        source_id = f"synthetic-{args.texture_profile}-{w}x{h}-seed{args.seed}"

    real, plan = plan_scan(source.width, source.height, cfg)
    fs = render_scan(source, plan, cfg, source_id=source_id)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    io.write_frames(out, fs.frames)
    io.write_steps_csv(out / "truth_steps.csv", fs.truth_steps)
    io.write_coords_csv(out / "truth_coords.csv", fs.truth_coords)
    io.write_manifest(out / "manifest.json", {
        "seed": cfg.seed,
        "prng": RNG_NAME,
        "patch": cfg.patch,
        "source_id": source_id,
        "n_frames": len(fs),
        "realization": real.as_dict(),
        "config": {
            "mag_range": list(cfg.mag_range),
            "noise_factor_range": list(cfg.noise_factor_range),
            "angle_std_range_deg": list(cfg.angle_std_range_deg),
            "row_overlap_range": list(cfg.row_overlap_range),
        },
    })
    log.info("wrote %d frames to %s", len(fs), out)
    print(f"simulated {len(fs)} frames -> {out}")
    return 0


def _stitch_dataset(args):
    """Shared by stitch/bench: load retained frames and truth for a method run."""
    ds = Path(args.dataset)
    frame_paths = io.list_frame_files(ds)
    keep = retained_indices(len(frame_paths), args.stride)
    frames = [io.read_gray_png(frame_paths[i]) for i in keep]
    return ds, frames, keep


def _run_method(method, frames, keep, args, overrides):
    gcfg = _apply_config_overrides(GraphConfig(), overrides, "GraphConfig")
    tparams = _apply_config_overrides(TemplateParams(), overrides, "TemplateParams")
    t0 = time.perf_counter()
    steps = confs = None
    comparisons = None
    stage_dump = []

    if method in ("lk", "gloflow-lk"):
        approx = run_stage_one(frames, LkEstimator(), stride=1)
        steps, confs = approx.steps, approx.per_step_confidence
    elif method in ("external", "gloflow-external"):
        est = ExternalFlowEstimator.from_file(args.flows, expected_pairs=len(frames) - 1)
        approx = run_stage_one(frames, est, stride=1)
        steps, confs = approx.steps, approx.per_step_confidence

    if method in PAIRWISE_METHODS:
        coords = approx.coords
    elif method == "pure-graph":
        coords, ag = run_pure_graph(frames, gcfg, tparams, threads=args.threads,
                                    collect_stages=stage_dump)
        comparisons = ag.comparisons_made
    else:
        coords, ag = run_stage_two(frames, approx, gcfg, tparams, threads=args.threads,
                                   collect_stages=stage_dump)
        comparisons = ag.comparisons_made
        steps = confs = None  # global methods report no per-pair EPE (N/A)
    wall = time.perf_counter() - t0
    return coords, steps, confs, comparisons, stage_dump, wall


def cmd_stitch(args) -> int:
    overrides = _load_config(args.config)
    ds, frames, keep = _stitch_dataset(args)
    if args.method in ("external", "gloflow-external") and args.flows is None:
        raise SystemExit(f"method {args.method} needs --flows FILE")

    coords, steps, confs, comparisons, stage_dump, wall = _run_method(
        args.method, frames, keep, args, overrides)

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    io.write_coords_csv(out / "coords.csv", coords, indices=keep)
    if steps is not None:
        io.write_steps_csv(out / "pred_steps.csv", steps, confidences=confs)
    if stage_dump:
        rows = []
        for stage, graph in stage_dump:
            for e in graph.edges:
                rows.append((keep[e.src], keep[e.dst], e.translation.dx,
                             e.translation.dy, e.weight, stage))
        io.write_edges_csv(out / "edges.csv", rows)
    if args.canvas:
        canvas = composite(frames, coords, blend=args.blend)
        io.write_gray_png(out / "canvas.png", canvas.image)
    io.write_manifest(out / "run_meta.json", {
        "method": args.method,
        "stride": args.stride,
        "retained": keep,
        "comparisons": comparisons,
        "wall_time_s": wall,
        "dataset": str(ds),
    })
    print(f"stitched {len(frames)} retained frames with {args.method} -> {out} "
          f"({wall:.2f}s)")
    return 0


def cmd_eval(args) -> int:
    run = Path(args.run)
    ds = Path(args.dataset)
    meta = io.read_manifest(run / "run_meta.json")
    idx, pred_coords = io.read_coords_csv(run / "coords.csv")
    t_idx, truth_all = io.read_coords_csv(ds / "truth_coords.csv")
    pos = {i: k for k, i in enumerate(t_idx)}
    try:
        rows = [pos[i] for i in idx]
    except KeyError as e:
        raise SystemExit(f"prediction frame index {e} not present in truth") from None
    truth = CoordinateSet(truth_all.xy[rows] - truth_all.xy[rows[0]])

    pred_steps = truth_steps = None
    steps_path = run / "pred_steps.csv"
    if steps_path.exists():
        pred_steps = [t for t, _ in io.read_steps_csv(steps_path)]
        truth_steps = [
            Translation2D(*(truth.xy[k + 1] - truth.xy[k])) for k in range(len(truth) - 1)
        ]

    report = evaluate(
        pred_coords, truth, pred_steps, truth_steps,
        method=meta.get("method", "unknown"),
        comparisons_made=meta.get("comparisons"),
        wall_time=meta.get("wall_time_s", 0.0),
    )
    out = Path(args.out) if args.out else run / "report.csv"
    io.append_report_row(out, report)
    epe_txt = "n/a" if report.epe_pairwise is None else f"{report.epe_pairwise:.4f}"
    print(f"{report.method}: epe={epe_txt} re_epe={report.re_epe:.4f} -> {out}")
    return 0


def _markdown_table(reports) -> str:
    lines = [
        "| Technique | EPE | Re-EPE | Comparisons | Time (s) |",
        "|---|---|---|---|---|",
    ]
    for r in reports:
        epe_txt = "N/A" if r.epe_pairwise is None else f"{r.epe_pairwise:.2f}"
        cmp_txt = "" if r.comparisons_made is None else str(r.comparisons_made)
        lines.append(
            f"| {r.method} | {epe_txt} | {r.re_epe:.2f} | {cmp_txt} | {r.wall_time:.2f} |"
        )
    return "\n".join(lines) + "\n"


def cmd_bench(args) -> int:
    overrides = _load_config(args.config)
    ds, frames, keep = _stitch_dataset(args)
    _, truth_all = io.read_coords_csv(ds / "truth_coords.csv")
    truth = CoordinateSet(truth_all.xy[keep] - truth_all.xy[keep[0]])
    truth_steps = [
        Translation2D(*(truth.xy[k + 1] - truth.xy[k])) for k in range(len(truth) - 1)
    ]

    if args.flows is None:
        # perfect-predictor placeholder: the external arm replays truth steps
        flows_path = Path(args.out) / "truth_as_flows.csv"
        Path(args.out).mkdir(parents=True, exist_ok=True)
        io.write_steps_csv(flows_path, truth_steps, confidences=[1.0] * len(truth_steps))
        args.flows = str(flows_path)

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    reports = []
    for method in ALL_METHODS:
        coords, steps, confs, comparisons, _, wall = _run_method(
            method, frames, keep, args, overrides)
        report = evaluate(
            coords, truth, steps, truth_steps if steps is not None else None,
            method=method, comparisons_made=comparisons, wall_time=wall)
        reports.append(report)
        io.append_report_row(out / "bench.csv", report)
        log.info("bench %s done in %.2fs", method, wall)

    table = _markdown_table(reports)
    (out / "bench.md").write_text(table)
    print(table, end="")
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="gloflow",
        description="Two-stage video-scan stitching: pairwise flow plus global graph alignment.",
    )
    sub = p.add_subparsers(dest="command", required=True)

    sim = sub.add_parser("simulate", help="generate a simulated scan dataset")
    src = sim.add_mutually_exclusive_group(required=True)
    src.add_argument("--source", help="grayscale/RGB PNG to scan over")
    src.add_argument("--synthetic", metavar="WxH",
                     help="generate a synthetic source of this size instead")
    sim.add_argument("--texture-profile", choices=("detail", "smooth"), default="detail")
    sim.add_argument("--out", required=True, help="output dataset directory")
    sim.add_argument("--seed", type=int, default=0)
    sim.add_argument("--patch", type=int, default=512)
    sim.add_argument("--config", help="JSON file overriding SimConfig fields")

    st = sub.add_parser("stitch", help="stitch a dataset with one method")
    st.add_argument("--method", required=True, choices=ALL_METHODS)
    st.add_argument("--in", dest="dataset", required=True, help="dataset directory")
    st.add_argument("--out", required=True, help="run output directory")
    st.add_argument("--flows", help="flow CSV for the external methods")
    st.add_argument("--stride", type=int, default=20)
    st.add_argument("--threads", type=int, default=1)
    st.add_argument("--canvas", action="store_true", help="also write canvas.png")
    st.add_argument("--blend", choices=("overwrite", "average"), default="overwrite")
    st.add_argument("--config", help="JSON overriding GraphConfig/TemplateParams fields")

    ev = sub.add_parser("eval", help="score a run against dataset ground truth")
    ev.add_argument("--run", required=True, help="run directory from stitch")
    ev.add_argument("--truth", dest="dataset", required=True, help="dataset directory")
    ev.add_argument("--out", help="report CSV (default: <run>/report.csv)")

    be = sub.add_parser("bench", help="run all five methods and tabulate")
    be.add_argument("--in", dest="dataset", required=True)
    be.add_argument("--out", required=True)
    be.add_argument("--flows", help="flow CSV for the external arms (default: truth steps)")
    be.add_argument("--stride", type=int, default=20)
    be.add_argument("--threads", type=int, default=1)
    be.add_argument("--config", help="JSON overriding GraphConfig/TemplateParams fields")

    return p


def main(argv=None) -> int:
    _setup_logging()
    args = build_parser().parse_args(argv)
    handler = {
        "simulate": cmd_simulate,
        "stitch": cmd_stitch,
        "eval": cmd_eval,
        "bench": cmd_bench,
    }[args.command]
    try:
        return handler(args)
    except (OSError, ValueError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
