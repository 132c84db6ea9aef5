"""File formats for the pipeline: 8-bit grayscale PNG frames, CSV tables
for steps/coordinates/flows/edges, JSON manifests, and the simulated
dataset layout.

Floats are written with shortest round-trip precision so that
write-then-read is exact for finite values.
"""

import json
import re
from pathlib import Path

import numpy as np
from PIL import Image

from .core import CoordinateSet, GrayImage, Translation2D
from .metrics import REPORT_HEADER, MetricReport

_FRAME_RE = re.compile(r"^frame_(\d{6})\.png$")

# Rec.601 luminance weights for RGB sources
_LUMA = np.array([0.299, 0.587, 0.114])


class ParseError(ValueError):
    """A malformed or inconsistent input file."""


def _fmt(v: float) -> str:
    return repr(float(v))


def write_gray_png(path, img: GrayImage) -> None:
    q = np.rint(img.data * 255.0).astype(np.uint8)
    Image.fromarray(q, mode="L").save(Path(path), format="PNG")


def read_gray_png(path) -> GrayImage:
    path = Path(path)
    if not path.exists():
        raise ParseError(f"{path}: no such file")
    a = np.asarray(Image.open(path))
    if a.ndim == 3:
        a = a[..., :3].astype(np.float64) @ _LUMA
        if a.max() > 1.0:
            a = a / 255.0
    elif a.dtype == np.uint8:
        a = a.astype(np.float64) / 255.0
    elif a.dtype == np.uint16:
        a = a.astype(np.float64) / 65535.0
    else:
        a = a.astype(np.float64)
    return GrayImage(np.clip(a, 0.0, 1.0))


def frame_name(index: int) -> str:
    return f"frame_{index:06d}.png"


def write_frames(directory, frames) -> None:
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    for i, f in enumerate(frames):
        write_gray_png(d / frame_name(i), f)


def list_frame_files(directory) -> list[Path]:
    """Contiguously numbered frame files; a gap raises naming the index."""
    d = Path(directory)
    found = {}
    for p in d.iterdir():
        m = _FRAME_RE.match(p.name)
        if m:
            found[int(m.group(1))] = p
    if not found:
        raise ParseError(f"{d}: no frame_NNNNNN.png files found")
    n = max(found) + 1
    for i in range(n):
        if i not in found:
            raise ParseError(f"{d}: missing frame index {i} ({frame_name(i)})")
    return [found[i] for i in range(n)]


def read_frames(directory) -> list[GrayImage]:
    return [read_gray_png(p) for p in list_frame_files(directory)]


def _read_rows(path, expected_cols: tuple[int, ...], header_prefix: str):
    path = Path(path)
    if not path.exists():
        raise ParseError(f"{path}: no such file")
    rows = []
    with open(path) as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            if lineno == 1 and line.lower().startswith(header_prefix):
                continue
            parts = line.split(",")
            if len(parts) not in expected_cols:
                raise ParseError(
                    f"{path}:{lineno}: expected {' or '.join(map(str, expected_cols))} "
                    f"columns, got {len(parts)}"
                )
            try:
                rows.append((lineno, [float(p) for p in parts]))
            except ValueError as e:
                raise ParseError(f"{path}:{lineno}: {e}") from None
    return rows


def write_steps_csv(path, steps, confidences=None) -> None:
    """Step/flow table: `index,dx,dy[,confidence]`, index = pair ordinal."""
    with open(Path(path), "w") as fh:
        if confidences is None:
            fh.write("index,dx,dy\n")
            for i, s in enumerate(steps):
                fh.write(f"{i},{_fmt(s.dx)},{_fmt(s.dy)}\n")
        else:
            fh.write("index,dx,dy,confidence\n")
            for i, (s, c) in enumerate(zip(steps, confidences)):
                fh.write(f"{i},{_fmt(s.dx)},{_fmt(s.dy)},{_fmt(c)}\n")


def read_steps_csv(path) -> list[tuple[Translation2D, float]]:
    """Read a step/flow table; the confidence column defaults to 1.0."""
    out = []
    for lineno, vals in _read_rows(path, (3, 4), "index"):
        t = Translation2D(vals[1], vals[2])
        conf = vals[3] if len(vals) == 4 else 1.0
        out.append((t, float(conf)))
    return out


def write_coords_csv(path, coords: CoordinateSet, indices=None) -> None:
    """Coordinate table `index,x,y`; indices default to 0..N-1."""
    idx = list(range(len(coords))) if indices is None else list(indices)
    if len(idx) != len(coords):
        raise ValueError(f"{len(idx)} indices for {len(coords)} coordinates")
    with open(Path(path), "w") as fh:
        fh.write("index,x,y\n")
        for i, (x, y) in zip(idx, coords.xy):
            fh.write(f"{i},{_fmt(x)},{_fmt(y)}\n")


def read_coords_csv(path) -> tuple[list[int], CoordinateSet]:
    idx, xy = [], []
    for lineno, vals in _read_rows(path, (3,), "index"):
        idx.append(int(vals[0]))
        xy.append((vals[1], vals[2]))
    return idx, CoordinateSet(np.array(xy))


def write_edges_csv(path, rows) -> None:
    """Diagnostic edge dump: rows of (src, dst, dx, dy, weight, stage)."""
    with open(Path(path), "w") as fh:
        fh.write("src,dst,dx,dy,weight,stage\n")
        for src, dst, dx, dy, w, stage in rows:
            fh.write(f"{src},{dst},{_fmt(dx)},{_fmt(dy)},{_fmt(w)},{stage}\n")


def append_report_row(path, report: MetricReport) -> None:
    path = Path(path)
    new = not path.exists()
    with open(path, "a") as fh:
        if new:
            fh.write(REPORT_HEADER + "\n")
        fh.write(report.to_csv_row() + "\n")


def write_manifest(path, manifest: dict) -> None:
    with open(Path(path), "w") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")


def read_manifest(path) -> dict:
    path = Path(path)
    if not path.exists():
        raise ParseError(f"{path}: no such file")
    with open(path) as fh:
        return json.load(fh)
