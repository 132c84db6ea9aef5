"""Shared domain types and deterministic randomness.

Coordinate convention used throughout the package: x grows rightward,
y grows downward, and the origin is the upper-left corner of frame 0.
A ``Translation2D`` between two frames is always "destination frame's
origin minus source frame's origin" (camera motion); image content
moves by the negative of that vector.
"""

from dataclasses import dataclass, field

import numpy as np

#: Name of the PRNG recorded in simulation manifests. numpy's PCG64 is
#: seed-stable across platforms and numpy releases.
RNG_NAME = "numpy-pcg64"


class ValidationError(ValueError):
    """A contract violation on inputs to a public operation."""


def make_rng(seed: int) -> np.random.Generator:
    """Deterministic generator: identical seed, identical stream everywhere."""
    return np.random.Generator(np.random.PCG64(seed))


@dataclass(frozen=True)
class GrayImage:
    """2-D luminance raster with values in [0, 1], row-major (y, x)."""

    data: np.ndarray

    def __post_init__(self):
        a = np.asarray(self.data, dtype=np.float64)
        if a.ndim != 2 or a.size == 0:
            raise ValidationError(f"GrayImage needs a non-empty 2-D array, got shape {a.shape}")
        if not np.all(np.isfinite(a)):
            raise ValidationError("GrayImage values must be finite")
        if a.min() < 0.0 or a.max() > 1.0:
            raise ValidationError(
                f"GrayImage values must lie in [0, 1], got range [{a.min():g}, {a.max():g}]"
            )
        a = np.ascontiguousarray(a)
        a.setflags(write=False)
        object.__setattr__(self, "data", a)

    @classmethod
    def from_buffer(cls, width: int, height: int, values) -> "GrayImage":
        """Build from a flat row-major buffer; rejects mismatched sizes."""
        v = np.asarray(values, dtype=np.float64).ravel()
        if v.size != width * height:
            raise ValidationError(
                f"buffer has {v.size} values, expected {width}x{height}={width * height}"
            )
        return cls(v.reshape(height, width))

    @property
    def width(self) -> int:
        return self.data.shape[1]

    @property
    def height(self) -> int:
        return self.data.shape[0]

    @property
    def shape(self) -> tuple[int, int]:
        return self.data.shape


@dataclass(frozen=True)
class Translation2D:
    """Sub-pixel displacement in pixels: dx rightward, dy downward."""

    dx: float
    dy: float

    def __post_init__(self):
        if not (np.isfinite(self.dx) and np.isfinite(self.dy)):
            raise ValidationError(f"translation components must be finite, got ({self.dx}, {self.dy})")
        object.__setattr__(self, "dx", float(self.dx))
        object.__setattr__(self, "dy", float(self.dy))

    def __add__(self, other: "Translation2D") -> "Translation2D":
        return Translation2D(self.dx + other.dx, self.dy + other.dy)

    def __sub__(self, other: "Translation2D") -> "Translation2D":
        return Translation2D(self.dx - other.dx, self.dy - other.dy)

    def __neg__(self) -> "Translation2D":
        return Translation2D(-self.dx, -self.dy)

    def norm(self) -> float:
        return float(np.hypot(self.dx, self.dy))

    def as_array(self) -> np.ndarray:
        return np.array([self.dx, self.dy], dtype=np.float64)

    @classmethod
    def from_array(cls, a) -> "Translation2D":
        a = np.asarray(a, dtype=np.float64)
        return cls(float(a[0]), float(a[1]))


@dataclass(frozen=True)
class CoordinateSet:
    """Per-frame global upper-left coordinates, one (x, y) row per frame."""

    xy: np.ndarray

    def __post_init__(self):
        a = np.asarray(self.xy, dtype=np.float64)
        if a.ndim != 2 or a.shape[1] != 2 or a.shape[0] < 1:
            raise ValidationError(f"coordinates must be an (N, 2) array with N >= 1, got {a.shape}")
        if not np.all(np.isfinite(a)):
            raise ValidationError("coordinates must be finite")
        a = np.ascontiguousarray(a)
        a.setflags(write=False)
        object.__setattr__(self, "xy", a)

    def __len__(self) -> int:
        return self.xy.shape[0]

    def __getitem__(self, i) -> np.ndarray:
        return self.xy[i]

    def shifted(self, dx: float, dy: float) -> "CoordinateSet":
        return CoordinateSet(self.xy + np.array([dx, dy]))

    def subset(self, indices) -> "CoordinateSet":
        return CoordinateSet(self.xy[np.asarray(indices, dtype=int)])


def coords_from(obj) -> np.ndarray:
    """Coerce a CoordinateSet, translation list, or array-like to an (N, 2) array."""
    if isinstance(obj, CoordinateSet):
        return obj.xy
    if len(obj) > 0 and isinstance(obj[0], Translation2D):
        return np.array([[t.dx, t.dy] for t in obj], dtype=np.float64)
    a = np.asarray(obj, dtype=np.float64)
    if a.ndim != 2 or a.shape[1] != 2:
        raise ValidationError(f"expected (N, 2) coordinate data, got shape {a.shape}")
    return a


def compose_coords(steps) -> CoordinateSet:
    """Prefix-sum step translations into per-frame coordinates.

    coords[0] is (0, 0) and coords[i+1] == coords[i] + steps[i] exactly;
    an empty step list yields the single origin frame.
    """
    out = np.zeros((len(steps) + 1, 2), dtype=np.float64)
    for i, s in enumerate(steps):
        if isinstance(s, Translation2D):
            dx, dy = s.dx, s.dy
        else:
            dx, dy = float(s[0]), float(s[1])
        if not (np.isfinite(dx) and np.isfinite(dy)):
            raise ValidationError(f"step {i} is not finite: ({dx}, {dy})")
        out[i + 1, 0] = out[i, 0] + dx
        out[i + 1, 1] = out[i, 1] + dy
    return CoordinateSet(out)


@dataclass(frozen=True)
class FrameSequence:
    """Ordered frames of a simulated scan plus exact per-step ground truth."""

    frames: tuple
    truth_steps: tuple
    truth_coords: CoordinateSet = field(init=False)
    source_id: str = ""
    seed: int = 0

    def __post_init__(self):
        frames = tuple(self.frames)
        steps = tuple(self.truth_steps)
        if len(frames) < 1:
            raise ValidationError("a frame sequence needs at least one frame")
        if len(steps) != len(frames) - 1:
            raise ValidationError(
                f"{len(frames)} frames require {len(frames) - 1} truth steps, got {len(steps)}"
            )
        object.__setattr__(self, "frames", frames)
        object.__setattr__(self, "truth_steps", steps)
        object.__setattr__(self, "truth_coords", compose_coords(steps))

    def __len__(self) -> int:
        return len(self.frames)
