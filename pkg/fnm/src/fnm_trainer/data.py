"""Dataset access: reads simulated scan directories (numbered PNG frames
plus truth_steps.csv) and builds strided frame-pair samples."""

import re
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import torch
from PIL import Image
from torch.utils.data import Dataset

_FRAME_RE = re.compile(r"^frame_(\d{6})\.png$")

#: Training resolution; labels are scaled by NET_SIZE / frame_size and
#: unscaled again at export time.
NET_SIZE = 128


@dataclass
class FnmConfig:
    dataset_dirs: list = field(default_factory=list)
    epochs: int = 200
    batch_size: int = 16
    learning_rate: float = 2e-3
    stride: int = 1
    seed: int = 0
    val_fraction: float = 0.15
    identity_fraction: float = 0.0  # extra (frame, frame) -> (0, 0) samples
    max_pairs: int | None = None


def list_frames(dataset_dir) -> list:
    d = Path(dataset_dir)
    found = {}
    for p in d.iterdir():
        m = _FRAME_RE.match(p.name)
        if m:
            found[int(m.group(1))] = p
    if not found:
        raise FileNotFoundError(f"{d}: no frame_NNNNNN.png files")
    return [found[i] for i in sorted(found)]


def read_truth_steps(dataset_dir) -> np.ndarray:
    path = Path(dataset_dir) / "truth_steps.csv"
    if not path.exists():
        raise FileNotFoundError(f"missing ground-truth file: {path}")
    rows = []
    with open(path) as fh:
        for line in fh:
            line = line.strip()
            if not line or line.lower().startswith("index"):
                continue
            parts = line.split(",")
            rows.append((float(parts[1]), float(parts[2])))
    return np.asarray(rows, dtype=np.float64)


def load_frame(path, size: int = NET_SIZE) -> tuple[np.ndarray, int]:
    """Load one frame as float32 in [0, 1], resized to the net resolution.

    Returns (image, original_size); frames are square by construction.
    """
    img = Image.open(path)
    original = img.size[0]
    if img.size != (size, size):
        img = img.resize((size, size), Image.BILINEAR)
    a = np.asarray(img, dtype=np.float32)
    if a.ndim == 3:
        a = a.mean(axis=2)
    return a / 255.0, original


def load_dataset_pairs(dataset_dir, stride: int = 1, max_pairs: int | None = None):
    """Strided consecutive pairs with labels summed over the gap.

    Returns (pairs, labels, scale) where pairs is a list of (path_a,
    path_b), labels are in original pixels, and scale converts original
    pixels to net pixels.
    """
    frames = list_frames(dataset_dir)
    steps = read_truth_steps(dataset_dir)
    if len(steps) != len(frames) - 1:
        raise ValueError(
            f"{dataset_dir}: {len(frames)} frames but {len(steps)} truth steps"
        )
    coords = np.vstack([[0.0, 0.0], np.cumsum(steps, axis=0)])
    keep = list(range(0, len(frames), stride))
    pairs, labels = [], []
    for k in range(len(keep) - 1):
        i, j = keep[k], keep[k + 1]
        pairs.append((frames[i], frames[j]))
        labels.append(coords[j] - coords[i])
    if max_pairs is not None:
        pairs, labels = pairs[:max_pairs], labels[:max_pairs]
    with Image.open(frames[0]) as im:
        patch = im.size[0]
    return pairs, np.asarray(labels, dtype=np.float64), NET_SIZE / patch


class PairDataset(Dataset):
    """Channelwise-stacked frame pairs with net-scaled labels.

    identity_fraction appends (frame, frame) samples labeled (0, 0),
    the easiest cases the regressor should nail.
    """

    def __init__(self, dataset_dirs, stride: int = 1, identity_fraction: float = 0.0,
                 max_pairs: int | None = None):
        self.samples = []  # (path_a, path_b, label_net_px)
        self.scale = None
        for d in dataset_dirs:
            pairs, labels, scale = load_dataset_pairs(d, stride, max_pairs)
            if self.scale is None:
                self.scale = scale
            elif abs(self.scale - scale) > 1e-9:
                raise ValueError("datasets mix different patch sizes")
            for (a, b), lab in zip(pairs, labels):
                self.samples.append((a, b, lab * scale))
        self.n_identity = int(identity_fraction * len(self.samples))
        for a, _, _ in self.samples[: self.n_identity]:
            self.samples.append((a, a, np.zeros(2)))
        self._cache: dict = {}

    def __len__(self):
        return len(self.samples)

    def _image(self, path):
        if path not in self._cache:
            self._cache[path] = load_frame(path)[0]
        return self._cache[path]

    def __getitem__(self, idx):
        a, b, label = self.samples[idx]
        x = np.stack([self._image(a), self._image(b)])
        return torch.from_numpy(x), torch.tensor(label, dtype=torch.float32)
