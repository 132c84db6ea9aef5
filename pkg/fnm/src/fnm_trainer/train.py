"""Training loop: L1 regression of the per-pair translation."""

import argparse
import json
import logging
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np
import torch
from torch.utils.data import DataLoader, Subset

from .data import FnmConfig, PairDataset
from .model import LABEL_NORM, FlowRegressor

log = logging.getLogger("fnm")


@dataclass
class TrainResult:
    checkpoint_path: str
    train_l1_px: float  # original-pixel units
    val_l1_px: float
    epochs_run: int
    history: list


def _split(dataset, val_fraction: float, rng: np.random.Generator):
    """Shuffle-split the real pairs; identity augmentation always trains."""
    n_real = len(dataset) - dataset.n_identity
    idx = rng.permutation(n_real)
    n_val = int(n_real * val_fraction)
    train_idx = idx[n_val:].tolist() + list(range(n_real, len(dataset)))
    return Subset(dataset, train_idx), Subset(dataset, idx[:n_val].tolist())


def _epoch_l1(model, loader, scale) -> float:
    """Mean L1 in original pixels over a loader."""
    model.eval()
    total, count = 0.0, 0
    with torch.no_grad():
        for x, y in loader:
            pred = model.predict_net_pixels(x)
            total += torch.abs(pred - y * 1.0).sum().item() / scale
            count += y.numel()
    return total / count if count else float("nan")


def train(cfg: FnmConfig, checkpoint_path) -> TrainResult:
    """Train the regressor on one or more simulated datasets.

    Deterministic for a given seed up to framework nondeterminism; saves
    the model weights plus the metadata needed by predict (stride, label
    scale) into a single checkpoint file.
    """
    torch.manual_seed(cfg.seed)
    rng = np.random.default_rng(cfg.seed)
    dataset = PairDataset(
        cfg.dataset_dirs, cfg.stride, cfg.identity_fraction, cfg.max_pairs
    )
    scale = dataset.scale
    train_set, val_set = _split(dataset, cfg.val_fraction, rng)
    loader = DataLoader(train_set, batch_size=cfg.batch_size, shuffle=True,
                        generator=torch.Generator().manual_seed(cfg.seed))
    val_loader = DataLoader(val_set, batch_size=cfg.batch_size) if len(val_set) else None

    model = FlowRegressor()
    opt = torch.optim.Adam(model.parameters(), lr=cfg.learning_rate)
    sched = torch.optim.lr_scheduler.CosineAnnealingLR(
        opt, T_max=cfg.epochs, eta_min=cfg.learning_rate * 0.05
    )
    history = []
    for epoch in range(cfg.epochs):
        model.train()
        running, seen = 0.0, 0
        for x, y in loader:
            opt.zero_grad()
            loss = torch.nn.functional.l1_loss(model(x), y / LABEL_NORM)
            loss.backward()
            opt.step()
            running += loss.item() * len(x)
            seen += len(x)
        sched.step()
        train_l1 = running / seen * LABEL_NORM / scale  # back to original px
        history.append(train_l1)
        if epoch % 20 == 0 or epoch == cfg.epochs - 1:
            log.info("epoch %d: train L1 %.3f px", epoch, train_l1)

    final_train = _epoch_l1(model, DataLoader(train_set, batch_size=cfg.batch_size), scale)
    final_val = _epoch_l1(model, val_loader, scale) if val_loader else float("nan")

    checkpoint_path = Path(checkpoint_path)
    checkpoint_path.parent.mkdir(parents=True, exist_ok=True)
    torch.save(
        {
            "state_dict": model.state_dict(),
            "stride": cfg.stride,
            "scale": scale,
            "config": asdict(cfg),
        },
        checkpoint_path,
    )
    return TrainResult(str(checkpoint_path), final_train, final_val, cfg.epochs, history)


def main(argv=None) -> int:
    logging.basicConfig(level=logging.INFO, format="%(levelname)s %(name)s: %(message)s")
    p = argparse.ArgumentParser(prog="fnm-train",
                                description="Train the single-translation flow regressor.")
    p.add_argument("--data", nargs="+", required=True, help="simulated dataset directories")
    p.add_argument("--out", required=True, help="checkpoint path (.pt)")
    p.add_argument("--epochs", type=int, default=200)
    p.add_argument("--batch-size", type=int, default=16)
    p.add_argument("--lr", type=float, default=2e-3)
    p.add_argument("--stride", type=int, default=1,
                   help="must match the stride the stitcher will use")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--identity-fraction", type=float, default=0.1)
    args = p.parse_args(argv)
    cfg = FnmConfig(
        dataset_dirs=args.data, epochs=args.epochs, batch_size=args.batch_size,
        learning_rate=args.lr, stride=args.stride, seed=args.seed,
        identity_fraction=args.identity_fraction,
    )
    result = train(cfg, args.out)
    print(json.dumps({
        "checkpoint": result.checkpoint_path,
        "train_l1_px": round(result.train_l1_px, 4),
        "val_l1_px": round(result.val_l1_px, 4) if result.val_l1_px == result.val_l1_px else None,
    }))
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
