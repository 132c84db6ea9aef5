"""Export per-pair predictions in the stitcher's flow-file format."""

import argparse

import numpy as np
import torch

from .data import list_frames, load_frame
from .model import FlowRegressor


def export_predictions(checkpoint_path, dataset_dir, out_path, stride: int | None = None) -> int:
    """Predict every strided consecutive pair and write the flow CSV.

    Rows are `index,dx,dy,confidence` with index the retained-pair
    ordinal and confidence fixed at 1.0; row count is retained frames
    minus one, which is exactly what the stitcher's external-flow loader
    expects.
    """
    ckpt = torch.load(checkpoint_path, map_location="cpu", weights_only=False)
    model = FlowRegressor()
    model.load_state_dict(ckpt["state_dict"])
    model.eval()
    scale = ckpt["scale"]
    stride = ckpt["stride"] if stride is None else stride

    frames = list_frames(dataset_dir)
    keep = list(range(0, len(frames), stride))
    rows = []
    with torch.no_grad():
        for k in range(len(keep) - 1):
            a, _ = load_frame(frames[keep[k]])
            b, _ = load_frame(frames[keep[k + 1]])
            x = torch.from_numpy(np.stack([a, b])[None])
            pred = model.predict_net_pixels(x)[0].numpy() / scale
            rows.append((k, float(pred[0]), float(pred[1])))

    with open(out_path, "w") as fh:
        fh.write("index,dx,dy,confidence\n")
        for k, dx, dy in rows:
            fh.write(f"{k},{dx!r},{dy!r},1.0\n")
    return len(rows)


def main(argv=None) -> int:
    p = argparse.ArgumentParser(prog="fnm-predict",
                                description="Write flow-file predictions for a dataset.")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--data", required=True, help="simulated dataset directory")
    p.add_argument("--out", required=True, help="flow CSV path")
    p.add_argument("--stride", type=int, default=None,
                   help="override the checkpoint's stride")
    args = p.parse_args(argv)
    n = export_predictions(args.checkpoint, args.data, args.out, args.stride)
    print(f"wrote {n} predictions -> {args.out}")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
