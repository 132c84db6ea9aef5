"""FNM trainer tests. The stitching pipeline is exercised only through
its external surfaces: the `gloflow` CLI and the dataset / flow-file
formats."""

import json
import shutil
import subprocess
import sys
from pathlib import Path

import numpy as np
import pytest

torch = pytest.importorskip("torch")
pytest.importorskip("fnm_trainer")

from fnm_trainer import FnmConfig, PairDataset, export_predictions, train
from fnm_trainer.data import load_dataset_pairs, load_frame, read_truth_steps
from fnm_trainer.model import FlowRegressor

GLOFLOW = shutil.which("gloflow")
pytestmark = pytest.mark.skipif(GLOFLOW is None, reason="gloflow CLI not installed")


def run_cli(*args):
    proc = subprocess.run([*args], capture_output=True, text=True)
    assert proc.returncode == 0, f"{args}: {proc.stderr}"
    return proc.stdout


@pytest.fixture(scope="session")
def dataset(tmp_path_factory):
    """A small simulated dataset produced by the stitcher's own CLI."""
    root = tmp_path_factory.mktemp("fnm")
    ds = root / "ds"
    cfg = root / "sim.json"
    cfg.write_text(json.dumps({
        "mag_range": [12.0, 12.0],
        "noise_factor_range": [15.0, 15.0],
        "angle_std_range_deg": [3.0, 3.0],
        "row_overlap_range": [0.3, 0.3],
    }))
    run_cli(GLOFLOW, "simulate", "--synthetic", "600x600", "--patch", "256",
            "--seed", "42", "--out", str(ds), "--config", str(cfg))
    return ds


@pytest.fixture(scope="session")
def overfit_run(dataset, tmp_path_factory):
    ckpt = tmp_path_factory.mktemp("ckpt") / "fnm.pt"
    cfg = FnmConfig(
        dataset_dirs=[str(dataset)], epochs=200, batch_size=8, learning_rate=3e-3,
        stride=1, seed=0, val_fraction=0.15, identity_fraction=0.2, max_pairs=50,
    )
    result = train(cfg, ckpt)
    return cfg, result


def test_dataset_pairs_and_labels(dataset):
    pairs, labels, scale = load_dataset_pairs(dataset, stride=1)
    steps = read_truth_steps(dataset)
    assert len(pairs) == len(steps)
    np.testing.assert_allclose(labels, steps, atol=1e-9)
    # strided labels sum the intermediate steps
    _, labels3, _ = load_dataset_pairs(dataset, stride=3)
    np.testing.assert_allclose(labels3[0], steps[:3].sum(axis=0), atol=1e-9)
    assert scale == 128 / 256


def test_missing_truth_file_names_path(tmp_path, dataset):
    broken = tmp_path / "broken"
    broken.mkdir()
    shutil.copy(dataset / "frame_000000.png", broken / "frame_000000.png")
    with pytest.raises(FileNotFoundError, match="truth_steps.csv"):
        load_dataset_pairs(broken)


def test_model_shapes():
    m = FlowRegressor()
    out = m(torch.zeros(3, 2, 128, 128))
    assert out.shape == (3, 2)


def test_console_scripts_exist():
    for tool in ("fnm-train", "fnm-predict"):
        exe = shutil.which(tool)
        if exe is None:
            pytest.skip(f"{tool} not on PATH (package not installed)")
        proc = subprocess.run([exe, "--help"], capture_output=True, text=True)
        assert proc.returncode == 0
        assert "--out" in proc.stdout


def test_overfit_fifty_pairs(overfit_run):
    _, result = overfit_run
    print(f"overfit: train L1 {result.train_l1_px:.3f} px, val L1 {result.val_l1_px:.3f} px")
    assert result.train_l1_px < 1.0


def test_training_loss_trend(overfit_run):
    _, result = overfit_run
    hist = np.array(result.history)
    # non-increasing over epochs within jitter: late average well below early
    assert hist[-10:].mean() < 0.25 * hist[:10].mean()
    smoothed = np.convolve(hist, np.ones(10) / 10, mode="valid")
    assert smoothed[-1] <= smoothed[0] * 1.05


def test_identity_pairs_predict_zero(overfit_run, dataset):
    _, result = overfit_run
    model = FlowRegressor()
    ckpt = torch.load(result.checkpoint_path, map_location="cpu", weights_only=False)
    model.load_state_dict(ckpt["state_dict"])
    model.eval()
    frames = sorted(dataset.glob("frame_*.png"))[:5]
    worst = 0.0
    with torch.no_grad():
        for f in frames:
            a, _ = load_frame(f)
            x = torch.from_numpy(np.stack([a, a])[None])
            pred = model.predict_net_pixels(x)[0].numpy() / ckpt["scale"]
            worst = max(worst, float(np.abs(pred).max()))
    print(f"identity-pair worst |prediction| {worst:.3f} px")
    assert worst < 0.5


def test_export_contract(overfit_run, dataset, tmp_path):
    _, result = overfit_run
    out = tmp_path / "pred_flows.csv"
    n = export_predictions(result.checkpoint_path, dataset, out, stride=1)
    n_frames = len(list(dataset.glob("frame_*.png")))
    assert n == n_frames - 1
    lines = out.read_text().strip().splitlines()
    assert lines[0] == "index,dx,dy,confidence"
    assert len(lines) == n + 1
    for i, line in enumerate(lines[1:]):
        parts = line.split(",")
        assert int(parts[0]) == i and len(parts) == 4
        assert all(np.isfinite(float(v)) for v in parts[1:])


def test_truth_passthrough_roundtrip(dataset, tmp_path):
    # feeding truth as "predictions" through the same writer reproduces it
    steps = read_truth_steps(dataset)
    out = tmp_path / "truth_flows.csv"
    with open(out, "w") as fh:
        fh.write("index,dx,dy,confidence\n")
        for i, (dx, dy) in enumerate(steps):
            fh.write(f"{i},{float(dx)!r},{float(dy)!r},1.0\n")
    back = np.array([
        [float(p) for p in line.split(",")[1:3]]
        for line in out.read_text().splitlines()[1:]
    ])
    np.testing.assert_allclose(back, steps, atol=1e-6)


def test_stitch_integration_finite_re_epe(overfit_run, dataset, tmp_path):
    _, result = overfit_run
    flows = tmp_path / "flows.csv"
    export_predictions(result.checkpoint_path, dataset, flows, stride=1)
    run = tmp_path / "run"
    run_cli(GLOFLOW, "stitch", "--method", "external", "--in", str(dataset),
            "--out", str(run), "--flows", str(flows), "--stride", "1")
    run_cli(GLOFLOW, "eval", "--run", str(run), "--truth", str(dataset))
    rows = (run / "report.csv").read_text().strip().splitlines()
    record = dict(zip(rows[0].split(","), rows[1].split(",")))
    re_epe = float(record["re_epe"])
    fnm_epe = float(record["epe"])
    assert np.isfinite(re_epe)

    # comparative report (not a pass/fail target): LK on the same split
    lk_run = tmp_path / "lk_run"
    run_cli(GLOFLOW, "stitch", "--method", "lk", "--in", str(dataset),
            "--out", str(lk_run), "--stride", "1")
    run_cli(GLOFLOW, "eval", "--run", str(lk_run), "--truth", str(dataset))
    lk_rows = (lk_run / "report.csv").read_text().strip().splitlines()
    lk_record = dict(zip(lk_rows[0].split(","), lk_rows[1].split(",")))
    print(f"FNM per-pair EPE {fnm_epe:.3f} px, Re-EPE {re_epe:.3f} px | "
          f"LK per-pair EPE {float(lk_record['epe']):.3f} px, "
          f"Re-EPE {float(lk_record['re_epe']):.3f} px")
