"""Toy-scale single-translation flow regressor.

Trains a small convolutional network on channelwise-concatenated frame
pairs from simulated scan datasets (L1 loss against the ground-truth
step) and exports per-pair predictions in the stitcher's external flow
CSV format. Talks to the stitching pipeline only through its file
formats: the dataset directory layout and `index,dx,dy,confidence` rows.
"""

from .data import FnmConfig, PairDataset, load_dataset_pairs
from .model import FlowRegressor
from .predict import export_predictions
from .train import TrainResult, train

__all__ = [
    "FlowRegressor",
    "FnmConfig",
    "PairDataset",
    "TrainResult",
    "export_predictions",
    "load_dataset_pairs",
    "train",
]
