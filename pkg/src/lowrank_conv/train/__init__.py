"""Training rank-constrained CNNs from scratch with batch normalization."""

from .data import Dataset, Split, generate_synthetic_dataset, oriented_filter_baseline
from .layers import BatchNorm, Dense, DirectConv, LowRankConv, ReLU, Softmax
from .model import Model, backward, build_model, forward, sgd_step, softmax, softmax_cross_entropy
from .trainer import EpochRecord, TrainConfig, evaluate, lowrank_cnn_spec, lr_schedule_update, train

__all__ = [
    "BatchNorm",
    "Dataset",
    "Dense",
    "DirectConv",
    "EpochRecord",
    "LowRankConv",
    "Model",
    "ReLU",
    "Softmax",
    "Split",
    "TrainConfig",
    "backward",
    "build_model",
    "evaluate",
    "forward",
    "generate_synthetic_dataset",
    "lowrank_cnn_spec",
    "lr_schedule_update",
    "oriented_filter_baseline",
    "sgd_step",
    "softmax",
    "softmax_cross_entropy",
    "train",
]
