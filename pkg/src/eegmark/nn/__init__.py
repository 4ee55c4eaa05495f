"""Minimal numpy neural-network engine: layers, Adam training, pruning."""

from .checkpoint import dumps_checkpoint, load_checkpoint, loads_checkpoint, save_checkpoint
from .layers import ELU, SELU, AveragePool, Conv2D, Dense, Dropout, Flatten, Layer, LeakyReLU, ReLU, Softmax
from .network import (
    Network,
    NetworkConfig,
    cross_entropy,
    init_network,
    load_config,
    mini_eeg,
    reinit_layers,
    softmax,
)
from .pruning import PruneStrategy, prune, unit_norms
from .training import EpochLog, Metrics, TrainConfig, clip_gradients, evaluate, gradient_check, train

__all__ = [
    "AveragePool", "Conv2D", "Dense", "Dropout", "ELU", "EpochLog", "Flatten", "Layer", "LeakyReLU", "Metrics",
    "Network", "NetworkConfig", "PruneStrategy", "ReLU", "SELU", "Softmax", "TrainConfig",
    "clip_gradients", "cross_entropy", "dumps_checkpoint", "evaluate", "gradient_check", "init_network",
    "load_checkpoint", "load_config", "loads_checkpoint", "mini_eeg", "prune", "reinit_layers", "save_checkpoint",
    "softmax", "train", "unit_norms",
]
