"""Small networks shared by the unit and acceptance tests."""

import numpy as np

from eegmark.nn import NetworkConfig
from eegmark.nn.layers import (
    ELU,
    SELU,
    AveragePool,
    Conv2D,
    Dense,
    Dropout,
    Flatten,
    LeakyReLU,
    ReLU,
    Softmax,
)

# one tiny network per layer type, each exercising that type between parameterized layers
GRAD_CASES = {
    "Conv2D": lambda: NetworkConfig((Conv2D(2, 3, padding=1), Flatten(), Dense(2), Softmax()), (4, 6), 2),
    "Conv2D_strided": lambda: NetworkConfig((Conv2D(2, (2, 3), stride=2, padding=(0, 1)), Flatten(), Dense(2)), (4, 6), 2),
    "Dense": lambda: NetworkConfig((Flatten(), Dense(4), Dense(3)), (2, 5), 3),
    "ReLU": lambda: NetworkConfig((Flatten(), Dense(6), ReLU(), Dense(2)), (2, 5), 2),
    "LeakyReLU": lambda: NetworkConfig((Flatten(), Dense(6), LeakyReLU(0.1), Dense(2)), (2, 5), 2),
    "ELU": lambda: NetworkConfig((Flatten(), Dense(6), ELU(), Dense(2)), (2, 5), 2),
    "SELU": lambda: NetworkConfig((Flatten(), Dense(6), SELU(), Dense(2)), (2, 5), 2),
    "AveragePool": lambda: NetworkConfig((Conv2D(2, 3, padding=1), AveragePool(2), Flatten(), Dense(2)), (5, 6), 2),
    "Flatten": lambda: NetworkConfig((Conv2D(3, 2), Flatten(), Dense(2)), (3, 4), 2),
    "Dropout": lambda: NetworkConfig((Flatten(), Dense(5), Dropout(0.5), Dense(2)), (2, 5), 2),
    "Softmax": lambda: NetworkConfig((Flatten(), Dense(2), Softmax()), (2, 5), 2),
}


def grad_instance(name: str, seed: int):
    """A randomly initialized network of case ``name`` plus one random sample."""
    from eegmark.nn import init_network

    cfg = GRAD_CASES[name]()
    net = init_network(cfg, seed, dtype=np.float64)
    rng = np.random.default_rng([seed, 99])
    x = rng.normal(size=cfg.input_shape)
    return net, (x, int(rng.integers(cfg.num_labels)))
