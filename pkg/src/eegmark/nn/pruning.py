"""Structured unit pruning: whole output neurons or convolution filters."""

from __future__ import annotations

import enum

import numpy as np

from ..errors import InvalidRatio
from .network import Network


class PruneStrategy(str, enum.Enum):
    L1_ASCENDING = "L1_ASCENDING"
    RANDOM = "RANDOM"


def unit_norms(network: Network) -> list[tuple[int, int, float]]:
    """(layer, unit, L1 norm of incoming weights) for every prunable unit."""
    units = []
    for i in network.param_layers():
        W = network.params[i]["W"]
        norms = np.abs(W.reshape(W.shape[0], -1)).sum(axis=1)
        units.extend((i, u, float(n)) for u, n in enumerate(norms))
    return units


def prune(network: Network, ratio: float, strategy: PruneStrategy | str = PruneStrategy.L1_ASCENDING,
          seed: int = 0) -> Network:
    """Copy of ``network`` with ``floor(ratio * units)`` units zeroed.

    L1_ASCENDING ranks all units of all layers together by the L1 norm of
    their weights; RANDOM picks uniformly.  A zeroed unit has its weights and
    bias set to 0.
    """
    if not 0.0 <= ratio <= 1.0:
        raise InvalidRatio(f"ratio {ratio} outside [0, 1]")
    strategy = PruneStrategy(strategy)
    units = unit_norms(network)
    n_prune = int(np.floor(ratio * len(units) + 1e-9))
    out = network.copy()
    if n_prune == 0:
        return out
    if strategy is PruneStrategy.L1_ASCENDING:
        order = sorted(range(len(units)), key=lambda j: (units[j][2], j))
    else:
        order = list(np.random.default_rng(seed).permutation(len(units)))
    for j in order[:n_prune]:
        i, u, _ = units[j]
        out.params[i]["W"][u] = 0
        out.params[i]["b"][u] = 0
    return out
