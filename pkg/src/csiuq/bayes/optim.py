"""RMSprop."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..errors import ConfigError


@dataclass
class TrainState:
    lr: float = 0.01
    gamma: float = 0.9
    eps: float = 1e-7
    epoch: int = 0
    cache: dict = field(default_factory=dict)

    def __post_init__(self):
        if not (self.lr > 0 and 0 <= self.gamma < 1 and self.eps > 0):
            raise ConfigError("RMSprop needs lr > 0, 0 <= gamma < 1 and eps > 0")


def rmsprop_step(params: dict, grads: dict, state: TrainState):
    """Update ``params`` in place and return ``(params, state)``.

    ``cache <- gamma * cache + (1 - gamma) * g**2``;
    ``param <- param - lr * g / (sqrt(cache) + eps)``.
    """
    if params.keys() != grads.keys():
        raise ConfigError("parameter and gradient keys differ")
    for key, p in params.items():
        g = grads[key]
        if np.shape(g) != np.shape(p):
            raise ConfigError(f"gradient shape {np.shape(g)} != parameter shape {np.shape(p)} for {key}")
        cache = state.cache.get(key)
        if cache is None:
            cache = state.cache[key] = np.zeros_like(p, dtype=float)
        cache *= state.gamma
        cache += (1.0 - state.gamma) * g * g
        p -= state.lr * g / (np.sqrt(cache) + state.eps)
    return params, state
