"""Sampled predictions and entropy-based uncertainty (bits)."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import ConfigError
from .network import BnnModel, forward_batch, sample_noise


def entropy_bits(p, axis=-1):
    """Shannon entropy in bits with ``0 log 0 = 0``."""
    p = np.asarray(p, dtype=float)
    safe = np.where(p > 0, p, 1.0)
    return np.sum(np.where(p > 0, -p * np.log2(safe), 0.0), axis=axis)


@dataclass
class PredictiveDistribution:
    """``samples`` has shape ``(..., T, n_classes)``.

    Entropies are reduced over the sample axis, so a batch of inputs gives
    per-input arrays.
    """

    samples: np.ndarray

    def __post_init__(self):
        self.samples = np.asarray(self.samples, dtype=float)
        if self.samples.ndim < 2 or self.samples.shape[-2] < 1:
            raise ConfigError("samples must have shape (..., T >= 1, n_classes)")

    @property
    def n_samples(self) -> int:
        return self.samples.shape[-2]

    @property
    def mean_probs(self):
        return self.samples.mean(axis=-2)

    @property
    def predictive_bits(self):
        return entropy_bits(self.mean_probs)

    @property
    def aleatoric_bits(self):
        return entropy_bits(self.samples).mean(axis=-1)

    @property
    def epistemic_bits(self):
        """Mutual information between the prediction and the weights."""
        return self.predictive_bits - self.aleatoric_bits

    def __getitem__(self, i) -> "PredictiveDistribution":
        return PredictiveDistribution(self.samples[i])


def predict(model: BnnModel, X, T: int = 100, seed=0, *, standardize: bool = True):
    """Draw ``T`` forward passes per input.

    Sample ``t`` uses its own child stream ``SeedSequence(seed).spawn(T)[t]``
    for both weight and head noise, so samples can be computed in any order.
    A 1-D ``X`` yields samples of shape ``(T, C)``; a 2-D ``X`` gives
    ``(N, T, C)``.
    """
    if T < 1:
        raise ConfigError("T must be >= 1")
    X = np.asarray(X, dtype=float)
    single = X.ndim == 1
    Xb = np.atleast_2d(X)
    if standardize and model.standardizer is not None:
        Xb = model.standardizer.transform(Xb)
    children = np.random.SeedSequence(seed).spawn(T)
    out = np.empty((len(Xb), T, model.n_classes))
    for t, child in enumerate(children):
        rng = np.random.default_rng(child)
        out[:, t, :] = forward_batch(model, Xb, sample_noise(model, len(Xb), rng))
    return PredictiveDistribution(out[0] if single else out)
