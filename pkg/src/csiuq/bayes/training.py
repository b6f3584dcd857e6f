"""Minibatch ELBO training with RMSprop."""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from ..errors import ConfigError, DivergenceError
from .network import BnnModel, Standardizer, grad_elbo, sample_noise
from .optim import TrainState, rmsprop_step

log = logging.getLogger(__name__)


@dataclass
class EpochRecord:
    epoch: int
    loss: float  # ELBO per training example, nats
    accuracy: float  # on the sampled training forward passes


def train(
    model: BnnModel,
    X,
    y,
    *,
    epochs: int = 200,
    batch_size: int = 4,
    seed: int = 0,
    lr: float = 0.01,
    gamma: float = 0.9,
    eps: float = 1e-7,
    standardizer: Standardizer | None = None,
    kl_scale: float = 1.0,
):
    """Fit the posterior parameters of ``model`` in place.

    Each minibatch uses one fresh noise draw and
    ``kl_weight = kl_scale * len(batch) / len(X)``, so one epoch charges the
    full KL once (times ``kl_scale``). Features are z-scored with
    ``standardizer``, fitted on ``X`` when not supplied, and the statistics are
    stored on the model for prediction.

    Returns
    -------
    model, history : BnnModel, list of EpochRecord

    Raises
    ------
    DivergenceError
        On a non-finite loss; ``err.history`` holds the epochs completed.
    """
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=int).reshape(-1)
    if X.ndim != 2 or X.shape[1] != model.in_dim or len(X) != len(y):
        raise ConfigError(f"expected X of shape (n, {model.in_dim}) with matching labels")
    if len(X) == 0 or len(np.unique(y)) < 2:
        raise ConfigError("training set must be non-empty and contain both classes")
    if batch_size < 1 or epochs < 0:
        raise ConfigError("batch_size must be >= 1 and epochs >= 0")
    if standardizer is None:
        standardizer = Standardizer.fit(X)
    model.standardizer = standardizer
    Xs = standardizer.transform(X)

    n = len(Xs)
    state = TrainState(lr=lr, gamma=gamma, eps=eps)
    params = {"mean": model.mean, "rho": model.rho}
    history: list[EpochRecord] = []
    for epoch in range(epochs):
        rng = np.random.default_rng([seed, epoch])
        order = rng.permutation(n)
        total = 0.0
        correct = 0
        for start in range(0, n, batch_size):
            idx = order[start : start + batch_size]
            xb, yb = Xs[idx], y[idx]
            noise = sample_noise(model, len(idx), rng)
            kw = kl_scale * len(idx) / n
            try:
                loss, grads, probs = grad_elbo(model, xb, yb, noise, kl_weight=kw, flat=True,
                                               return_probs=True)
            except DivergenceError as err:
                raise DivergenceError(f"epoch {epoch}: {err}", history) from err
            if not np.isfinite(loss):
                raise DivergenceError(f"epoch {epoch}: non-finite loss", history)
            correct += int(np.sum(predicted_class(probs) == yb))
            rmsprop_step(params, grads, state)
            total += loss
        state.epoch = epoch + 1
        history.append(EpochRecord(epoch + 1, total / n, correct / n))
        log.debug("epoch %d loss %.4f acc %.3f", epoch + 1, total / n, correct / n)
    return model, history


def predicted_class(probs):
    """Argmax over classes; exact ties resolve to class 0 (no motion)."""
    return np.argmax(np.asarray(probs), axis=-1)
