"""Central finite-difference check of the pathwise ELBO gradient."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .network import BnnModel, elbo_loss, grad_elbo, init_model, sample_noise


@dataclass
class GradCheckResult:
    max_rel_error: float
    worst_parameter: str
    n_checked: int


def relative_error(analytic, numeric, floor=1e-8):
    analytic = np.asarray(analytic, dtype=float)
    numeric = np.asarray(numeric, dtype=float)
    denom = np.maximum(np.maximum(np.abs(analytic), np.abs(numeric)), floor)
    return np.abs(analytic - numeric) / denom


def numeric_gradient(model: BnnModel, X, y, noise, kl_weight=1.0, h=1e-5):
    """Flat ``{"mean", "rho"}`` gradient from central differences of the loss."""
    out = {}
    for key, vec in (("mean", model.mean), ("rho", model.rho)):
        g = np.empty_like(vec)
        for i in range(vec.size):
            orig = vec[i]
            vec[i] = orig + h
            up = elbo_loss(model, X, y, noise=noise, kl_weight=kl_weight)
            vec[i] = orig - h
            down = elbo_loss(model, X, y, noise=noise, kl_weight=kl_weight)
            vec[i] = orig
            g[i] = (up - down) / (2 * h)
        out[key] = g
    return out


def check_gradients(model: BnnModel, X, y, noise, kl_weight=1.0, h=1e-5) -> GradCheckResult:
    _, analytic = grad_elbo(model, X, y, noise, kl_weight=kl_weight, flat=True)
    numeric = numeric_gradient(model, X, y, noise, kl_weight, h)
    worst, where = 0.0, ""
    names = [(name, sl) for name, _, sl in model.layout]
    for key in ("mean", "rho"):
        err = relative_error(analytic[key], numeric[key])
        i = int(np.argmax(err))
        if err[i] > worst or not where:
            worst = float(err[i])
            where = next(f"{n}.{key}[{i - sl.start}]" for n, sl in names if sl.start <= i < sl.stop)
    return GradCheckResult(worst, where, 2 * model.n_params)


def random_gradcheck(seed=0, in_dim=7, hidden=4, batch=4, h=1e-5) -> GradCheckResult:
    """Gradient check on a randomly initialized model and random batch.

    Posterior means are drawn wider than the training init and the noise
    scales are order one so every term of the gradient is exercised.
    """
    rng = np.random.default_rng(seed)
    model = init_model(rng, in_dim, hidden, init_std=0.5, init_scale=0.3)
    model.rho[:] += 0.5 * rng.standard_normal(model.n_params)
    X = rng.standard_normal((batch, in_dim))
    y = rng.integers(0, model.n_classes, size=batch)
    noise = sample_noise(model, batch, rng)
    return check_gradients(model, X, y, noise, kl_weight=float(rng.uniform(0.01, 1.0)), h=h)
