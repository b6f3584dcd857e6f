"""Gaussian helpers, KL divergences and the categorical NLL."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import expit

from ..errors import ConfigError

PROB_FLOOR = 1e-12


def softplus(x):
    return np.logaddexp(0.0, x)


def softplus_grad(x):
    return expit(x)


def inv_softplus(y):
    """Inverse of softplus for ``y > 0``; accurate for tiny ``y``."""
    y = np.asarray(y, dtype=float)
    return y + np.log(-np.expm1(-y))


@dataclass(frozen=True)
class Gaussian:
    mean: float
    std: float

    def __post_init__(self):
        if not (np.isfinite(self.mean) and np.isfinite(self.std) and self.std > 0):
            raise ConfigError(f"invalid Gaussian N({self.mean}, {self.std})")

    def log_pdf(self, x):
        z = (np.asarray(x, dtype=float) - self.mean) / self.std
        return -0.5 * z * z - math.log(self.std) - 0.5 * math.log(2 * math.pi)

    def sample(self, rng: np.random.Generator, n: int):
        return self.mean + self.std * rng.standard_normal(n)


def kl_gaussian(q: Gaussian, p: Gaussian) -> float:
    """Closed-form KL(q || p) in nats."""
    if q == p:
        return 0.0
    val = (
        math.log(p.std / q.std)
        + (q.std**2 + (q.mean - p.mean) ** 2) / (2 * p.std**2)
        - 0.5
    )
    return max(val, 0.0)


def kl_gaussian_array(mean, std, prior_mean, prior_std):
    """Elementwise KL(N(mean, std) || N(prior_mean, prior_std))."""
    return (
        np.log(prior_std / std)
        + (std**2 + (mean - prior_mean) ** 2) / (2 * prior_std**2)
        - 0.5
    )


def kl_monte_carlo(q: Gaussian, p: Gaussian, n: int, seed, return_se: bool = False):
    """Sample estimate of KL(q || p) with draws from ``q``.

    With ``return_se`` the standard error of the estimate is returned too.
    """
    if n < 1:
        raise ConfigError("n must be >= 1")
    theta = q.sample(np.random.default_rng(seed), n)
    diff = q.log_pdf(theta) - p.log_pdf(theta)
    se = float(diff.std(ddof=1) / math.sqrt(n)) if n > 1 else float("inf")
    est = float(diff.mean())
    return (est, se) if return_se else est


def nll_categorical(probs, label: int) -> float:
    """``-ln probs[label]`` in nats with probabilities floored at 1e-12."""
    p = np.asarray(probs, dtype=float)
    if (
        p.ndim != 1
        or np.any(~np.isfinite(p))
        or np.any(p < 0)
        or np.any(p > 1)
        or abs(p.sum() - 1.0) > 1e-9
    ):
        raise ConfigError(f"not a probability vector: {p}")
    if not 0 <= int(label) < p.size:
        raise ConfigError(f"label {label} out of range for {p.size} classes")
    return float(-math.log(max(p[int(label)], PROB_FLOOR)))
