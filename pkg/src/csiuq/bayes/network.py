"""Mean-field Gaussian network with a Gaussian-logit categorical head.

Architecture (defaults): ``in_dim -> 4 (relu) -> 2 * n_classes (linear)``;
the second layer's outputs are read as per-class logit means followed by
per-class unconstrained scales, ``sigma_c = softplus(rho_c)``. A forward
pass draws every weight as ``mean + softplus(rho) * eps`` and every logit as
``mu_c + sigma_c * xi_c``, then applies softmax.

All posterior parameters live in two flat float64 vectors (``model.mean``
and ``model.rho``); the per-layer arrays are reshaped views into them, so an
in-place optimizer update on the flat vectors is visible through the layers.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.special import expit

from ..errors import ConfigError, DivergenceError
from .distributions import PROB_FLOOR, Gaussian, inv_softplus, kl_gaussian_array, softplus

NLL_CAP = -np.log(PROB_FLOOR)


@dataclass
class VariationalDense:
    """Views onto one layer's posterior parameters."""

    name: str
    in_dim: int
    out_dim: int
    activation: str
    weight_mean: np.ndarray
    weight_rho: np.ndarray
    bias_mean: np.ndarray
    bias_rho: np.ndarray

    @property
    def weight_std(self):
        return softplus(self.weight_rho)

    @property
    def bias_std(self):
        return softplus(self.bias_rho)


@dataclass
class Noise:
    """One fixed noise realization: flat weight noise plus per-row head noise."""

    weights: np.ndarray  # (n_params,)
    head: np.ndarray  # (batch, n_classes)


@dataclass
class Standardizer:
    mean: np.ndarray
    std: np.ndarray

    @classmethod
    def fit(cls, X) -> "Standardizer":
        X = np.asarray(X, dtype=float)
        std = X.std(axis=0)
        std = np.where(std > 0, std, 1.0)
        return cls(X.mean(axis=0), std)

    def transform(self, X):
        return (np.asarray(X, dtype=float) - self.mean) / self.std


class BnnModel:
    """Two variational dense layers feeding a categorical head."""

    def __init__(
        self,
        in_dim: int = 7,
        hidden: int = 4,
        n_classes: int = 2,
        prior: Gaussian = Gaussian(0.0, 1.0),
    ):
        self.in_dim = in_dim
        self.hidden = hidden
        self.n_classes = n_classes
        self.prior = prior
        self.standardizer: Standardizer | None = None
        out = 2 * n_classes
        self.layout = []
        offset = 0
        for name, shape in (
            ("layer1.weight", (in_dim, hidden)),
            ("layer1.bias", (hidden,)),
            ("layer2.weight", (hidden, out)),
            ("layer2.bias", (out,)),
        ):
            size = int(np.prod(shape))
            self.layout.append((name, shape, slice(offset, offset + size)))
            offset += size
        self.n_params = offset
        self.mean = np.zeros(offset)
        self.rho = np.full(offset, float(inv_softplus(0.05)))
        self._bind_views()

    def _bind_views(self):
        v = {name: (self.mean[sl].reshape(shape), self.rho[sl].reshape(shape))
             for name, shape, sl in self.layout}
        self.layer1 = VariationalDense(
            "layer1", self.in_dim, self.hidden, "relu",
            *v["layer1.weight"], *v["layer1.bias"],
        )
        self.layer2 = VariationalDense(
            "layer2", self.hidden, 2 * self.n_classes, "none",
            *v["layer2.weight"], *v["layer2.bias"],
        )

    def named_parameters(self) -> dict[str, np.ndarray]:
        """Per-array views keyed like ``layer1.weight.mean``."""
        out = {}
        for name, shape, sl in self.layout:
            out[f"{name}.mean"] = self.mean[sl].reshape(shape)
            out[f"{name}.rho"] = self.rho[sl].reshape(shape)
        return out

    def unflatten(self, mean_vec, rho_vec) -> dict[str, np.ndarray]:
        out = {}
        for name, shape, sl in self.layout:
            out[f"{name}.mean"] = np.asarray(mean_vec)[sl].reshape(shape)
            out[f"{name}.rho"] = np.asarray(rho_vec)[sl].reshape(shape)
        return out

    def copy(self) -> "BnnModel":
        m = BnnModel(self.in_dim, self.hidden, self.n_classes, self.prior)
        m.mean[:] = self.mean
        m.rho[:] = self.rho
        if self.standardizer is not None:
            m.standardizer = Standardizer(self.standardizer.mean.copy(), self.standardizer.std.copy())
        return m

    def kl(self) -> float:
        return float(np.sum(kl_gaussian_array(
            self.mean, softplus(self.rho), self.prior.mean, self.prior.std
        )))


def init_model(seed, in_dim=7, hidden=4, n_classes=2, *, init_std=0.1, init_scale=0.05,
               prior: Gaussian = Gaussian(0.0, 1.0)) -> BnnModel:
    """Posterior means ~ N(0, init_std^2); every posterior std = init_scale."""
    model = BnnModel(in_dim, hidden, n_classes, prior)
    rng = np.random.default_rng(seed)
    model.mean[:] = init_std * rng.standard_normal(model.n_params)
    model.rho[:] = inv_softplus(init_scale)
    return model


def sample_noise(model: BnnModel, batch_size: int, rng: np.random.Generator) -> Noise:
    return Noise(
        rng.standard_normal(model.n_params),
        rng.standard_normal((batch_size, model.n_classes)),
    )


def _as_noise(model, noise, batch_size):
    if isinstance(noise, Noise):
        if noise.weights.shape != (model.n_params,) or noise.head.shape != (batch_size, model.n_classes):
            raise ConfigError(
                f"noise shapes {noise.weights.shape}, {noise.head.shape} do not match "
                f"model ({model.n_params},) and batch ({batch_size}, {model.n_classes})"
            )
        return noise
    rng = noise if isinstance(noise, np.random.Generator) else np.random.default_rng(noise)
    return sample_noise(model, batch_size, rng)


def _check_finite(arr, where):
    if not np.all(np.isfinite(arr)):
        raise DivergenceError(f"non-finite values in {where}")


def _forward(model: BnnModel, X, noise: Noise):
    """Batched forward pass returning logits and the cache for backprop."""
    std = softplus(model.rho)
    theta = model.mean + std * noise.weights
    (_, s1, sl1), (_, s2, sl2), (_, s3, sl3), (_, s4, sl4) = model.layout
    W1, b1 = theta[sl1].reshape(s1), theta[sl2]
    W2, b2 = theta[sl3].reshape(s3), theta[sl4]
    c = model.n_classes
    # overflow surfaces as DivergenceError below, so numpy's warning is redundant
    with np.errstate(over="ignore", invalid="ignore"):
        a1 = X @ W1 + b1
        h1 = np.maximum(a1, 0.0)
        _check_finite(h1, "layer1")
        z = h1 @ W2 + b2
        _check_finite(z, "layer2")
        head_scale = softplus(z[:, c:])
        logits = z[:, :c] + head_scale * noise.head
        _check_finite(logits, "head")
    return logits, (X, std, W2, a1, h1, z)


def _softmax(logits):
    shifted = logits - logits.max(axis=-1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=-1, keepdims=True)


def forward_batch(model: BnnModel, X, noise) -> np.ndarray:
    """Class probabilities ``(batch, n_classes)`` for one noise realization.

    ``noise`` is a :class:`Noise`, a seed or a ``Generator``.
    """
    X = np.atleast_2d(np.asarray(X, dtype=float))
    if not np.all(np.isfinite(X)):
        raise ConfigError("input contains non-finite values")
    logits, _ = _forward(model, X, _as_noise(model, noise, len(X)))
    return _softmax(logits)


def forward(model: BnnModel, x, noise) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if x.ndim != 1:
        raise ConfigError("forward takes a single input vector; use forward_batch")
    return forward_batch(model, x[None, :], noise)[0]


def _log_softmax(logits):
    shifted = logits - logits.max(axis=1, keepdims=True)
    return shifted - np.log(np.exp(shifted).sum(axis=1, keepdims=True))


def _nll_rows(logits, y):
    nll = -_log_softmax(logits)[np.arange(len(y)), y]
    return np.minimum(nll, NLL_CAP)


def _noise_list(model, noise, n_mc, seed, batch_size):
    if noise is None:
        rng = np.random.default_rng(seed)
        return [sample_noise(model, batch_size, rng) for _ in range(n_mc)]
    if isinstance(noise, Noise):
        return [_as_noise(model, noise, batch_size)]
    return [_as_noise(model, n, batch_size) for n in noise]


def _batch(X, y):
    X = np.atleast_2d(np.asarray(X, dtype=float))
    y = np.asarray(y, dtype=int).reshape(-1)
    if len(X) == 0 or len(X) != len(y):
        raise ConfigError("batch must be non-empty with one label per row")
    return X, y


def elbo_loss(model: BnnModel, X, y, *, noise=None, n_mc: int = 1, seed=0,
              kl_weight: float = 1.0) -> float:
    """``kl_weight * KL(q || prior) + mean_mc sum_batch NLL`` in nats.

    Pass ``noise`` (one :class:`Noise` or a list of them) to evaluate the
    noise-fixed objective; otherwise ``n_mc`` realizations are drawn from
    ``seed``.
    """
    X, y = _batch(X, y)
    if n_mc < 1:
        raise ConfigError("n_mc must be >= 1")
    draws = _noise_list(model, noise, n_mc, seed, len(X))
    nll = 0.0
    for nz in draws:
        logits, _ = _forward(model, X, nz)
        nll += float(np.sum(_nll_rows(logits, y)))
    return kl_weight * model.kl() + nll / len(draws)


def grad_elbo(model: BnnModel, X, y, noise, *, kl_weight: float = 1.0, flat: bool = False,
              return_probs: bool = False):
    """Exact gradient of the noise-fixed ELBO.

    Returns
    -------
    loss : float
    grads : dict
        Keys match :meth:`BnnModel.named_parameters`; with ``flat=True`` the
        dict is ``{"mean": ..., "rho": ...}`` over the flat vectors instead.
    probs : ndarray, optional
        Class probabilities of the last noise draw, with ``return_probs``.
    """
    X, y = _batch(X, y)
    if noise is None:
        raise ConfigError("grad_elbo needs a fixed noise realization")
    draws = _noise_list(model, noise, 1, None, len(X))
    c = model.n_classes
    d_theta = np.zeros(model.n_params)
    d_rho_path = np.zeros(model.n_params)
    nll_total = 0.0
    (_, s1, sl1), (_, s2, sl2), (_, s3, sl3), (_, s4, sl4) = model.layout
    for nz in draws:
        logits, (Xb, std, W2, a1, h1, z) = _forward(model, X, nz)
        logp = _log_softmax(logits)
        nll = np.minimum(-logp[np.arange(len(y)), y], NLL_CAP)
        nll_total += float(nll.sum())
        probs = np.exp(logp)
        d_logits = probs.copy()
        d_logits[np.arange(len(y)), y] -= 1.0
        d_logits[nll >= NLL_CAP] = 0.0  # floored probability has zero slope
        dz = np.empty_like(z)
        dz[:, :c] = d_logits
        dz[:, c:] = d_logits * nz.head * expit(z[:, c:])
        dW2 = h1.T @ dz
        db2 = dz.sum(axis=0)
        da1 = (dz @ W2.T) * (a1 > 0)
        dW1 = Xb.T @ da1
        db1 = da1.sum(axis=0)
        g = np.concatenate([dW1.ravel(), db1, dW2.ravel(), db2])
        d_theta += g
        d_rho_path += g * nz.weights
    n = len(draws)
    d_theta /= n
    d_rho_path /= n

    std = softplus(model.rho)
    pm, ps = model.prior.mean, model.prior.std
    g_mean = d_theta + kl_weight * (model.mean - pm) / ps**2
    g_std_kl = kl_weight * (-1.0 / std + std / ps**2)
    g_rho = (d_rho_path + g_std_kl) * expit(model.rho)
    loss = kl_weight * model.kl() + nll_total / n
    grads = {"mean": g_mean, "rho": g_rho} if flat else model.unflatten(g_mean, g_rho)
    if return_probs:
        return loss, grads, probs
    return loss, grads
