"""Variational Bayesian network engine."""

from .decomposition import ErrorDecomposition, bayes_error_decomposition
from .distributions import Gaussian, kl_gaussian, kl_monte_carlo, nll_categorical, softplus
from .network import (
    BnnModel,
    Noise,
    Standardizer,
    VariationalDense,
    elbo_loss,
    forward,
    forward_batch,
    grad_elbo,
    init_model,
    sample_noise,
)
from .optim import TrainState, rmsprop_step
from .training import EpochRecord, predicted_class, train
from .uncertainty import PredictiveDistribution, entropy_bits, predict

__all__ = [
    "BnnModel", "EpochRecord", "ErrorDecomposition", "Gaussian", "Noise",
    "PredictiveDistribution", "Standardizer", "TrainState", "VariationalDense",
    "bayes_error_decomposition", "elbo_loss", "entropy_bits", "forward",
    "forward_batch", "grad_elbo", "init_model", "kl_gaussian", "kl_monte_carlo",
    "nll_categorical", "predict", "predicted_class", "rmsprop_step",
    "sample_noise", "softplus", "train",
]
