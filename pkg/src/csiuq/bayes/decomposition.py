"""Reducible / irreducible squared-error split for regression probes."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass
class ErrorDecomposition:
    reducible: float  # mean (f_true - model)^2
    irreducible: float  # supplied noise variance
    mse: float  # empirical mean (y - model)^2
    mse_se: float  # standard error of ``mse``

    @property
    def irreducible_estimate(self) -> float:
        return self.mse - self.reducible

    @property
    def total(self) -> float:
        return self.reducible + self.irreducible


def bayes_error_decomposition(f_true, model, x, y, noise_var: float) -> ErrorDecomposition:
    """Split the expected squared error of ``model`` on a known probe.

    ``f_true`` and ``model`` are callables mapping inputs to mean outputs;
    ``y`` are noisy observations ``f_true(x) + e`` with ``Var(e) = noise_var``.
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    pred = np.asarray(model(x), dtype=float)
    truth = np.asarray(f_true(x), dtype=float)
    sq = (y - pred) ** 2
    se = float(sq.std(ddof=1) / np.sqrt(sq.size)) if sq.size > 1 else float("nan")
    return ErrorDecomposition(
        reducible=float(np.mean((truth - pred) ** 2)),
        irreducible=float(noise_var),
        mse=float(sq.mean()),
        mse_se=se,
    )
