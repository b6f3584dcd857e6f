"""JSON model checkpoints.

Floats are written with ``repr`` precision (17 significant digits), so a
save/load round trip reproduces every parameter bit for bit.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from ..errors import ConfigError
from .distributions import Gaussian
from .network import BnnModel, Standardizer
from .optim import TrainState

FORMAT = "csiuq-bnn/1"


def model_to_dict(model: BnnModel, state: TrainState | None = None) -> dict:
    layers = {}
    for name, shape, sl in model.layout:
        layers[name] = {
            "shape": list(shape),
            "mean": model.mean[sl].tolist(),
            "rho": model.rho[sl].tolist(),
        }
    doc = {
        "format": FORMAT,
        "architecture": {
            "in_dim": model.in_dim,
            "hidden": model.hidden,
            "n_classes": model.n_classes,
            "layers": [
                {"name": "layer1", "in": model.in_dim, "out": model.hidden, "activation": "relu"},
                {"name": "layer2", "in": model.hidden, "out": 2 * model.n_classes, "activation": "none"},
                {"name": "head", "type": "gaussian_logit_categorical", "n_classes": model.n_classes},
            ],
        },
        "prior": {"family": "normal", "mean": model.prior.mean, "std": model.prior.std},
        "parameters": layers,
        "train_state": None,
        "standardizer": None,
    }
    if state is not None:
        doc["train_state"] = {"lr": state.lr, "gamma": state.gamma, "eps": state.eps,
                              "epoch": state.epoch}
    if model.standardizer is not None:
        doc["standardizer"] = {
            "mean": np.asarray(model.standardizer.mean).tolist(),
            "std": np.asarray(model.standardizer.std).tolist(),
        }
    return doc


def model_from_dict(doc: dict) -> BnnModel:
    if doc.get("format") != FORMAT:
        raise ConfigError(f"unsupported checkpoint format {doc.get('format')!r}")
    arch = doc["architecture"]
    prior = Gaussian(doc["prior"]["mean"], doc["prior"]["std"])
    model = BnnModel(arch["in_dim"], arch["hidden"], arch["n_classes"], prior)
    for name, shape, sl in model.layout:
        entry = doc["parameters"][name]
        if tuple(entry["shape"]) != tuple(shape):
            raise ConfigError(f"checkpoint shape for {name} is {entry['shape']}, expected {list(shape)}")
        model.mean[sl] = np.asarray(entry["mean"], dtype=float)
        model.rho[sl] = np.asarray(entry["rho"], dtype=float)
    if doc.get("standardizer"):
        model.standardizer = Standardizer(
            np.asarray(doc["standardizer"]["mean"], dtype=float),
            np.asarray(doc["standardizer"]["std"], dtype=float),
        )
    return model


def save_checkpoint(path, model: BnnModel, state: TrainState | None = None) -> None:
    Path(path).write_text(json.dumps(model_to_dict(model, state), indent=1) + "\n")


def load_checkpoint(path) -> BnnModel:
    return model_from_dict(json.loads(Path(path).read_text()))
