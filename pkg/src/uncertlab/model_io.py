"""Persistence of trained virtual-measurement models.

A trained model is a JSON document carrying everything needed to
reproduce its predictions and audit its training: model structure
(feature names, basis degrees, standardization constants, prior,
noise mode), the variational posterior (family, mean, scale factor),
the training configuration and outcome, and the summary statistics of
the dataset it was fit on. Loading rebuilds the exact in-memory
objects; a train-then-predict round trip through disk is
bit-reproducible.
"""

import json
from dataclasses import asdict
from typing import Optional

import numpy as np

from .dataset import DatasetSummary
from .errors import ConfigError
from .regression import BayesianVMModel
from .vi import TrainResult, VariationalPosterior, VIConfig

__all__ = ["MODEL_SCHEMA_VERSION", "save_model", "load_model"]

MODEL_SCHEMA_VERSION = 1


def _model_to_dict(model: BayesianVMModel) -> dict:
    return {
        "feature_names": list(model.feature_names),
        "mean_degree": model.mean_degree,
        "noise_degree": model.noise_degree,
        "mean_include_bias": model.mean_include_bias,
        "prior_tau": model.prior_tau,
        "standardize": model.standardize,
        "x_mean": model.x_mean.tolist(),
        "x_sd": model.x_sd.tolist(),
        "fixed_noise_sd": model.fixed_noise_sd,
        "noise_floor": model.noise_floor,
        "n_weights": model.n_weights,
    }


def _model_from_dict(d: dict) -> BayesianVMModel:
    return BayesianVMModel(
        feature_names=tuple(d["feature_names"]),
        mean_degree=d["mean_degree"],
        noise_degree=d["noise_degree"],
        mean_include_bias=d["mean_include_bias"],
        prior_tau=d["prior_tau"],
        standardize=d["standardize"],
        x_mean=np.asarray(d["x_mean"], dtype=np.float64),
        x_sd=np.asarray(d["x_sd"], dtype=np.float64),
        fixed_noise_sd=d["fixed_noise_sd"],
        noise_floor=d["noise_floor"],
    )


def _posterior_to_dict(q: VariationalPosterior) -> dict:
    return {
        "family": q.family,
        "mu": q.mu.tolist(),
        # row-major flat scale: the diagonal vector for mean_field, the
        # full lower-triangular matrix for full_rank
        "scale": q.scale.ravel().tolist(),
    }


def _posterior_from_dict(d: dict) -> VariationalPosterior:
    family = d["family"]
    mu = np.asarray(d["mu"], dtype=np.float64)
    scale = np.asarray(d["scale"], dtype=np.float64)
    if family == "full_rank":
        p = len(mu)
        scale = scale.reshape(p, p)
    return VariationalPosterior(family, mu, scale)


def save_model(
    path: str,
    model: BayesianVMModel,
    train: TrainResult,
    train_config: VIConfig,
    dataset_summary: DatasetSummary,
    dataset_sha256: Optional[str] = None,
    store_trajectory: bool = False,
) -> None:
    """Write the trained model document to ``path``."""
    doc = {
        "schema_version": MODEL_SCHEMA_VERSION,
        "model": _model_to_dict(model),
        "posterior": _posterior_to_dict(train.posterior),
        "training": {
            "config": asdict(train_config),
            "n_steps": train.n_steps,
            "converged": train.converged,
            "initial_free_energy": train.initial_free_energy,
            "final_free_energy": train.final_free_energy,
        },
        "dataset_summary": dataset_summary.to_dict(),
        "dataset_sha256": dataset_sha256,
    }
    if store_trajectory:
        doc["training"]["trajectory"] = train.trajectory.tolist()
    with open(path, "w") as fh:
        json.dump(doc, fh, indent=2, sort_keys=True)
        fh.write("\n")


def load_model(path: str) -> tuple[BayesianVMModel, VariationalPosterior, dict]:
    """Read a trained model document; returns (model, posterior, document)."""
    try:
        with open(path) as fh:
            doc = json.load(fh)
    except OSError as err:
        raise ConfigError(f"cannot read model {path!r}: {err}") from err
    except json.JSONDecodeError as err:
        raise ConfigError(f"{path}: not valid JSON: {err}") from err
    version = doc.get("schema_version")
    if version != MODEL_SCHEMA_VERSION:
        raise ConfigError(
            f"{path}: unsupported model schema version {version!r} "
            f"(expected {MODEL_SCHEMA_VERSION})")
    try:
        model = _model_from_dict(doc["model"])
        posterior = _posterior_from_dict(doc["posterior"])
    except (KeyError, TypeError, ValueError) as err:
        raise ConfigError(f"{path}: malformed model document: {err}") from err
    if posterior.n_weights != model.n_weights:
        raise ConfigError(
            f"{path}: posterior has {posterior.n_weights} weights but the "
            f"model defines {model.n_weights}")
    return model, posterior, doc
