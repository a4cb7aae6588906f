"""Relevance-producing base learners behind one contract.

Every trained model exposes a score (higher means class 2) and a relevance
vector: non-negative feature weights that sum to one.
"""
from __future__ import annotations

from typing import Optional, Union

import numpy as np

from ..datagen import LabeledDataset
from ..exceptions import ConfigError, DegenerateModelError, NumericError
from .gmlvq import (GmlvqConfig, GmlvqModel, gmlvq_cost, gmlvq_distance, gmlvq_from_dict,
                    gmlvq_mu, gmlvq_score, gmlvq_to_dict, sample_gradient, train_gmlvq)
from .svm import SvmConfig, SvmModel, svm_from_dict, svm_score, svm_to_dict, train_svm

TrainedModel = Union[GmlvqModel, SvmModel]
LearnerConfig = Union[GmlvqConfig, SvmConfig]

LEARNERS = ("gmlvq", "svm")

__all__ = [
    "GmlvqConfig", "GmlvqModel", "SvmConfig", "SvmModel", "TrainedModel", "LearnerConfig",
    "LEARNERS", "classifier_score", "default_config", "gmlvq_cost", "gmlvq_distance",
    "gmlvq_mu", "model_from_dict", "model_to_dict", "relevance", "relevance_from_gmlvq",
    "relevance_from_svm", "sample_gradient", "svm_score", "train", "train_gmlvq",
    "train_svm", "validate_relevance",
]

SIMPLEX_TOL = 1e-10


def validate_relevance(r, tol: float = SIMPLEX_TOL) -> np.ndarray:
    """Check that ``r`` is a point of the probability simplex and return it."""
    r = np.asarray(r, dtype=np.float64)
    if r.ndim != 1 or not np.all(np.isfinite(r)):
        raise NumericError("relevance vector must be a finite 1-D array")
    if np.any(r < 0):
        raise NumericError("relevance weights must be non-negative")
    if abs(r.sum() - 1.0) > tol:
        raise NumericError(f"relevance weights sum to {r.sum()!r}, not 1")
    return r


def relevance_from_gmlvq(model: GmlvqModel) -> np.ndarray:
    # diag(Omega^T Omega) is the column-wise sum of squares of Omega
    r = np.sum(model.omega ** 2, axis=0)
    return r / r.sum()


def relevance_from_svm(model: SvmModel) -> np.ndarray:
    w = model.omega_weights
    norm = np.linalg.norm(w)
    if norm == 0:
        raise DegenerateModelError("zero weight vector has no relevances")
    r = (w / norm) ** 2
    return r / r.sum()


def relevance(model: TrainedModel) -> np.ndarray:
    if isinstance(model, GmlvqModel):
        return relevance_from_gmlvq(model)
    return relevance_from_svm(model)


def classifier_score(model: TrainedModel, x):
    if isinstance(model, GmlvqModel):
        return gmlvq_score(model, x)
    return svm_score(model, x)


def default_config(kind: str) -> LearnerConfig:
    if kind == "gmlvq":
        return GmlvqConfig()
    if kind == "svm":
        return SvmConfig()
    raise ConfigError(f"unknown learner {kind!r}; expected one of {LEARNERS}")


def config_kind(config: LearnerConfig) -> str:
    return "gmlvq" if isinstance(config, GmlvqConfig) else "svm"


def train(data: LabeledDataset, config: LearnerConfig, seed: int = 0,
          monitor_every: int = 0) -> TrainedModel:
    if isinstance(config, GmlvqConfig):
        return train_gmlvq(data, config, seed, monitor_every=monitor_every)
    if isinstance(config, SvmConfig):
        return train_svm(data, config, seed)
    raise ConfigError(f"unsupported learner config {type(config).__name__}")


def model_to_dict(model: TrainedModel) -> dict:
    return gmlvq_to_dict(model) if isinstance(model, GmlvqModel) else svm_to_dict(model)


def model_from_dict(doc: dict) -> TrainedModel:
    kind: Optional[str] = doc.get("kind")
    if kind == "gmlvq":
        return gmlvq_from_dict(doc)
    if kind == "svm":
        return svm_from_dict(doc)
    raise ConfigError(f"unknown model kind {kind!r}")
