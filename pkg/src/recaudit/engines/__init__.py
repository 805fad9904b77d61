"""The five rating predictors behind one fit/predict contract."""

from __future__ import annotations

import json

from ..errors import ConfigError
from .base import HyperParams, Prediction, TrainData, TrainedModel, SIMILARITIES
from .baseline import UserItemAvg
from .coclustering import CoClustering
from .knn import UserKNN, UserKNNAvg
from .nmf import NMF

ENGINES: dict[str, type[TrainedModel]] = {
    cls.algorithm: cls
    for cls in (UserItemAvg, UserKNN, UserKNNAvg, NMF, CoClustering)
}

ALGORITHMS = tuple(ENGINES)


def fit(algorithm: str, train: TrainData, hp: HyperParams) -> TrainedModel:
    """Fit one of the five predictors on the training view."""
    try:
        engine = ENGINES[algorithm]
    except KeyError:
        raise ConfigError(f"unknown algorithm {algorithm!r}, expected one of {ALGORITHMS}") from None
    return engine.fit(train, hp)


def save_model(model: TrainedModel, path) -> None:
    """Dump a fitted model to a JSON document for reproducibility audits."""
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(model.to_dict(), fh)


def load_model(path) -> TrainedModel:
    with open(path, "r", encoding="utf-8") as fh:
        d = json.load(fh)
    try:
        engine = ENGINES[d["algorithm"]]
    except KeyError:
        raise ConfigError(f"model file {path} names unknown algorithm {d.get('algorithm')!r}") from None
    return engine.from_dict(d)


__all__ = [
    "ALGORITHMS", "ENGINES", "HyperParams", "Prediction", "TrainData",
    "TrainedModel", "SIMILARITIES", "UserItemAvg", "UserKNN", "UserKNNAvg",
    "NMF", "CoClustering", "fit", "save_model", "load_model",
]
