"""Scheduling indices for content review."""
from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

import numpy as np

from .data import TrajectoryDataset, features, last_views


class ContentKind(str, Enum):
    PVIOLATING = "pviolating"
    VELOCITY = "velocity"
    PIV = "piv"
    OARCH = "oarch"


NEEDS_MODEL = {ContentKind.PIV: "uncapped", ContentKind.OARCH: "capped"}


@dataclass(frozen=True)
class ContentState:
    """What the scheduler knows about a content item at age ``age`` (1-based)."""

    pviolating: float
    age: int
    cumviews: float
    lag1: float = 0.0
    lag2: float = 0.0
    lag3: float = 0.0

    def vector(self) -> np.ndarray:
        return np.array([self.pviolating, self.age, self.cumviews, self.lag1, self.lag2, self.lag3],
                        dtype=float)


def _model(kind, regressors):
    name = NEEDS_MODEL[kind]
    if not regressors or name not in regressors:
        raise ValueError(f"{kind.value} index needs the {name!r} regressor")
    return regressors[name]


def content_index(kind, state: ContentState, regressors: dict | None = None) -> float:
    """Index of a single content item; higher is reviewed first."""
    kind = ContentKind(kind)
    pv = state.pviolating
    if kind is ContentKind.PVIOLATING:
        return pv
    if kind is ContentKind.VELOCITY:
        return pv * state.lag1
    pred = float(_model(kind, regressors).predict(state.vector()[None, :])[0])
    if kind is ContentKind.PIV:
        return pv * pred
    return pv * (state.lag1 + pred)


def index_table(kind, dataset: TrajectoryDataset, regressors: dict | None = None) -> np.ndarray:
    """Index of every record at every age, shape (n, L); column d-1 is age d."""
    kind = ContentKind(kind)
    pv = dataset.pviolating[:, None]
    if kind is ContentKind.PVIOLATING:
        return np.broadcast_to(pv, dataset.views.shape).astype(float)
    lag1 = last_views(dataset).astype(float)
    if kind is ContentKind.VELOCITY:
        return pv * lag1
    model = _model(kind, regressors)
    pred = model.predict(features(dataset).reshape(-1, 6)).reshape(dataset.views.shape)
    if kind is ContentKind.PIV:
        return pv * pred
    return pv * (lag1 + pred)
