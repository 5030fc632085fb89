"""Chunk-based ensembles: SEA, AWE and WAE.

Every strategy trains one new member per chunk, scores the existing members
on that chunk before it is used for training, and prunes back to a fixed
capacity. They differ only in how members are weighted and which member
leaves the committee.
"""

from __future__ import annotations

import copy
from dataclasses import dataclass, field
from enum import Enum
from typing import Optional, Sequence

import numpy as np

from .exceptions import UntrainedModelError, ValidationError
from .learners import LearnerSpec, TrainedModel, fit_batch
from .stream import Chunk

__all__ = [
    "Strategy",
    "EnsembleConfig",
    "Member",
    "EnsembleModel",
    "ensemble_predict",
    "awe_member_weight",
    "wae_member_weight",
    "sea_select_members",
    "ensemble_process_chunk",
    "reference_mse",
]


class Strategy(str, Enum):
    SEA = "sea"
    AWE = "awe"
    WAE = "wae"


@dataclass(frozen=True)
class EnsembleConfig:
    strategy: Strategy = Strategy.SEA
    capacity: int = 10
    learner_spec: LearnerSpec = field(default_factory=LearnerSpec)
    wae_age_decay: float = 0.05
    n_classes: int = 2

    def __post_init__(self):
        try:
            object.__setattr__(self, "strategy", Strategy(self.strategy))
        except ValueError:
            raise ValidationError(
                f"strategy: unknown ensemble {self.strategy!r}, "
                f"expected one of {[s.value for s in Strategy]}"
            ) from None
        if self.capacity < 1:
            raise ValidationError(f"capacity must be >= 1, got {self.capacity}")
        if not 0.0 <= self.wae_age_decay <= 1.0:
            raise ValidationError(f"wae_age_decay must lie in [0, 1], got {self.wae_age_decay}")
        if self.n_classes < 2:
            raise ValidationError(f"n_classes must be >= 2, got {self.n_classes}")


@dataclass
class Member:
    model: TrainedModel
    weight: float = 1.0
    age: int = 0
    # accuracy on the most recent evaluation chunk
    score: float = 0.0


def _chunk_xy(chunk) -> tuple[np.ndarray, np.ndarray]:
    if isinstance(chunk, Chunk):
        return chunk.X, chunk.y
    X, y = chunk
    return np.asarray(X, dtype=float), np.asarray(y, dtype=np.int64)


def reference_mse(y: np.ndarray, n_classes: Optional[int] = None) -> float:
    """MSE of a classifier predicting at random by the class frequencies:
    ``sum_c p(c) * (1 - p(c))**2``."""
    counts = np.bincount(y, minlength=n_classes or 0).astype(float)
    p = counts / counts.sum()
    return float(np.sum(p * (1.0 - p) ** 2))


def awe_member_weight(model: TrainedModel, chunk) -> float:
    """Accuracy-weighted-ensemble weight ``max(MSE_r - MSE_i, 0)``."""
    X, y = _chunk_xy(chunk)
    if y.shape[0] == 0:
        raise ValidationError("cannot weight a member on an empty chunk")
    proba = model.predict_proba(X)
    p_true = np.zeros(y.shape[0])
    known = y < proba.shape[1]
    p_true[known] = proba[np.flatnonzero(known), y[known]]
    mse_i = float(np.mean((1.0 - p_true) ** 2))
    mse_r = reference_mse(y)
    return max(mse_r - mse_i, 0.0)


def wae_member_weight(accuracy: float, age: int, decay: float) -> float:
    """Accuracy aged geometrically: ``accuracy * (1 - decay) ** age``."""
    if not 0.0 <= accuracy <= 1.0:
        raise ValidationError(f"accuracy must lie in [0, 1], got {accuracy}")
    if age < 0:
        raise ValidationError(f"age must be >= 0, got {age}")
    return accuracy * (1.0 - decay) ** age


def _accuracy(model: TrainedModel, X: np.ndarray, y: np.ndarray) -> float:
    return float(np.mean(model.predict(X) == y))


def _weakest(members: Sequence[Member], key) -> int:
    """Index of the member with the lowest key; the oldest one on ties."""
    return min(range(len(members)), key=lambda i: (key(members[i]), -members[i].age))


def sea_select_members(
    current: list[Member], candidate: TrainedModel, chunk, capacity: int = 10
) -> list[Member]:
    """SEA lineup update.

    Below capacity the candidate always joins. At capacity it replaces the
    member with the lowest accuracy on ``chunk`` if and only if its own
    accuracy there is strictly higher. Member ``score`` fields are refreshed
    with the chunk accuracies; all weights are 1.
    """
    X, y = _chunk_xy(chunk)
    if y.shape[0] == 0:
        raise ValidationError("chunk must not be empty")
    members = [Member(m.model, 1.0, m.age, _accuracy(m.model, X, y)) for m in current]
    cand = Member(candidate, 1.0, 0, _accuracy(candidate, X, y))
    if len(members) < capacity:
        return members + [cand]
    worst = _weakest(members, key=lambda m: m.score)
    if cand.score > members[worst].score:
        members[worst] = cand
    return members


class EnsembleModel:
    """Weighted committee of per-chunk base classifiers."""

    def __init__(self, config: EnsembleConfig, members: Optional[list[Member]] = None):
        self.config = config
        self.members: list[Member] = list(members or [])

    def __len__(self) -> int:
        return len(self.members)

    @property
    def weights(self) -> np.ndarray:
        return np.array([m.weight for m in self.members], dtype=float)

    def copy(self) -> "EnsembleModel":
        return EnsembleModel(self.config, [copy.copy(m) for m in self.members])

    def predict(self, X) -> np.ndarray:
        """Weighted majority vote; ties (including all-zero weights) go to
        the lowest class index among the classes that received a vote."""
        if not self.members:
            raise UntrainedModelError("ensemble has no members; train it first")
        X = np.asarray(X, dtype=float)
        single = X.ndim == 1
        if single:
            X = X[None, :]
        n = X.shape[0]
        k = max(self.config.n_classes, max(m.model.n_classes for m in self.members))
        support = np.zeros((n, k))
        voted = np.zeros((n, k), dtype=bool)
        rows = np.arange(n)
        for m in self.members:
            labels = m.model.predict(X)
            np.add.at(support, (rows, labels), m.weight)
            voted[rows, labels] = True
        support[~voted] = -np.inf
        out = np.argmax(support, axis=1)
        return int(out[0]) if single else out

    def process_chunk(self, chunk: Chunk) -> "EnsembleModel":
        """Reweight on ``chunk``, train a member on it, prune to capacity.

        Returns ``self`` (updated in place) for chaining.
        """
        cfg = self.config
        X, y = chunk.X, chunk.y
        if y.shape[0] == 0:
            raise ValidationError("chunk must not be empty")
        for m in self.members:
            m.age += 1
        candidate = fit_batch(cfg.learner_spec, chunk, n_classes=cfg.n_classes)

        if cfg.strategy is Strategy.SEA:
            self.members = sea_select_members(self.members, candidate, chunk, cfg.capacity)
            return self

        pool = self.members + [Member(candidate, age=0)]
        for m in pool:
            m.score = _accuracy(m.model, X, y)
            if cfg.strategy is Strategy.AWE:
                m.weight = awe_member_weight(m.model, chunk)
            else:
                m.weight = wae_member_weight(m.score, m.age, cfg.wae_age_decay)
        while len(pool) > cfg.capacity:
            pool.pop(_weakest(pool, key=lambda m: m.weight))
        self.members = pool
        return self


def ensemble_predict(ensemble: EnsembleModel, features) -> int:
    return ensemble.predict(features)


def ensemble_process_chunk(ensemble: EnsembleModel, chunk: Chunk) -> EnsembleModel:
    return ensemble.process_chunk(chunk)
