"""Drift detection (FHDDM) over per-sample correctness and stabilization
detection (VSDM) over per-chunk accuracy."""

from __future__ import annotations

import math
from collections import deque
from enum import Enum
from typing import Iterable

import numpy as np

from .exceptions import ValidationError

__all__ = [
    "Signal",
    "NotReady",
    "hoeffding_bound",
    "FHDDM",
    "StabilizationWindow",
    "fhddm_update",
    "window_variance",
    "vsdm_update",
]


class Signal(str, Enum):
    NO_DRIFT = "no_drift"
    DRIFT = "drift"
    NOT_STABILIZED = "not_stabilized"
    STABILIZED = "stabilized"


class NotReady(Exception):
    """The stabilization window does not hold K scores yet."""


def hoeffding_bound(n: int, delta: float) -> float:
    """``sqrt(ln(1/delta) / (2n))``."""
    if n < 1:
        raise ValidationError(f"n must be >= 1, got {n}")
    if not 0.0 < delta <= 1.0:
        raise ValidationError(f"delta must lie in (0, 1], got {delta}")
    return math.sqrt(math.log(1.0 / delta) / (2.0 * n))


class FHDDM:
    """Fast Hoeffding Drift Detection Method.

    Keeps the last ``window_size`` prediction outcomes. Once the window is
    full, the windowed accuracy ``p`` is compared with the highest value seen
    since the last reset; a gap larger than the Hoeffding bound signals drift
    and resets the detector.
    """

    def __init__(self, window_size: int = 1000, delta: float = 1e-6):
        self.epsilon = hoeffding_bound(window_size, delta)
        self.window_size = window_size
        self.delta = delta
        self.reset()

    def reset(self) -> None:
        self._window: deque[bool] = deque(maxlen=self.window_size)
        self._correct = 0
        self.p_max = 0.0

    @property
    def window(self) -> tuple:
        return tuple(self._window)

    @property
    def is_full(self) -> bool:
        return len(self._window) == self.window_size

    def update(self, correct: bool) -> Signal:
        correct = bool(correct)
        if len(self._window) == self.window_size:
            self._correct -= self._window[0]
        self._window.append(correct)
        self._correct += correct
        if len(self._window) < self.window_size:
            return Signal.NO_DRIFT
        p = self._correct / self.window_size
        if p > self.p_max:
            self.p_max = p
        if self.p_max - p > self.epsilon:
            self.reset()
            return Signal.DRIFT
        return Signal.NO_DRIFT

    def update_many(self, outcomes: Iterable[bool]) -> list[int]:
        """Feed outcomes in order; return the positions that signalled drift."""
        hits = []
        n, eps = self.window_size, self.epsilon
        window = self._window
        for i, ok in enumerate(np.asarray(outcomes, dtype=bool).tolist()):
            if len(window) == n:
                self._correct -= window[0]
            window.append(ok)
            self._correct += ok
            if len(window) < n:
                continue
            p = self._correct / n
            if p > self.p_max:
                self.p_max = p
            if self.p_max - p > eps:
                hits.append(i)
                self.reset()
                window = self._window
        return hits


def fhddm_update(state: FHDDM, correct: bool) -> Signal:
    return state.update(correct)


class StabilizationWindow:
    """Sliding window over the last ``capacity`` chunk scores (VSDM).

    Stabilization is signalled when the window is full and the population
    variance of its scores falls below ``epsilon_s``.
    """

    def __init__(self, capacity: int = 30, epsilon_s: float = 1e-4):
        if capacity < 2:
            raise ValidationError(f"stabilization window must hold >= 2 scores, got {capacity}")
        if not epsilon_s > 0:
            raise ValidationError(f"epsilon_s must be > 0, got {epsilon_s}")
        self.capacity = capacity
        self.epsilon_s = epsilon_s
        self.scores: deque[float] = deque(maxlen=capacity)

    def reset(self) -> None:
        self.scores.clear()

    @property
    def is_full(self) -> bool:
        return len(self.scores) == self.capacity

    def variance(self) -> float:
        if not self.is_full:
            raise NotReady(f"window holds {len(self.scores)} of {self.capacity} scores")
        s = np.fromiter(self.scores, dtype=float, count=self.capacity)
        return float(np.mean((s - s.mean()) ** 2))

    def update(self, score: float) -> Signal:
        if not 0.0 <= score <= 1.0:
            raise ValidationError(f"score must lie in [0, 1], got {score}")
        self.scores.append(float(score))
        if self.is_full and self.variance() < self.epsilon_s:
            return Signal.STABILIZED
        return Signal.NOT_STABILIZED


def window_variance(w: StabilizationWindow) -> float:
    return w.variance()


def vsdm_update(w: StabilizationWindow, score: float) -> Signal:
    return w.update(score)
