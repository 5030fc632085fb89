"""Chunk-size schedule of Chunk-Adaptive Restoration.

After a detected drift the chunk size drops to ``drift_chunk_size`` and then
grows geometrically by ``alpha`` each chunk until it reaches the base size,
or snaps back to it as soon as the performance has stabilized.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from .exceptions import ValidationError

__all__ = ["SchedulerConfig", "SchedulerState", "next_chunk_size", "restore_steps", "grow"]

# absorbs representation error in alpha * size (e.g. 1.1 * 30 = 33.000000000000004)
_FLOOR_TOL = 1e-9


@dataclass(frozen=True)
class SchedulerConfig:
    chunk_size: int = 1000
    drift_chunk_size: int = 30
    alpha: float = 1.1

    def __post_init__(self):
        if not 1 <= self.drift_chunk_size <= self.chunk_size:
            raise ValidationError(
                "drift_chunk_size must satisfy 1 <= drift_chunk_size <= chunk_size "
                f"(got {self.drift_chunk_size}, {self.chunk_size})"
            )
        if not self.alpha > 1:
            raise ValidationError(f"alpha must be > 1, got {self.alpha}")


def grow(size: int, alpha: float, cap: int) -> int:
    """One growth step ``min(floor(alpha * size), cap)``, advancing by at
    least one sample so regrowth always terminates."""
    nxt = math.floor(alpha * size + _FLOOR_TOL)
    if nxt <= size:
        nxt = size + 1
    return min(nxt, cap)


class SchedulerState:
    def __init__(self, config: SchedulerConfig):
        self.config = config
        self.current_size = config.chunk_size

    def next_chunk_size(self, drift_detected: bool, stabilization_detected: bool) -> int:
        cfg = self.config
        if stabilization_detected:
            size = cfg.chunk_size
        else:
            size = grow(self.current_size, cfg.alpha, cfg.chunk_size)
        # drift is applied last and therefore wins over stabilization
        if drift_detected:
            size = cfg.drift_chunk_size
        self.current_size = size
        return size

    def __repr__(self) -> str:
        return f"SchedulerState(current_size={self.current_size}, config={self.config})"


def next_chunk_size(
    state: SchedulerState, drift_detected: bool, stabilization_detected: bool
) -> int:
    return state.next_chunk_size(drift_detected, stabilization_detected)


def restore_steps(c: int, c_d: int, alpha: float) -> int:
    """``ceil(log_alpha(c / c_d))``: continuous-model number of growth steps
    from the drift chunk size back to the base size."""
    SchedulerConfig(c, c_d, alpha)
    if c == c_d:
        return 0
    return math.ceil(math.log(c / c_d) / math.log(alpha) - _FLOOR_TOL)
