"""Simulated time base shared by a channel and its hardware."""

from __future__ import annotations

import time
from typing import Callable


class SimClock:
    """Monotonic simulated seconds with optional wall-clock pacing.

    ``accel`` is the simulated-to-wall speedup; ``None`` runs as fast as the
    host allows (the default for batch campaigns).
    """

    def __init__(self, accel: float | None = None):
        if accel is not None and accel <= 0:
            raise ValueError("accel must be > 0")
        self.now = 0.0
        self.accel = accel
        self._sleep: Callable[[float], None] = time.sleep

    def advance(self, dt: float) -> float:
        if dt < 0:
            raise ValueError("cannot advance backwards")
        self.now += dt
        if self.accel is not None and dt > 0:
            self._sleep(dt / self.accel)
        return self.now
