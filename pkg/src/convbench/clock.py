"""Scaled wall-clock time for simulated workloads.

All durations in the codebase are expressed in *simulated seconds*. A
single Clock divides them by `time_scale` before sleeping, so the same
code path drives fast tests and slower, more precise runs.
"""

from __future__ import annotations

import asyncio
import time


class Clock:
    """Monotonic wall clock with a global simulation time scale."""

    def __init__(self, time_scale: float = 100.0):
        if time_scale <= 0:
            raise ValueError("time_scale must be > 0")
        self.time_scale = time_scale
        self._epoch = time.monotonic()

    def now(self) -> float:
        """Wall seconds since this clock was created."""
        return time.monotonic() - self._epoch

    def now_sim(self) -> float:
        """Simulated seconds since this clock was created."""
        return self.now() * self.time_scale

    def to_sim(self, wall_seconds: float) -> float:
        return wall_seconds * self.time_scale

    def to_wall(self, sim_seconds: float) -> float:
        return sim_seconds / self.time_scale

    async def sleep(self, sim_seconds: float) -> None:
        """Sleep for a simulated duration (scaled down to wall time)."""
        if sim_seconds > 0:
            await asyncio.sleep(sim_seconds / self.time_scale)
