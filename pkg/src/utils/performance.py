"""
Performance Monitoring for the CACRL scheduler.

Provides section timing per policy iteration and the rolling-window
dropout-rate counter used by the metrics rows.
"""

from __future__ import annotations

import time
from collections import deque
from dataclasses import dataclass
from typing import Optional

import numpy as np


@dataclass
class IterationTiming:
    """Wall-clock snapshot of one policy iteration."""

    collection_ms: float
    critic_ms: float
    actor_ms: float

    @property
    def total_ms(self) -> float:
        """Total time per iteration."""
        return self.collection_ms + self.critic_ms + self.actor_ms


class DropoutRateWindow:
    """
    Per-user dropout rate over a rolling window of iterations.

    Each iteration contributes the number of dropped packets and the number
    of packets that left the queue (served or expired). The rate is the
    ratio of the window sums; an empty window reads as 0.
    """

    def __init__(self, num_users: int, window_size: int = 10):
        """
        Initialize the window.

        Args:
            num_users: Number of users K
            window_size: Number of iterations to aggregate over (W_m)
        """
        self._num_users = num_users
        self._window_size = window_size
        self._dropped: deque[np.ndarray] = deque(maxlen=window_size)
        self._resolved: deque[np.ndarray] = deque(maxlen=window_size)

    def push(self, dropped: np.ndarray, resolved: np.ndarray) -> np.ndarray:
        """
        Record one iteration and return the current per-user rates.

        Args:
            dropped: Packets dropped per user during the iteration
            resolved: Packets served or dropped per user during the iteration

        Returns:
            Current windowed dropout rate per user
        """
        self._dropped.append(np.asarray(dropped, dtype=np.int64).copy())
        self._resolved.append(np.asarray(resolved, dtype=np.int64).copy())
        return self.rates

    @property
    def rates(self) -> np.ndarray:
        """Current per-user dropout rate (0 where nothing resolved)."""
        if not self._resolved:
            return np.zeros(self._num_users)
        dropped = np.sum(self._dropped, axis=0)
        resolved = np.sum(self._resolved, axis=0)
        out = np.zeros(self._num_users)
        np.divide(dropped, resolved, out=out, where=resolved > 0)
        return out

    def reset(self) -> None:
        """Clear the window."""
        self._dropped.clear()
        self._resolved.clear()


class PerformanceProfiler:
    """
    Profiler for timing the phases of a policy iteration.

    Usage:
        profiler = PerformanceProfiler()

        with profiler.measure("collection"):
            # Sampling under the current policy...

        with profiler.measure("critic"):
            # f-hat, TD, encoder and potential updates...

        timing = profiler.get_timing()
    """

    def __init__(self, window_size: int = 1):
        """
        Initialize profiler.

        Args:
            window_size: Number of samples to average per section
        """
        self._window_size = window_size
        self._timings: dict[str, deque[float]] = {}

    class _TimingContext:
        """Context manager for timing a section."""

        def __init__(self, profiler: "PerformanceProfiler", section: str):
            self._profiler = profiler
            self._section = section
            self._start_time = 0.0

        def __enter__(self):
            self._start_time = time.perf_counter()
            return self

        def __exit__(self, *args):
            elapsed = (time.perf_counter() - self._start_time) * 1000
            self._profiler._record(self._section, elapsed)

    def measure(self, section: str) -> _TimingContext:
        """
        Create a timing context for a section.

        Args:
            section: Name of the section to time

        Returns:
            Context manager for timing
        """
        return self._TimingContext(self, section)

    def _record(self, section: str, time_ms: float) -> None:
        """Record a timing sample."""
        if section not in self._timings:
            self._timings[section] = deque(maxlen=self._window_size)
        self._timings[section].append(time_ms)

    def get_average(self, section: str) -> float:
        """Get average time for a section in milliseconds."""
        times = self._timings.get(section)
        if not times:
            return 0.0
        return sum(times) / len(times)

    def get_timing(self) -> IterationTiming:
        """Get the current iteration timing."""
        return IterationTiming(
            collection_ms=self.get_average("collection"),
            critic_ms=self.get_average("critic"),
            actor_ms=self.get_average("actor"),
        )

    def reset(self) -> None:
        """Reset all profiling data."""
        self._timings.clear()

    def get_summary(self, section: Optional[str] = None) -> str:
        """Get a formatted summary of iteration timing."""
        if section is not None:
            return f"{section}: {self.get_average(section):.1f}ms"
        timing = self.get_timing()
        return (
            f"Collect: {timing.collection_ms:.1f}ms | "
            f"Critic: {timing.critic_ms:.1f}ms | "
            f"Actor: {timing.actor_ms:.1f}ms | "
            f"Total: {timing.total_ms:.1f}ms"
        )
