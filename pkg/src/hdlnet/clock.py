"""Clock sources.

Every time-dependent component takes a zero-argument callable returning
seconds. Production code passes :func:`time.monotonic`; simulations pass a
:class:`SimClock`, which also acts as a discrete-event scheduler.
"""

from __future__ import annotations

import heapq
import itertools
import threading
from typing import Callable

Clock = Callable[[], float]


class SimClock:
    """Simulated time that only moves when the scheduler advances it."""

    def __init__(self, start: float = 0.0):
        self._now = float(start)
        self._queue: list[tuple[float, int, int, Callable[[], None]]] = []
        self._seq = itertools.count()
        self._lock = threading.Lock()

    def __call__(self) -> float:
        return self._now

    def now(self) -> float:
        return self._now

    def advance(self, dt: float) -> float:
        if dt < 0:
            raise ValueError("cannot move simulated time backwards")
        self.advance_to(self._now + dt)
        return self._now

    def advance_to(self, t: float) -> None:
        """Run every event scheduled up to and including ``t``."""
        if t < self._now:
            raise ValueError(f"cannot move simulated time backwards ({t} < {self._now})")
        while True:
            with self._lock:
                if not self._queue or self._queue[0][0] > t:
                    break
                at, _, _, fn = heapq.heappop(self._queue)
                self._now = at
            fn()
        self._now = t

    def schedule(self, at: float, fn: Callable[[], None], priority: int = 0) -> None:
        """Queue ``fn`` at absolute time ``at``. Lower priority runs first at equal times."""
        if at < self._now:
            raise ValueError(f"cannot schedule in the past ({at} < {self._now})")
        with self._lock:
            heapq.heappush(self._queue, (at, priority, next(self._seq), fn))

    def pending(self) -> int:
        return len(self._queue)

    def next_time(self) -> float | None:
        with self._lock:
            return self._queue[0][0] if self._queue else None
