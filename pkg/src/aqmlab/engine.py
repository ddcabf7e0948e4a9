"""Event loop, simulation clock and the run-level random source."""

from __future__ import annotations

import heapq
import itertools
import random
from typing import Any, Callable

DEFAULT_SEED = 42


class SchedulingError(ValueError):
    pass


class RandomSource:
    """Seeded uniform generator (Mersenne Twister, identical on every platform)."""

    def __init__(self, seed: int = DEFAULT_SEED):
        self.seed = seed
        self._rng = random.Random(seed)
        self.draws = 0

    def uniform(self) -> float:
        self.draws += 1
        return self._rng.random()

    def randbits(self, k: int) -> int:
        self.draws += 1
        return self._rng.getrandbits(k)


def draw_uniform(source: RandomSource) -> float:
    return source.uniform()


class Event:
    __slots__ = ("at", "callback", "args", "cancelled")

    def __init__(self, at: float, callback: Callable[..., Any], args: tuple):
        self.at = at
        self.callback = callback
        self.args = args
        self.cancelled = False

    def cancel(self) -> None:
        self.cancelled = True


class Simulator:
    """Time-ordered event queue.

    Events at equal timestamps fire in the order they were scheduled.
    """

    def __init__(self, seed: int = DEFAULT_SEED):
        self.now = 0.0
        self.rng = RandomSource(seed)
        self.processed = 0
        self._heap: list[tuple[float, int, Event]] = []
        self._counter = itertools.count()

    def schedule(self, at: float, callback: Callable[..., Any], *args: Any) -> Event:
        if at < self.now:
            raise SchedulingError(f"cannot schedule at t={at!r} before clock t={self.now!r}")
        event = Event(at, callback, args)
        heapq.heappush(self._heap, (at, next(self._counter), event))
        return event

    def schedule_in(self, delay: float, callback: Callable[..., Any], *args: Any) -> Event:
        return self.schedule(self.now + delay, callback, *args)

    @property
    def pending(self) -> int:
        return sum(1 for _, _, ev in self._heap if not ev.cancelled)

    def run(self, until: float) -> int:
        """Process every event with ``at <= until``; return how many fired."""
        heap = self._heap
        pop = heapq.heappop
        fired = 0
        while heap and heap[0][0] <= until:
            at, _, event = pop(heap)
            if event.cancelled:
                continue
            self.now = at
            event.callback(*event.args)
            fired += 1
        if until > self.now:
            self.now = until
        self.processed += fired
        return fired
