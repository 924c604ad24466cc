"""Deterministic discrete-event core.

Virtual time is an integer count of microseconds. Events with equal fire
times dispatch in the order they were scheduled.
"""

from __future__ import annotations

import hashlib
import heapq
from dataclasses import dataclass, field
from typing import Any, Callable

import numpy as np

US_PER_S = 1_000_000


def seconds(value: float) -> int:
    """Convert seconds to integer microseconds (rounded to nearest)."""
    return int(round(value * US_PER_S))


def to_seconds(us: int) -> float:
    return us / US_PER_S


class SchedulingError(RuntimeError):
    """Raised when an event is scheduled before the current clock."""


@dataclass(eq=False)
class EventHandle:
    fire_at: int
    seq: int
    target: str
    payload: Any
    state: str = field(default="pending")  # pending | fired | cancelled

    def __lt__(self, other: "EventHandle") -> bool:
        return (self.fire_at, self.seq) < (other.fire_at, other.seq)


class Simulator:
    """Priority-queue event loop with named targets.

    Components register a handler under an identifier; ``schedule`` queues a
    payload for that identifier. Handlers run one at a time and may schedule
    further events at or after the current clock.
    """

    def __init__(self, seed: int = 0, trace: bool = False):
        self.seed = seed
        self.now = 0
        self._heap: list[EventHandle] = []
        self._seq = 0
        self._handlers: dict[str, Callable[[Any], None]] = {}
        self.scheduled = 0
        self.dispatched = 0
        self.cancelled = 0
        self.trace: list[tuple[int, int, str]] | None = [] if trace else None

    def register(self, target: str, handler: Callable[[Any], None]) -> None:
        if target in self._handlers:
            raise ValueError(f"target {target!r} already registered")
        self._handlers[target] = handler

    def schedule(self, fire_at: int, target: str, payload: Any = None) -> EventHandle:
        if fire_at < self.now:
            raise SchedulingError(
                f"event for {target!r} at {fire_at} us is before clock {self.now} us"
            )
        handle = EventHandle(int(fire_at), self._seq, target, payload)
        self._seq += 1
        self.scheduled += 1
        heapq.heappush(self._heap, handle)
        return handle

    def schedule_in(self, delay: int, target: str, payload: Any = None) -> EventHandle:
        return self.schedule(self.now + delay, target, payload)

    def cancel(self, handle: EventHandle | None) -> bool:
        if handle is None or handle.state != "pending":
            return False
        handle.state = "cancelled"
        self.cancelled += 1
        return True

    @property
    def pending(self) -> int:
        return self.scheduled - self.dispatched - self.cancelled

    def run_until(self, end: int) -> int:
        """Dispatch every event with ``fire_at <= end``; return the final clock."""
        heap = self._heap
        handlers = self._handlers
        while heap and heap[0].fire_at <= end:
            ev = heapq.heappop(heap)
            if ev.state != "pending":
                continue
            self.now = ev.fire_at
            ev.state = "fired"
            self.dispatched += 1
            if self.trace is not None:
                self.trace.append((ev.fire_at, ev.seq, ev.target))
            handler = handlers.get(ev.target)
            if handler is None:
                raise KeyError(f"no handler registered for target {ev.target!r}")
            handler(ev.payload)
        if end > self.now:
            self.now = end
        return self.now

    def rng(self, source_id: str) -> np.random.Generator:
        """Independent random stream for one traffic source.

        Derived from (run seed, source id) only, so adding or removing a
        source never shifts another source's draws.
        """
        key = int.from_bytes(hashlib.sha256(source_id.encode("utf-8")).digest()[:8], "big")
        return np.random.default_rng(np.random.SeedSequence([self.seed & (2**64 - 1), key]))
