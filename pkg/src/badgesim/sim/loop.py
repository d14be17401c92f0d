"""Virtual-time event loop.

Time is integer nanoseconds. Events fire in (time, priority, insertion)
order, so runs are deterministic. Two scheduling paths mirror the target's
execution contexts:

* call_at / Timer: interrupt-style callbacks, priority 0
* schedule(): the app-scheduler queue; tasks run serialized in the main
  context, each charged a fixed task cost, priority 1
"""

from __future__ import annotations

import heapq
import itertools


class LoopError(Exception):
    pass


class Handle:
    """Cancellation token for a pending event."""

    __slots__ = ("cancelled",)

    def __init__(self):
        self.cancelled = False

    def cancel(self) -> None:
        self.cancelled = True


class EventLoop:
    def __init__(self, sched_task_cost_ns: int = 2_000_000):
        self._heap: list = []
        self._seq = itertools.count()
        self._now_ns = 0
        self.sched_task_cost_ns = sched_task_cost_ns
        self._sched_free_ns = 0  # when the main context next becomes idle
        self.events_run = 0
        self.max_sched_backlog = 0

    @property
    def now_ns(self) -> int:
        return self._now_ns

    def call_at(self, t_ns: int, fn, *args, priority: int = 0) -> Handle:
        if t_ns < self._now_ns:
            raise LoopError(f"event in the past: {t_ns} < {self._now_ns}")
        h = Handle()
        heapq.heappush(self._heap, (t_ns, priority, next(self._seq), fn, args, h))
        return h

    def call_later(self, delay_ns: int, fn, *args) -> Handle:
        return self.call_at(self._now_ns + delay_ns, fn, *args)

    def schedule(self, fn, *args) -> Handle:
        """Queue a task for the serialized main context."""
        start = max(self._now_ns, self._sched_free_ns) + self.sched_task_cost_ns
        self._sched_free_ns = start
        backlog = (self._sched_free_ns - self._now_ns) // max(self.sched_task_cost_ns, 1)
        self.max_sched_backlog = max(self.max_sched_backlog, backlog)
        return self.call_at(start, fn, *args, priority=1)

    def run_until(self, t_ns: int) -> None:
        while self._heap and self._heap[0][0] <= t_ns:
            when, _prio, _seq, fn, args, h = heapq.heappop(self._heap)
            self._now_ns = when
            if h.cancelled:
                continue
            self.events_run += 1
            fn(*args)
        self._now_ns = max(self._now_ns, t_ns)

    def run_until_idle(self, limit_ns: int | None = None) -> None:
        while self._heap:
            if limit_ns is not None and self._heap[0][0] > limit_ns:
                break
            when, _prio, _seq, fn, args, h = heapq.heappop(self._heap)
            self._now_ns = when
            if h.cancelled:
                continue
            self.events_run += 1
            fn(*args)

    @property
    def pending(self) -> int:
        return sum(1 for e in self._heap if not e[5].cancelled)


class Timer:
    """Repeating timer; the callback runs every `period_ns` until stopped."""

    def __init__(self, loop: EventLoop, period_ns: int, fn, *args):
        if period_ns <= 0:
            raise LoopError("timer period must be positive")
        self.loop = loop
        self.period_ns = period_ns
        self.fn = fn
        self.args = args
        self._handle: Handle | None = None
        self.running = False

    def start(self) -> None:
        if self.running:
            return
        self.running = True
        self._arm()

    def _arm(self) -> None:
        self._handle = self.loop.call_later(self.period_ns, self._fire)

    def _fire(self) -> None:
        if not self.running:
            return
        self._arm()  # re-arm first so the callback may stop the timer
        self.fn(*self.args)

    def stop(self) -> None:
        self.running = False
        if self._handle is not None:
            self._handle.cancel()
            self._handle = None
