"""Integer-microsecond simulation clock, event queue and crash injection."""

from __future__ import annotations

import heapq
from dataclasses import dataclass, field
from enum import IntEnum
from pathlib import Path

from .errors import ConfigError, PowerFailure


class EventClass(IntEnum):
    """Tie-break order for events sharing a deadline (lower fires first)."""

    POWER = 0
    INTERRUPT = 1
    SCHEDULER = 2
    TASK = 3


@dataclass(frozen=True)
class Event:
    deadline: int
    cls: EventClass
    kind: str
    payload: object = None


class SimClock:
    """Simulation time plus the persisted context-switch counter.

    ``ctx_switch_count`` doubles as the logical timestamp of the data
    manager; ``seq`` is a finer monotone counter that orders data
    operations which share a timestamp.
    """

    def __init__(self, tick_period_us: int = 1000):
        if tick_period_us <= 0:
            raise ConfigError("tick_period_us must be positive")
        self.now_us = 0
        self.tick_period_us = tick_period_us
        self.ctx_switch_count = 0
        self.seq = 0
        self._queue: list = []
        self._registered = 0

    def __deepcopy__(self, memo):
        return self

    def next_seq(self) -> int:
        self.seq += 1
        return self.seq

    def context_switch(self) -> int:
        self.ctx_switch_count += 1
        return self.ctx_switch_count

    def schedule(self, deadline: int, cls: EventClass, kind: str, payload=None) -> Event:
        if deadline < self.now_us:
            raise ValueError(f"event {kind} at {deadline} is in the past (now={self.now_us})")
        ev = Event(deadline, cls, kind, payload)
        heapq.heappush(self._queue, (deadline, int(cls), self._registered, ev))
        self._registered += 1
        return ev

    def pending(self) -> int:
        return len(self._queue)

    def clear(self) -> None:
        self._queue.clear()

    def advance(self, delta_us: int) -> list[Event]:
        """Move time forward and return every event now due, in firing order."""
        if delta_us < 0:
            raise ValueError("delta_us must be non-negative")
        self.now_us += delta_us
        fired = []
        q = self._queue
        while q and q[0][0] <= self.now_us:
            fired.append(heapq.heappop(q)[3])
        return fired

    def reset(self) -> None:
        self.__init__(self.tick_period_us)


# Every atomic micro-step that may be interrupted by an injected crash.
CRASH_SITES = frozenset({
    "ctx_switch",
    "dm_read",
    "dm_write",
    "temp_refresh",
    "shadow_write",
    "addr_map_write",
    "bitmap_toggle",
    "temp_update",
    "lv_switch_out",
    "sys_snapshot_chunk",
    "sys_snapshot_toggle",
    "log_append",
    "log_data_write",
    "log_checkpoint_marker",
    "log_recover_step",
})


@dataclass(frozen=True, order=True)
class CrashPoint:
    site_id: str
    occurrence_index: int

    def __post_init__(self):
        if self.site_id not in CRASH_SITES:
            raise ConfigError(f"unknown crash site {self.site_id!r}")
        if self.occurrence_index < 1:
            raise ConfigError("occurrence_index starts at 1")


@dataclass
class CrashInjector:
    """Counts executions of each crash site and fires scheduled crashes.

    Sites call :meth:`point` immediately *before* performing their
    micro-step, so a crash never exposes a half-done step.
    """

    schedule: set = field(default_factory=set)
    counts: dict = field(default_factory=dict)
    fired: list = field(default_factory=list)
    armed: bool = True

    def __deepcopy__(self, memo):
        return self

    def inject_crash(self, cp: CrashPoint) -> None:
        if not isinstance(cp, CrashPoint):
            cp = CrashPoint(*cp)
        self.schedule.add((cp.site_id, cp.occurrence_index))

    def point(self, site: str) -> None:
        n = self.counts.get(site, 0) + 1
        self.counts[site] = n
        if self.armed and (site, n) in self.schedule:
            self.fired.append(CrashPoint(site, n))
            raise PowerFailure(site, n)


def parse_crash_schedule(text: str) -> list[CrashPoint]:
    """Parse ``site_id occurrence_index`` lines; ``#`` starts a comment."""
    points = []
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        parts = line.split()
        if len(parts) != 2:
            raise ConfigError(f"crash schedule line {lineno}: expected 'site_id occurrence_index'")
        try:
            idx = int(parts[1])
        except ValueError:
            raise ConfigError(f"crash schedule line {lineno}: bad occurrence {parts[1]!r}") from None
        try:
            points.append(CrashPoint(parts[0], idx))
        except ConfigError as exc:
            raise ConfigError(f"crash schedule line {lineno}: {exc}") from None
    return points


def load_crash_schedule(path) -> list[CrashPoint]:
    return parse_crash_schedule(Path(path).read_text())
