"""Checkpointing baselines: whole-system snapshots (SYS) and write-ahead logging (LOG)."""

from __future__ import annotations

import copy
from dataclasses import dataclass, field
from enum import Enum

from .errors import ConfigError


class Scheme(str, Enum):
    OURS = "OURS"
    SYS = "SYS"
    LOG = "LOG"
    NAIVE_RERUN = "NAIVE_RERUN"

    @classmethod
    def parse(cls, text) -> "Scheme":
        if isinstance(text, Scheme):
            return text
        key = str(text).strip().upper()
        aliases = {"NAIVE": "NAIVE_RERUN", "OUR": "OURS"}
        try:
            return cls(aliases.get(key, key))
        except ValueError:
            raise ConfigError(f"unknown scheme {text!r}") from None


DEFAULT_COSTS_MS = {
    Scheme.SYS: (7.5, 7.6),
    Scheme.LOG: (3.2, 7.0),
}


@dataclass
class CheckpointConfig:
    """Period and costs of a checkpointing baseline.

    In proportional mode the suspension cost becomes ``per_unit_us`` per
    flushed unit (256 VM bytes for SYS, one log record for LOG) and the
    LOG recovery cost grows with the retained log.
    """

    scheme: Scheme
    period_ms: int = 20
    suspension_cost_ms: float | None = None
    recovery_cost_ms: float | None = None
    proportional: bool = False
    per_unit_us: float = 50.0
    chunk_bytes: int = 512

    def __post_init__(self):
        self.scheme = Scheme.parse(self.scheme)
        if self.scheme not in DEFAULT_COSTS_MS:
            raise ConfigError(f"{self.scheme.value} is not a checkpointing scheme")
        susp, rec = DEFAULT_COSTS_MS[self.scheme]
        if self.suspension_cost_ms is None:
            self.suspension_cost_ms = susp
        if self.recovery_cost_ms is None:
            self.recovery_cost_ms = rec
        if self.period_ms <= 0:
            raise ConfigError("checkpoint period must be positive")
        if self.suspension_cost_ms < 0 or self.recovery_cost_ms < 0 or self.per_unit_us < 0:
            raise ConfigError("checkpoint costs must be non-negative")
        if self.chunk_bytes <= 0:
            raise ConfigError("chunk_bytes must be positive")

    @property
    def period_us(self) -> int:
        return int(self.period_ms * 1000)

    @property
    def suspension_us(self) -> int:
        return round(self.suspension_cost_ms * 1000)

    @property
    def recovery_us(self) -> int:
        return round(self.recovery_cost_ms * 1000)


@dataclass
class Snapshot:
    image: object
    history_len: int
    taken_us: int
    vm_bytes: int = 0


class CopyCodec:
    """Default snapshot encoding: an independent deep copy."""

    def dump(self, machine):
        return copy.deepcopy(machine)

    def load(self, image):
        return copy.deepcopy(image)


class SysCheckpointer:
    """Two snapshot slots in NVM; a toggle bit names the current one."""

    def __init__(self, cfg: CheckpointConfig, crash, codec=None):
        self.cfg = cfg
        self.crash = crash
        self.codec = codec or CopyCodec()
        self.slots: list[Snapshot | None] = [None, None]
        self.bit = 0
        self.pending: Snapshot | None = None
        self.published = 0

    def current(self) -> Snapshot | None:
        return self.slots[self.bit]

    def suspension_us(self, machine) -> int:
        if not self.cfg.proportional:
            return self.cfg.suspension_us
        vm = machine.memory.regions["VM"].used_bytes
        return round(self.cfg.per_unit_us * -(-vm // 256))

    def begin(self, machine, history_len: int, now_us: int) -> None:
        """Capture the suspended system; it becomes durable only at :meth:`publish`."""
        self.pending = Snapshot(self.codec.dump(machine), history_len, now_us,
                                machine.memory.regions["VM"].used_bytes)

    def publish(self) -> None:
        snap, self.pending = self.pending, None
        if snap is None:
            return
        vm = snap.vm_bytes
        stale = 1 - self.bit
        for _ in range(max(1, -(-vm // self.cfg.chunk_bytes))):
            self.crash.point("sys_snapshot_chunk")
            self.slots[stale] = None  # partially overwritten slot is unusable
        self.crash.point("sys_snapshot_toggle")
        self.slots[stale] = snap
        self.bit = stale
        self.published += 1

    def abandon(self) -> None:
        self.pending = None

    def restore(self):
        """Fresh copy of the current snapshot's machine, or None for a cold start."""
        snap = self.current()
        if snap is None:
            return None
        return self.codec.load(snap.image), snap.history_len


class LogKind(str, Enum):
    BEGIN = "BEGIN"
    WRITE = "WRITE"
    FINISH = "FINISH"
    CHECKPOINT = "CHECKPOINT"


@dataclass(frozen=True)
class LogRecord:
    kind: LogKind
    task: int = 0
    obj: int | None = None
    old: bytes | None = None
    new: bytes | None = None
    ts: int = 0


@dataclass
class LogStore:
    """NVM side of the logging baseline: the durable log and data area."""

    data: dict
    records: list = field(default_factory=list)
    images: list = field(default_factory=lambda: [None, None])
    bit: int = 0


class LogCheckpointer:
    """Write-ahead logging with periodic flush and redo/undo recovery.

    Commits only append to a volatile log tail; a checkpoint flushes the
    tail, then the modified data, then a marker. Recovery undoes anything
    after the last marker and redoes the finished tasks before it.
    """

    def __init__(self, cfg: CheckpointConfig, crash, initial: dict, codec=None):
        self.cfg = cfg
        self.crash = crash
        self.codec = codec or CopyCodec()
        self.store = LogStore(dict(initial))
        self.tail: list[LogRecord] = []
        self.pending: Snapshot | None = None
        self.published = 0
        self.recover_steps = 0

    def on_commit(self, record_id: int, changes: dict, ts: int) -> None:
        self.tail.append(LogRecord(LogKind.BEGIN, record_id, ts=ts))
        for obj in sorted(changes):
            old, new = changes[obj]
            self.tail.append(LogRecord(LogKind.WRITE, record_id, obj, old, new, ts))
        self.tail.append(LogRecord(LogKind.FINISH, record_id, ts=ts))

    def on_power_failure(self) -> None:
        self.tail.clear()
        self.pending = None

    def suspension_us(self, machine=None) -> int:
        if not self.cfg.proportional:
            return self.cfg.suspension_us
        return round(self.cfg.per_unit_us * len(self.tail))

    def recovery_us(self) -> int:
        if not self.cfg.proportional:
            return self.cfg.recovery_us
        return self.cfg.recovery_us + round(self.cfg.per_unit_us * len(self.store.records))

    def begin(self, machine, history_len: int, now_us: int) -> None:
        self.pending = Snapshot(self.codec.dump(machine), history_len, now_us)

    def publish(self) -> None:
        st = self.store
        snap, self.pending = self.pending, None
        latest = {}
        for rec in self.tail:
            self.crash.point("log_append")
            st.records.append(rec)
            if rec.kind is LogKind.WRITE:
                latest[rec.obj] = rec.new
        self.tail.clear()
        for obj in sorted(latest):
            self.crash.point("log_data_write")
            st.data[obj] = latest[obj]
        self.crash.point("log_checkpoint_marker")
        st.records.append(LogRecord(LogKind.CHECKPOINT, ts=snap.taken_us if snap else 0))
        if snap is not None:
            st.images[1 - st.bit] = snap
            st.bit = 1 - st.bit
        marks = [i for i, r in enumerate(st.records) if r.kind is LogKind.CHECKPOINT]
        if len(marks) > 1:
            # everything before the previous marker is already reflected in the data area
            del st.records[:marks[-2] + 1]
        self.published += 1

    def recover(self) -> None:
        """Bring the data area back to the last complete checkpoint; idempotent."""
        st = self.store
        marks = [i for i, r in enumerate(st.records) if r.kind is LogKind.CHECKPOINT]
        last = marks[-1] if marks else -1
        for rec in reversed(st.records[last + 1:]):
            if rec.kind is LogKind.WRITE:
                self.crash.point("log_recover_step")
                self.recover_steps += 1
                st.data[rec.obj] = rec.old
        finished = {r.task for r in st.records[:last + 1] if r.kind is LogKind.FINISH}
        for rec in st.records[:last + 1]:
            if rec.kind is LogKind.WRITE and rec.task in finished:
                self.crash.point("log_recover_step")
                self.recover_steps += 1
                st.data[rec.obj] = rec.new
        del st.records[last + 1:]

    def image(self):
        snap = self.store.images[self.store.bit]
        if snap is None:
            return None
        return self.codec.load(snap.image), snap.history_len
