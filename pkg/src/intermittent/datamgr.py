"""Two-version concurrency control over shared data objects.

Each object has a consistent version (an NVM persistent copy mirrored by
an optional VM temporary copy) and per-task working copies created on
first write. Commits are validated against already finished tasks using
validity time intervals, then published through a pair of address maps
and a bit map so that one micro-step switches every modified object.
"""

from __future__ import annotations

import bisect
from dataclasses import dataclass, field

from .errors import ConfigError, OutOfMemory
from .memory import Memory, RegionKind
from .workloads import initial_value

INF = float("inf")


def _shared(self, memo):
    return self


@dataclass(frozen=True)
class ValidityInterval:
    begin: int
    end: int

    __deepcopy__ = _shared

    @property
    def valid(self) -> bool:
        return self.begin <= self.end

    def __str__(self):
        return f"[{self.begin}, {self.end}]"


@dataclass
class ReadAction:
    obj: int
    begin: int
    end: int
    seq: int
    version: int
    hit: bool = False  # a later commit of obj already shrank the running interval


@dataclass(frozen=True)
class WriteAction:
    obj: int
    begin: int
    end: int
    seq: int

    __deepcopy__ = _shared


@dataclass
class WorkingCopy:
    obj: int
    owner: int
    alloc_id: int
    region: RegionKind


@dataclass(frozen=True)
class CommitEntry:
    seq: int
    record_id: int
    begin: int
    end: int

    __deepcopy__ = _shared


@dataclass
class DataObject:
    id: int
    size: int
    interval: ValidityInterval = ValidityInterval(0, 0)
    version: int = 0
    read_floor: int = -1
    commit_history: list = field(default_factory=list)
    slots: set = field(default_factory=set)


class CommitMapStructure:
    """Two address maps and a bit map selecting the current map per object."""

    def __init__(self, width: int = 16):
        self.width = width
        self.address_map_0 = [0] * width
        self.address_map_1 = [0] * width
        self.bit_map = 0

    def maps(self, which: int) -> list:
        return self.address_map_1 if which else self.address_map_0

    def bit(self, obj: int) -> int:
        return (self.bit_map >> obj) & 1

    def current(self, obj: int) -> int:
        return self.maps(self.bit(obj))[obj]

    def stale(self, obj: int) -> int:
        return self.maps(1 - self.bit(obj))[obj]

    def mask(self, objs) -> int:
        m = 0
        for o in objs:
            if not 0 <= o < self.width:
                raise ConfigError(f"object {o} outside bit-map width {self.width}")
            m |= 1 << o
        return m


@dataclass
class CommitResult:
    committed: bool
    interval: ValidityInterval
    victims: list = field(default_factory=list)


@dataclass
class ValidationStats:
    calls: int = 0
    max_excess: float = -INF
    violations: list = field(default_factory=list)
    samples: list = field(default_factory=list)
    keep_samples: bool = False

    def __deepcopy__(self, memo):
        # observes every call, including ones a baseline later rolls back
        return self

    def record(self, comparisons, n_objects, n_concurrent):
        self.calls += 1
        bound = 2 * (n_objects + n_concurrent) + 8
        self.max_excess = max(self.max_excess, comparisons - bound)
        if comparisons > bound:
            self.violations.append((comparisons, n_objects, n_concurrent))
        if self.keep_samples:
            self.samples.append((comparisons, n_objects, n_concurrent))


class DataManager:
    """Read / write / commit for tasks, with serializability validation.

    ``early_abort`` keeps each task's running interval up to date on
    every read and on every foreign commit, so commit-time validation
    only has to process writes. ``reader_guard`` additionally orders a
    committing writer after every finished task that read an object it
    overwrites; without it a write-skew pair can both validate.
    """

    def __init__(self, memory: Memory, clock, crash, n_objects: int, object_size: int = 64,
                 width: int = 16, initial_values=None, early_abort: bool = True,
                 reader_guard: bool = True, history=None, op_costs=None):
        if n_objects > width:
            raise ConfigError(f"{n_objects} data objects exceed the {width}-bit commit word")
        if n_objects < 1:
            raise ConfigError("need at least one data object")
        self.mem = memory
        self.clock = clock
        self.crash = crash
        self.size = object_size
        self.early_abort = early_abort
        self.reader_guard = reader_guard
        self.history = history if history is not None else []
        self.cmap = CommitMapStructure(width)
        self.objects = [DataObject(i, object_size) for i in range(n_objects)]
        self.temp: dict[int, int] = {}  # obj -> VM alloc id; volatile
        self.commit_count = 0
        self.stats = ValidationStats()
        self.kernel = None
        self.recovery = None
        self.listener = None
        memory.allocate(RegionKind.NVM, 4 * width + 2, "datamgr", "metadata")
        for o in self.objects:
            init = (initial_values[o.id] if initial_values else initial_value(o.id, object_size))
            if len(init) != object_size:
                raise ConfigError(f"initial value of object {o.id} must be {object_size} bytes")
            for which in (0, 1):
                a = memory.allocate(RegionKind.NVM, object_size, ("object", o.id), "persistent_copy")
                memory.write(a.id, init)
                self.cmap.maps(which)[o.id] = a.id
                o.slots.add(a.id)

    # ---------------------------------------------------------------- reads
    def persistent_value(self, obj: int) -> bytes:
        return self.mem.read(self.cmap.current(obj))

    def persistent_image(self) -> tuple:
        return tuple(self.persistent_value(o.id) for o in self.objects)

    def temp_valid(self, obj: int) -> bool:
        aid = self.temp.get(obj)
        return aid is not None and self.mem.is_live(aid)

    def dm_read(self, task, obj: int) -> bytes:
        self._check_obj(obj)
        self.crash.point("dm_read")
        seq = self.clock.next_seq()
        wc = task.write_set.get(obj)
        if wc is not None:
            value = self.mem.read(wc.alloc_id)
            task.observed.append(value)
            return value
        if self.temp_valid(obj):
            value = self.mem.read(self.temp[obj])
        else:
            value = self.persistent_value(obj)
            self._refresh_temp(obj, value)
        o = self.objects[obj]
        if not any(r.obj == obj and r.version == o.version for r in task.read_log):
            task.read_log.append(ReadAction(obj, o.interval.begin, o.interval.end, seq, o.version))
            self.history.append(("read", task.id, obj, o.version))
            if self.early_abort:
                task.run_begin = max(task.run_begin, o.interval.begin + 1)
        task.observed.append(value)
        return value

    def _refresh_temp(self, obj, value):
        self.crash.point("temp_refresh")
        old = self.temp.pop(obj, None)
        if old is not None:
            self.mem.free(old)
        try:
            a = self.mem.allocate(RegionKind.VM, self.size, ("object", obj), "temporary_copy")
        except OutOfMemory:
            return
        self.mem.write(a.id, value)
        self.temp[obj] = a.id

    def early_abort_check(self, task) -> bool:
        """True when the task may continue; False means abort now."""
        return task.run_begin <= task.run_end

    # --------------------------------------------------------------- writes
    def dm_write(self, task, obj: int, value: bytes) -> None:
        self._check_obj(obj)
        self.crash.point("dm_write")
        seq = self.clock.next_seq()
        wc = task.write_set.get(obj)
        if wc is None:
            region = RegionKind.NVM if task.lengthy else RegionKind.VM
            a = self.mem.allocate(region, self.size, ("task", task.id), "working_copy")
            wc = WorkingCopy(obj, task.id, a.id, region)
            task.write_set[obj] = wc
            o = self.objects[obj]
            task.write_log.append(WriteAction(obj, o.interval.begin, o.interval.end, seq))
        self.mem.write(wc.alloc_id, value)

    def discard_working_copies(self, task) -> None:
        for wc in task.write_set.values():
            a = self.mem.allocs.get(wc.alloc_id)
            if a is not None and a.owner == ("task", task.id):
                self.mem.free(wc.alloc_id)
        task.write_set.clear()

    # ----------------------------------------------------------- validation
    def first_commit_after(self, obj: int, seq: int):
        h = self.objects[obj].commit_history
        i = bisect.bisect_right([e.seq for e in h], seq)
        return h[i] if i < len(h) else None

    def last_commit_after(self, obj: int, seq: int):
        h = self.objects[obj].commit_history
        return h[-1] if h and h[-1].seq > seq else None

    def validate(self, task, now: int) -> ValidityInterval:
        """Derive the task's validity interval; an empty interval means abort."""
        iv, comparisons = self._validate(task, now, skip_reads=self.early_abort)
        n = len({r.obj for r in task.read_log} | set(task.write_set))
        self.stats.record(comparisons, n, self.concurrent_with(task))
        return iv

    def _validate(self, task, now, skip_reads):
        cmp = 0
        if skip_reads:
            begin, end = task.run_begin, min(task.run_end, now)
        else:
            begin, end = 0, now
            firsts = {}
            for r in task.read_log:
                begin = max(begin, r.begin + 1)
                cmp += 1
                tau = self.first_commit_after(r.obj, r.seq)
                if tau is not None:
                    firsts[tau.seq] = tau.begin
            for tau_begin in firsts.values():
                end = min(end, tau_begin - 1)
                cmp += 1
        lasts = {}
        for w in task.write_log:
            begin = max(begin, w.begin + 1)
            cmp += 1
            tau = self.last_commit_after(w.obj, w.seq)
            if tau is not None:
                lasts[tau.seq] = tau.begin
            if self.reader_guard:
                begin = max(begin, self.objects[w.obj].read_floor + 1)
                cmp += 1
        for tau_begin in lasts.values():
            begin = max(begin, tau_begin + 1)
            cmp += 1
        cmp += 1  # final emptiness test
        return ValidityInterval(begin, end), cmp

    def validate_full(self, task, now: int) -> ValidityInterval:
        """Validation from scratch, ignoring any early-abort bookkeeping."""
        return self._validate(task, now, skip_reads=False)[0]

    def concurrent_with(self, task) -> int:
        live = len(self.kernel.tasks) - 1 if self.kernel is not None else 0
        return max(0, live) + (self.commit_count - task.start_commits)

    # --------------------------------------------------------------- commit
    def atomic_commit_apply(self, modified, publish=None) -> None:
        """Toggle the bits of ``modified`` (and run ``publish``) as one micro-step."""
        mask = self.cmap.mask(modified)
        if len(modified) > self.cmap.width:
            raise ConfigError(f"{len(modified)} objects exceed commit width {self.cmap.width}")
        if not modified and publish is None:
            return
        self.crash.point("bitmap_toggle")
        self.cmap.bit_map ^= mask
        if publish is not None:
            publish()

    def dm_commit(self, task) -> CommitResult:
        now = self.clock.ctx_switch_count
        iv = self.validate(task, now)
        if not iv.valid:
            return CommitResult(False, iv)
        modified = sorted(task.write_set)
        staged = []
        for obj in modified:
            self.crash.point("shadow_write")
            wc = task.write_set[obj]
            if task.lengthy:
                # the NVM working copy itself becomes the shadow copy
                self.mem.set_owner(wc.alloc_id, ("object", obj), "shadow_copy")
                self.objects[obj].slots.add(wc.alloc_id)
                staged.append((obj, wc.alloc_id))
            else:
                shadow = self.cmap.stale(obj)
                self.mem.write(shadow, self.mem.read(wc.alloc_id))
                staged.append((obj, shadow))
        displaced = []
        for obj, addr in staged:
            self.crash.point("addr_map_write")
            entries = self.cmap.maps(1 - self.cmap.bit(obj))
            if entries[obj] != addr:
                displaced.append((obj, entries[obj]))
            entries[obj] = addr
        victims = []

        def publish():
            seq = self.clock.next_seq()
            entry = CommitEntry(seq, task.record_id, iv.begin, iv.end)
            for obj in modified:
                o = self.objects[obj]
                o.interval = iv
                o.version = seq
                o.commit_history.append(entry)
            for obj in {r.obj for r in task.read_log}:
                o = self.objects[obj]
                o.read_floor = max(o.read_floor, iv.begin)
            self.commit_count += 1
            if self.recovery is not None:
                self.recovery.mark_finished(task, iv)
            self.history.append(("commit", task.id, task.record_id, task.workload.name,
                                 tuple(modified), iv.begin, iv.end, seq))
            if self.early_abort and self.kernel is not None:
                victims.extend(self._notify_readers(task, modified, entry))

        self.atomic_commit_apply(modified, publish)
        if self.listener is not None:
            self.listener(task, iv, modified)
        for obj, aid in displaced:
            self.objects[obj].slots.discard(aid)
            self.mem.free(aid)
        for obj in modified:
            self.crash.point("temp_update")
            old = self.temp.pop(obj, None)
            if old is not None:
                self.mem.free(old)
            wc = task.write_set[obj]
            if task.lengthy:
                self.mem.set_owner(wc.alloc_id, ("object", obj), "persistent_copy")
            else:
                self.mem.set_owner(wc.alloc_id, ("object", obj), "temporary_copy")
                self.temp[obj] = wc.alloc_id
        task.write_set.clear()
        self.prune()
        return CommitResult(True, iv, victims)

    def _notify_readers(self, committer, modified, entry):
        victims = []
        mod = set(modified)
        for t in self.kernel.tasks.values():
            if t is committer:
                continue
            touched = False
            for r in t.read_log:
                if r.obj in mod and not r.hit and r.seq < entry.seq:
                    r.hit = True
                    t.run_end = min(t.run_end, entry.begin - 1)
                    touched = True
            if touched and not self.early_abort_check(t):
                victims.append(t)
        return victims

    def prune(self) -> None:
        """Drop commit history no live task can still refer to.

        Only entries newer than a live task's earliest logged access to the
        object are ever consulted; later accesses look at newer entries.
        """
        horizon = {}
        if self.kernel is not None:
            for t in self.kernel.tasks.values():
                for a in (*t.read_log, *t.write_log):
                    if a.seq < horizon.get(a.obj, INF):
                        horizon[a.obj] = a.seq
        for o in self.objects:
            h = o.commit_history
            if len(h) < 2:
                continue
            cut = horizon.get(o.id)
            if cut is None:
                o.commit_history = h[-1:]
            elif h[0].seq <= cut:
                o.commit_history = [e for e in h if e.seq > cut] or h[-1:]

    # ------------------------------------------------------------- recovery
    def on_power_failure(self) -> None:
        self.temp.clear()

    def invalidate_temporaries(self) -> None:
        for aid in self.temp.values():
            self.mem.free(aid)
        self.temp.clear()

    def reconcile_slots(self) -> int:
        """Free object-owned NVM copies no address map refers to (crashed commits)."""
        freed = 0
        for o in self.objects:
            live = {self.cmap.address_map_0[o.id], self.cmap.address_map_1[o.id]}
            for aid in list(o.slots - live):
                o.slots.discard(aid)
                self.mem.free(aid)
                freed += 1
            for aid in live:
                self.mem.set_owner(aid, ("object", o.id), "persistent_copy")
        return freed

    def set_persistent(self, obj: int, value: bytes) -> None:
        """Overwrite the consistent version directly (baseline recovery paths)."""
        self.mem.write(self.cmap.current(obj), value)
        aid = self.temp.get(obj)
        if aid is not None and self.mem.is_live(aid):
            self.mem.write(aid, value)

    def _check_obj(self, obj):
        if not 0 <= obj < len(self.objects):
            raise KeyError(f"data object {obj} is not registered")
