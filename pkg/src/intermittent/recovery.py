"""Recovery handler: persisted task records, instant recovery, lengthy-task handling."""

from __future__ import annotations

from dataclasses import dataclass, field

from .kernel import Kernel, Task, TaskAttributes, TaskStatus
from .memory import RegionKind

RECORD_BYTES = 32


@dataclass
class TaskRecord:
    id: int
    attrs: TaskAttributes
    workload: object
    lengthy: bool = False
    ever_rerun_due_to_power_failure: bool = False
    instantiated: bool = False
    finished: bool = False
    nvm_context_ref: int | None = None
    interval: object = None
    finished_at_us: int | None = None
    meta_alloc: int | None = None


@dataclass
class RecoveryReport:
    duration_us: int = 0
    created: int = 0
    recreated: int = 0
    readded: int = 0
    became_lengthy: int = 0
    unfinished: int = 0


@dataclass
class Stats:
    """Outcome counters that roll back with the machine state they describe."""

    finished: int = 0
    finished_long: int = 0
    finished_short: int = 0
    finished_lengthy_mode: int = 0
    by_workload: dict = field(default_factory=dict)
    last_commit_us: int | None = None


class RecoveryHandler:
    """Tracks every task through NVM-resident records and rebuilds the task set.

    Recovery after power resumption touches only unfinished records:
    finished work is already published in the persistent copies.
    """

    def __init__(self, kernel: Kernel, dm, memory, clock, stats: Stats | None = None,
                 lengthy_detection: bool = True, fixed_cost_us: int = 100,
                 per_task_cost_us: int = 100):
        self.kernel = kernel
        self.dm = dm
        self.mem = memory
        self.clock = clock
        self.stats = stats if stats is not None else Stats()
        self.lengthy_detection = lengthy_detection
        self.fixed_cost_us = fixed_cost_us
        self.per_task_cost_us = per_task_cost_us
        self.records: dict[int, TaskRecord] = {}
        self.lv_flag = False
        self.ops = 0  # instrumentation: record visits during recovery
        self._next_record = 1
        kernel.recovery = self
        if dm is not None:
            dm.recovery = self
            dm.kernel = kernel

    # ------------------------------------------------------------- records
    def add_record(self, workload, name=None) -> TaskRecord:
        rid = self._next_record
        self._next_record += 1
        attrs = TaskAttributes(workload.name, name or f"{workload.name}#{rid}",
                               stack_size=workload.stack_size)
        meta = self.mem.allocate(RegionKind.NVM, RECORD_BYTES, ("record", rid), "metadata")
        rec = TaskRecord(rid, attrs, workload, meta_alloc=meta.id)
        self.records[rid] = rec
        return rec

    def record_task_created(self, task: Task) -> None:
        rec = self.records.get(task.record_id)
        if rec is None:
            return
        rec.instantiated = True
        rec.nvm_context_ref = task.id if task.lengthy else None

    def spawn(self, rec: TaskRecord) -> Task:
        return self.kernel.create_task(rec.attrs, rec.lengthy, rec.workload, rec.id)

    def mark_finished(self, task: Task, interval) -> None:
        rec = self.records.get(task.record_id)
        if rec is None or rec.finished:
            return
        rec.finished = True
        rec.attrs.finished = True
        rec.interval = interval
        rec.finished_at_us = self.clock.now_us
        st = self.stats
        st.finished += 1
        if rec.workload.long_running:
            st.finished_long += 1
        else:
            st.finished_short += 1
        if task.lengthy:
            st.finished_lengthy_mode += 1
        st.by_workload[rec.workload.name] = st.by_workload.get(rec.workload.name, 0) + 1
        st.last_commit_us = self.clock.now_us
        if rec.workload.repeat:
            self.add_record(rec.workload)

    def collect_garbage(self) -> int:
        """Release finished records; validation never consults them."""
        done = [r for r in self.records.values() if r.finished]
        for r in done:
            del self.records[r.id]
            if r.meta_alloc is not None:
                self.mem.free(r.meta_alloc)
        return len(done)

    def unfinished(self) -> list[TaskRecord]:
        return [r for r in self.records.values() if not r.finished]

    # ------------------------------------------------------- task lifecycle
    def on_task_finished(self, task: Task) -> Task | None:
        """Retire a committed task and start its successor record, if any."""
        self.kernel.delete_task(task, TaskStatus.FINISHED)
        self.collect_garbage()
        for rec in self.records.values():
            if not rec.instantiated and not rec.finished:
                return self.spawn(rec)
        return None

    def abort_and_recreate(self, task: Task) -> Task:
        """Rerun a task whose validation failed; progress is reset, lengthiness kept."""
        if self.dm is not None:
            self.dm.discard_working_copies(task)
        self.kernel.delete_task(task, TaskStatus.ABORTED)
        rec = self.records[task.record_id]
        return self.spawn(rec)

    def detect_lengthy(self, rec: TaskRecord) -> bool:
        if not self.lengthy_detection:
            return False
        if rec.lengthy:
            return True
        if rec.ever_rerun_due_to_power_failure:
            rec.lengthy = True
            return True
        rec.ever_rerun_due_to_power_failure = True
        return False

    def on_power_resume(self) -> RecoveryReport:
        rep = RecoveryReport()
        self.lv_flag = False
        if self.dm is not None:
            self.dm.invalidate_temporaries()
            self.dm.reconcile_slots()
        kernel = self.kernel
        wanted = set()
        for rec in self.unfinished():
            self.ops += 1
            rep.unfinished += 1
            if not rec.instantiated:
                self.spawn(rec)
                rep.created += 1
                continue
            old = kernel.tasks.get(rec.nvm_context_ref) if rec.nvm_context_ref else None
            if rec.lengthy and old is not None and old.context_valid:
                kernel.resume_task(old)
                wanted.add(old.id)
                rep.readded += 1
                continue
            if old is not None:
                self._discard(old)
            was = rec.lengthy
            self.detect_lengthy(rec)
            rep.became_lengthy += int(rec.lengthy and not was)
            t = self.spawn(rec)
            t.rerun_due_to_power_failure = True
            wanted.add(t.id)
            rep.recreated += 1
        for t in list(kernel.tasks.values()):
            if t.status is TaskStatus.SUSPENDED and t.id not in wanted:
                # left over from a record that finished or was already replaced
                self._discard(t)
        rep.duration_us = self.fixed_cost_us + self.per_task_cost_us * rep.unfinished
        return rep

    def restart_all(self) -> int:
        """Drop every task instance and start each unfinished record from scratch."""
        for t in list(self.kernel.tasks.values()):
            self._discard(t)
        self.kernel.current = None
        n = 0
        for rec in self.unfinished():
            self.spawn(rec)
            n += 1
        return n

    def _discard(self, task: Task) -> None:
        if self.dm is not None:
            self.dm.discard_working_copies(task)
        self.kernel.delete_task(task, TaskStatus.ABORTED)

    # --------------------------------------------------------- low voltage
    def on_low_voltage(self) -> None:
        self.lv_flag = True

    def on_context_switch_at_low_voltage(self, switched_out: Task | None = None) -> int:
        """Park every lengthy task for the rest of this power-on period."""
        n = 0
        for t in self.kernel.tasks.values():
            if t.lengthy and t.status in (TaskStatus.READY, TaskStatus.RUNNING):
                if t is not self.kernel.current:
                    t.context_valid = True
                self.kernel.suspend_task(t)
                n += 1
        return n
