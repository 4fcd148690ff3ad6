"""Round-robin multitasking kernel model."""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field
from enum import Enum

from .errors import LogicError
from .memory import Memory, RegionKind
from .workloads import Workload

INF = float("inf")


@dataclass
class TaskAttributes:
    code_ref: str
    name: str
    stack_size: int = 256
    priority: int = 0
    finished: bool = False


class TaskStatus(str, Enum):
    READY = "ready"
    RUNNING = "running"
    SUSPENDED = "suspended"
    FINISHED = "finished"
    ABORTED = "aborted"


@dataclass
class Task:
    id: int
    record_id: int
    attrs: TaskAttributes
    workload: Workload
    lengthy: bool
    region: RegionKind
    thresholds: tuple
    total_us: int
    start_seq: int
    start_commits: int
    stack_alloc: int
    status: TaskStatus = TaskStatus.READY
    done_us: int = 0
    action_idx: int = 0
    stall_left: int | None = None
    context_valid: bool = True
    rerun_due_to_power_failure: bool = False
    read_log: list = field(default_factory=list)
    write_log: list = field(default_factory=list)
    write_set: dict = field(default_factory=dict)
    observed: list = field(default_factory=list)
    writes_done: int = 0
    run_begin: int = 0
    run_end: float = INF

    @property
    def remaining_work_us(self) -> int:
        return self.total_us - self.done_us

    @property
    def power_w(self) -> float:
        return self.workload.power_w(self.lengthy)

    def next_action(self):
        if self.action_idx >= len(self.workload.script):
            return None
        return self.workload.script[self.action_idx]


class Kernel:
    """Task control blocks, a ready queue and round-robin dispatch.

    Lengthy tasks keep their control block and stack in NVM, so they
    outlive a power failure; everything else disappears with VM.
    """

    def __init__(self, memory: Memory, clock, crash, op_costs=None):
        self.mem = memory
        self.clock = clock
        self.crash = crash
        self.op_costs = dict(op_costs or {})
        self.tasks: dict[int, Task] = {}
        self.ready: deque = deque()
        self.current: Task | None = None
        self._next_id = 1
        self.recovery = None

    def create_task(self, attrs: TaskAttributes, lengthy: bool, workload: Workload,
                    record_id: int = 0) -> Task:
        region = RegionKind.NVM if lengthy else RegionKind.VM
        tid = self._next_id
        self._next_id += 1
        stack = self.mem.allocate(region, attrs.stack_size, ("task", tid), "stack")
        task = Task(
            id=tid, record_id=record_id, attrs=attrs, workload=workload, lengthy=lengthy,
            region=region, thresholds=workload.thresholds(lengthy),
            total_us=workload.time_us(lengthy), start_seq=self.clock.seq,
            start_commits=0, stack_alloc=stack.id,
        )
        dm = getattr(self.recovery, "dm", None)
        if dm is not None:
            task.start_commits = dm.commit_count
        self.tasks[tid] = task
        self.ready.append(tid)
        if self.recovery is not None:
            self.recovery.record_task_created(task)
        return task

    def delete_task(self, task: Task, status=TaskStatus.FINISHED) -> None:
        task.status = status
        self.tasks.pop(task.id, None)
        try:
            self.ready.remove(task.id)
        except ValueError:
            pass
        if self.current is task:
            self.current = None
        self.mem.free(task.stack_alloc)

    def schedule_next(self) -> Task | None:
        """Context switch: requeue the running task and dispatch the next one."""
        self.crash.point("ctx_switch")
        self.clock.context_switch()
        prev = self.current
        rec = self.recovery
        if rec is not None and rec.lv_flag and prev is not None and prev.lengthy:
            self.crash.point("lv_switch_out")
        self.current = None
        if prev is not None and prev.status is TaskStatus.RUNNING:
            prev.status = TaskStatus.READY
            prev.context_valid = True
            self.ready.append(prev.id)
        if rec is not None and rec.lv_flag:
            rec.on_context_switch_at_low_voltage(prev)
        while self.ready:
            task = self.tasks.get(self.ready.popleft())
            if task is None or task.status is not TaskStatus.READY:
                continue
            task.status = TaskStatus.RUNNING
            if task.lengthy:
                task.context_valid = False
            self.current = task
            return task
        return None

    def suspend_task(self, task: Task) -> None:
        if task.status in (TaskStatus.FINISHED, TaskStatus.ABORTED):
            raise LogicError(f"cannot suspend {task.status.value} task {task.id}")
        if task.status is TaskStatus.SUSPENDED:
            return
        if self.current is task:
            self.current = None
            task.context_valid = True
        task.status = TaskStatus.SUSPENDED
        try:
            self.ready.remove(task.id)
        except ValueError:
            pass

    def resume_task(self, task: Task) -> None:
        if task.status in (TaskStatus.FINISHED, TaskStatus.ABORTED):
            raise LogicError(f"cannot resume {task.status.value} task {task.id}")
        if task.status is TaskStatus.SUSPENDED:
            task.status = TaskStatus.READY
        if task.id not in self.ready and self.current is not task:
            self.ready.append(task.id)

    # ------------------------------------------------------- slice execution
    def op_cost(self, op: str) -> int:
        return int(self.op_costs.get(op, 0))

    def time_to_point(self, task: Task) -> int:
        """Microseconds until the task's next script action completes its cost."""
        if task.stall_left is not None:
            return task.stall_left
        if task.action_idx >= len(task.thresholds):
            return 0
        return max(0, task.thresholds[task.action_idx] - task.done_us)

    def run_slice(self, task: Task, slice_us: int) -> dict:
        """Advance the task by ``slice_us`` without crossing its next action point.

        Returns the work done and whether a script action is now due.
        """
        if task.status is not TaskStatus.RUNNING:
            raise LogicError(f"task {task.id} is not running")
        if slice_us > self.time_to_point(task):
            raise LogicError("slice crosses a script action point")
        worked = 0
        if task.stall_left is not None:
            task.stall_left -= slice_us
        else:
            worked = slice_us
            task.done_us += slice_us
        return {"worked_us": worked, "due": self.due_action(task) is not None}

    def due_action(self, task: Task):
        """The script action ready to execute now (its cost, if any, already paid)."""
        act = task.next_action()
        if act is None:
            return None
        if task.stall_left is None:
            if task.done_us < task.thresholds[task.action_idx]:
                return None
            cost = self.op_cost(act.op)
            if cost > 0:
                task.stall_left = cost
                return None
            return act
        return act if task.stall_left <= 0 else None

    def complete_action(self, task: Task) -> None:
        task.action_idx += 1
        task.stall_left = None

    def on_power_failure(self) -> None:
        """Discard every VM-resident task; lengthy ones stay with their NVM context."""
        survivors = {}
        for tid, t in self.tasks.items():
            if t.lengthy:
                t.status = TaskStatus.SUSPENDED
                survivors[tid] = t
        self.tasks = survivors
        self.ready.clear()
        self.current = None

    def live_tasks(self):
        return list(self.tasks.values())
