"""The device model and the discrete-event loop that drives it."""

from __future__ import annotations

import hashlib
import io
import json
import pickle
from dataclasses import dataclass, field

from .baselines import CheckpointConfig, LogCheckpointer, Scheme, SysCheckpointer
from .datamgr import DataManager, ValidationStats
from .errors import ConfigError, LogicError, PowerFailure
from .kernel import Kernel
from .memory import Memory
from .power import PowerState, PowerTrace
from .recovery import RecoveryHandler, Stats
from .simcore import CrashInjector, EventClass, SimClock
from .workloads import initial_value, task_output


class History(list):
    """Append-only record of reads and commits, shared across snapshots."""

    def __deepcopy__(self, memo):
        return self


@dataclass
class CostModel:
    read_us: int = 48
    write_us: int = 65
    commit_us: int = 93
    idle_w: float = 0.0
    busy_w: float = 4.0e-3
    recovery_fixed_us: int = 100
    recovery_per_task_us: int = 100

    def __post_init__(self):
        for name in ("read_us", "write_us", "commit_us", "recovery_fixed_us",
                     "recovery_per_task_us"):
            if getattr(self, name) < 0:
                raise ConfigError(f"{name} must be non-negative")
        if self.idle_w < 0 or self.busy_w < 0:
            raise ConfigError("power draws must be non-negative")

    def op_costs(self) -> dict:
        return {"read": self.read_us, "write": self.write_us, "commit": self.commit_us}


@dataclass
class PowerParams:
    capacitance_f: float = 200e-6
    v_on: float = 2.8
    v_off: float = 2.4
    v_op: float | None = None
    v_th: float | None = None
    v_max: float = 3.3
    v_init: float = 0.0
    efficiency: float = 1.0
    p_max: float = 5.25e-3
    threshold_step: float = 0.01

    def build(self, trace: PowerTrace, tick_us: int) -> PowerState:
        return PowerState(trace, self.capacitance_f, self.v_on, self.v_off, self.v_op, self.v_th,
                          self.v_max, self.v_init, self.efficiency, self.p_max, tick_us * 1e-6,
                          self.threshold_step)


@dataclass
class MachineConfig:
    vm_bytes: int = 8192
    nvm_bytes: int = 262144
    object_size: int = 64
    width: int = 16
    early_abort: bool = True
    reader_guard: bool = True
    initial_values: list | None = None


class Machine:
    """Everything that lives on the device; a SYS snapshot is a deep copy of this."""

    def __init__(self, workloads, n_objects, clock, crash, history, cfg: MachineConfig,
                 costs: CostModel, lengthy_detection: bool):
        self.memory = Memory(cfg.vm_bytes, cfg.nvm_bytes)
        self.dm = DataManager(self.memory, clock, crash, n_objects, cfg.object_size, cfg.width,
                              cfg.initial_values, cfg.early_abort, cfg.reader_guard, history)
        self.kernel = Kernel(self.memory, clock, crash, costs.op_costs())
        self.stats = Stats()
        self.recovery = RecoveryHandler(self.kernel, self.dm, self.memory, clock, self.stats,
                                        lengthy_detection, costs.recovery_fixed_us,
                                        costs.recovery_per_task_us)
        for w in workloads:
            self.recovery.add_record(w)

    def on_power_failure(self) -> None:
        self.memory.on_power_failure()
        self.dm.on_power_failure()
        self.kernel.on_power_failure()


class _SharedPickler(pickle.Pickler):
    def __init__(self, f, table):
        super().__init__(f, protocol=pickle.HIGHEST_PROTOCOL)
        self.table = table

    def persistent_id(self, obj):
        return self.table.get(id(obj))


class _SharedUnpickler(pickle.Unpickler):
    def __init__(self, f, shared):
        super().__init__(f)
        self.shared = shared

    def persistent_load(self, pid):
        return self.shared[pid]


class PickleCodec:
    """Snapshot a machine to bytes, leaving simulator-wide objects shared."""

    def __init__(self, shared):
        self.shared = list(shared)
        self.table = {id(o): i for i, o in enumerate(self.shared)}

    def dump(self, machine) -> bytes:
        buf = io.BytesIO()
        _SharedPickler(buf, self.table).dump(machine)
        return buf.getvalue()

    def load(self, image: bytes):
        return _SharedUnpickler(io.BytesIO(image), self.shared).load()


def objects_needed(workloads) -> int:
    top = -1
    for w in workloads:
        for a in w.script:
            if a.obj is not None:
                top = max(top, a.obj)
    return top + 1


class Simulator:
    """One deterministic run of one scheme over one power trace."""

    MAX_IDLE_STEPS = 10_000

    def __init__(self, workloads, trace: PowerTrace, *, scheme=Scheme.OURS,
                 checkpoint: CheckpointConfig | None = None, duration_us: int | None = None,
                 tick_us: int = 1000, power: PowerParams | None = None,
                 costs: CostModel | None = None, machine: MachineConfig | None = None,
                 n_objects: int | None = None, crash_schedule=(), record_events: bool = True):
        self.scheme = Scheme.parse(scheme)
        if tick_us <= 0:
            raise ConfigError("tick period must be positive")
        self.workloads = list(workloads)
        if not self.workloads:
            raise ConfigError("no workloads")
        if self.scheme in (Scheme.SYS, Scheme.LOG):
            checkpoint = checkpoint or CheckpointConfig(self.scheme)
            if checkpoint.scheme is not self.scheme:
                raise ConfigError("checkpoint config belongs to another scheme")
        else:
            checkpoint = None
        self.ckpt_cfg = checkpoint
        self.duration_us = trace.total_us if duration_us is None else int(duration_us)
        if self.duration_us < 0:
            raise ConfigError("duration must be non-negative")
        self.costs = costs or CostModel()
        self.mcfg = machine or MachineConfig()
        self.n_objects = n_objects or max(1, objects_needed(self.workloads))
        if objects_needed(self.workloads) > self.n_objects:
            raise ConfigError("workloads reference more objects than configured")
        self.clock = SimClock(tick_us)
        self.crash = CrashInjector()
        for cp in crash_schedule:
            self.crash.inject_crash(cp)
        self.power = (power or PowerParams()).build(trace, tick_us)
        self.history = History()
        self.vstats = ValidationStats()
        self.machine = self._fresh_machine()
        if self.mcfg.initial_values is None:
            self.initial = [initial_value(i, self.mcfg.object_size) for i in range(self.n_objects)]
        else:
            self.initial = list(self.mcfg.initial_values)
        codec = PickleCodec([self.clock, self.crash, self.history, self.vstats,
                             *self.workloads])
        self.sys = (SysCheckpointer(checkpoint, self.crash, codec)
                    if self.scheme is Scheme.SYS else None)
        self.log = (LogCheckpointer(checkpoint, self.crash, dict(enumerate(self.initial)), codec)
                    if self.scheme is Scheme.LOG else None)
        self.phase = "off"
        self.busy_kind = None
        self.busy_left = 0
        self.busy_total = 0
        self.next_tick = None
        self.next_ckpt = None
        self.off_since = None
        self.booted = False
        self.record_events = record_events
        self.events: list[dict] = []
        self._digest = hashlib.sha256()
        self.suspensions: list[int] = []
        self.recoveries: list[int] = []
        self.recentness: list[int] = []
        self.recovery_ops: list[tuple[int, int]] = []
        self.power_cycles = 0
        self.crashes = 0
        self.aborts = {"validation": 0, "early": 0, "power": 0}
        self.checkpoints_started = 0
        self._idle = 0

    def _fresh_machine(self) -> Machine:
        m = Machine(self.workloads, self.n_objects, self.clock, self.crash, self.history,
                    self.mcfg, self.costs, lengthy_detection=self.scheme is Scheme.OURS)
        m.dm.stats = self.vstats
        return m

    # -------------------------------------------------------------- logging
    def _log(self, kind, **data) -> None:
        rec = {"t": self.clock.now_us, "ev": kind, **data}
        line = json.dumps(rec, sort_keys=True, separators=(",", ":"))
        self._digest.update(line.encode() + b"\n")
        if self.record_events:
            self.events.append(rec)

    @property
    def digest(self) -> str:
        return self._digest.hexdigest()

    # ------------------------------------------------------------ main loop
    def run(self) -> "Simulator":
        while self.clock.now_us < self.duration_us:
            self.step()
        return self

    def run_until(self, t_us: int) -> "Simulator":
        t_us = min(t_us, self.duration_us)
        while self.clock.now_us < t_us:
            self.step(limit=t_us)
        return self

    def step(self, limit: int | None = None) -> None:
        end = self.duration_us if limit is None else limit
        try:
            self._step(end)
        except PowerFailure as pf:
            self.crashes += 1
            self._log("crash", site=pf.site, occurrence=pf.occurrence)
            self.power.force_off()
            self._power_failure()

    def _step(self, end: int) -> None:
        now = self.clock.now_us
        power = self.power
        if not power.device_on:
            dt = _least(end - now, power.time_to_event(0.0), power.segment_remaining())
            fired = power.step_power(dt, 0.0)
            self._advance(dt, [(EventClass.POWER, e) for e in fired])
            return
        if self.phase == "run":
            self._drain_due()
        draw = self._draw()
        cands = [end - now, power.time_to_event(draw), power.segment_remaining()]
        cur = None
        if self.phase == "busy":
            cands.append(self.busy_left)
        else:
            cands.append(self.next_tick - now)
            if self.next_ckpt is not None:
                cands.append(self.next_ckpt - now)
            cur = self.machine.kernel.current
            if cur is not None:
                cands.append(self.machine.kernel.time_to_point(cur))
        dt = _least(*cands)
        fired = power.step_power(dt, draw)
        pending = [(EventClass.POWER, e) for e in fired if e != "low_voltage"]
        if "low_voltage" in fired:
            pending.append((EventClass.INTERRUPT, "low_voltage"))
        after = now + dt
        if self.phase == "busy":
            self.busy_left -= dt
            if self.busy_left == 0:
                pending.append((EventClass.SCHEDULER, "busy_done"))
        else:
            if cur is not None:
                self.machine.kernel.run_slice(cur, dt)
                if self.machine.kernel.time_to_point(cur) == 0 or cur.stall_left == 0:
                    pending.append((EventClass.TASK, "action_due"))
            if self.next_ckpt is not None and after == self.next_ckpt:
                pending.append((EventClass.SCHEDULER, "checkpoint"))
            if after == self.next_tick:
                pending.append((EventClass.SCHEDULER, "tick"))
        self._advance(dt, pending)

    def _advance(self, dt: int, pending) -> None:
        if dt == 0:
            self._idle += 1
            if self._idle > self.MAX_IDLE_STEPS:
                raise LogicError(f"simulation stalled at t={self.clock.now_us}us")
        else:
            self._idle = 0
        target = self.clock.now_us + dt
        for cls, kind in pending:
            self.clock.schedule(target, cls, kind)
        for ev in self.clock.advance(dt):
            if not self._handle(ev.kind):
                self.clock.clear()
                break

    def _handle(self, kind: str) -> bool:
        """Process one fired event; False stops processing of the remaining ones."""
        if kind == "power_on":
            self._power_on()
        elif kind == "power_off":
            self._log("power_off", v=round(self.power.v_now, 6))
            self._power_failure()
            return False
        elif kind == "low_voltage":
            self._log("low_voltage")
            self.machine.recovery.on_low_voltage()
        elif kind == "busy_done":
            self._finish_busy()
        elif kind == "checkpoint":
            if self.phase == "run":
                self._start_checkpoint()
        elif kind == "tick":
            if self.phase == "run":
                self._tick()
        return True

    def _draw(self) -> float:
        if self.phase == "busy":
            return self.costs.busy_w
        cur = self.machine.kernel.current
        return self.costs.idle_w + (cur.power_w if cur is not None else 0.0)

    # ------------------------------------------------------------ run phase
    def _switch(self) -> None:
        # every dispatch starts a fresh quantum, so slicing never depends on phase
        self.machine.kernel.schedule_next()
        self.next_tick = self.clock.now_us + self.clock.tick_period_us

    def _tick(self) -> None:
        m = self.machine
        rec = m.recovery
        if rec.lv_flag and self.power.energy >= self.power.e_on:
            # harvest outran the draw: the period is no longer ending
            rec.lv_flag = False
            self.power.lv_flag = False
            for t in list(m.kernel.tasks.values()):
                if t.lengthy and t.status.value == "suspended":
                    m.kernel.resume_task(t)
            self._log("lv_cleared")
        self._switch()

    def _drain_due(self) -> None:
        kernel = self.machine.kernel
        while self.phase == "run":
            cur = kernel.current
            if cur is None:
                return
            act = kernel.due_action(cur)
            if act is None:
                return
            self._execute(cur, act)

    def _execute(self, task, act) -> None:
        m = self.machine
        dm, kernel = m.dm, m.kernel
        if act.op == "read":
            dm.dm_read(task, act.obj)
            kernel.complete_action(task)
            if dm.early_abort and not dm.early_abort_check(task):
                self._abort(task, "early")
                self._switch()
        elif act.op == "write":
            value = task_output(task.record_id, act.obj, task.writes_done, task.observed,
                                dm.size)
            dm.dm_write(task, act.obj, value)
            task.writes_done += 1
            kernel.complete_action(task)
        else:
            before = ({o: dm.persistent_value(o) for o in task.write_set}
                      if self.log is not None else None)
            res = dm.dm_commit(task)
            if res.committed:
                kernel.complete_action(task)
                self._log("commit", task=task.id, record=task.record_id,
                          name=task.workload.name, lengthy=task.lengthy,
                          begin=res.interval.begin, end=res.interval.end,
                          objs=sorted(before) if before is not None else None)
                if self.log is not None:
                    self.log.on_commit(task.record_id,
                                       {o: (v, dm.persistent_value(o)) for o, v in before.items()},
                                       self.clock.now_us)
                for v in res.victims:
                    self._abort(v, "early")
                m.recovery.on_task_finished(task)
            else:
                self._abort(task, "validation")
            self._switch()

    def _abort(self, task, cause: str) -> None:
        self.aborts[cause] += 1
        self._log("abort", task=task.id, record=task.record_id, cause=cause)
        self.machine.recovery.abort_and_recreate(task)

    # ----------------------------------------------------------- busy phases
    def _start_busy(self, kind: str, duration: int) -> None:
        self.phase = "busy"
        self.busy_kind = kind
        self.busy_left = self.busy_total = int(duration)
        if self.busy_left == 0:
            self._finish_busy()

    def _start_checkpoint(self) -> None:
        ck = self.sys or self.log
        self.checkpoints_started += 1
        ck.begin(self.machine, len(self.history), self.clock.now_us)
        self._start_busy("checkpoint", ck.suspension_us(self.machine))

    def _finish_busy(self) -> None:
        kind, total = self.busy_kind, self.busy_total
        now = self.clock.now_us
        if kind == "checkpoint":
            (self.sys or self.log).publish()
            self.suspensions.append(total)
            self._log("checkpoint", cost_us=total)
            self.next_ckpt = now - total + self.ckpt_cfg.period_us
            while self.next_ckpt <= now:
                self.next_ckpt += self.ckpt_cfg.period_us
            self.phase = "run"
            self.busy_kind = None
            self.next_tick = now + self.clock.tick_period_us
            return
        if self.booted:
            self.recoveries.append(total)
        self.booted = True
        self._log("recovered", cost_us=total)
        self.phase = "run"
        self.busy_kind = None
        if self.ckpt_cfg is not None:
            self.next_ckpt = now + self.ckpt_cfg.period_us
        self._switch()

    # ----------------------------------------------------------- power edges
    def _power_on(self) -> None:
        self._log("power_on")
        resumed = self.booted
        if self.scheme is Scheme.SYS:
            restored = self.sys.restore()
            self._replace_machine(restored)
            duration = self.ckpt_cfg.recovery_us
        elif self.scheme is Scheme.LOG:
            self.log.recover()
            self._replace_machine(self.log.image())
            m = self.machine
            for obj, value in self.log.store.data.items():
                m.dm.set_persistent(obj, value)
            duration = self.log.recovery_us()
        else:
            m = self.machine
            before = m.recovery.ops
            rep = m.recovery.on_power_resume()
            self.recovery_ops.append((len(self.history), m.recovery.ops - before))
            duration = rep.duration_us
        last = self.machine.stats.last_commit_us
        if resumed and self.off_since is not None and last is not None:
            self.recentness.append(self.off_since - last)
        self._start_busy("recovery", duration)

    def _replace_machine(self, restored) -> None:
        if restored is None:
            self.machine = self._fresh_machine()
            del self.history[:]
            self.machine.recovery.on_power_resume()
            return
        machine, hist_len = restored
        self.machine = machine
        del self.history[hist_len:]
        machine.dm.stats = self.vstats
        if self.scheme is Scheme.LOG:
            machine.recovery.restart_all()

    def _power_failure(self) -> None:
        self.power_cycles += 1
        self.off_since = self.clock.now_us
        if self.phase == "busy" and self.busy_kind == "checkpoint":
            (self.sys or self.log).pending = None
        m = self.machine
        self.aborts["power"] += sum(1 for t in m.kernel.tasks.values()
                                    if not (t.lengthy and t.context_valid))
        m.on_power_failure()
        if self.log is not None:
            self.log.on_power_failure()
        self.phase = "off"
        self.busy_kind = None
        self.next_tick = None
        self.next_ckpt = None

    # -------------------------------------------------------------- results
    def persistent_image(self) -> tuple:
        return self.machine.dm.persistent_image()

    def finished_records(self) -> list:
        return [h for h in self.history if h[0] == "commit"]


def _least(*values) -> int:
    vals = [v for v in values if v is not None]
    return max(0, min(vals))
